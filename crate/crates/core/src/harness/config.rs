//! Flat `key = value` experiment configuration.
//!
//! Keys carry dotted section prefixes (`problem.dim = 10`). Blank lines and
//! lines starting with `#` are ignored. Reals are written in Rust's shortest
//! round-trip form, so `parse(emit(c)) == c` bit for bit and emitting a parsed
//! canonical file reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numeric::ParamVector;
use crate::optimizers::{Algorithm, DitherMode, Optimizer, OptimizerConfig};
use crate::problems::{make_logistic, make_mlp, make_quadratic, mlp_param_count, NoiseFamily, NoiseSpec, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    Logistic,
    Mlp,
}

impl ProblemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Logistic => "logistic",
            ProblemKind::Mlp => "mlp",
        }
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ProblemKind::Quadratic),
            "logistic" => Ok(ProblemKind::Logistic),
            "mlp" => Ok(ProblemKind::Mlp),
            other => Err(Error::invalid(format!("unknown problem kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    /// Quadratic curvature vector.
    pub lipschitz: Vec<f64>,
    /// Quadratic minimiser; empty means the origin, one entry broadcasts.
    pub x_opt: Vec<f64>,
    /// Starting point; empty means the problem's default start.
    pub x0: Vec<f64>,
    pub dataset_seed: u64,
    pub n_points: usize,
    pub layer_widths: Vec<usize>,
    pub noise_family: NoiseFamily,
    /// Per-coordinate noise scale; one entry broadcasts.
    pub sigma: Vec<f64>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            kind: ProblemKind::Quadratic,
            dim: 1,
            lipschitz: vec![1.0],
            x_opt: Vec::new(),
            x0: Vec::new(),
            dataset_seed: 0,
            n_points: 64,
            layer_widths: vec![2, 4],
            noise_family: NoiseFamily::Gaussian,
            sigma: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub algorithm: Algorithm,
    /// Learning rate for the SGD / SGD-M baselines.
    pub lr: f64,
    /// λ̄ at step 0 (0 unless pre-seeded).
    pub lambda_init: f64,
    pub cfg: OptimizerConfig,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            algorithm: Algorithm::Signsgdm,
            lr: 1e-2,
            lambda_init: 0.0,
            cfg: OptimizerConfig::default(),
        }
    }
}

/// Step-decay learning-rate schedule: every `decay_every` steps all rates are
/// multiplied by `decay_factor`. `decay_every = 0` disables it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub decay_every: u64,
    pub decay_factor: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            decay_every: 0,
            decay_factor: 1.0,
        }
    }
}

impl ScheduleSpec {
    pub fn multiplier(&self, k: u64) -> f64 {
        k.checked_div(self.decay_every)
            .map_or(1.0, |q| self.decay_factor.powi(q as i32))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub steps: u64,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    /// Row stride of the trajectory; 0 picks the default.
    pub stride: u64,
    /// Override δ with `1/√(L̃₁ K)`.
    pub theorem_mode: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            steps: 1000,
            batch_size: 1,
            seeds: vec![0],
            stride: 0,
            theorem_mode: false,
        }
    }
}

impl RunSpec {
    /// 1 up to 10⁴ steps, else `⌈K/10⁴⌉`.
    pub fn effective_stride(&self) -> u64 {
        if self.stride > 0 {
            self.stride
        } else {
            self.steps.div_ceil(10_000).max(1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub schedule: ScheduleSpec,
    pub run: RunSpec,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_list<T>(values: &[T], f: impl Fn(&T) -> String) -> String {
    values.iter().map(f).collect::<Vec<_>>().join(",")
}

fn broadcast(values: &[f64], dim: usize, what: &str, empty: f64) -> Result<ParamVector> {
    match values.len() {
        0 => Ok(ParamVector::filled(dim, empty)),
        1 => Ok(ParamVector::filled(dim, values[0])),
        n if n == dim => Ok(ParamVector::new(values.to_vec())),
        n => Err(Error::invalid(format!("{what} has {n} entries, expected 1 or {dim}"))),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut bimodal_q = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value, &mut bimodal_q).map_err(|e| Error::Config {
                line: line_no,
                message: format!("{key}: {e}"),
            })?;
        }
        if let Some(q) = bimodal_q {
            match cfg.problem.noise_family {
                NoiseFamily::AsymmetricBimodal { .. } => {
                    cfg.problem.noise_family = NoiseFamily::AsymmetricBimodal { q }
                }
                _ => {
                    return Err(Error::Config {
                        line: 0,
                        message: "problem.noise.q only applies to asymmetric-bimodal".into(),
                    })
                }
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, bimodal_q: &mut Option<f64>) -> Result<()> {
        fn real(v: &str) -> Result<f64> {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::invalid(format!("`{v}` is not a real number")))?;
            if x.is_nan() {
                return Err(Error::invalid("NaN is not allowed"));
            }
            Ok(x)
        }
        fn int<T: FromStr>(v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::invalid(format!("`{v}` is not a nonnegative integer")))
        }
        fn boolean(v: &str) -> Result<bool> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::invalid(format!("`{v}` is not a boolean"))),
            }
        }
        fn list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|s| f(s.trim())).collect()
        }

        let p = &mut self.problem;
        let o = &mut self.optimizer;
        match key {
            "problem.kind" => p.kind = value.parse()?,
            "problem.dim" => p.dim = int(value)?,
            "problem.lipschitz" => p.lipschitz = list(value, real)?,
            "problem.x_opt" => p.x_opt = list(value, real)?,
            "problem.x0" => p.x0 = list(value, real)?,
            "problem.dataset_seed" => p.dataset_seed = int(value)?,
            "problem.n_points" => p.n_points = int(value)?,
            "problem.layer_widths" => p.layer_widths = list(value, int)?,
            "problem.noise.family" => p.noise_family = value.parse()?,
            "problem.noise.q" => *bimodal_q = Some(real(value)?),
            "problem.noise.sigma" => p.sigma = list(value, real)?,
            "optimizer.algorithm" => o.algorithm = value.parse()?,
            "optimizer.lr" => o.lr = real(value)?,
            "optimizer.lambda_init" => o.lambda_init = real(value)?,
            "optimizer.delta" => o.cfg.delta = real(value)?,
            "optimizer.beta" => o.cfg.beta = real(value)?,
            "optimizer.alpha" => o.cfg.alpha = real(value)?,
            "optimizer.gamma" => o.cfg.gamma = real(value)?,
            "optimizer.eta" => o.cfg.eta = real(value)?,
            "optimizer.epsilon" => o.cfg.epsilon = real(value)?,
            "optimizer.t_switch" => {
                o.cfg.t_switch = if value == "never" { None } else { Some(int(value)?) };
            }
            "optimizer.dither_mode" => o.cfg.dither_mode = value.parse::<DitherMode>()?,
            "optimizer.lambda_bias_correction" => o.cfg.lambda_bias_correction = boolean(value)?,
            "optimizer.sgd_lr_scale" => o.cfg.sgd_lr_scale = real(value)?,
            "schedule.decay_every" => self.schedule.decay_every = int(value)?,
            "schedule.decay_factor" => self.schedule.decay_factor = real(value)?,
            "run.steps" => self.run.steps = int(value)?,
            "run.batch_size" => self.run.batch_size = int(value)?,
            "run.seeds" => self.run.seeds = list(value, int)?,
            "run.stride" => self.run.stride = int(value)?,
            "run.theorem_mode" => self.run.theorem_mode = boolean(value)?,
            other => return Err(Error::invalid(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical text form: every key, fixed order.
    pub fn emit(&self) -> String {
        let p = &self.problem;
        let o = &self.optimizer;
        let c = &o.cfg;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("problem.kind", p.kind.as_str().into());
        kv("problem.dim", p.dim.to_string());
        kv("problem.lipschitz", fmt_list(&p.lipschitz, |v| fmt_f64(*v)));
        kv("problem.x_opt", fmt_list(&p.x_opt, |v| fmt_f64(*v)));
        kv("problem.x0", fmt_list(&p.x0, |v| fmt_f64(*v)));
        kv("problem.dataset_seed", p.dataset_seed.to_string());
        kv("problem.n_points", p.n_points.to_string());
        kv("problem.layer_widths", fmt_list(&p.layer_widths, |v| v.to_string()));
        kv("problem.noise.family", p.noise_family.name().into());
        if let NoiseFamily::AsymmetricBimodal { q } = p.noise_family {
            kv("problem.noise.q", fmt_f64(q));
        }
        kv("problem.noise.sigma", fmt_list(&p.sigma, |v| fmt_f64(*v)));
        kv("optimizer.algorithm", o.algorithm.as_str().into());
        kv("optimizer.lr", fmt_f64(o.lr));
        kv("optimizer.lambda_init", fmt_f64(o.lambda_init));
        kv("optimizer.delta", fmt_f64(c.delta));
        kv("optimizer.beta", fmt_f64(c.beta));
        kv("optimizer.alpha", fmt_f64(c.alpha));
        kv("optimizer.gamma", fmt_f64(c.gamma));
        kv("optimizer.eta", fmt_f64(c.eta));
        kv("optimizer.epsilon", fmt_f64(c.epsilon));
        kv(
            "optimizer.t_switch",
            c.t_switch.map_or_else(|| "never".to_string(), |t| t.to_string()),
        );
        kv("optimizer.dither_mode", c.dither_mode.to_string());
        kv("optimizer.lambda_bias_correction", c.lambda_bias_correction.to_string());
        kv("optimizer.sgd_lr_scale", fmt_f64(c.sgd_lr_scale));
        kv("schedule.decay_every", self.schedule.decay_every.to_string());
        kv("schedule.decay_factor", fmt_f64(self.schedule.decay_factor));
        kv("run.steps", self.run.steps.to_string());
        kv("run.batch_size", self.run.batch_size.to_string());
        kv("run.seeds", fmt_list(&self.run.seeds, |v| v.to_string()));
        kv("run.stride", self.run.stride.to_string());
        kv("run.theorem_mode", self.run.theorem_mode.to_string());
        out
    }

    /// Key/value pairs of [`emit`](Self::emit), in order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        self.emit()
            .lines()
            .filter_map(|l| l.split_once(" = ").map(|(k, v)| (k.to_string(), v.to_string())))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.steps == 0 || self.run.batch_size == 0 {
            return Err(Error::invalid("run.steps and run.batch_size must be >= 1"));
        }
        if !(self.optimizer.lr >= 0.0) || !(self.optimizer.lambda_init >= 0.0) {
            return Err(Error::invalid("optimizer.lr and optimizer.lambda_init must be >= 0"));
        }
        if !(self.schedule.decay_factor > 0.0) {
            return Err(Error::invalid("schedule.decay_factor must be > 0"));
        }
        let cfg = &self.optimizer.cfg;
        match self.optimizer.algorithm {
            Algorithm::Sgd => Ok(()),
            Algorithm::Sgdm if (0.0..1.0).contains(&cfg.beta) => Ok(()),
            Algorithm::Sgdm => Err(Error::invalid("beta must lie in [0,1)")),
            _ => cfg.validate(),
        }
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let p = &self.problem;
        let dim = match p.kind {
            ProblemKind::Quadratic => p.lipschitz.len(),
            ProblemKind::Logistic => p.dim,
            ProblemKind::Mlp => mlp_param_count(&p.layer_widths),
        };
        if dim != p.dim {
            return Err(Error::invalid(format!(
                "problem.dim = {} but the {} problem has {dim} parameters",
                p.dim,
                p.kind.as_str()
            )));
        }
        let noise = NoiseSpec::new(p.noise_family, broadcast(&p.sigma, dim, "problem.noise.sigma", 0.0)?)?;
        match p.kind {
            ProblemKind::Quadratic => make_quadratic(
                ParamVector::new(p.lipschitz.clone()),
                broadcast(&p.x_opt, dim, "problem.x_opt", 0.0)?,
                noise,
            ),
            ProblemKind::Logistic => make_logistic(p.dataset_seed, dim, p.n_points, noise),
            ProblemKind::Mlp => make_mlp(p.dataset_seed, &p.layer_widths, p.n_points, noise),
        }
    }

    pub fn start_point(&self, problem: &Problem) -> Result<ParamVector> {
        if self.problem.x0.is_empty() {
            Ok(problem.default_start())
        } else {
            broadcast(&self.problem.x0, problem.dim(), "problem.x0", 0.0)
        }
    }

    /// The optimizer as it will run, with the theorem-mode stepsize applied.
    pub fn build_optimizer(&self, problem: &Problem) -> Result<Optimizer> {
        self.validate()?;
        let mut cfg = self.optimizer.cfg;
        if self.run.theorem_mode {
            cfg.delta = 1.0 / (problem.l1_lipschitz() * self.run.steps as f64).sqrt();
        }
        Ok(Optimizer {
            algorithm: self.optimizer.algorithm,
            cfg,
            lr: self.optimizer.lr,
        })
    }

    /// The quadratic used throughout the rate checks: `d = 10`,
    /// `L_i = 0.5 + 3.5·i/9`, unit Gaussian noise, start at `x* + 1`.
    pub fn theorem_quadratic() -> Self {
        let dim = 10;
        ExperimentConfig {
            problem: ProblemSpec {
                kind: ProblemKind::Quadratic,
                dim,
                lipschitz: (0..dim).map(|i| 0.5 + 3.5 * i as f64 / 9.0).collect(),
                x_opt: vec![0.0],
                x0: vec![1.0],
                noise_family: NoiseFamily::Gaussian,
                sigma: vec![1.0],
                ..ProblemSpec::default()
            },
            optimizer: OptimizerSpec {
                algorithm: Algorithm::Signsgd,
                ..OptimizerSpec::default()
            },
            schedule: ScheduleSpec::default(),
            run: RunSpec {
                steps: 1000,
                batch_size: 1,
                seeds: (0..20).collect(),
                stride: 0,
                theorem_mode: true,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_emits_and_parses_back() {
        let cfg = ExperimentConfig::default();
        let text = cfg.emit();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::parse(&text).unwrap().emit(), text);
    }

    #[test]
    fn theorem_config_round_trip_is_bit_exact() {
        let mut cfg = ExperimentConfig::theorem_quadratic();
        cfg.optimizer.cfg.epsilon = 1e-12;
        cfg.optimizer.cfg.t_switch = Some(250);
        cfg.problem.noise_family = NoiseFamily::AsymmetricBimodal { q: 0.125 };
        let back = ExperimentConfig::parse(&cfg.emit()).unwrap();
        assert_eq!(back, cfg);
        for (a, b) in back.problem.lipschitz.iter().zip(&cfg.problem.lipschitz) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn comments_blank_lines_and_partial_files() {
        let cfg = ExperimentConfig::parse(
            "# minimal\n\nproblem.lipschitz = 2.0, 3.0 # per coordinate\nproblem.dim = 2\n  optimizer.algorithm = hybrid\noptimizer.t_switch = 40#steps\n",
        )
        .unwrap();
        assert_eq!(cfg.problem.lipschitz, vec![2.0, 3.0]);
        assert_eq!(cfg.optimizer.algorithm, Algorithm::Hybrid);
        assert_eq!(cfg.optimizer.cfg.t_switch, Some(40));
        assert_eq!(cfg.run, RunSpec::default());
    }

    #[test]
    fn rejects_bad_lines() {
        let err = ExperimentConfig::parse("problem.dim = 3\nproblem.bogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
        assert!(ExperimentConfig::parse("problem.dim 3").is_err());
        assert!(ExperimentConfig::parse("optimizer.delta = abc").is_err());
        assert!(ExperimentConfig::parse("optimizer.delta = NaN").is_err());
        assert!(matches!(
            ExperimentConfig::parse("optimizer.algorithm = adam"),
            Err(Error::Config { .. })
        ));
        assert!(ExperimentConfig::parse("problem.noise.q = 0.2").is_err());
    }

    #[test]
    fn builds_each_problem_kind() {
        let cfg = ExperimentConfig::theorem_quadratic();
        let p = cfg.build_problem().unwrap();
        assert_eq!(p.dim(), 10);
        assert!((p.l1_lipschitz() - 22.5).abs() < 1e-12);
        assert_eq!(cfg.start_point(&p).unwrap(), ParamVector::filled(10, 1.0));
        let opt = cfg.build_optimizer(&p).unwrap();
        assert_eq!(opt.cfg.delta, 1.0 / (22.5f64 * 1000.0).sqrt());

        let mut mlp = ExperimentConfig::default();
        mlp.problem.kind = ProblemKind::Mlp;
        mlp.problem.layer_widths = vec![2, 3];
        mlp.problem.dim = 13;
        assert_eq!(mlp.build_problem().unwrap().dim(), 13);
        mlp.problem.dim = 12;
        assert!(mlp.build_problem().is_err());

        let mut lg = ExperimentConfig::default();
        lg.problem.kind = ProblemKind::Logistic;
        lg.problem.dim = 5;
        lg.problem.sigma = vec![0.1, 0.2];
        assert!(lg.build_problem().is_err());
        lg.problem.sigma = vec![0.1];
        assert_eq!(lg.build_problem().unwrap().noise().sigma, ParamVector::filled(5, 0.1));
    }

    #[test]
    fn stride_and_schedule() {
        let mut run = RunSpec {
            steps: 10_000,
            ..RunSpec::default()
        };
        assert_eq!(run.effective_stride(), 1);
        run.steps = 10_001;
        assert_eq!(run.effective_stride(), 2);
        run.steps = 1_000_000;
        assert_eq!(run.effective_stride(), 100);
        run.stride = 7;
        assert_eq!(run.effective_stride(), 7);

        let s = ScheduleSpec {
            decay_every: 10,
            decay_factor: 0.5,
        };
        assert_eq!(s.multiplier(9), 1.0);
        assert_eq!(s.multiplier(10), 0.5);
        assert_eq!(s.multiplier(35), 0.125);
        assert_eq!(ScheduleSpec::default().multiplier(1000), 1.0);
    }
}
