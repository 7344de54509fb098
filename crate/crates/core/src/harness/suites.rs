//! Multi-seed suites: the rate-bound grid, the noiseless decay fit and the
//! switching sweep. Seeds run in parallel; reductions run over seed-sorted
//! results so the outcome does not depend on seed order or scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ProblemKind};
use super::record::RunSummary;
use super::runner::run_single;
use crate::error::{Error, Result};
use crate::optimizers::Algorithm;
use crate::theory::{theorem_rhs_l1, theorem_rhs_phi, TheoremInputs};

/// Runs every seed and returns summaries sorted by seed.
pub fn run_seeds(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<RunSummary>> {
    let mut out = seeds
        .par_iter()
        .map(|&s| run_single(cfg, s).map(|r| r.summary))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|s| s.seed);
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCell {
    pub steps: u64,
    pub batch_size: usize,
    pub delta: f64,
    pub mean_phi: f64,
    pub rhs_phi: f64,
    pub mean_l1: f64,
    pub rhs_l1: f64,
    /// `σ̃₁/√n`.
    pub l1_floor: f64,
    pub pass_phi: bool,
    pub pass_l1: bool,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub seeds: usize,
    pub cells: Vec<TheoremCell>,
}

impl TheoremReport {
    pub fn all_phi_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass_phi)
    }

    pub fn all_l1_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass_l1)
    }
}

/// Seed-averaged `(1/K)ΣΦ_k` and `(1/K)Σ‖g_k‖₁` against both rate bounds on
/// every `(K, n)` cell, always in theorem mode.
pub fn run_theorem_suite(
    base: &ExperimentConfig,
    seeds: &[u64],
    k_grid: &[u64],
    n_grid: &[usize],
) -> Result<TheoremReport> {
    if base.problem.kind != ProblemKind::Quadratic {
        return Err(Error::invalid(
            "the rate suite needs a quadratic problem (exact constants)",
        ));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("need at least one seed"));
    }
    let problem = base.build_problem()?;
    let f0 = problem.eval_f(&base.start_point(&problem)?);
    let mut cells = Vec::new();
    for &k in k_grid {
        for &n in n_grid {
            let mut cfg = base.clone();
            cfg.run.steps = k;
            cfg.run.batch_size = n;
            cfg.run.theorem_mode = true;
            let runs = run_seeds(&cfg, seeds)?;
            let inputs = TheoremInputs {
                l1_lipschitz: problem.l1_lipschitz(),
                l1_sigma: problem.noise().l1_sigma(),
                f0,
                f_star: problem.f_star(),
                iterations: k,
                batch_size: n as u64,
            };
            inputs.validate()?;
            let mean_phi = mean(runs.iter().map(|r| r.mean_phi));
            let mean_l1 = mean(runs.iter().map(|r| r.mean_l1_grad));
            let rhs_phi = theorem_rhs_phi(&inputs);
            let rhs_l1 = theorem_rhs_l1(&inputs);
            cells.push(TheoremCell {
                steps: k,
                batch_size: n,
                delta: inputs.stepsize(),
                mean_phi,
                rhs_phi,
                mean_l1,
                rhs_l1,
                l1_floor: inputs.l1_sigma / (n as f64).sqrt(),
                pass_phi: mean_phi <= rhs_phi,
                pass_l1: mean_l1 <= rhs_l1,
                diverged_runs: runs.iter().filter(|r| r.diverged).count(),
            });
        }
    }
    Ok(TheoremReport {
        seeds: seeds.len(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub steps: Vec<u64>,
    pub mean_phi: Vec<f64>,
    pub mean_l1: Vec<f64>,
    /// `−slope` of `log mean_phi` against `log K`.
    pub phi_exponent: f64,
    pub l1_exponent: f64,
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x.iter().copied());
    let my = mean(y.iter().copied());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Decay of the theorem-mode averages with `K` after removing all noise.
pub fn noiseless_decay(base: &ExperimentConfig, seeds: &[u64], k_grid: &[u64]) -> Result<DecayFit> {
    if k_grid.len() < 2 {
        return Err(Error::invalid("need at least two K values"));
    }
    let mut cfg = base.clone();
    cfg.problem.sigma = vec![0.0];
    cfg.run.batch_size = 1;
    let report = run_theorem_suite(&cfg, seeds, k_grid, &[1])?;
    let logk: Vec<f64> = k_grid.iter().map(|&k| (k as f64).ln()).collect();
    let mean_phi: Vec<f64> = report.cells.iter().map(|c| c.mean_phi).collect();
    let mean_l1: Vec<f64> = report.cells.iter().map(|c| c.mean_l1).collect();
    let log = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
    Ok(DecayFit {
        steps: k_grid.to_vec(),
        phi_exponent: -ls_slope(&logk, &log(&mean_phi)),
        l1_exponent: -ls_slope(&logk, &log(&mean_l1)),
        mean_phi,
        mean_l1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEntry {
    /// `hybrid`, `signsgdm` or `sgd`.
    pub label: String,
    pub t_switch: Option<u64>,
    pub final_f: Vec<f64>,
    pub median_final_f: f64,
    pub mean_final_f: f64,
    pub median_lambda_at_switch: Option<f64>,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub steps: u64,
    pub seeds: usize,
    pub hybrid: Vec<SwitchEntry>,
    pub signsgdm: SwitchEntry,
    pub sgd: SwitchEntry,
}

impl SwitchReport {
    /// Hybrid entry with the lowest median final loss.
    pub fn best_hybrid(&self) -> Option<&SwitchEntry> {
        self.hybrid
            .iter()
            .min_by(|a, b| a.median_final_f.total_cmp(&b.median_final_f))
    }

    pub fn switch_beats_sign(&self) -> bool {
        self.best_hybrid()
            .is_some_and(|b| b.median_final_f < self.signsgdm.median_final_f)
    }
}

fn entry(label: &str, t_switch: Option<u64>, runs: &[RunSummary]) -> SwitchEntry {
    let finals: Vec<f64> = runs.iter().map(|r| r.final_f).collect();
    let lambdas: Vec<f64> = runs.iter().filter_map(|r| r.lambda_at_switch).collect();
    SwitchEntry {
        label: label.to_string(),
        t_switch,
        median_final_f: median(&finals),
        mean_final_f: mean(finals.iter().copied()),
        final_f: finals,
        median_lambda_at_switch: (!lambdas.is_empty()).then(|| median(&lambdas)),
        diverged_runs: runs.iter().filter(|r| r.diverged).count(),
    }
}

/// Hybrid over `t_grid` plus SignSGD-M and SGD (rate `base.optimizer.lr`)
/// baselines, all with the same step budget and seeds.
pub fn run_switch_suite(base: &ExperimentConfig, t_grid: &[u64], seeds: &[u64]) -> Result<SwitchReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("need at least one seed"));
    }
    let with = |algorithm: Algorithm, t: Option<u64>| {
        let mut cfg = base.clone();
        cfg.optimizer.algorithm = algorithm;
        cfg.optimizer.cfg.t_switch = t;
        cfg
    };
    let hybrid = t_grid
        .iter()
        .map(|&t| run_seeds(&with(Algorithm::Hybrid, Some(t)), seeds).map(|r| entry("hybrid", Some(t), &r)))
        .collect::<Result<Vec<_>>>()?;
    let sign = run_seeds(&with(Algorithm::Signsgdm, None), seeds)?;
    let sgd = run_seeds(&with(Algorithm::Sgd, None), seeds)?;
    Ok(SwitchReport {
        steps: base.run.steps,
        seeds: seeds.len(),
        hybrid,
        signsgdm: entry("signsgdm", None, &sign),
        sgd: entry("sgd", None, &sgd),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        let x = [0.0, 1.0, 2.0];
        assert!((ls_slope(&x, &[1.0, -1.0, -3.0]) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn seed_order_does_not_matter() {
        let mut cfg = ExperimentConfig::theorem_quadratic();
        cfg.run.steps = 100;
        let a = run_theorem_suite(&cfg, &[0, 1, 2, 3], &[100], &[1]).unwrap();
        let b = run_theorem_suite(&cfg, &[3, 1, 0, 2], &[100], &[1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rate_floor_halves_when_batch_quadruples() {
        let cfg = ExperimentConfig::theorem_quadratic();
        let r = run_theorem_suite(&cfg, &[0, 1], &[100], &[1, 4, 16]).unwrap();
        assert_eq!(r.cells[0].l1_floor, 10.0);
        assert_eq!(r.cells[1].l1_floor, 5.0);
        assert_eq!(r.cells[2].l1_floor, 2.5);
        let mut lg = cfg.clone();
        lg.problem.kind = ProblemKind::Logistic;
        assert!(run_theorem_suite(&lg, &[0], &[100], &[1]).is_err());
    }

    #[test]
    fn switch_past_budget_equals_sign_momentum() {
        let mut cfg = ExperimentConfig::theorem_quadratic();
        cfg.run.theorem_mode = false;
        cfg.run.steps = 300;
        cfg.optimizer.lr = 0.05;
        let r = run_switch_suite(&cfg, &[100, 300, 1000], &[0, 1, 2]).unwrap();
        for e in &r.hybrid[1..] {
            let same = e
                .final_f
                .iter()
                .zip(&r.signsgdm.final_f)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "t_switch {:?}", e.t_switch);
        }
        assert!(r.hybrid[0].median_lambda_at_switch.unwrap() > 0.0);
        assert!(r.hybrid[2].median_lambda_at_switch.is_none());
    }
}
