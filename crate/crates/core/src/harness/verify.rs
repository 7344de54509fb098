//! Acceptance checks, each a pass/fail outcome with a one-line detail.
//! Grids, trial counts, seeds and tolerances are fixed here.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::record::{csv_string, parse_csv};
use super::runner::{run_single, run_single_with_iterates};
use super::suites::{median, noiseless_decay, run_seeds, run_switch_suite, run_theorem_suite};
use crate::dither::{expected_dithered_sign, first_order_dithered_sign, mc_dithered_sign};
use crate::error::Result;
use crate::numeric::{l1_norm, l2_norm_sq, sign, ParamVector, RngStream};
use crate::optimizers::{lambda_project, signsgdm_step, Algorithm, DitherMode, OptimizerConfig, OptimizerState, Phase};
use crate::problems::{
    finite_difference_grad, make_logistic, make_mlp, mlp_param_count, stochastic_grad, NoiseFamily, NoiseSpec, Problem,
};
use crate::theory::{gauss_bound, mc_sign_failure, relaxation_holds, sign_agreement_lower_bound, GAUSS_SPLIT};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {tag}  {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: u32, name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        id,
        name,
        passed,
        detail,
    }
}

fn failed(id: u32, name: &'static str, err: crate::Error) -> CheckOutcome {
    outcome(id, name, false, format!("error: {err}"))
}

/// Distance in units in the last place between two finite doubles.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    fn key(x: f64) -> i64 {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    }
    key(a).abs_diff(key(b))
}

pub const SNR_GRID: [f64; 7] = [0.1, 0.25, 0.5, GAUSS_SPLIT, 1.0, 2.0, 5.0];
const SYMMETRIC_FAMILIES: [NoiseFamily; 3] = [NoiseFamily::Gaussian, NoiseFamily::Uniform, NoiseFamily::Laplace];
const MC_TRIALS: u64 = 1_000_000;
const MC_SEED: u64 = 20_240_601;

/// Monte Carlo failure rate under each symmetric unimodal family never
/// exceeds the Gauss bound by more than 3 standard errors.
pub fn check_gauss_bound() -> CheckOutcome {
    const NAME: &str = "sign-failure bound under symmetric unimodal noise";
    let cells: Vec<(usize, usize)> = (0..3).flat_map(|f| (0..SNR_GRID.len()).map(move |s| (f, s))).collect();
    let results: Result<Vec<_>> = cells
        .par_iter()
        .map(|&(f, s)| {
            let mut rng = RngStream::new(MC_SEED, (f * 16 + s) as u64);
            let est = mc_sign_failure(SYMMETRIC_FAMILIES[f], SNR_GRID[s], MC_TRIALS, &mut rng)?;
            let bound = gauss_bound(SNR_GRID[s]);
            Ok((
                f,
                s,
                (est.p_hat - bound) / est.std_err.max(f64::MIN_POSITIVE),
                est.p_hat <= bound + 3.0 * est.std_err,
            ))
        })
        .collect();
    match results {
        Err(e) => failed(1, NAME, e),
        Ok(r) => {
            let bad: Vec<String> = r
                .iter()
                .filter(|c| !c.3)
                .map(|c| format!("{}@S={:.3}", SYMMETRIC_FAMILIES[c.0], SNR_GRID[c.1]))
                .collect();
            let worst = r.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
            outcome(
                1,
                NAME,
                bad.is_empty(),
                format!(
                    "{} cells, worst (p_hat - bound)/se = {worst:+.2}, violations {bad:?}",
                    r.len()
                ),
            )
        }
    }
}

/// `1 − 2·gauss_bound(S) ≥ min(1,S)/3` exactly on `S = i/1000, i = 1..=10⁴`,
/// plus the split point, its neighbouring doubles and `±10⁻⁹` around it.
pub fn check_relaxation() -> CheckOutcome {
    let split = GAUSS_SPLIT;
    let mut grid: Vec<f64> = (1..=10_000).map(|i| i as f64 * 1e-3).collect();
    grid.extend([
        split - 1e-9,
        f64::from_bits(split.to_bits() - 1),
        split,
        f64::from_bits(split.to_bits() + 1),
        split + 1e-9,
    ]);
    let below = grid.iter().filter(|&&s| s < split).count();
    let fails: Vec<f64> = grid.iter().copied().filter(|&s| !relaxation_holds(s)).collect();
    let slack = grid
        .iter()
        .map(|&s| 1.0 - 2.0 * gauss_bound(s) - sign_agreement_lower_bound(s))
        .fold(f64::INFINITY, f64::min);
    outcome(
        2,
        "linear relaxation of the failure bound",
        fails.is_empty(),
        format!(
            "{} points ({below} below the split), min slack {slack:.3e}, failures {fails:?}",
            grid.len()
        ),
    )
}

const RATE_SEEDS: u64 = 20;
const K_GRID: [u64; 3] = [100, 1_000, 10_000];
const N_GRID: [usize; 3] = [1, 4, 16];

fn rate_seeds() -> Vec<u64> {
    (0..RATE_SEEDS).collect()
}

/// Seed-averaged `(1/K)ΣΦ_k` below the Φ-form rate bound on the full grid.
pub fn check_rate_phi() -> CheckOutcome {
    const NAME: &str = "rate bound on the SNR-weighted measure";
    match run_theorem_suite(&ExperimentConfig::theorem_quadratic(), &rate_seeds(), &K_GRID, &N_GRID) {
        Err(e) => failed(3, NAME, e),
        Ok(r) => {
            let worst = r.cells.iter().map(|c| c.mean_phi / c.rhs_phi).fold(0.0, f64::max);
            let passing = r.cells.iter().filter(|c| c.pass_phi && c.diverged_runs == 0).count();
            outcome(
                3,
                NAME,
                passing == r.cells.len(),
                format!("{passing}/{} cells pass, worst mean/bound = {worst:.3}", r.cells.len()),
            )
        }
    }
}

/// Seed-averaged `(1/K)Σ‖g_k‖₁` below the ℓ1 rate bound, and a noiseless
/// decay exponent in `[0.4, 0.6]`.
pub fn check_rate_l1() -> CheckOutcome {
    const NAME: &str = "rate bound on the l1 gradient norm and 1/sqrt(K) decay";
    let base = ExperimentConfig::theorem_quadratic();
    let report = match run_theorem_suite(&base, &rate_seeds(), &K_GRID, &N_GRID) {
        Ok(r) => r,
        Err(e) => return failed(4, NAME, e),
    };
    let fit = match noiseless_decay(&base, &rate_seeds(), &K_GRID) {
        Ok(f) => f,
        Err(e) => return failed(4, NAME, e),
    };
    let worst = report.cells.iter().map(|c| c.mean_l1 / c.rhs_l1).fold(0.0, f64::max);
    let cells_ok = report.all_l1_pass();
    let exp_ok = (0.4..=0.6).contains(&fit.phi_exponent);
    outcome(
        4,
        NAME,
        cells_ok && exp_ok,
        format!(
            "{}/{} cells pass, worst mean/bound = {worst:.3}; noiseless exponent {:.4}",
            report.cells.iter().filter(|c| c.pass_l1).count(),
            report.cells.len(),
            fit.phi_exponent
        ),
    )
}

pub const DITHER_RATIOS: [f64; 9] = [0.0, 0.1, -0.1, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0];

/// Monte Carlo dithered sign against `2Φ(m/σ) − 1` (4 SE), and the first-order
/// value within 0.1% at `m/σ = 0.01`.
pub fn check_dithered_sign() -> CheckOutcome {
    const NAME: &str = "dithered-sign expectation";
    let sigma = 1.5;
    let results: Result<Vec<(f64, f64)>> = DITHER_RATIOS
        .par_iter()
        .enumerate()
        .map(|(i, &z)| {
            let mut rng = RngStream::new(MC_SEED, 100 + i as u64);
            let est = mc_dithered_sign(z * sigma, sigma, MC_TRIALS, &mut rng)?;
            let want = expected_dithered_sign(z * sigma, sigma)?;
            Ok((z, (est.mean - want) / est.std_err))
        })
        .collect();
    let r = match results {
        Ok(r) => r,
        Err(e) => return failed(5, NAME, e),
    };
    let worst = r.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
    let exact = expected_dithered_sign(0.01, 1.0).unwrap_or(f64::NAN);
    let rel = ((first_order_dithered_sign(0.01, 1.0) - exact) / exact).abs();
    outcome(
        5,
        NAME,
        worst < 4.0 && rel < 1e-3,
        format!(
            "{} ratios, worst |z| = {worst:.2}; first-order rel err at 0.01 = {rel:.2e}",
            r.len()
        ),
    )
}

/// Projection rule over 10⁴ random triples plus the worked value.
pub fn check_projection() -> CheckOutcome {
    let mut rng = RngStream::new(MC_SEED, 200);
    let epsilon = OptimizerConfig::default().epsilon;
    let (mut negative, mut max_ulps, mut zero_ip_bad) = (0usize, 0u64, 0usize);
    for t in 0..10_000 {
        let dim = 1 + (rng.uniform() * 32.0) as usize;
        let g_scale = 10f64.powf(rng.uniform() * 6.0 - 3.0);
        let delta = 10f64.powf(rng.uniform() * 4.0 - 4.0);
        let mut m = ParamVector::new((0..dim).map(|_| rng.standard_normal()).collect());
        if t % 10 == 0 {
            m[0] = 0.0;
        }
        let g = ParamVector::new((0..dim).map(|_| g_scale * rng.standard_normal()).collect());
        let lam = lambda_project(&m, &g, delta, epsilon);
        if !(lam >= 0.0) {
            negative += 1;
        }
        let aligned: f64 = m.iter().zip(g.iter()).map(|(&a, &b)| sign(a) * b).sum();
        let lhs = lam * (l2_norm_sq(&g) + epsilon);
        max_ulps = max_ulps.max(ulp_distance(lhs, delta * aligned.abs()));
    }
    // Orthogonal pairs: the inner product vanishes exactly.
    for _ in 0..1000 {
        let a = rng.standard_normal();
        let b = rng.standard_normal();
        let m = ParamVector::from([1.0, -1.0, a.signum(), a.signum()]);
        let g = ParamVector::from([b, b, a, -a]);
        if lambda_project(&m, &g, 0.1, epsilon) != 0.0 {
            zero_ip_bad += 1;
        }
    }
    let m = ParamVector::from([0.3, -1.0, 2.0, -0.01]);
    let g = m.map(|v| 2.0 * sign(v));
    let worked = lambda_project(&m, &g, 0.1, epsilon);
    let worked_ok = worked == 0.1 * 8.0 / (16.0 + epsilon) && (worked - 0.05).abs() < 1e-14;
    let worked_exact = lambda_project(&m, &g, 0.1, 1e-18) == 0.05;
    outcome(
        6,
        "projection-calibrated learning rate",
        negative == 0 && max_ulps <= 2 && zero_ip_bad == 0 && worked_ok && worked_exact,
        format!(
            "negative {negative}, max ulps {max_ulps}, nonzero on orthogonal {zero_ip_bad}, worked value {worked:?}"
        ),
    )
}

fn reduction_base() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::theorem_quadratic();
    cfg.run.theorem_mode = false;
    cfg.run.steps = 2_000;
    cfg.run.batch_size = 2;
    cfg.optimizer.cfg.delta = 0.01;
    cfg
}

fn same_trajectory(a: &ExperimentConfig, b: &ExperimentConfig, seed: u64) -> Result<bool> {
    let (ra, xa) = run_single_with_iterates(a, seed)?;
    let (rb, xb) = run_single_with_iterates(b, seed)?;
    let bits = |xs: &[ParamVector]| {
        xs.iter()
            .flat_map(|x| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let fs = |r: &super::RunRecord| r.rows.iter().map(|row| row.f.to_bits()).collect::<Vec<_>>();
    Ok(bits(&xa) == bits(&xb) && fs(&ra) == fs(&rb) && ra.summary.final_f.to_bits() == rb.summary.final_f.to_bits())
}

/// Bitwise reductions between the optimizer variants at a fixed seed.
pub fn check_reductions() -> CheckOutcome {
    const NAME: &str = "reduction identities";
    let seed = 17;
    let base = reduction_base();
    let with = |algorithm: Algorithm, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = base.clone();
        c.optimizer.algorithm = algorithm;
        f(&mut c);
        c
    };
    let sign = with(Algorithm::Signsgdm, &|_| {});
    let cases: Vec<(&str, ExperimentConfig, ExperimentConfig)> = vec![
        (
            "dithered(alpha=0) = signsgdm",
            with(Algorithm::Dithered, &|c| {
                c.optimizer.cfg.dither_mode = DitherMode::Pre;
                c.optimizer.cfg.alpha = 0.0;
            }),
            sign.clone(),
        ),
        (
            "hybrid(T=K) = signsgdm",
            with(Algorithm::Hybrid, &|c| c.optimizer.cfg.t_switch = Some(c.run.steps)),
            sign.clone(),
        ),
        (
            "hybrid(T>K) = signsgdm",
            with(Algorithm::Hybrid, &|c| {
                c.optimizer.cfg.t_switch = Some(10 * c.run.steps)
            }),
            sign.clone(),
        ),
        (
            "hybrid(T=0, seeded) = sgd",
            with(Algorithm::Hybrid, &|c| {
                c.optimizer.cfg.t_switch = Some(0);
                c.optimizer.lambda_init = 0.037;
            }),
            with(Algorithm::Sgd, &|c| c.optimizer.lr = 0.037),
        ),
        (
            "pre(alpha=0) = post(alpha=0)",
            with(Algorithm::Dithered, &|c| c.optimizer.cfg.dither_mode = DitherMode::Pre),
            with(Algorithm::Dithered, &|c| c.optimizer.cfg.dither_mode = DitherMode::Post),
        ),
    ];
    let mut bad = Vec::new();
    for (label, a, b) in &cases {
        match same_trajectory(a, b, seed) {
            Ok(true) => {}
            Ok(false) => bad.push(*label),
            Err(e) => return failed(7, NAME, e),
        }
    }
    outcome(
        7,
        NAME,
        bad.is_empty(),
        format!(
            "{}/{} identities bitwise, differing {bad:?}",
            cases.len() - bad.len(),
            cases.len()
        ),
    )
}

/// Per-coordinate steps in `{−δ, 0, +δ}`; gradients scaled by 10 leave the
/// iterates bitwise unchanged and scale every λ_k by 1/10 within 4 ulps.
///
/// The λ tolerance is gated on the noiseless gradient stream.
pub fn check_sign_geometry() -> CheckOutcome {
    const NAME: &str = "sign-step geometry and gradient-scale invariance";
    let base = reduction_base();
    let problem = match base.build_problem() {
        Ok(p) => p,
        Err(e) => return failed(8, NAME, e),
    };
    let x0 = problem.default_start();

    // Geometry, on the dithered and hybrid sign phases as well as the clean one.
    let mut off_grid = 0usize;
    let mut steps_checked = 0usize;
    for (algorithm, mode, alpha) in [
        (Algorithm::Signsgdm, DitherMode::None, 0.0),
        (Algorithm::Dithered, DitherMode::Pre, 0.5),
        (Algorithm::Hybrid, DitherMode::Pre, 0.5),
        (Algorithm::Signsgd, DitherMode::None, 0.0),
    ] {
        let mut cfg = base.clone();
        cfg.optimizer.algorithm = algorithm;
        cfg.optimizer.cfg.dither_mode = mode;
        cfg.optimizer.cfg.alpha = alpha;
        cfg.optimizer.cfg.t_switch = Some(1_500);
        cfg.run.stride = 1;
        let (rec, xs) = match run_single_with_iterates(&cfg, 5) {
            Ok(v) => v,
            Err(e) => return failed(8, NAME, e),
        };
        let delta = cfg.optimizer.cfg.delta;
        for (w, r) in xs.windows(2).zip(&rec.rows) {
            if r.phase != Phase::Sign {
                continue;
            }
            steps_checked += 1;
            for (a, b) in w[0].iter().zip(w[1].iter()) {
                let step = b - a;
                // Exact on the grid of x; allow the rounding of `x ± δ`.
                let tol = 4.0 * f64::EPSILON * a.abs().max(delta);
                if !(step.abs() <= tol || (step.abs() - delta).abs() <= tol) {
                    off_grid += 1;
                }
            }
        }
    }

    let noisy = scale_invariance(&problem, &x0, base.run.steps, base.run.batch_size);
    let clean_problem = match problem.with_noise(NoiseSpec::noiseless(problem.dim())) {
        Ok(p) => p,
        Err(e) => return failed(8, NAME, e),
    };
    let clean = scale_invariance(&clean_problem, &x0, base.run.steps, base.run.batch_size);
    let ((noisy_equal, noisy_ulps, kappa), (clean_equal, clean_ulps, _)) = match (noisy, clean) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return failed(8, NAME, e),
    };
    outcome(
        8,
        NAME,
        off_grid == 0 && noisy_equal && clean_equal && clean_ulps <= 4,
        format!(
            "{steps_checked} sign-phase steps, {off_grid} off-grid coordinates; scaled iterates bitwise equal: {}; \
             max lambda ulps {clean_ulps} (noisy stream, not gated: {noisy_ulps} ulps at condition number up to {kappa:.0})",
            noisy_equal && clean_equal
        ),
    )
}

/// Runs clean sign momentum on `g` and `10·g` side by side. Returns whether
/// the iterates agree bitwise, the largest ulp gap between `λ(10g)` and
/// `λ(g)/10`, and the largest condition number `‖g‖₁/|⟨sign(m), g⟩|`.
///
/// `ε = 10⁻³⁰⁰` keeps the stabiliser out of the comparison: the default
/// shifts λ by `≈ ε/‖g‖²`, far more than a few ulps. Rounding of `10·g`
/// perturbs the inner product by up to `u·‖g‖₁`, so the ulp gap grows with
/// the condition number; only the noiseless stream has it at 1.
fn scale_invariance(problem: &Problem, x0: &ParamVector, steps: u64, batch: usize) -> Result<(bool, u64, f64)> {
    let c = 10.0;
    let cfg = OptimizerConfig {
        delta: 0.01,
        epsilon: 1e-300,
        ..OptimizerConfig::default()
    };
    let mut rng = RngStream::new(5, 1);
    let mut s1 = OptimizerState::new(x0.clone(), Phase::Sign);
    let mut s2 = OptimizerState::new(x0.clone(), Phase::Sign);
    let (mut equal, mut max_ulps, mut kappa) = (true, 0u64, 1.0f64);
    for _ in 0..steps {
        let g = stochastic_grad(problem, &s1.x, batch, &mut rng)?.grad;
        let g_scaled = g.map(|v| c * v);
        s1 = signsgdm_step(s1, &g, &cfg);
        s2 = signsgdm_step(s2, &g_scaled, &cfg);
        equal &= s1.x.iter().zip(s2.x.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        max_ulps = max_ulps.max(ulp_distance(s2.lambda, s1.lambda / c));
        let aligned: f64 = s1.m.iter().zip(g.iter()).map(|(&m, &v)| sign(m) * v).sum();
        if aligned != 0.0 {
            kappa = kappa.max(l1_norm(&g) / aligned.abs());
        }
    }
    Ok((equal, max_ulps, kappa))
}

/// Noisy-quadratic switch sweep settings.
pub fn switch_base() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::theorem_quadratic();
    cfg.run.theorem_mode = false;
    cfg.run.steps = 5_000;
    cfg.optimizer.algorithm = Algorithm::Hybrid;
    cfg.optimizer.cfg.t_switch = Some(SWITCH_GRID[0]);
    cfg.optimizer.cfg.delta = 0.01;
    cfg.optimizer.lr = 0.05;
    cfg
}

pub const SWITCH_GRID: [u64; 6] = [100, 250, 500, 1_000, 2_000, 4_000];

/// Best switch point beats pure SignSGD-M on the median final loss; the
/// noiseless SignSGD-M tail stays above the `±δ` cycle floor.
///
/// On a separable quadratic every sign-phase coordinate moves by exactly δ,
/// so `|e_k| + |e_{k+1}| ≥ δ` and `f_k + f_{k+1} ≥ Σ L_i δ²/4`.
pub fn check_switch_benefit() -> CheckOutcome {
    const NAME: &str = "switching escapes the sign limit cycle";
    let base = switch_base();
    let seeds: Vec<u64> = (0..20).collect();
    let report = match run_switch_suite(&base, &SWITCH_GRID, &seeds) {
        Ok(r) => r,
        Err(e) => return failed(9, NAME, e),
    };
    let best = report.best_hybrid().cloned();
    let beats = report.switch_beats_sign();

    let mut clean = base.clone();
    clean.problem.sigma = vec![0.0];
    clean.optimizer.algorithm = Algorithm::Signsgdm;
    clean.run.stride = 1;
    let rec = match run_single(&clean, 0) {
        Ok(r) => r,
        Err(e) => return failed(9, NAME, e),
    };
    let delta = clean.optimizer.cfg.delta;
    let floor = clean.problem.lipschitz.iter().sum::<f64>() * delta * delta / 8.0;
    let tail = &rec.rows[rec.rows.len() - 1_000..];
    let min_pair = tail
        .windows(2)
        .map(|w| 0.5 * (w[0].f + w[1].f))
        .fold(f64::INFINITY, f64::min);
    let band_ok = min_pair >= floor * (1.0 - 1e-9);
    let (t, med) = best.map_or((None, f64::NAN), |b| (b.t_switch, b.median_final_f));
    outcome(
        9,
        NAME,
        beats && band_ok,
        format!(
            "best T={t:?} median f {med:.3e} vs signsgdm {:.3e}; noiseless tail pair-mean min {min_pair:.3e} >= floor {floor:.3e}",
            report.signsgdm.median_final_f
        ),
    )
}

pub const BIMODAL_Q: f64 = 0.1;
pub const VIOLATION_SNR: f64 = 0.25;
pub const SGD_LR_GRID: [f64; 6] = [1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3];

/// 1-D quadratic `f = x²/2` with the asymmetric-bimodal oracle, started at
/// the SNR of the violating cell.
pub fn bimodal_base() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.problem.lipschitz = vec![1.0];
    cfg.problem.x_opt = vec![0.0];
    cfg.problem.x0 = vec![VIOLATION_SNR];
    cfg.problem.noise_family = NoiseFamily::AsymmetricBimodal { q: BIMODAL_Q };
    cfg.problem.sigma = vec![1.0];
    cfg.run.steps = 10_000;
    cfg.run.seeds = (0..20).collect();
    cfg.optimizer.cfg.delta = 1.0 / (cfg.run.steps as f64).sqrt();
    cfg
}

/// Under the asymmetric-bimodal family the failure bound breaks, SignSGD
/// stalls above half the initial loss, and tuned SGD gets below 1%.
pub fn check_asymmetric_noise() -> CheckOutcome {
    const NAME: &str = "asymmetric noise breaks SignSGD but not SGD";
    let family = NoiseFamily::AsymmetricBimodal { q: BIMODAL_Q };
    let mut violations = Vec::new();
    for (i, &s) in SNR_GRID.iter().enumerate() {
        let mut rng = RngStream::new(MC_SEED, 300 + i as u64);
        match mc_sign_failure(family, s, MC_TRIALS, &mut rng) {
            Ok(est) if est.p_hat > gauss_bound(s) + 3.0 * est.std_err => violations.push(s),
            Ok(_) => {}
            Err(e) => return failed(10, NAME, e),
        }
    }
    let cell_ok = violations.contains(&VIOLATION_SNR);

    let base = bimodal_base();
    let f0 = 0.5 * VIOLATION_SNR * VIOLATION_SNR;
    let mut sign_cfg = base.clone();
    sign_cfg.optimizer.algorithm = Algorithm::Signsgd;
    let sign_runs = match run_seeds(&sign_cfg, &base.run.seeds) {
        Ok(r) => r,
        Err(e) => return failed(10, NAME, e),
    };
    let sign_med = median(&sign_runs.iter().map(|r| r.final_f).collect::<Vec<_>>());

    let mut best = (f64::NAN, f64::INFINITY);
    for &lr in &SGD_LR_GRID {
        let mut c = base.clone();
        c.optimizer.algorithm = Algorithm::Sgd;
        c.optimizer.lr = lr;
        let runs = match run_seeds(&c, &base.run.seeds) {
            Ok(r) => r,
            Err(e) => return failed(10, NAME, e),
        };
        let med = median(&runs.iter().map(|r| r.final_f).collect::<Vec<_>>());
        if med < best.1 {
            best = (lr, med);
        }
    }
    outcome(
        10,
        NAME,
        cell_ok && sign_med >= 0.5 * f0 && best.1 < 0.01 * f0,
        format!(
            "bound violated at S in {violations:?}; f0 {f0:.4e}, signsgd median final {sign_med:.4e}, sgd (lr {}) median final {:.3e}",
            best.0, best.1
        ),
    )
}

fn relative_l2(a: &ParamVector, b: &ParamVector) -> f64 {
    let err: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    err / l2_norm_sq(b).sqrt().max(1e-300)
}

/// Analytic gradients against central differences at 100 random points each.
pub fn check_gradients() -> CheckOutcome {
    const NAME: &str = "analytic gradients match finite differences";
    let widths = [3usize, 6, 4];
    let mlp_dim = mlp_param_count(&widths);
    let (logistic, mlp) = match (
        make_logistic(11, 8, 128, NoiseSpec::noiseless(8)),
        make_mlp(12, &widths, 64, NoiseSpec::noiseless(mlp_dim)),
    ) {
        (Ok(l), Ok(m)) => (l, m),
        (Err(e), _) | (_, Err(e)) => return failed(11, NAME, e),
    };
    let mut rng = RngStream::new(MC_SEED, 400);
    let (mut worst_log, mut worst_mlp) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let x = ParamVector::new((0..8).map(|_| rng.standard_normal()).collect());
        worst_log = worst_log.max(relative_l2(
            &finite_difference_grad(&logistic, &x, 1e-6),
            &logistic.eval_grad(&x),
        ));
        let w = ParamVector::new((0..mlp_dim).map(|_| rng.standard_normal()).collect());
        worst_mlp = worst_mlp.max(relative_l2(&finite_difference_grad(&mlp, &w, 1e-5), &mlp.eval_grad(&w)));
    }
    outcome(
        11,
        NAME,
        worst_log < 1e-6 && worst_mlp < 1e-4,
        format!("worst relative error: logistic {worst_log:.2e}, mlp {worst_mlp:.2e}"),
    )
}

/// Config and CSV round-trips are bit-exact.
pub fn check_serialization() -> CheckOutcome {
    const NAME: &str = "config and trajectory round-trips";
    let mut configs = vec![
        ExperimentConfig::default(),
        ExperimentConfig::theorem_quadratic(),
        switch_base(),
        bimodal_base(),
    ];
    let mut odd = switch_base();
    odd.optimizer.algorithm = Algorithm::Hybrid;
    odd.optimizer.cfg.t_switch = Some(333);
    odd.optimizer.cfg.alpha = 1.0 / 3.0;
    odd.optimizer.cfg.dither_mode = DitherMode::Post;
    odd.problem.lipschitz = vec![0.1, 0.2, 0.30000000000000004, 1e-300, 5e-324];
    odd.problem.dim = 5;
    configs.push(odd);
    let config_ok = configs.iter().all(|c| {
        let text = c.emit();
        matches!(ExperimentConfig::parse(&text), Ok(back) if back == *c && back.emit() == text)
    });

    let mut cfg = switch_base();
    cfg.optimizer.algorithm = Algorithm::Hybrid;
    cfg.optimizer.cfg.t_switch = Some(700);
    cfg.run.steps = 1_500;
    let csv_ok = match run_single(&cfg, 3) {
        Ok(rec) => {
            let text = csv_string(&rec.rows);
            matches!(parse_csv(&text), Ok(back) if back.len() == rec.rows.len()
                && back.iter().zip(&rec.rows).all(|(a, b)| a == b
                    && a.f.to_bits() == b.f.to_bits()
                    && a.lambda_ema.to_bits() == b.lambda_ema.to_bits()
                    && a.phi.to_bits() == b.phi.to_bits()))
        }
        Err(e) => return failed(12, NAME, e),
    };
    outcome(
        12,
        NAME,
        config_ok && csv_ok,
        format!(
            "{} configs round-trip: {config_ok}; trajectory csv round-trip: {csv_ok}",
            configs.len()
        ),
    )
}

pub type CheckFn = fn() -> CheckOutcome;

/// Every check, in criterion order.
pub const ALL_CHECKS: [(u32, CheckFn); 12] = [
    (1, check_gauss_bound),
    (2, check_relaxation),
    (3, check_rate_phi),
    (4, check_rate_l1),
    (5, check_dithered_sign),
    (6, check_projection),
    (7, check_reductions),
    (8, check_sign_geometry),
    (9, check_switch_benefit),
    (10, check_asymmetric_noise),
    (11, check_gradients),
    (12, check_serialization),
];

/// Checks with the given ids, or all of them when `ids` is empty.
pub fn run_checks(ids: &[u32]) -> Vec<CheckOutcome> {
    ALL_CHECKS
        .iter()
        .filter(|(id, _)| ids.is_empty() || ids.contains(id))
        .map(|(_, f)| f())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ulp_distance_basics() {
        assert_eq!(ulp_distance(1.0, 1.0), 0);
        assert_eq!(ulp_distance(1.0, f64::from_bits(1.0f64.to_bits() + 3)), 3);
        assert_eq!(ulp_distance(0.0, -0.0), 0);
        assert_eq!(ulp_distance(5e-324, -5e-324), 2);
    }

    #[test]
    fn cheap_checks_pass() {
        for c in run_checks(&[2, 6, 7, 12]) {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn bimodal_start_matches_violating_cell() {
        let cfg = bimodal_base();
        let p = cfg.build_problem().unwrap();
        let x0 = cfg.start_point(&p).unwrap();
        assert_eq!(p.eval_grad(&x0)[0] / p.noise().sigma[0], VIOLATION_SNR);
    }
}
