//! Single-run executor.

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::ExperimentConfig;
use super::record::{emit_csv, emit_json, RecordRow, RunRecord, RunSummary, SummaryDocument};
use crate::error::Result;
use crate::numeric::{l1_norm, ParamVector, RngStream};
use crate::optimizers::{Algorithm, Phase};
use crate::problems::{stochastic_grad, Problem};
use crate::theory::{phi_measure, SnrProfile};

/// Stream id of the gradient-noise generator of a run.
pub const NOISE_STREAM: u64 = 1;
/// Stream id of the dither generator of a run.
pub const DITHER_STREAM: u64 = 2;

/// `(‖g‖₁, Φ)` at `x`, from the true gradient and `s_i = σ_i/√n`.
pub fn true_metrics(problem: &Problem, x: &ParamVector, batch_size: usize) -> (f64, f64) {
    let g = problem.eval_grad(x);
    let l1 = l1_norm(&g);
    let profile = SnrProfile {
        g,
        s: problem.coord_std(batch_size),
    };
    (l1, phi_measure(&profile))
}

/// Runs `cfg` with `seed`. Deterministic in `(cfg, seed)` apart from wall time.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    run_inner(cfg, seed, None)
}

/// Like [`run_single`], also returning the iterate behind every recorded row.
pub fn run_single_with_iterates(cfg: &ExperimentConfig, seed: u64) -> Result<(RunRecord, Vec<ParamVector>)> {
    let mut iterates = Vec::new();
    let record = run_inner(cfg, seed, Some(&mut iterates))?;
    Ok((record, iterates))
}

fn run_inner(cfg: &ExperimentConfig, seed: u64, mut iterates: Option<&mut Vec<ParamVector>>) -> Result<RunRecord> {
    let started = Instant::now();
    let problem = cfg.build_problem()?;
    let opt = cfg.build_optimizer(&problem)?;
    let x0 = cfg.start_point(&problem)?;
    let n = cfg.run.batch_size;
    let steps = cfg.run.steps;
    let stride = cfg.run.effective_stride();

    let mut noise_rng = RngStream::new(seed, NOISE_STREAM);
    let mut dither_rng = RngStream::new(seed, DITHER_STREAM);
    let mut state = opt.init_state(x0);
    state.lambda_ema = cfg.optimizer.lambda_init;

    let hybrid_switch = match opt.algorithm {
        Algorithm::Hybrid => opt.cfg.t_switch.filter(|&t| t <= steps),
        _ => None,
    };
    let mut lambda_at_switch = None;
    let mut rows = Vec::with_capacity((steps / stride + 2) as usize);
    let (mut sum_phi, mut sum_l1) = (0.0, 0.0);
    let mut initial_f = f64::NAN;
    let mut diverged = false;
    let mut completed = 0u64;

    let mut push_row = |rows: &mut Vec<RecordRow>,
                        k: u64,
                        f: f64,
                        l1: f64,
                        phi: f64,
                        state_phase: Phase,
                        lam: f64,
                        ema: f64,
                        x: &ParamVector| {
        rows.push(RecordRow {
            k,
            f,
            l1_grad: l1,
            phi,
            lambda: lam,
            lambda_ema: ema,
            sigma_dither_sq: if k < steps { opt.dither_sigma_sq_at(k) } else { 0.0 },
            phase: state_phase,
        });
        if let Some(it) = iterates.as_deref_mut() {
            it.push(x.clone());
        }
    };

    for k in 0..steps {
        let f = problem.eval_f(&state.x);
        if k == 0 {
            initial_f = f;
        }
        if !f.is_finite() {
            diverged = true;
            break;
        }
        let (l1, phi) = true_metrics(&problem, &state.x, n);
        sum_phi += phi;
        sum_l1 += l1;
        if Some(k) == hybrid_switch {
            lambda_at_switch = Some(state.lambda_ema);
        }
        if k % stride == 0 {
            push_row(
                &mut rows,
                k,
                f,
                l1,
                phi,
                state.phase,
                state.lambda,
                state.lambda_ema,
                &state.x,
            );
        }
        let sample = stochastic_grad(&problem, &state.x, n, &mut noise_rng)?;
        state = opt.step(state, &sample.grad, &mut dither_rng, cfg.schedule.multiplier(k));
        completed += 1;
    }

    let final_f = problem.eval_f(&state.x);
    if !diverged {
        if Some(steps) == hybrid_switch {
            lambda_at_switch = Some(state.lambda_ema);
        }
        if final_f.is_finite() {
            let (l1, phi) = true_metrics(&problem, &state.x, n);
            push_row(
                &mut rows,
                steps,
                final_f,
                l1,
                phi,
                state.phase,
                state.lambda,
                state.lambda_ema,
                &state.x,
            );
        } else {
            diverged = true;
        }
    }
    let denom = completed.max(1) as f64;
    Ok(RunRecord {
        rows,
        summary: RunSummary {
            seed,
            algorithm: opt.algorithm.as_str().to_string(),
            steps_requested: steps,
            steps_completed: completed,
            batch_size: n,
            initial_f,
            final_f,
            mean_phi: sum_phi / denom,
            mean_l1_grad: sum_l1 / denom,
            oracle_calls: completed,
            delta_used: opt.cfg.delta,
            lambda_at_switch,
            final_lambda_ema: state.lambda_ema,
            diverged,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`, creating it if needed.
pub fn write_run(
    cfg: &ExperimentConfig,
    record: &RunRecord,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    emit_csv(&record.rows, &csv)?;
    emit_json(
        &SummaryDocument {
            config: cfg.pairs(),
            summary: record.summary.clone(),
        },
        &json,
    )?;
    Ok((csv, json))
}
