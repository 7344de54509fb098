//! Step rules as state transitions: SGD, SGD with momentum, SignSGD,
//! SignSGD with momentum, its pre-/post-sign dithered variants, and the
//! hybrid that runs sign-momentum steps while calibrating an SGD learning
//! rate by projection, then switches to SGD with that rate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dither::{dither_sigma_sq, DitherSchedule, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::numeric::{l2_norm_sq, sample_gaussian, sign, ParamVector, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DitherMode {
    #[default]
    None,
    /// Noise added to the momentum before the sign.
    Pre,
    /// Noise added to the already-signed step.
    Post,
}

impl fmt::Display for DitherMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DitherMode::None => "none",
            DitherMode::Pre => "pre",
            DitherMode::Post => "post",
        })
    }
}

impl FromStr for DitherMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DitherMode::None),
            "pre" => Ok(DitherMode::Pre),
            "post" => Ok(DitherMode::Post),
            other => Err(Error::invalid(format!("unknown dither mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Sign-step size δ.
    pub delta: f64,
    /// Momentum β of the `(1−β)`-weighted EMA.
    pub beta: f64,
    /// Dither scale α.
    pub alpha: f64,
    /// Dither annealing exponent γ.
    pub gamma: f64,
    /// EMA decay η of the calibrated learning rate.
    pub eta: f64,
    /// Projection stabiliser ε.
    pub epsilon: f64,
    /// Step index at which the hybrid switches to SGD; `None` never switches.
    pub t_switch: Option<u64>,
    pub dither_mode: DitherMode,
    /// Divide λ̄ by `1 − η^T` at the switch. Off by default.
    pub lambda_bias_correction: bool,
    /// Multiplier on the hybrid's post-switch learning rate (step-decay hook).
    pub sgd_lr_scale: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            delta: 1e-2,
            beta: 0.9,
            alpha: 0.0,
            gamma: DEFAULT_GAMMA,
            eta: 0.99,
            epsilon: 1e-12,
            t_switch: None,
            dither_mode: DitherMode::None,
            lambda_bias_correction: false,
            sgd_lr_scale: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(what.to_string()))
            }
        };
        check(self.delta > 0.0 && self.delta.is_finite(), "delta must be > 0")?;
        check(self.beta > 0.0 && self.beta < 1.0, "beta must lie in (0,1)")?;
        check(self.eta > 0.0 && self.eta < 1.0, "eta must lie in (0,1)")?;
        check(self.epsilon > 0.0, "epsilon must be > 0")?;
        check(self.sgd_lr_scale >= 0.0, "sgd_lr_scale must be >= 0")?;
        DitherSchedule::new(self.alpha, self.gamma).map(|_| ())
    }

    pub fn schedule(&self) -> DitherSchedule {
        DitherSchedule {
            alpha: self.alpha,
            gamma: self.gamma,
        }
    }

    /// Whether step `k` belongs to the sign phase.
    pub fn in_sign_phase(&self, k: u64) -> bool {
        self.t_switch.is_none_or(|t| k < t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sign,
    Sgd,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Sign => "sign",
            Phase::Sgd => "sgd",
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign" => Ok(Phase::Sign),
            "sgd" => Ok(Phase::Sgd),
            other => Err(Error::invalid(format!("unknown phase `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub x: ParamVector,
    pub m: ParamVector,
    pub k: u64,
    /// λ̄, frozen once the hybrid leaves the sign phase.
    pub lambda_ema: f64,
    /// λ_k of the most recent sign-momentum step.
    pub lambda: f64,
    /// Phase of the next step.
    pub phase: Phase,
}

impl OptimizerState {
    pub fn new(x0: ParamVector, phase: Phase) -> Self {
        let dim = x0.dim();
        OptimizerState {
            x: x0,
            m: ParamVector::zeros(dim),
            k: 0,
            lambda_ema: 0.0,
            lambda: 0.0,
            phase,
        }
    }
}

/// `λ = δ·|⟨sign(m), g⟩| / (‖g‖² + ε)`: the SGD rate whose step equals the
/// projection of the sign step onto `g`.
pub fn lambda_project(m_next: &ParamVector, grad: &ParamVector, delta: f64, epsilon: f64) -> f64 {
    debug_assert_eq!(m_next.dim(), grad.dim());
    let aligned: f64 = m_next.iter().zip(grad.iter()).map(|(&m, &g)| sign(m) * g).sum();
    let num = delta * aligned.abs();
    let den = l2_norm_sq(grad) + epsilon;
    num / den
}

pub fn sgd_step(mut state: OptimizerState, grad: &ParamVector, lr: f64) -> OptimizerState {
    for (x, g) in state.x.as_mut_slice().iter_mut().zip(grad.iter()) {
        *x -= lr * g;
    }
    state.k += 1;
    state.phase = Phase::Sgd;
    state
}

/// SGD on the `(1−β)`-weighted momentum: `m ← βm + (1−β)g`, `x ← x − lr·m`.
pub fn sgdm_step(mut state: OptimizerState, grad: &ParamVector, lr: f64, beta: f64) -> OptimizerState {
    update_momentum(&mut state.m, grad, beta);
    for (x, m) in state.x.as_mut_slice().iter_mut().zip(state.m.iter()) {
        *x -= lr * m;
    }
    state.k += 1;
    state.phase = Phase::Sgd;
    state
}

pub fn signsgd_step(mut state: OptimizerState, grad: &ParamVector, cfg: &OptimizerConfig) -> OptimizerState {
    for (x, g) in state.x.as_mut_slice().iter_mut().zip(grad.iter()) {
        *x -= cfg.delta * sign(*g);
    }
    state.k += 1;
    state.phase = Phase::Sign;
    state
}

/// Clean sign-momentum step. Ignores `cfg.dither_mode`.
pub fn signsgdm_step(state: OptimizerState, grad: &ParamVector, cfg: &OptimizerConfig) -> OptimizerState {
    sign_momentum_step(state, grad, cfg, None)
}

/// Sign-momentum step with annealed Gaussian dither per `cfg.dither_mode`.
/// `α = 0` draws nothing and reproduces [`signsgdm_step`] bit for bit.
pub fn dithered_step(
    state: OptimizerState,
    grad: &ParamVector,
    cfg: &OptimizerConfig,
    rng: &mut RngStream,
) -> OptimizerState {
    sign_momentum_step(state, grad, cfg, Some(rng))
}

/// Sign-momentum steps with projection calibration until `t_switch`, then
/// SGD with the frozen λ̄.
pub fn hybrid_step(
    state: OptimizerState,
    grad: &ParamVector,
    cfg: &OptimizerConfig,
    rng: &mut RngStream,
) -> OptimizerState {
    if cfg.in_sign_phase(state.k) {
        return sign_momentum_step(state, grad, cfg, Some(rng));
    }
    let lr = switched_lr(&state, cfg) * cfg.sgd_lr_scale;
    sgd_step(state, grad, lr)
}

/// Learning rate the hybrid uses after the switch.
pub fn switched_lr(state: &OptimizerState, cfg: &OptimizerConfig) -> f64 {
    match cfg.t_switch {
        Some(t) if cfg.lambda_bias_correction && t > 0 => state.lambda_ema / (1.0 - cfg.eta.powf(t as f64)),
        _ => state.lambda_ema,
    }
}

fn update_momentum(m: &mut ParamVector, grad: &ParamVector, beta: f64) {
    for (mi, g) in m.as_mut_slice().iter_mut().zip(grad.iter()) {
        *mi = beta * *mi + (1.0 - beta) * g;
    }
}

/// Momentum first, then λ_k from the fresh momentum and the raw gradient,
/// then the EMA, then the (optionally dithered) sign step.
fn sign_momentum_step(
    mut state: OptimizerState,
    grad: &ParamVector,
    cfg: &OptimizerConfig,
    rng: Option<&mut RngStream>,
) -> OptimizerState {
    update_momentum(&mut state.m, grad, cfg.beta);

    let lambda = lambda_project(&state.m, grad, cfg.delta, cfg.epsilon);
    state.lambda = lambda;
    state.lambda_ema = cfg.eta * state.lambda_ema + (1.0 - cfg.eta) * lambda;

    let mode = if rng.is_some() {
        cfg.dither_mode
    } else {
        DitherMode::None
    };
    let dim = state.x.dim();
    let dither = match (mode, rng) {
        (DitherMode::None, _) | (_, None) => None,
        (_, Some(rng)) => {
            let std = dither_sigma_sq(state.k, &cfg.schedule()).sqrt();
            Some(sample_gaussian(dim, 0.0, std, rng).expect("dither std is nonnegative"))
        }
    };
    let delta = cfg.delta;
    let x = state.x.as_mut_slice();
    match (mode, dither) {
        (DitherMode::Pre, Some(xi)) => {
            for ((x, m), e) in x.iter_mut().zip(state.m.iter()).zip(xi.iter()) {
                *x -= delta * sign(m + e);
            }
        }
        (DitherMode::Post, Some(xi)) => {
            for ((x, m), e) in x.iter_mut().zip(state.m.iter()).zip(xi.iter()) {
                *x -= delta * (sign(*m) + e);
            }
        }
        _ => {
            for (x, m) in x.iter_mut().zip(state.m.iter()) {
                *x -= delta * sign(*m);
            }
        }
    }
    state.k += 1;
    state.phase = if cfg.in_sign_phase(state.k) {
        Phase::Sign
    } else {
        Phase::Sgd
    };
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Sgdm,
    Signsgd,
    Signsgdm,
    Dithered,
    Hybrid,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Sgdm => "sgdm",
            Algorithm::Signsgd => "signsgd",
            Algorithm::Signsgdm => "signsgdm",
            Algorithm::Dithered => "dithered",
            Algorithm::Hybrid => "hybrid",
        }
    }

    /// Whether the step records a projection λ_k.
    pub fn tracks_lambda(&self) -> bool {
        matches!(self, Algorithm::Signsgdm | Algorithm::Dithered | Algorithm::Hybrid)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Algorithm::Sgd),
            "sgdm" => Ok(Algorithm::Sgdm),
            "signsgd" => Ok(Algorithm::Signsgd),
            "signsgdm" => Ok(Algorithm::Signsgdm),
            "dithered" => Ok(Algorithm::Dithered),
            "hybrid" => Ok(Algorithm::Hybrid),
            other => Err(Error::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// An algorithm with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimizer {
    pub algorithm: Algorithm,
    pub cfg: OptimizerConfig,
    /// Learning rate of the plain SGD / SGD-M baselines.
    pub lr: f64,
}

impl Optimizer {
    pub fn init_state(&self, x0: ParamVector) -> OptimizerState {
        let phase = match self.algorithm {
            Algorithm::Sgd | Algorithm::Sgdm => Phase::Sgd,
            Algorithm::Hybrid if !self.cfg.in_sign_phase(0) => Phase::Sgd,
            _ => Phase::Sign,
        };
        OptimizerState::new(x0, phase)
    }

    /// One step, with every learning rate scaled by `lr_multiplier`.
    pub fn step(
        &self,
        state: OptimizerState,
        grad: &ParamVector,
        rng: &mut RngStream,
        lr_multiplier: f64,
    ) -> OptimizerState {
        let mut cfg = self.cfg;
        cfg.delta *= lr_multiplier;
        cfg.sgd_lr_scale *= lr_multiplier;
        let lr = self.lr * lr_multiplier;
        match self.algorithm {
            Algorithm::Sgd => sgd_step(state, grad, lr),
            Algorithm::Sgdm => sgdm_step(state, grad, lr, cfg.beta),
            Algorithm::Signsgd => signsgd_step(state, grad, &cfg),
            Algorithm::Signsgdm => signsgdm_step(state, grad, &cfg),
            Algorithm::Dithered => dithered_step(state, grad, &cfg, rng),
            Algorithm::Hybrid => hybrid_step(state, grad, &cfg, rng),
        }
    }

    /// Dither variance applied at step `k` (0 when the step is not dithered).
    pub fn dither_sigma_sq_at(&self, k: u64) -> f64 {
        let dithers = match self.algorithm {
            Algorithm::Dithered => true,
            Algorithm::Hybrid => self.cfg.in_sign_phase(k),
            _ => false,
        };
        if dithers && self.cfg.dither_mode != DitherMode::None {
            dither_sigma_sq(k, &self.cfg.schedule())
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::inner;

    fn state(x: &[f64]) -> OptimizerState {
        OptimizerState::new(ParamVector::new(x.to_vec()), Phase::Sign)
    }

    fn cfg(delta: f64) -> OptimizerConfig {
        OptimizerConfig {
            delta,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn sgd_examples() {
        let s = sgd_step(state(&[1.0, 1.0]), &[2.0, -2.0].into(), 0.5);
        assert_eq!(s.x, ParamVector::from([0.0, 2.0]));
        assert_eq!(s.k, 1);
        assert_eq!(s.phase, Phase::Sgd);
        let s = sgd_step(state(&[1.0, 3.0]), &[2.0, -2.0].into(), 0.0);
        assert_eq!(s.x, ParamVector::from([1.0, 3.0]));
        let s = sgd_step(state(&[1.0, 3.0]), &ParamVector::zeros(2), 0.7);
        assert_eq!(s.x, ParamVector::from([1.0, 3.0]));
        assert_eq!((s.m, s.lambda_ema), (ParamVector::zeros(2), 0.0));
    }

    #[test]
    fn signsgd_examples() {
        let s = signsgd_step(state(&[0.0, 0.0]), &[3.0, -2.0].into(), &cfg(0.1));
        assert_eq!(s.x, ParamVector::from([-0.1, 0.1]));
        let s = signsgd_step(state(&[0.5, 0.25]), &ParamVector::zeros(2), &cfg(0.1));
        assert_eq!(s.x, ParamVector::from([0.5, 0.25]));
    }

    #[test]
    fn signsgdm_first_step_and_fixed_point() {
        let c = cfg(0.05);
        let s = signsgdm_step(state(&[1.0, 1.0]), &[1.0, -1.0].into(), &c);
        assert!((s.m[0] - 0.1).abs() < 1e-16 && (s.m[1] + 0.1).abs() < 1e-16);
        assert_eq!(s.x, ParamVector::from([1.0 - 0.05, 1.0 + 0.05]));

        let mut s = state(&[0.0]);
        for _ in 0..500 {
            s = signsgdm_step(s, &[2.5].into(), &c);
        }
        assert!((s.m[0] - 2.5).abs() < 2.5 * 0.9f64.powi(500) + 1e-12);
    }

    #[test]
    fn lambda_examples() {
        // g = c·sign(m) with d = 4, c = 2, δ = 0.1: λ = 0.1·8/(16 + ε).
        let m = ParamVector::from([0.3, -1.0, 2.0, -0.01]);
        let g = m.map(|v| 2.0 * sign(v));
        let lam = lambda_project(&m, &g, 0.1, 1e-12);
        assert_eq!(lam, 0.1 * 8.0 / (16.0 + 1e-12));
        assert!((lam - 0.05).abs() < 1e-14);
        assert_eq!(lambda_project(&m, &g, 0.1, 1e-18), 0.05);

        let orth = ParamVector::from([1.0, 1.0, -1.0, -1.0]);
        let g = ParamVector::from([1.0, -1.0, 2.0, -2.0]);
        assert_eq!(inner(&orth.map(sign), &g).unwrap(), 0.0);
        assert_eq!(lambda_project(&orth, &g, 0.1, 1e-12), 0.0);
        assert_eq!(lambda_project(&orth, &ParamVector::zeros(4), 0.1, 1e-12), 0.0);
    }

    #[test]
    fn hybrid_switches_and_freezes_lambda() {
        let mut c = cfg(0.01);
        c.t_switch = Some(3);
        let mut rng = RngStream::new(0, 1);
        let mut s = state(&[1.0, -1.0]);
        for _ in 0..3 {
            assert_eq!(s.phase, Phase::Sign);
            s = hybrid_step(s, &[1.0, -2.0].into(), &c, &mut rng);
        }
        assert_eq!(s.phase, Phase::Sgd);
        let frozen = s.lambda_ema;
        assert!(frozen > 0.0);
        let before = s.x.clone();
        s = hybrid_step(s, &[1.0, -2.0].into(), &c, &mut rng);
        assert_eq!(s.lambda_ema, frozen);
        assert_eq!(s.x, ParamVector::from([before[0] - frozen, before[1] + 2.0 * frozen]));
    }

    #[test]
    fn bias_correction_rescales_switch_rate() {
        let mut c = cfg(0.01);
        c.t_switch = Some(10);
        c.lambda_bias_correction = true;
        let s = OptimizerState {
            lambda_ema: 0.5,
            ..state(&[0.0])
        };
        let expected = 0.5 / (1.0 - 0.99f64.powi(10));
        assert!((switched_lr(&s, &c) - expected).abs() < 1e-15);
        c.lambda_bias_correction = false;
        assert_eq!(switched_lr(&s, &c), 0.5);
    }

    #[test]
    fn quadratic_post_switch_contraction() {
        // σ = 0 quadratic with L = (0.5, 1, 3): in the SGD phase each coordinate
        // follows e_{k+1} = (1 − λ̄ L_i) e_k exactly.
        let lip = [0.5, 1.0, 3.0];
        let mut c = cfg(0.02);
        c.t_switch = Some(0);
        let lam = 0.4;
        let mut s = OptimizerState {
            lambda_ema: lam,
            ..OptimizerState::new([2.0, -1.0, 0.5].into(), Phase::Sgd)
        };
        let mut rng = RngStream::new(0, 0);
        let mut oracle = [2.0f64, -1.0, 0.5];
        for _ in 0..50 {
            let g = ParamVector::new((0..3).map(|i| lip[i] * s.x[i]).collect());
            s = hybrid_step(s, &g, &c, &mut rng);
            for i in 0..3 {
                oracle[i] *= 1.0 - lam * lip[i];
                assert!((s.x[i] - oracle[i]).abs() <= 1e-12 * oracle[i].abs().max(1e-300) + 1e-300);
            }
        }
        assert!(s.x.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn parse_names() {
        assert_eq!("hybrid".parse::<Algorithm>().unwrap(), Algorithm::Hybrid);
        assert!(matches!("adam".parse::<Algorithm>(), Err(Error::UnknownAlgorithm(_))));
        assert_eq!("post".parse::<DitherMode>().unwrap(), DitherMode::Post);
        assert_eq!("sgd".parse::<Phase>().unwrap(), Phase::Sgd);
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        assert!(OptimizerConfig {
            beta: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            delta: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            epsilon: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OptimizerConfig {
            alpha: -0.1,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
