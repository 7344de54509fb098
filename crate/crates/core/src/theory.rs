//! Closed-form quantities behind the small-batch SignSGD rate: the
//! SNR-weighted stationarity measure, the Gauss sign-failure bound and its
//! linear relaxation, the alignment lower bound, and the two right-hand sides
//! of the rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ParamVector, RngStream};
use crate::problems::NoiseFamily;

/// `√(2/3)`, the split point of the failure bound.
pub const GAUSS_SPLIT: f64 = 0.816_496_580_927_726;
const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// True gradient together with the per-coordinate noise standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrProfile {
    pub g: ParamVector,
    /// `s_i ≥ 0`; zero marks a noiseless coordinate.
    pub s: ParamVector,
}

impl SnrProfile {
    pub fn new(g: ParamVector, s: ParamVector) -> Result<Self> {
        s.check_dim(g.dim())?;
        if let Some(bad) = s.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("noise std must be >= 0, got {bad}")));
        }
        Ok(SnrProfile { g, s })
    }

    /// `S_i = |g_i| / s_i` (infinite on noiseless coordinates with `g_i ≠ 0`).
    pub fn snr(&self) -> ParamVector {
        self.g.zip_map(&self.s, |g, s| if g == 0.0 { 0.0 } else { g.abs() / s })
    }
}

/// Constants entering the rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    /// `L̃₁ = Σ L_i`.
    pub l1_lipschitz: f64,
    /// `σ̃₁ = Σ σ_i` (single-sample scale).
    pub l1_sigma: f64,
    pub f0: f64,
    pub f_star: f64,
    pub iterations: u64,
    pub batch_size: u64,
}

impl TheoremInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1_lipschitz > 0.0) {
            return Err(Error::invalid("L̃₁ must be > 0"));
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::invalid("K and n must be >= 1"));
        }
        if !(self.f0 >= self.f_star) || !(self.l1_sigma >= 0.0) {
            return Err(Error::invalid("need f0 >= f* and σ̃₁ >= 0"));
        }
        Ok(())
    }

    /// The prescribed constant stepsize `1/√(L̃₁ K)`.
    pub fn stepsize(&self) -> f64 {
        1.0 / (self.l1_lipschitz * self.iterations as f64).sqrt()
    }
}

/// `Φ = Σ_i min(|g_i|, g_i²/s_i)`; coordinates with `s_i = 0` contribute `|g_i|`.
pub fn phi_measure(p: &SnrProfile) -> f64 {
    p.g.iter()
        .zip(p.s.iter())
        .map(|(&g, &s)| {
            let a = g.abs();
            if s == 0.0 {
                a
            } else {
                a.min(a * a / s)
            }
        })
        .sum()
}

/// Upper bound on the sign-failure probability at SNR `S` under unimodal
/// symmetric noise. `S = √(2/3)` falls in the linear branch.
pub fn gauss_bound(snr: f64) -> f64 {
    if snr > GAUSS_SPLIT {
        2.0 / (9.0 * snr * snr)
    } else {
        0.5 - snr / (2.0 * SQRT_3)
    }
}

/// `min(1, S)/3`, the guaranteed lower bound on `1 − 2p`.
pub fn sign_agreement_lower_bound(snr: f64) -> f64 {
    snr.min(1.0) / 3.0
}

/// `1 − 2·gauss_bound(S) ≥ min(1, S)/3`, evaluated with no tolerance.
pub fn relaxation_holds(snr: f64) -> bool {
    1.0 - 2.0 * gauss_bound(snr) >= sign_agreement_lower_bound(snr)
}

/// `Φ/3`, the proven lower bound on `E[gᵀ sign(g̃)]`.
pub fn expected_alignment_bound(p: &SnrProfile) -> f64 {
    phi_measure(p) / 3.0
}

/// `3√L̃₁/√K · (f0 − f* + ½)`.
pub fn theorem_rhs_phi(t: &TheoremInputs) -> f64 {
    3.0 * t.l1_lipschitz.sqrt() / (t.iterations as f64).sqrt() * (t.f0 - t.f_star + 0.5)
}

/// `theorem_rhs_phi + σ̃₁/√n`.
pub fn theorem_rhs_l1(t: &TheoremInputs) -> f64 {
    theorem_rhs_phi(t) + t.l1_sigma / (t.batch_size as f64).sqrt()
}

/// `|a| ≤ min(|a|, a²/s) + s` for `s > 0`.
pub fn min_split_check(a: f64, s: f64) -> bool {
    let abs = a.abs();
    abs <= abs.min(a * a / s) + s
}

/// Monte Carlo failure rate of `sign(S + ζ)` for unit-variance `ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub failures: u64,
    pub trials: u64,
}

impl FailureEstimate {
    pub fn from_counts(failures: u64, trials: u64) -> Self {
        let n = trials as f64;
        let p_hat = failures as f64 / n;
        FailureEstimate {
            p_hat,
            std_err: (p_hat * (1.0 - p_hat) / n).sqrt(),
            failures,
            trials,
        }
    }

    /// Exact merge of shards.
    pub fn merge(self, other: FailureEstimate) -> Self {
        Self::from_counts(self.failures + other.failures, self.trials + other.trials)
    }
}

/// Simulates `g̃ = S + ζ`; a draw fails when `g̃ ≤ 0` (zero counts as failure).
pub fn mc_sign_failure(family: NoiseFamily, snr: f64, trials: u64, rng: &mut RngStream) -> Result<FailureEstimate> {
    family.validate()?;
    if !(snr >= 0.0) {
        return Err(Error::invalid(format!("SNR must be >= 0, got {snr}")));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let failures = (0..trials).filter(|_| snr + family.sample_unit(rng) <= 0.0).count() as u64;
    Ok(FailureEstimate::from_counts(failures, trials))
}
