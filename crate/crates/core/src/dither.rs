//! Annealed Gaussian dither and the statistics of a dithered sign.
//!
//! Adding `ξ ~ N(0, σ²)` before the sign turns the 1-bit quantizer into a
//! stochastic one whose mean output is `2Φ(m/σ) − 1 = erf(m/(σ√2))`. For
//! `|m| ≪ σ` that mean is `≈ m·√(2/π)/σ`: proportional to `m`, not `sign(m)`.

use std::f64::consts::{FRAC_2_SQRT_PI, SQRT_2};

use libm::{erf, erfc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{sign, RngStream};

/// Default annealing exponent.
pub const DEFAULT_GAMMA: f64 = 0.55;

/// `σ_k² = α (1 + k)^(−γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DitherSchedule {
    pub alpha: f64,
    pub gamma: f64,
}

impl DitherSchedule {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("dither alpha must be >= 0, got {alpha}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("dither gamma must be > 0, got {gamma}")));
        }
        Ok(DitherSchedule { alpha, gamma })
    }

    pub fn sigma_sq(&self, k: u64) -> f64 {
        dither_sigma_sq(k, self)
    }
}

pub fn dither_sigma_sq(k: u64, s: &DitherSchedule) -> f64 {
    if s.alpha == 0.0 {
        return 0.0;
    }
    s.alpha * (1.0 + k as f64).powf(-s.gamma)
}

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `P[sign(m + ξ) = sign(m)] = Φ(|m|/σ)`; `σ = 0` gives 1.
pub fn correct_sign_prob(m: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        if m == 0.0 {
            return Err(Error::invalid("sign of zero signal is undefined without dither"));
        }
        return Ok(1.0);
    }
    Ok(normal_cdf(m.abs() / sigma))
}

/// `E[sign(m + ξ)] = 2Φ(m/σ) − 1`, evaluated as `erf(m/(σ√2))` so small
/// ratios keep full relative precision. `σ = 0` gives `sign(m)`.
pub fn expected_dithered_sign(m: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(sign(m));
    }
    Ok(erf(m / (sigma * SQRT_2)))
}

/// First-order approximation `m·√(2/π)/σ` of [`expected_dithered_sign`].
pub fn first_order_dithered_sign(m: f64, sigma: f64) -> f64 {
    // √(2/π) = (2/√π)/√2
    m * (FRAC_2_SQRT_PI / SQRT_2) / sigma
}

/// Monte Carlo estimate of `E[sign(m + ξ)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: u64,
}

pub fn mc_dithered_sign(m: f64, sigma: f64, trials: u64, rng: &mut RngStream) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(McEstimate {
            mean: sign(m),
            std_err: 0.0,
            trials,
        });
    }
    // Outcomes are in {-1, 0, +1}; tally them exactly.
    let (mut pos, mut neg) = (0u64, 0u64);
    for _ in 0..trials {
        let v = m + sigma * rng.standard_normal();
        if v > 0.0 {
            pos += 1;
        } else if v < 0.0 {
            neg += 1;
        }
    }
    let n = trials as f64;
    let mean = (pos as f64 - neg as f64) / n;
    let second = (pos + neg) as f64 / n;
    let var = (second - mean * mean).max(0.0);
    let std_err = if trials > 1 {
        (var * n / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate { mean, std_err, trials })
}
