use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ParamVector, RngStream};

/// Default rare-branch probability of the asymmetric-bimodal family.
pub const DEFAULT_BIMODAL_Q: f64 = 0.1;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Zero-mean, unit-variance noise shape. Scaled per coordinate by `σ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    Gaussian,
    /// Uniform on `[-√3, √3]`.
    Uniform,
    /// Laplace with scale `1/√2`.
    Laplace,
    /// `+a` with probability `q`, `-b` otherwise, `qa = (1-q)b`.
    /// Zero-mean but neither symmetric nor unimodal.
    AsymmetricBimodal {
        q: f64,
    },
}

impl NoiseFamily {
    pub fn is_symmetric_unimodal(&self) -> bool {
        !matches!(self, NoiseFamily::AsymmetricBimodal { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseFamily::AsymmetricBimodal { q } = *self {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!("bimodal q must lie in (0,1), got {q}")));
            }
        }
        Ok(())
    }

    /// The two atoms `(a, b)` of the bimodal family at unit variance.
    pub fn bimodal_atoms(q: f64) -> (f64, f64) {
        (((1.0 - q) / q).sqrt(), (q / (1.0 - q)).sqrt())
    }

    /// One zero-mean unit-variance draw.
    pub fn sample_unit(&self, rng: &mut RngStream) -> f64 {
        match *self {
            NoiseFamily::Gaussian => rng.standard_normal(),
            NoiseFamily::Uniform => SQRT_3 * (2.0 * rng.uniform() - 1.0),
            NoiseFamily::Laplace => {
                // Inverse CDF on u in (-1/2, 1/2]; 1 - 2|u| stays in [0, 1).
                let u = 0.5 - rng.uniform();
                let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                -(u.signum() / SQRT_2) * tail.ln()
            }
            NoiseFamily::AsymmetricBimodal { q } => {
                let (a, b) = Self::bimodal_atoms(q);
                if rng.uniform() < q {
                    a
                } else {
                    -b
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Uniform => "uniform",
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::AsymmetricBimodal { .. } => "asymmetric-bimodal",
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "uniform" => Ok(NoiseFamily::Uniform),
            "laplace" => Ok(NoiseFamily::Laplace),
            "asymmetric-bimodal" => Ok(NoiseFamily::AsymmetricBimodal { q: DEFAULT_BIMODAL_Q }),
            other => Err(Error::invalid(format!("unsupported noise family `{other}`"))),
        }
    }
}

/// Additive gradient-noise model: family shape times per-coordinate scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub sigma: ParamVector,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, sigma: ParamVector) -> Result<Self> {
        family.validate()?;
        if let Some(bad) = sigma.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid(format!(
                "noise scale must be finite and >= 0, got {bad}"
            )));
        }
        Ok(NoiseSpec { family, sigma })
    }

    pub fn noiseless(dim: usize) -> Self {
        NoiseSpec {
            family: NoiseFamily::Gaussian,
            sigma: ParamVector::zeros(dim),
        }
    }

    pub fn gaussian(sigma: ParamVector) -> Result<Self> {
        Self::new(NoiseFamily::Gaussian, sigma)
    }

    /// `σ̃₁ = Σ σ_i`.
    pub fn l1_sigma(&self) -> f64 {
        self.sigma.iter().sum()
    }
}
