//! Synthetic objectives with exact gradients, known coordinate Lipschitz
//! constants and lower bounds, plus an additive-noise gradient oracle whose
//! per-coordinate scale is known exactly.

mod logistic;
mod mlp;
mod noise;
mod quadratic;

use serde::{Deserialize, Serialize};

pub use logistic::{make_logistic, make_logistic_with_reg, Logistic, DEFAULT_LOGISTIC_REG};
pub use mlp::{make_mlp, mlp_param_count, Mlp, MLP_WEIGHT_BOX};
pub use noise::{NoiseFamily, NoiseSpec, DEFAULT_BIMODAL_Q};
pub use quadratic::{make_quadratic, Quadratic};

use crate::error::{Error, Result};
use crate::numeric::{ParamVector, RngStream};

/// Stream id reserved for dataset generation inside problem constructors.
pub(crate) const DATASET_STREAM: u64 = 0xda7a;
/// Stream id for the default MLP initialisation.
pub(crate) const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(Quadratic),
    Logistic(Logistic),
    Mlp(Mlp),
}

/// Objective plus its smoothness constants, lower bound and noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    objective: Objective,
    lipschitz: ParamVector,
    f_star: f64,
    noise: NoiseSpec,
}

impl Problem {
    fn new(objective: Objective, lipschitz: ParamVector, f_star: f64, noise: NoiseSpec) -> Result<Self> {
        noise.sigma.check_dim(lipschitz.dim())?;
        Ok(Problem {
            objective,
            lipschitz,
            f_star,
            noise,
        })
    }

    pub fn dim(&self) -> usize {
        self.lipschitz.dim()
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn eval_f(&self, x: &ParamVector) -> f64 {
        debug_assert_eq!(x.dim(), self.dim());
        match &self.objective {
            Objective::Quadratic(q) => q.value(x),
            Objective::Logistic(l) => l.value(x),
            Objective::Mlp(m) => m.value(x),
        }
    }

    pub fn eval_grad(&self, x: &ParamVector) -> ParamVector {
        debug_assert_eq!(x.dim(), self.dim());
        match &self.objective {
            Objective::Quadratic(q) => q.gradient(x),
            Objective::Logistic(l) => l.gradient(x),
            Objective::Mlp(m) => m.gradient(x),
        }
    }

    /// Coordinate Lipschitz vector `L` of `∇f`.
    pub fn lipschitz(&self) -> &ParamVector {
        &self.lipschitz
    }

    /// `L̃₁ = Σ L_i`.
    pub fn l1_lipschitz(&self) -> f64 {
        self.lipschitz.iter().sum()
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// Replace the noise model, keeping everything else.
    pub fn with_noise(&self, noise: NoiseSpec) -> Result<Self> {
        Problem::new(self.objective.clone(), self.lipschitz.clone(), self.f_star, noise)
    }

    /// Starting point used when a run does not specify one.
    pub fn default_start(&self) -> ParamVector {
        match &self.objective {
            Objective::Quadratic(q) => q.x_opt().map(|v| v + 1.0),
            Objective::Logistic(_) => ParamVector::zeros(self.dim()),
            Objective::Mlp(m) => m.default_start(),
        }
    }

    /// Per-coordinate standard deviation `σ_i/√n` of a batch-`n` sample.
    pub fn coord_std(&self, batch_size: usize) -> ParamVector {
        let root_n = (batch_size as f64).sqrt();
        self.noise.sigma.map(|s| s / root_n)
    }
}

/// One mini-batch gradient draw from the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradSample {
    pub grad: ParamVector,
    pub batch_size: usize,
    /// `s_i = σ_i/√n`.
    pub coord_std: ParamVector,
}

/// Mini-batch oracle: `∇f(x) + (1/n) Σ_j ζ_j` with `ζ_j` drawn per the
/// problem's noise spec. Coordinates with `σ_i = 0` are returned exactly and
/// consume no randomness.
pub fn stochastic_grad(p: &Problem, x: &ParamVector, n: usize, rng: &mut RngStream) -> Result<GradSample> {
    if n == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    x.check_dim(p.dim())?;
    let mut grad = p.eval_grad(x);
    let family = p.noise.family;
    let inv_n = 1.0 / n as f64;
    for (g, &sigma) in grad.as_mut_slice().iter_mut().zip(p.noise.sigma.iter()) {
        if sigma == 0.0 {
            continue;
        }
        let total: f64 = (0..n).map(|_| family.sample_unit(rng)).sum();
        *g += sigma * (total * inv_n);
    }
    Ok(GradSample {
        grad,
        batch_size: n,
        coord_std: p.coord_std(n),
    })
}

/// Central-difference gradient, used to validate analytic gradients.
pub fn finite_difference_grad(p: &Problem, x: &ParamVector, h: f64) -> ParamVector {
    let mut probe = x.clone();
    let mut out = ParamVector::zeros(x.dim());
    for i in 0..x.dim() {
        let xi = x[i];
        let step = h * xi.abs().max(1.0);
        probe[i] = xi + step;
        let fp = p.eval_f(&probe);
        probe[i] = xi - step;
        let fm = p.eval_f(&probe);
        probe[i] = xi;
        out[i] = (fp - fm) / (2.0 * step);
    }
    out
}
