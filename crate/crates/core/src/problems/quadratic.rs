use crate::error::{Error, Result};
use crate::numeric::ParamVector;

use super::{NoiseSpec, Objective, Problem};

/// Separable quadratic `f(x) = ½ Σ L_i (x_i − x*_i)²`.
///
/// Its coordinate Lipschitz vector is exactly `L` and `f* = 0`, and the
/// coordinate-wise smoothness upper bound holds with equality.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    curvature: ParamVector,
    x_opt: ParamVector,
}

impl Quadratic {
    pub fn x_opt(&self) -> &ParamVector {
        &self.x_opt
    }

    pub fn curvature(&self) -> &ParamVector {
        &self.curvature
    }

    pub(crate) fn value(&self, x: &ParamVector) -> f64 {
        self.curvature
            .iter()
            .zip(x.iter().zip(self.x_opt.iter()))
            .map(|(l, (xi, oi))| 0.5 * l * (xi - oi) * (xi - oi))
            .sum()
    }

    pub(crate) fn gradient(&self, x: &ParamVector) -> ParamVector {
        ParamVector::new(
            self.curvature
                .iter()
                .zip(x.iter().zip(self.x_opt.iter()))
                .map(|(l, (xi, oi))| l * (xi - oi))
                .collect(),
        )
    }
}

pub fn make_quadratic(lipschitz: ParamVector, x_opt: ParamVector, noise: NoiseSpec) -> Result<Problem> {
    if lipschitz.dim() == 0 {
        return Err(Error::invalid("quadratic needs dim >= 1"));
    }
    if let Some(bad) = lipschitz.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid(format!(
            "lipschitz constants must be finite and >= 0, got {bad}"
        )));
    }
    x_opt.check_dim(lipschitz.dim())?;
    let objective = Objective::Quadratic(Quadratic {
        curvature: lipschitz.clone(),
        x_opt,
    });
    Problem::new(objective, lipschitz, 0.0, noise)
}
