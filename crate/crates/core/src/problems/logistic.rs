use crate::error::{Error, Result};
use crate::numeric::{dot, ParamVector, RngStream};

use super::{NoiseSpec, Objective, Problem, DATASET_STREAM};

pub const DEFAULT_LOGISTIC_REG: f64 = 1e-2;

/// Label-flip noise added to the planted margin before taking its sign.
const LABEL_NOISE: f64 = 0.1;

/// L2-regularised logistic regression on a planted linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    dim: usize,
    /// Row-major `n_points × dim` design matrix.
    features: Vec<f64>,
    labels: Vec<f64>,
    reg: f64,
}

/// `ln(1 + e^t)` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Logistic {
    fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.features.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    pub fn n_points(&self) -> usize {
        self.labels.len()
    }

    pub(crate) fn value(&self, x: &ParamVector) -> f64 {
        let n = self.n_points() as f64;
        let data: f64 = self.rows().map(|(a, y)| softplus(-y * dot(a, x))).sum::<f64>() / n;
        data + 0.5 * self.reg * dot(x, x)
    }

    pub(crate) fn gradient(&self, x: &ParamVector) -> ParamVector {
        let n = self.n_points() as f64;
        let mut g = x.map(|v| self.reg * v);
        for (a, y) in self.rows() {
            // d/dt softplus(-y t) = -y σ(-y t)
            let coef = -y * sigmoid(-y * dot(a, x)) / n;
            for (gi, ai) in g.as_mut_slice().iter_mut().zip(a) {
                *gi += coef * ai;
            }
        }
        g
    }

    /// `L_i = ¼·mean_j a_{j,i}² + reg`, since `σ(1−σ) ≤ ¼`.
    fn lipschitz(&self) -> ParamVector {
        let n = self.n_points() as f64;
        let mut lip = vec![0.0; self.dim];
        for (a, _) in self.rows() {
            for (l, ai) in lip.iter_mut().zip(a) {
                *l += ai * ai;
            }
        }
        ParamVector::new(lip.into_iter().map(|s| 0.25 * s / n + self.reg).collect())
    }
}

pub fn make_logistic(dataset_seed: u64, dim: usize, n_points: usize, noise: NoiseSpec) -> Result<Problem> {
    make_logistic_with_reg(dataset_seed, dim, n_points, DEFAULT_LOGISTIC_REG, noise)
}

pub fn make_logistic_with_reg(
    dataset_seed: u64,
    dim: usize,
    n_points: usize,
    reg: f64,
    noise: NoiseSpec,
) -> Result<Problem> {
    if n_points == 0 || dim == 0 {
        return Err(Error::invalid("logistic problem needs dim >= 1 and n_points >= 1"));
    }
    if !(reg >= 0.0) {
        return Err(Error::invalid(format!("regulariser must be >= 0, got {reg}")));
    }
    let mut rng = RngStream::new(dataset_seed, DATASET_STREAM);
    let planted: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let norm = dot(&planted, &planted).sqrt().max(f64::MIN_POSITIVE);
    let mut features = Vec::with_capacity(n_points * dim);
    let mut labels = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let row: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let margin = dot(&row, &planted) / norm + LABEL_NOISE * rng.standard_normal();
        labels.push(if margin >= 0.0 { 1.0 } else { -1.0 });
        features.extend(row);
    }
    let logistic = Logistic {
        dim,
        features,
        labels,
        reg,
    };
    let lipschitz = logistic.lipschitz();
    // Log-loss and the regulariser are nonnegative.
    Problem::new(Objective::Logistic(logistic), lipschitz, 0.0, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::finite_difference_grad;

    fn problem() -> Problem {
        make_logistic(17, 6, 40, NoiseSpec::noiseless(6)).unwrap()
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }

    #[test]
    fn gradient_at_zero_matches_fd() {
        let p = problem();
        let x = ParamVector::zeros(6);
        let g = p.eval_grad(&x);
        let fd = finite_difference_grad(&p, &x, 1e-6);
        let err: f64 = g
            .iter()
            .zip(fd.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / scale < 1e-6, "rel err {}", err / scale);
    }

    #[test]
    fn nonnegative_and_midpoint_convex() {
        let p = problem();
        let mut rng = RngStream::new(8, 1);
        for _ in 0..200 {
            let x = ParamVector::new((0..6).map(|_| 4.0 * rng.standard_normal()).collect());
            let y = ParamVector::new((0..6).map(|_| 4.0 * rng.standard_normal()).collect());
            let mid = x.zip_map(&y, |a, b| 0.5 * (a + b));
            assert!(p.eval_f(&x) >= 0.0);
            assert!(p.eval_f(&mid) < 0.5 * (p.eval_f(&x) + p.eval_f(&y)));
        }
    }

    #[test]
    fn curvature_bound_holds_along_coordinates() {
        let p = problem();
        let mut rng = RngStream::new(9, 1);
        for _ in 0..100 {
            let x = ParamVector::new((0..6).map(|_| rng.standard_normal()).collect());
            let i = (rng.uniform() * 6.0) as usize;
            let mut y = x.clone();
            y[i] += 2.0 * rng.standard_normal();
            let lhs = (p.eval_grad(&x)[i] - p.eval_grad(&y)[i]).abs();
            assert!(lhs <= p.lipschitz()[i] * (x[i] - y[i]).abs() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn dataset_is_reproducible() {
        assert_eq!(problem(), problem());
        assert!(make_logistic(1, 3, 0, NoiseSpec::noiseless(3)).is_err());
    }
}
