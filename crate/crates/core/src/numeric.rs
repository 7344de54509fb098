//! Dense vector kernels and seeded random streams.
//!
//! Everything here is `f64`. Kernels are pure; an [`RngStream`] is owned by a
//! single run and never shared.

use std::ops::{Deref, Index, IndexMut};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real vector: iterates, momenta, gradients and dither draws.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        ParamVector(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Elementwise map into a new vector of the same dimension.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamVector {
        ParamVector(self.0.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination; panics on dimension mismatch.
    pub fn zip_map(&self, other: &ParamVector, f: impl Fn(f64, f64) -> f64) -> ParamVector {
        assert_eq!(self.dim(), other.dim(), "zip_map: dimension mismatch");
        ParamVector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            })
        }
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

impl<const N: usize> From<[f64; N]> for ParamVector {
    fn from(values: [f64; N]) -> Self {
        ParamVector(values.to_vec())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Scalar sign with `sign(0) = 0`, so that `sign(-v) = -sign(v)`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sign_vec(v: &ParamVector) -> ParamVector {
    v.map(sign)
}

pub fn inner(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    b.check_dim(a.dim())?;
    Ok(dot(a, b))
}

/// Unchecked inner product for callers that already guarantee equal dims.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l1_norm(v: &ParamVector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm_sq(v: &ParamVector) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Reproducible random stream keyed by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose output depends only on the key, the stream
/// selector and the word position, so sequences are identical across
/// platforms and runs.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// I.i.d. `N(mean, std²)` vector. With `std = 0` the constant mean vector is
/// returned and the stream is not advanced.
pub fn sample_gaussian(dim: usize, mean: f64, std: f64, rng: &mut RngStream) -> Result<ParamVector> {
    if !(std >= 0.0) {
        return Err(Error::invalid(format!("standard deviation must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(ParamVector::filled(dim, mean));
    }
    Ok(ParamVector(
        (0..dim).map(|_| mean + std * rng.standard_normal()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_examples() {
        assert_eq!(sign_vec(&[3.0, -2.0].into()), ParamVector::from([1.0, -1.0]));
        assert_eq!(sign_vec(&[0.0, 0.0].into()), ParamVector::from([0.0, 0.0]));
        assert_eq!(sign_vec(&[-1e-300, 1e-300].into()), ParamVector::from([-1.0, 1.0]));
        assert_eq!(sign(-0.0), 0.0);
    }

    #[test]
    fn inner_and_norms() {
        let a = ParamVector::from([1.0, 2.0]);
        assert_eq!(inner(&a, &[3.0, 4.0].into()).unwrap(), 11.0);
        assert_eq!(inner(&a, &ParamVector::zeros(2)).unwrap(), 0.0);
        assert!(matches!(
            inner(&a, &ParamVector::zeros(3)),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));

        let v = ParamVector::from([3.0, -4.0]);
        assert_eq!(l1_norm(&v), 7.0);
        assert_eq!(l2_norm_sq(&v), 25.0);
        assert_eq!(l1_norm(&ParamVector::zeros(5)), 0.0);
        let e = ParamVector::from([0.0, 1.0, 0.0]);
        assert_eq!((l1_norm(&e), l2_norm_sq(&e)), (1.0, 1.0));
    }

    #[test]
    fn sign_inner_is_l1() {
        let v = ParamVector::from([0.5, -3.25, 7.0, -0.125]);
        assert_eq!(inner(&sign_vec(&v), &v).unwrap(), l1_norm(&v));
    }

    #[test]
    fn gaussian_degenerate_and_errors() {
        let mut rng = RngStream::new(1, 0);
        assert_eq!(sample_gaussian(4, 0.0, 0.0, &mut rng).unwrap(), ParamVector::zeros(4));
        assert_eq!(
            sample_gaussian(2, 1.5, 0.0, &mut rng).unwrap(),
            ParamVector::filled(2, 1.5)
        );
        assert!(sample_gaussian(3, 0.0, -1.0, &mut rng).is_err());
        assert!(sample_gaussian(3, 0.0, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn gaussian_moments() {
        // Mean of 1e6 N(0,1): standard error 1e-3, so 3 SE = 3e-3 < 4e-3.
        let mut rng = RngStream::new(7, 3);
        let draws = sample_gaussian(1_000_000, 0.0, 1.0, &mut rng).unwrap();
        let n = draws.dim() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        assert!(mean.abs() < 4e-3, "mean {mean}");

        // Var estimator of N(0, 4): SE = sqrt(2) * 4 / sqrt(n).
        let draws = sample_gaussian(1_000_000, 0.0, 2.0, &mut rng).unwrap();
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = 2f64.sqrt() * 4.0 / n.sqrt();
        assert!((var - 4.0).abs() < 3.0 * se, "var {var}, se {se}");
    }

    #[test]
    fn streams_reproduce_and_separate() {
        let a: Vec<u64> = {
            let mut r = RngStream::new(42, 5);
            (0..64).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStream::new(42, 5);
            (0..64).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);

        // Distinct stream ids: sample correlation of 1e5 normal pairs is ~N(0, 1/n).
        let mut r1 = RngStream::new(42, 0);
        let mut r2 = RngStream::new(42, 1);
        let n = 100_000;
        let corr = (0..n).map(|_| r1.standard_normal() * r2.standard_normal()).sum::<f64>() / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr {corr}");
    }
}
