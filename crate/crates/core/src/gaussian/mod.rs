//! Mean-zero multivariate normal vectors `Y ~ N(0, S)`.
//!
//! The analytic engine evaluates `E(Y_{i_1} ... Y_{i_n})` as the sum over
//! all pair partitions of products of covariance entries. Indices may
//! repeat, so `E(Y_1^2 Y_2^2)` is the moment of `(Y_1, Y_1, Y_2, Y_2)`.
//! Index arguments in this API are 0-based.

mod covariance;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

pub use covariance::{
    cholesky_factor, CholeskyFactor, CovarianceFile, CovarianceMatrix, FactorFile, PSD_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::montecarlo::{self, RandomStream, StreamingMoments};
use crate::pairings::{pair_partition_count, pairing_sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    MonteCarlo,
}

/// A moment value and where it came from. Monte Carlo results carry the
/// sample count and the batch-means standard error; analytic ones carry
/// neither.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub value: f64,
    pub provenance: Provenance,
    pub samples: Option<u64>,
    pub stderr: Option<f64>,
}

impl MomentResult {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::Analytic,
            samples: None,
            stderr: None,
        }
    }

    pub fn monte_carlo(value: f64, samples: u64, stderr: f64) -> Self {
        Self {
            value,
            provenance: Provenance::MonteCarlo,
            samples: Some(samples),
            stderr: Some(stderr),
        }
    }

    pub(crate) fn from_moments(moments: &StreamingMoments) -> Result<Self> {
        Ok(Self::monte_carlo(
            moments.mean(),
            moments.count(),
            moments.stderr()?,
        ))
    }

    /// `(self - reference) / stderr` for a Monte Carlo result. A zero
    /// standard error gives `0` on exact agreement and `None` otherwise.
    pub fn z_score(&self, reference: f64) -> Option<f64> {
        let se = self.stderr?;
        let diff = self.value - reference;
        if se > 0.0 {
            Some(diff / se)
        } else if diff == 0.0 {
            Some(0.0)
        } else {
            None
        }
    }
}

fn check_indices(sigma: &CovarianceMatrix, indices: &[usize]) -> Result<()> {
    let dim = sigma.dim();
    match indices.iter().find(|&&i| i >= dim) {
        Some(&i) => Err(Error::IndexOutOfRange { index: i + 1, dim }),
        None => Ok(()),
    }
}

fn check_vectors(dim: usize, vectors: &[Vec<f64>]) -> Result<()> {
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    Ok(())
}

/// `E(Y_{i_1} ... Y_{i_n})` for `Y ~ N(0, sigma)` and 0-based `indices`.
///
/// Odd `n` returns exactly zero without enumerating.
pub fn isserlis_moment(sigma: &CovarianceMatrix, indices: &[usize]) -> Result<MomentResult> {
    check_indices(sigma, indices)?;
    let value = pairing_sum(indices.len(), |l, r| sigma.get(indices[l], indices[r]));
    Ok(MomentResult::analytic(value))
}

/// `E(a_1^T Y ... a_n^T Y)`: the pairing sum of `a_l^T S a_r`.
pub fn vector_moment(sigma: &CovarianceMatrix, vectors: &[Vec<f64>]) -> Result<MomentResult> {
    check_vectors(sigma.dim(), vectors)?;
    let n = vectors.len();
    if n % 2 == 1 {
        return Ok(MomentResult::analytic(0.0));
    }
    let mut gram = vec![0.0; n * n];
    for l in 0..n {
        for r in l..n {
            let g = sigma.bilinear(&vectors[l], &vectors[r]);
            gram[l * n + r] = g;
            gram[r * n + l] = g;
        }
    }
    Ok(MomentResult::analytic(pairing_sum(n, |l, r| gram[l * n + r])))
}

/// `E(X^{2k})` for a standard normal `X`, i.e. `(2k)! / (2^k k!)`.
pub fn gaussian_even_moment(k: usize) -> BigUint {
    pair_partition_count(2 * k)
}

/// Fills `y` with one draw `A z`, using `z` as scratch for the standard
/// normals.
#[inline]
pub fn draw_gaussian(factor: &CholeskyFactor, stream: &mut RandomStream, z: &mut [f64], y: &mut [f64]) {
    stream.fill_standard_normals(z);
    factor.apply(z, y);
}

/// `count` i.i.d. draws of `A z` from a single stream seeded with `seed`.
pub fn sample_gaussian(factor: &CholeskyFactor, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let d = factor.dim();
    let mut stream = RandomStream::new(seed);
    let mut z = vec![0.0; d];
    (0..count)
        .map(|_| {
            let mut y = vec![0.0; d];
            draw_gaussian(factor, &mut stream, &mut z, &mut y);
            y
        })
        .collect()
}

/// Monte Carlo estimate of `E(Y_{i_1} ... Y_{i_n})` with `Y = A z`.
pub fn mc_isserlis_moment(
    factor: &CholeskyFactor,
    indices: &[usize],
    seed: u64,
    samples: u64,
) -> Result<MomentResult> {
    let dim = factor.dim();
    if let Some(&i) = indices.iter().find(|&&i| i >= dim) {
        return Err(Error::IndexOutOfRange { index: i + 1, dim });
    }
    let moments = montecarlo::estimate(
        seed,
        samples,
        || (vec![0.0; dim], vec![0.0; dim]),
        |stream, (z, y)| {
            draw_gaussian(factor, stream, z, y);
            indices.iter().map(|&i| y[i]).product()
        },
    );
    MomentResult::from_moments(&moments)
}
