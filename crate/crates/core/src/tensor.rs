//! Dense multilinear forms `T: (R^d)^n -> R` and their Gaussian
//! expectations `E(T(Y, ..., Y))` for `Y ~ N(0, A A^T)`.
//!
//! Entries are stored row-major with the last index varying fastest:
//! entry `(j_1, ..., j_n)` (0-based) lives at `sum_s j_s d^(n-1-s)`.
//!
//! Two analytic routes compute the expectation and are kept independent of
//! each other:
//!
//! * [`expectation_via_pairings`] sums `T(a_{k_1}, ..., a_{k_n})` over every
//!   pairing `p` and every index tuple in `K_d(p)`, with `a_k` the columns of
//!   a factor `A`;
//! * [`expectation_via_sigma_contraction`] never factors the covariance and
//!   contracts `T` against `prod S[j_l, j_r]` for each pairing.
//!
//! No symmetry of `T` is assumed or exploited.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{draw_gaussian, CholeskyFactor, CovarianceMatrix, MomentResult};
use crate::montecarlo;
use crate::pairings::{fold_pairings, PairedIndexTuples};

/// Largest number of dense entries a tensor may hold.
pub const MAX_ENTRIES: u64 = 100_000_000;

/// Minimum sample count for Monte Carlo tensor expectations.
pub const MIN_MC_SAMPLES: u64 = 1_000;

/// The pairings route tabulates `T(a_{k_1}, ..., a_{k_n})` for all index
/// tuples up to this order.
const TABULATE_MAX_ORDER: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorFile", into = "TensorFile")]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

/// JSON layout: `{"order": n, "dim": d, "entries": [d^n reals]}`, last index
/// fastest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorFile {
    pub order: usize,
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl TryFrom<TensorFile> for DenseTensor {
    type Error = Error;

    fn try_from(file: TensorFile) -> Result<Self> {
        DenseTensor::new(file.order, file.dim, file.entries)
    }
}

impl From<DenseTensor> for TensorFile {
    fn from(t: DenseTensor) -> Self {
        TensorFile {
            order: t.order,
            dim: t.dim,
            entries: t.entries,
        }
    }
}

/// `dim^order`, rejecting anything above [`MAX_ENTRIES`].
pub fn entry_count(order: usize, dim: usize) -> Result<usize> {
    let too_large = Error::TensorTooLarge {
        order,
        dim,
        limit: MAX_ENTRIES,
    };
    let count = u32::try_from(order)
        .ok()
        .and_then(|o| (dim as u64).checked_pow(o))
        .ok_or_else(|| too_large.clone())?;
    if count > MAX_ENTRIES {
        return Err(too_large);
    }
    Ok(count as usize)
}

impl DenseTensor {
    pub fn new(order: usize, dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("tensor dimension must be positive".into()));
        }
        let expected = entry_count(order, dim)?;
        if entries.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            order,
            dim,
            entries,
        })
    }

    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        Self::new(order, dim, vec![0.0; entry_count(order, dim)?])
    }

    /// Builds a tensor from a function of the 0-based multi-index.
    pub fn from_fn<F: FnMut(&[usize]) -> f64>(order: usize, dim: usize, mut f: F) -> Result<Self> {
        let count = entry_count(order, dim)?;
        let mut index = vec![0; order];
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            entries.push(f(&index));
            increment(&mut index, dim);
        }
        Self::new(order, dim, entries)
    }

    /// The tensor with a single 1 at `index`, i.e. `T(v_1..v_n) = prod v_s[index_s]`.
    pub fn elementary(dim: usize, index: &[usize]) -> Result<Self> {
        if let Some(&i) = index.iter().find(|&&i| i >= dim) {
            return Err(Error::IndexOutOfRange { index: i + 1, dim });
        }
        let mut t = Self::zeros(index.len(), dim)?;
        let flat = t.flat_index(index);
        t.entries[flat] = 1.0;
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    fn flat_index(&self, index: &[usize]) -> usize {
        index.iter().fold(0, |acc, &j| acc * self.dim + j)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.entries[self.flat_index(index)]
    }

    /// The tensor `U(v_1, ..., v_n) = T(v_{perm[0]}, ..., v_{perm[n-1]})`.
    pub fn permute_slots(&self, perm: &[usize]) -> Result<Self> {
        let n = self.order;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument(format!("not a permutation of 0..{n}")));
        }
        let mut source = vec![0; n];
        Self::from_fn(n, self.dim, |j| {
            for (s, &p) in perm.iter().enumerate() {
                source[s] = j[p];
            }
            self.get(&source)
        })
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: f64, other: &DenseTensor, beta: f64) -> Result<Self> {
        if (self.order, self.dim) != (other.order, other.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.entries.len(),
                found: other.entries.len(),
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Self::new(self.order, self.dim, entries)
    }

    fn check_vectors<V: AsRef<[f64]>>(&self, vectors: &[V]) -> Result<()> {
        if vectors.len() != self.order {
            return Err(Error::LengthMismatch {
                expected: self.order,
                found: vectors.len(),
            });
        }
        for v in vectors {
            if v.as_ref().len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: v.as_ref().len(),
                });
            }
        }
        Ok(())
    }

    /// `T(v_1, ..., v_n) = sum_j T[j] prod_s v_s[j_s]`.
    pub fn evaluate<V: AsRef<[f64]>>(&self, vectors: &[V]) -> Result<f64> {
        self.check_vectors(vectors)?;
        let mut scratch = Vec::new();
        Ok(self.evaluate_unchecked(|s| vectors[s].as_ref(), &mut scratch))
    }

    /// Contracts slots from last to first; `vector(s)` supplies slot `s`.
    fn evaluate_unchecked<'a, V>(&self, vector: V, scratch: &mut Vec<f64>) -> f64
    where
        V: Fn(usize) -> &'a [f64],
    {
        let d = self.dim;
        let n = self.order;
        if n == 0 {
            return self.entries[0];
        }
        let v = vector(n - 1);
        scratch.clear();
        scratch.extend(
            self.entries
                .chunks_exact(d)
                .map(|row| row.iter().zip(v).map(|(t, x)| t * x).sum::<f64>()),
        );
        for slot in (0..n - 1).rev() {
            let v = vector(slot);
            let len = scratch.len() / d;
            for i in 0..len {
                let s: f64 = scratch[i * d..(i + 1) * d].iter().zip(v).map(|(t, x)| t * x).sum();
                scratch[i] = s;
            }
            scratch.truncate(len);
        }
        scratch[0]
    }

    /// `U[k] = T(a_{k_1}, ..., a_{k_n})` for all `k`, built by one mode
    /// product with `A` per slot.
    fn in_factor_basis(&self, factor: &CholeskyFactor) -> Vec<f64> {
        let d = self.dim;
        let mut current = self.entries.clone();
        let mut next = vec![0.0; current.len()];
        for slot in 0..self.order {
            let inner = d.pow((self.order - 1 - slot) as u32);
            let outer = current.len() / (inner * d);
            for o in 0..outer {
                for k in 0..d {
                    for i in 0..inner {
                        let mut s = 0.0;
                        for j in 0..d {
                            s += current[(o * d + j) * inner + i] * factor.get(j, k);
                        }
                        next[(o * d + k) * inner + i] = s;
                    }
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        current
    }
}

/// Odometer step over `{0..dim}^n`, last index fastest.
#[inline]
fn increment(index: &mut [usize], dim: usize) {
    for slot in index.iter_mut().rev() {
        *slot += 1;
        if *slot < dim {
            return;
        }
        *slot = 0;
    }
}

fn check_dims(tensor: &DenseTensor, dim: usize) -> Result<()> {
    if tensor.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: tensor.dim(),
            found: dim,
        });
    }
    Ok(())
}

/// `sum_{p in PP(n)} sum_{k in K_d(p)} T(a_{k_1}, ..., a_{k_n})` with `a_k`
/// the columns of `factor`.
///
/// Up to order 6 the values `T(a_{k_1}, ..., a_{k_n})` are tabulated once for
/// all tuples; above that each tuple is evaluated directly.
pub fn expectation_via_pairings(tensor: &DenseTensor, factor: &CholeskyFactor) -> Result<MomentResult> {
    check_dims(tensor, factor.dim())?;
    let n = tensor.order();
    let d = tensor.dim();
    if n % 2 == 1 {
        return Ok(MomentResult::analytic(0.0));
    }
    let value = if n <= TABULATE_MAX_ORDER {
        let table = tensor.in_factor_basis(factor);
        fold_pairings(n, true, |pairs, acc| {
            let mut tuples = PairedIndexTuples::from_pairs(pairs, d);
            while tuples.advance() {
                let flat = tuples.current().iter().fold(0, |a, &k| a * d + k);
                acc.add(table[flat]);
            }
        })
    } else {
        let columns = factor.columns();
        fold_pairings(n, true, |pairs, acc| {
            let mut scratch = Vec::new();
            let mut tuples = PairedIndexTuples::from_pairs(pairs, d);
            while tuples.advance() {
                let k = tuples.current();
                acc.add(tensor.evaluate_unchecked(|s| &columns[k[s]], &mut scratch));
            }
        })
    };
    Ok(MomentResult::analytic(value))
}

/// `sum_{p in PP(n)} sum_j T[j] prod_{(l,r) in p} S[j_l, j_r]`.
pub fn expectation_via_sigma_contraction(
    tensor: &DenseTensor,
    sigma: &CovarianceMatrix,
) -> Result<MomentResult> {
    check_dims(tensor, sigma.dim())?;
    let n = tensor.order();
    let d = tensor.dim();
    if n % 2 == 1 {
        return Ok(MomentResult::analytic(0.0));
    }
    let value = fold_pairings(n, true, |pairs, acc| {
        let mut index = vec![0; n];
        for &t in tensor.entries() {
            if t != 0.0 {
                let weight = pairs
                    .iter()
                    .fold(1.0, |w, &(l, r)| w * sigma.get(index[l], index[r]));
                acc.add(t * weight);
            }
            increment(&mut index, d);
        }
    });
    Ok(MomentResult::analytic(value))
}

/// Monte Carlo mean of `T(Y, ..., Y)` over `Y = A z`, with a batch-means
/// standard error.
pub fn mc_tensor_expectation(
    tensor: &DenseTensor,
    factor: &CholeskyFactor,
    seed: u64,
    samples: u64,
) -> Result<MomentResult> {
    check_dims(tensor, factor.dim())?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_MC_SAMPLES,
            actual: samples,
        });
    }
    let d = tensor.dim();
    let moments = montecarlo::estimate(
        seed,
        samples,
        || (vec![0.0; d], vec![0.0; d], Vec::new()),
        |stream, (z, y, scratch)| {
            draw_gaussian(factor, stream, z, y);
            let y: &[f64] = y;
            tensor.evaluate_unchecked(|_| y, scratch)
        },
    );
    MomentResult::from_moments(&moments)
}
