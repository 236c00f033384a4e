//! Rotation-invariant random vectors.
//!
//! For an isotropic `X` in `R^d` and any nonzero direction `a`, the
//! normalised moment ratio
//!
//! ```text
//! c_k(X) = 2^k k! / (2k)! * E((a^T X)^{2k}) / E((a^T X)^2)^k
//! ```
//!
//! does not depend on `a`, the second-moment matrix is `E(X X^T) = lambda I`,
//! and every `n = 2k` point moment is
//! `c_k * sum over pairings of prod lambda (a_l . a_r)`. Gaussian vectors
//! have `c_k = 1`; uniform vectors on a sphere or in a ball do not.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::MomentResult;
use crate::montecarlo::{self, batch_stderr, RandomStream, StreamingMoments, BATCHES};
use crate::pairings::{pair_partition_count_u64, pairing_sum};

/// Minimum sample count for `c_k` estimates.
pub const MIN_CK_SAMPLES: u64 = 1_000;
/// Minimum sample count for the covariance isotropy check.
pub const MIN_ISOTROPY_SAMPLES: u64 = 10_000;
/// Pairwise `c_k` differences must stay within this many standard errors.
pub const DIRECTION_Z_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    /// `N(0, I_d)`.
    StdGaussian,
    /// Uniform on the sphere of the given radius.
    Sphere(f64),
    /// Uniform in the ball of the given radius.
    Ball(f64),
    /// `N(0, diag(s)^2)`: anisotropic unless all scales agree. Test fixture.
    #[doc(hidden)]
    ScaledGaussian(Vec<f64>),
    /// Uniform on the cube `[-h, h]^d`: anisotropic for `d >= 2`. Test
    /// fixture.
    #[doc(hidden)]
    Cube(f64),
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::StdGaussian => f.write_str("std-gaussian"),
            Distribution::Sphere(r) => write!(f, "sphere:{r}"),
            Distribution::Ball(r) => write!(f, "ball:{r}"),
            Distribution::ScaledGaussian(s) => write!(f, "scaled-gaussian:{s:?}"),
            Distribution::Cube(h) => write!(f, "cube:{h}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    /// Parses `std-gaussian`, `sphere:R` or `ball:R`.
    fn from_str(s: &str) -> Result<Self> {
        let radius = |r: &str| -> Result<f64> {
            let r: f64 = r
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad radius {r:?}")))?;
            if r.is_finite() && r >= 0.0 {
                Ok(r)
            } else {
                Err(Error::InvalidArgument(format!("radius must be finite and >= 0, got {r}")))
            }
        };
        match s.split_once(':') {
            None if s == "std-gaussian" => Ok(Distribution::StdGaussian),
            Some(("sphere", r)) => Ok(Distribution::Sphere(radius(r)?)),
            Some(("ball", r)) => Ok(Distribution::Ball(radius(r)?)),
            _ => Err(Error::InvalidArgument(format!(
                "unknown distribution {s:?}; expected std-gaussian, sphere:R or ball:R"
            ))),
        }
    }
}

/// A named, seeded generator of random vectors in `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicSampler {
    pub distribution: Distribution,
    pub dim: usize,
    pub seed: u64,
}

impl IsotropicSampler {
    pub fn new(distribution: Distribution, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        match &distribution {
            Distribution::Sphere(r) | Distribution::Ball(r) | Distribution::Cube(r)
                if !(r.is_finite() && *r >= 0.0) =>
            {
                return Err(Error::InvalidArgument(format!("radius must be finite and >= 0, got {r}")))
            }
            Distribution::ScaledGaussian(s) if s.len() != dim => {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.len(),
                })
            }
            _ => {}
        }
        Ok(Self {
            distribution,
            dim,
            seed,
        })
    }

    pub fn std_gaussian(dim: usize, seed: u64) -> Self {
        Self::new(Distribution::StdGaussian, dim, seed).expect("valid sampler")
    }

    /// An axis-scaled Gaussian. Not isotropic unless all scales are equal.
    #[doc(hidden)]
    pub fn scaled_gaussian_for_testing(scales: Vec<f64>, seed: u64) -> Self {
        let dim = scales.len();
        Self::new(Distribution::ScaledGaussian(scales), dim, seed).expect("valid sampler")
    }

    /// Uniform on `[-half_width, half_width]^dim`. Not isotropic.
    #[doc(hidden)]
    pub fn cube_for_testing(half_width: f64, dim: usize, seed: u64) -> Self {
        Self::new(Distribution::Cube(half_width), dim, seed).expect("valid sampler")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Draws one vector into `out`; `z` is scratch of the same length.
    pub fn draw(&self, stream: &mut RandomStream, z: &mut [f64], out: &mut [f64]) {
        match &self.distribution {
            Distribution::StdGaussian => stream.fill_standard_normals(out),
            Distribution::Sphere(r) => {
                let scale = r / unit_direction(stream, z);
                out.iter_mut().zip(z.iter()).for_each(|(o, x)| *o = x * scale);
            }
            Distribution::Ball(r) => {
                let radius = r * stream.uniform().powf(1.0 / self.dim as f64);
                let scale = radius / unit_direction(stream, z);
                out.iter_mut().zip(z.iter()).for_each(|(o, x)| *o = x * scale);
            }
            Distribution::ScaledGaussian(s) => {
                stream.fill_standard_normals(out);
                out.iter_mut().zip(s).for_each(|(o, s)| *o *= s);
            }
            Distribution::Cube(h) => out
                .iter_mut()
                .for_each(|o| *o = h * (2.0 * stream.uniform() - 1.0)),
        }
    }

    /// `count` draws from a single stream seeded with the sampler's seed.
    pub fn sample(&self, count: usize) -> Vec<Vec<f64>> {
        let mut stream = RandomStream::new(self.seed);
        let mut z = vec![0.0; self.dim];
        (0..count)
            .map(|_| {
                let mut x = vec![0.0; self.dim];
                self.draw(&mut stream, &mut z, &mut x);
                x
            })
            .collect()
    }

    /// Exact `lambda` in `E(X X^T) = lambda I`, when known in closed form.
    pub fn exact_lambda(&self) -> Option<f64> {
        let d = self.dim as f64;
        match &self.distribution {
            Distribution::StdGaussian => Some(1.0),
            Distribution::Sphere(r) => Some(r * r / d),
            Distribution::Ball(r) => Some(r * r / (d + 2.0)),
            _ => None,
        }
    }

    /// Exact `c_k`, when known in closed form.
    ///
    /// On the sphere `c_k = d^k / prod_{j<k} (d + 2j)`; the ball adds the
    /// radial factor `d (d + 2)^k / ((d + 2k) d^k)`.
    pub fn exact_ck(&self, k: usize) -> Option<f64> {
        let d = self.dim as f64;
        let sphere = || {
            (0..k)
                .map(|j| d / (d + 2.0 * j as f64))
                .product::<f64>()
        };
        match &self.distribution {
            Distribution::StdGaussian => Some(1.0),
            Distribution::Sphere(r) if *r > 0.0 => Some(sphere()),
            Distribution::Ball(r) if *r > 0.0 => {
                Some(sphere() * (d / (d + 2.0 * k as f64)) * ((d + 2.0) / d).powi(k as i32))
            }
            _ => None,
        }
    }
}

/// Fills `z` with a Gaussian vector and returns its (nonzero) norm.
fn unit_direction(stream: &mut RandomStream, z: &mut [f64]) -> f64 {
    loop {
        stream.fill_standard_normals(z);
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return norm;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkEstimate {
    pub k: usize,
    pub value: f64,
    pub stderr: f64,
    pub direction: Vec<f64>,
    pub samples: u64,
}

/// Per-direction plug-in value plus the 32 batch values of the ratio.
struct CkBatches {
    value: f64,
    batches: [f64; BATCHES],
}

fn ck_scale(k: usize) -> f64 {
    1.0 / pair_partition_count_u64(2 * k)
        .map(|c| c as f64)
        .unwrap_or(f64::INFINITY)
}

fn check_direction(dim: usize, a: &[f64]) -> Result<()> {
    if a.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: a.len(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidArgument("direction vector must be nonzero".into()));
    }
    Ok(())
}

fn ck_common_stream(
    sampler: &IsotropicSampler,
    k: usize,
    directions: &[Vec<f64>],
    samples: u64,
) -> Result<Vec<CkBatches>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if samples < MIN_CK_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_CK_SAMPLES,
            actual: samples,
        });
    }
    for a in directions {
        check_direction(sampler.dim, a)?;
    }
    let m = directions.len();
    let dim = sampler.dim;
    let shards = montecarlo::run_sharded(
        sampler.seed,
        samples,
        || {
            (
                vec![(StreamingMoments::new(), StreamingMoments::new()); m],
                vec![0.0; dim],
                vec![0.0; dim],
            )
        },
        |stream, (acc, z, x)| {
            sampler.draw(stream, z, x);
            for (a, (high, second)) in directions.iter().zip(acc.iter_mut()) {
                let t: f64 = a.iter().zip(x.iter()).map(|(a, x)| a * x).sum();
                let t2 = t * t;
                high.update(t2.powi(k as i32));
                second.update(t2);
            }
        },
    );
    let mut totals = vec![(StreamingMoments::new(), StreamingMoments::new()); m];
    for (shard, _, _) in &shards {
        for (total, part) in totals.iter_mut().zip(shard) {
            total.0.merge(&part.0);
            total.1.merge(&part.1);
        }
    }

    let scale = ck_scale(k);
    let ratio = |high: f64, second: f64| scale * high / second.powi(k as i32);
    totals
        .iter()
        .map(|(high, second)| {
            if second.mean() <= 0.0 {
                return Err(Error::Numerical(
                    "second moment along the direction is zero".into(),
                ));
            }
            let mut batches = [0.0; BATCHES];
            for ((b, h), s) in batches
                .iter_mut()
                .zip(high.batch_means())
                .zip(second.batch_means())
            {
                *b = ratio(h, s);
            }
            Ok(CkBatches {
                value: ratio(high.mean(), second.mean()),
                batches,
            })
        })
        .collect()
}

/// Plug-in estimate of `c_k` along `direction` with a batch-means standard
/// error (the ratio is recomputed on each of the 32 batches).
///
/// For `k = 1` numerator and denominator are the same accumulator, so the
/// value is exactly 1 with zero standard error.
pub fn estimate_ck(
    sampler: &IsotropicSampler,
    k: usize,
    direction: &[f64],
    samples: u64,
) -> Result<CkEstimate> {
    let est = ck_common_stream(sampler, k, &[direction.to_vec()], samples)?
        .pop()
        .expect("one direction");
    Ok(CkEstimate {
        k,
        value: est.value,
        stderr: batch_stderr(&est.batches),
        direction: direction.to_vec(),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionComparison {
    pub first: usize,
    pub second: usize,
    pub difference: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionIndependenceReport {
    pub k: usize,
    pub estimates: Vec<CkEstimate>,
    pub comparisons: Vec<DirectionComparison>,
    pub passed: bool,
}

/// Estimates `c_k` along every direction from one common sample stream and
/// compares all pairs. The standard error of a difference is taken from the
/// batch-wise differences, which accounts for the shared samples. Passes iff
/// every `|difference| <= 5 * stderr`.
pub fn ck_direction_independence(
    sampler: &IsotropicSampler,
    k: usize,
    directions: &[Vec<f64>],
    samples: u64,
) -> Result<DirectionIndependenceReport> {
    if directions.len() < 2 {
        return Err(Error::InvalidArgument("need at least two directions".into()));
    }
    let per_direction = ck_common_stream(sampler, k, directions, samples)?;
    let estimates = per_direction
        .iter()
        .zip(directions)
        .map(|(est, a)| CkEstimate {
            k,
            value: est.value,
            stderr: batch_stderr(&est.batches),
            direction: a.clone(),
            samples,
        })
        .collect();

    let mut comparisons = Vec::new();
    for i in 0..per_direction.len() {
        for j in i + 1..per_direction.len() {
            let (a, b) = (&per_direction[i], &per_direction[j]);
            let diffs: Vec<f64> = a.batches.iter().zip(&b.batches).map(|(x, y)| x - y).collect();
            let difference = a.value - b.value;
            let stderr = batch_stderr(&diffs);
            let z = if stderr > 0.0 {
                difference / stderr
            } else if difference == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            comparisons.push(DirectionComparison {
                first: i,
                second: j,
                difference,
                stderr,
                z,
            });
        }
    }
    let passed = comparisons.iter().all(|c| c.z.abs() <= DIRECTION_Z_LIMIT);
    Ok(DirectionIndependenceReport {
        k,
        estimates,
        comparisons,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub lambda_hat: f64,
    pub max_offdiag: f64,
    pub max_diag_spread: f64,
    pub samples: u64,
}

impl IsotropyReport {
    /// Larger of the two deviation statistics.
    pub fn max_deviation(&self) -> f64 {
        self.max_offdiag.max(self.max_diag_spread)
    }
}

/// Sample second-moment matrix `E(X X^T)` compared against `lambda I`.
pub fn covariance_isotropy_check(sampler: &IsotropicSampler, samples: u64) -> Result<IsotropyReport> {
    if samples < MIN_ISOTROPY_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_ISOTROPY_SAMPLES,
            actual: samples,
        });
    }
    let d = sampler.dim;
    let shards = montecarlo::run_sharded(
        sampler.seed,
        samples,
        || (vec![0.0; d * d], vec![0.0; d], vec![0.0; d]),
        |stream, (acc, z, x)| {
            sampler.draw(stream, z, x);
            for i in 0..d {
                for j in i..d {
                    acc[i * d + j] += x[i] * x[j];
                }
            }
        },
    );
    let mut total = vec![0.0; d * d];
    for (acc, _, _) in &shards {
        total.iter_mut().zip(acc).for_each(|(t, a)| *t += a);
    }
    let n = samples as f64;
    let m = |i: usize, j: usize| total[i * d + j] / n;

    let lambda_hat = (0..d).map(|i| m(i, i)).sum::<f64>() / d as f64;
    let max_diag_spread = (0..d).fold(0.0f64, |w, i| w.max((m(i, i) - lambda_hat).abs()));
    let max_offdiag = (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
        .fold(0.0f64, |w, (i, j)| w.max(m(i, j).abs()));
    Ok(IsotropyReport {
        lambda_hat,
        max_offdiag,
        max_diag_spread,
        samples,
    })
}

/// `c_k * sum over PP(n) of prod lambda (a_l . a_r)` for `n = 2k`, zero for
/// odd `n`.
pub fn isotropic_moment(lambda: f64, ck: f64, vectors: &[Vec<f64>]) -> Result<MomentResult> {
    if let Some(first) = vectors.first() {
        let d = first.len();
        if let Some(v) = vectors.iter().find(|v| v.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    let n = vectors.len();
    if n % 2 == 1 {
        return Ok(MomentResult::analytic(0.0));
    }
    let dot = |l: usize, r: usize| -> f64 {
        vectors[l].iter().zip(&vectors[r]).map(|(a, b)| a * b).sum()
    };
    let value = pairing_sum(n, |l, r| lambda * dot(l, r));
    Ok(MomentResult::analytic(ck * value))
}

/// Haar-distributed orthogonal matrix (row-major): QR of a Gaussian matrix
/// with the signs of `R`'s diagonal moved into `Q`.
pub fn random_orthogonal(dim: usize, seed: u64) -> Vec<f64> {
    let mut stream = RandomStream::new(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| stream.standard_normal());
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            out.push(q[(i, j)]);
        }
    }
    out
}
