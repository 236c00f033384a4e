//! Seeded random streams and streaming moment estimation.
//!
//! # Stream contract
//!
//! A [`RandomStream`] is a ChaCha8 generator seeded through
//! `ChaCha8Rng::seed_from_u64`. Uniform variates take the top 53 bits of a
//! 64-bit draw and are offset by half an ulp, so they lie strictly inside
//! `(0, 1)`. Standard normals are obtained from exactly one uniform through
//! Acklam's rational approximation of the inverse normal CDF (relative error
//! below 1.2e-9). There is no rejection step, so the number of generator
//! words consumed per normal is always one.
//!
//! # Sharding
//!
//! Monte Carlo estimators split the requested sample count over [`SHARDS`]
//! shards. Shard `i` draws from ChaCha stream `i + 1` under the key derived
//! from `seed` ([`RandomStream::for_shard`]), so shards of one run and
//! shards of runs with different seeds never share a stream. The per-shard
//! accumulators are merged in shard order. The shard layout does not depend on the number of worker
//! threads, so results are bit-identical for any thread count.
//!
//! # Standard errors
//!
//! [`StreamingMoments`] assigns the `i`-th observation (global order) to
//! batch `i mod 32`. The standard error of the mean is the sample standard
//! deviation of the 32 batch means divided by `sqrt(32)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 32;

/// Number of independent streams a Monte Carlo run is split into.
pub const SHARDS: usize = 64;

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `shard + 1` under the key of [`RandomStream::new`]`(seed)`.
    pub fn for_shard(seed: u64, shard: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(shard + 1);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in the open interval `(0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }

    pub fn fill_standard_normals(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.standard_normal();
        }
    }

    pub fn standard_normals(&mut self, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        self.fill_standard_normals(&mut out);
        out
    }
}

/// Acklam's rational approximation to the standard normal quantile function.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Per-shard sample counts: `total` split as evenly as possible over
/// [`SHARDS`] shards, larger shards first.
pub fn shard_sizes(total: u64) -> Vec<u64> {
    let shards = SHARDS as u64;
    let (base, rem) = (total / shards, total % shards);
    (0..shards).map(|i| base + u64::from(i < rem)).collect()
}

/// Runs `draw` once per sample on [`SHARDS`] independent streams and returns
/// the per-shard accumulators in shard order.
pub fn run_sharded<A, I, F>(seed: u64, samples: u64, init: I, draw: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut RandomStream, &mut A) + Sync,
{
    shard_sizes(samples)
        .into_par_iter()
        .enumerate()
        .map(|(shard, size)| {
            let mut stream = RandomStream::for_shard(seed, shard as u64);
            let mut acc = init();
            for _ in 0..size {
                draw(&mut stream, &mut acc);
            }
            acc
        })
        .collect()
}

/// Sharded Monte Carlo mean of a scalar functional of the stream.
///
/// `scratch` builds per-shard working storage handed to every `sample` call.
pub fn estimate<S, I, F>(seed: u64, samples: u64, scratch: I, sample: F) -> StreamingMoments
where
    S: Send,
    I: Fn() -> S + Sync,
    F: Fn(&mut RandomStream, &mut S) -> f64 + Sync,
{
    run_sharded(
        seed,
        samples,
        || (StreamingMoments::new(), scratch()),
        |stream, (acc, buf)| acc.update(sample(stream, buf)),
    )
    .into_iter()
    .fold(StreamingMoments::new(), |mut total, (shard, _)| {
        total.merge(&shard);
        total
    })
}

/// Single-pass mean/variance with 32 interleaved batches.
///
/// Values are stored relative to the first observation (`shift`), which
/// keeps the Welford recurrence accurate for data with a large common
/// offset.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamingMoments {
    count: u64,
    shift: f64,
    mean: f64,
    m2: f64,
    batch_sums: [f64; BATCHES],
    batch_counts: [u64; BATCHES],
}

impl Default for StreamingMoments {
    fn default() -> Self {
        Self::new()
    }
}

impl StreamingMoments {
    pub fn new() -> Self {
        Self {
            count: 0,
            shift: 0.0,
            mean: 0.0,
            m2: 0.0,
            batch_sums: [0.0; BATCHES],
            batch_counts: [0; BATCHES],
        }
    }

    pub fn update(&mut self, x: f64) {
        if self.count == 0 {
            self.shift = x;
        }
        let y = x - self.shift;
        let batch = (self.count % BATCHES as u64) as usize;
        self.count += 1;
        let delta = y - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (y - self.mean);
        self.batch_sums[batch] += y;
        self.batch_counts[batch] += 1;
    }

    /// Appends `other` as if its observations followed those of `self`.
    ///
    /// Merging is associative: `(a + b) + c` and `a + (b + c)` assign every
    /// observation to the same batch.
    pub fn merge(&mut self, other: &StreamingMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let offset = other.shift - self.shift;
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = offset + (other.mean - self.mean);
        self.mean += delta * (n_b / n);
        self.m2 += other.m2 + delta * delta * (n_a * n_b / n);

        let rotation = (self.count % BATCHES as u64) as usize;
        for j in 0..BATCHES {
            let target = (j + rotation) % BATCHES;
            self.batch_sums[target] += other.batch_sums[j] + offset * other.batch_counts[j] as f64;
            self.batch_counts[target] += other.batch_counts[j];
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.shift + self.mean
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Means of the 32 batches (zero for empty batches).
    pub fn batch_means(&self) -> [f64; BATCHES] {
        let mut out = [0.0; BATCHES];
        for (j, m) in out.iter_mut().enumerate() {
            if self.batch_counts[j] > 0 {
                *m = self.shift + self.batch_sums[j] / self.batch_counts[j] as f64;
            }
        }
        out
    }

    /// Batch-means standard error of the mean.
    pub fn stderr(&self) -> Result<f64> {
        let required = 2 * BATCHES as u64;
        if self.count < required {
            return Err(Error::InsufficientSamples {
                required,
                actual: self.count,
            });
        }
        // Shifted batch means: a constant stream gives exactly zero.
        let mut shifted = [0.0; BATCHES];
        for (j, m) in shifted.iter_mut().enumerate() {
            *m = self.batch_sums[j] / self.batch_counts[j] as f64;
        }
        Ok(batch_stderr(&shifted))
    }
}

/// Standard error from batch estimates: sample standard deviation over
/// `sqrt(batches)`.
pub fn batch_stderr(batch_values: &[f64]) -> f64 {
    let b = batch_values.len() as f64;
    if batch_values.len() < 2 {
        return 0.0;
    }
    let mean = batch_values.iter().sum::<f64>() / b;
    let ss: f64 = batch_values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (b - 1.0)).sqrt() / b.sqrt()
}
