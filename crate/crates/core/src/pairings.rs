//! Pair partitions (perfect matchings) of `{1, ..., n}`.
//!
//! Positions are 0-based in the Rust API and 1-based in every external
//! format (`Display`, JSON). A partition is kept in canonical form: each pair
//! is `(l, r)` with `l < r`, pairs are sorted by `l`, and so the first pair
//! always contains position 0.
//!
//! Enumeration order: pair the smallest unpaired position with each larger
//! unpaired position in increasing order, then recurse on the rest. For
//! `n = 4` this gives `{(1,2),(3,4)}`, `{(1,3),(2,4)}`, `{(1,4),(2,3)}`.

use std::fmt;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Largest `n` the enumerators accept (positions are tracked in a `u128`).
pub const MAX_POSITIONS: usize = 128;

/// Number of pair partitions of `n` positions: `(n-1)!!` for even `n`, zero
/// for odd `n`, one for `n = 0`.
pub fn pair_partition_count(n: usize) -> BigUint {
    if n % 2 == 1 {
        return BigUint::from(0u32);
    }
    (1..n as u64)
        .step_by(2)
        .fold(BigUint::from(1u32), |acc, odd| acc * odd)
}

/// `pair_partition_count` as a `u64`, when it fits (`n <= 40`).
pub fn pair_partition_count_u64(n: usize) -> Option<u64> {
    if n % 2 == 1 {
        return Some(0);
    }
    (1..n as u64)
        .step_by(2)
        .try_fold(1u64, |acc, odd| acc.checked_mul(odd))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairPartition {
    pairs: Vec<(usize, usize)>,
}

impl PairPartition {
    /// Builds a partition from 0-based pairs, normalising each pair and the
    /// pair order. Fails unless the pairs cover `0..2k` exactly once.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let n = 2 * pairs.len();
        let mut seen = vec![false; n];
        let mut pairs: Vec<(usize, usize)> = pairs
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        for &(l, r) in &pairs {
            for x in [l, r] {
                if x >= n || std::mem::replace(&mut seen[x], true) {
                    return Err(Error::InvalidArgument(format!(
                        "pairs do not form a perfect matching of 1..={n}"
                    )));
                }
            }
        }
        pairs.sort_unstable();
        Ok(Self { pairs })
    }

    /// Builds a partition from 1-based pairs.
    pub fn from_one_based(pairs: &[[usize; 2]]) -> Result<Self> {
        let zero_based = pairs
            .iter()
            .map(|&[l, r]| {
                if l == 0 || r == 0 {
                    Err(Error::InvalidArgument("positions are 1-based".into()))
                } else {
                    Ok((l - 1, r - 1))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(zero_based)
    }

    /// 0-based pairs in canonical order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn to_one_based(&self) -> Vec<[usize; 2]> {
        self.pairs.iter().map(|&(l, r)| [l + 1, r + 1]).collect()
    }

    /// Number of pairs `k`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of positions `2k`.
    pub fn positions(&self) -> usize {
        2 * self.pairs.len()
    }
}

impl fmt::Display for PairPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (l, r)) in self.pairs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({},{})", l + 1, r + 1)?;
        }
        f.write_str("}")
    }
}

impl Serialize for PairPartition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PairPartition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<[usize; 2]>::deserialize(deserializer)?;
        PairPartition::from_one_based(&raw).map_err(serde::de::Error::custom)
    }
}

/// Lazy canonical enumeration of `PP(n)`.
///
/// The state is a mixed-radix counter: level `i` pairs the smallest free
/// position with the `choice[i]`-th larger free position, and there are
/// `n - 1 - 2i` options at that level. Besides [`Iterator`], the cursor
/// API ([`PairPartitions::advance`] / [`PairPartitions::current`]) walks the
/// sequence without allocating.
#[derive(Debug, Clone)]
pub struct PairPartitions {
    n: usize,
    choice: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    used: Vec<u128>,
    fixed_levels: usize,
    state: CursorState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CursorState {
    Fresh,
    Active,
    Done,
}

impl PairPartitions {
    /// # Panics
    ///
    /// Panics if `n > MAX_POSITIONS`.
    pub fn new(n: usize) -> Self {
        assert!(n <= MAX_POSITIONS, "enumeration supports n <= {MAX_POSITIONS}");
        let k = n / 2;
        let mut this = Self {
            n,
            choice: vec![0; k],
            pairs: vec![(0, 0); k],
            used: vec![0; k + 1],
            fixed_levels: 0,
            state: if n % 2 == 1 {
                CursorState::Done
            } else {
                CursorState::Fresh
            },
        };
        if this.state == CursorState::Fresh {
            this.fill_from(0);
        }
        this
    }

    /// The shard of `PP(n)` whose first pair is `(0, partner)`.
    ///
    /// Concatenating the shards for `partner = 1..n` reproduces the full
    /// canonical sequence.
    pub fn with_first_partner(n: usize, partner: usize) -> Self {
        let mut this = Self::new(n);
        if this.state == CursorState::Done || partner == 0 || partner >= n {
            this.state = CursorState::Done;
            return this;
        }
        this.choice[0] = partner - 1;
        this.fixed_levels = 1;
        this.fill_from(0);
        this
    }

    /// All shards of `PP(n)` in canonical order (empty for odd `n`; a single
    /// shard for `n = 0`).
    pub fn shards(n: usize) -> Vec<PairPartitions> {
        if n % 2 == 1 {
            Vec::new()
        } else if n == 0 {
            vec![Self::new(0)]
        } else {
            (1..n).map(|r| Self::with_first_partner(n, r)).collect()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn fill_from(&mut self, level: usize) {
        let full: u128 = if self.n == 128 {
            u128::MAX
        } else {
            (1u128 << self.n) - 1
        };
        for i in level..self.choice.len() {
            let mask = self.used[i];
            let first = (!mask).trailing_zeros() as usize;
            let mut free = !mask & full & !(1u128 << first);
            for _ in 0..self.choice[i] {
                free &= free - 1;
            }
            let partner = free.trailing_zeros() as usize;
            self.pairs[i] = (first, partner);
            self.used[i + 1] = mask | (1u128 << first) | (1u128 << partner);
        }
    }

    /// Moves to the next partition; returns `false` once exhausted.
    pub fn advance(&mut self) -> bool {
        match self.state {
            CursorState::Done => false,
            CursorState::Fresh => {
                self.state = CursorState::Active;
                true
            }
            CursorState::Active => {
                for i in (self.fixed_levels..self.choice.len()).rev() {
                    if self.choice[i] + 1 < self.n - 1 - 2 * i {
                        self.choice[i] += 1;
                        self.choice[i + 1..].iter_mut().for_each(|c| *c = 0);
                        self.fill_from(i);
                        return true;
                    }
                }
                self.state = CursorState::Done;
                false
            }
        }
    }

    /// 0-based pairs of the current partition. Only meaningful after a
    /// successful [`advance`](Self::advance).
    pub fn current(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

impl Iterator for PairPartitions {
    type Item = PairPartition;

    fn next(&mut self) -> Option<PairPartition> {
        if self.advance() {
            Some(PairPartition {
                pairs: self.pairs.clone(),
            })
        } else {
            None
        }
    }
}

/// Canonical enumeration of `PP(n)`.
pub fn enumerate_pair_partitions(n: usize) -> PairPartitions {
    PairPartitions::new(n)
}

/// Folds `term` over every partition of `PP(n)` into a compensated sum.
///
/// Each shard of the enumeration (fixed first pair) gets its own
/// accumulator and the shard sums are combined in canonical shard order, so
/// the result is the same whether the shards run on one thread or many.
/// `term` receives the 0-based pairs and adds its contribution to the
/// accumulator.
pub fn fold_pairings<F>(n: usize, parallel: bool, term: F) -> f64
where
    F: Fn(&[(usize, usize)], &mut CompensatedSum) + Sync,
{
    if n % 2 == 1 {
        return 0.0;
    }
    let shard_sum = |mut shard: PairPartitions| {
        let mut acc = CompensatedSum::new();
        while shard.advance() {
            term(shard.current(), &mut acc);
        }
        acc
    };
    let shards = PairPartitions::shards(n);
    let partials: Vec<CompensatedSum> = if parallel {
        shards.into_par_iter().map(shard_sum).collect()
    } else {
        shards.into_iter().map(shard_sum).collect()
    };
    partials
        .iter()
        .fold(CompensatedSum::new(), |mut total, part| {
            total.merge(part);
            total
        })
        .value()
}

/// Sum over `PP(n)` of the product of `weight(l, r)` over the pairs.
///
/// This is the hafnian of the symmetric matrix `weight`. Odd `n` returns
/// exactly `0.0` without enumerating.
pub fn pairing_sum<W>(n: usize, weight: W) -> f64
where
    W: Fn(usize, usize) -> f64 + Sync,
{
    // Below ten positions a shard holds at most 105 terms.
    fold_pairings(n, n >= 10, |pairs, acc| {
        acc.add(pairs.iter().fold(1.0, |prod, &(l, r)| prod * weight(l, r)))
    })
}

/// An element of `K_d(p)`: a 0-based index tuple that is constant on every
/// pair of `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairedIndexTuple(pub Vec<usize>);

impl PairedIndexTuple {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }
}

/// Lazy enumeration of `K_d(p)`, lexicographic in the pair representatives
/// (the index of the first pair varies slowest).
#[derive(Debug, Clone)]
pub struct PairedIndexTuples {
    pairs: Vec<(usize, usize)>,
    dim: usize,
    free: Vec<usize>,
    tuple: Vec<usize>,
    state: CursorState,
}

impl PairedIndexTuples {
    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn new(partition: &PairPartition, dim: usize) -> Self {
        Self::from_pairs(partition.pairs(), dim)
    }

    /// Same as [`new`](Self::new) for raw 0-based canonical pairs.
    pub fn from_pairs(pairs: &[(usize, usize)], dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            pairs: pairs.to_vec(),
            dim,
            free: vec![0; pairs.len()],
            tuple: vec![0; 2 * pairs.len()],
            state: CursorState::Fresh,
        }
    }

    /// `d^k` when it fits in `u64`.
    pub fn count(&self) -> Option<u64> {
        (self.dim as u64).checked_pow(self.pairs.len() as u32)
    }

    pub fn advance(&mut self) -> bool {
        match self.state {
            CursorState::Done => return false,
            CursorState::Fresh => self.state = CursorState::Active,
            CursorState::Active => {
                let mut level = self.free.len();
                loop {
                    if level == 0 {
                        self.state = CursorState::Done;
                        return false;
                    }
                    level -= 1;
                    self.free[level] += 1;
                    if self.free[level] < self.dim {
                        break;
                    }
                    self.free[level] = 0;
                }
            }
        }
        for (&(l, r), &v) in self.pairs.iter().zip(&self.free) {
            self.tuple[l] = v;
            self.tuple[r] = v;
        }
        true
    }

    /// Current 0-based tuple.
    pub fn current(&self) -> &[usize] {
        &self.tuple
    }
}

impl Iterator for PairedIndexTuples {
    type Item = PairedIndexTuple;

    fn next(&mut self) -> Option<PairedIndexTuple> {
        self.advance()
            .then(|| PairedIndexTuple(self.tuple.clone()))
    }
}

/// `K_d(p)` for partition `p` and dimension `dim`.
pub fn paired_index_tuples(partition: &PairPartition, dim: usize) -> PairedIndexTuples {
    PairedIndexTuples::new(partition, dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionFormat {
    #[default]
    Text,
    Latex,
}

/// Default symbol names: `Y1..Yn` in text, `Y_{1}..Y_{n}` in LaTeX.
pub fn default_names(n: usize, format: ExpansionFormat) -> Vec<String> {
    (1..=n)
        .map(|i| match format {
            ExpansionFormat::Text => format!("Y{i}"),
            ExpansionFormat::Latex => format!("Y_{{{i}}}"),
        })
        .collect()
}

/// Renders the right-hand side of the Wick expansion of `E(names[0] ... names[n-1])`.
///
/// One product of pair expectations per partition, in canonical order,
/// joined by `" + "`. Odd `n` renders `"0"`; `n = 0` renders `"1"`.
pub fn render_wick_expansion<S: AsRef<str>>(
    n: usize,
    names: &[S],
    format: ExpansionFormat,
) -> Result<String> {
    if names.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: names.len(),
        });
    }
    if n % 2 == 1 {
        return Ok("0".to_owned());
    }
    if n == 0 {
        return Ok("1".to_owned());
    }
    let expectation = match format {
        ExpansionFormat::Text => "E",
        ExpansionFormat::Latex => "\\mathsf{E}",
    };
    let terms: Vec<String> = enumerate_pair_partitions(n)
        .map(|p| {
            p.pairs()
                .iter()
                .map(|&(l, r)| {
                    format!(
                        "{expectation}({} {})",
                        names[l].as_ref(),
                        names[r].as_ref()
                    )
                })
                .collect::<String>()
        })
        .collect();
    Ok(terms.join(" + "))
}
