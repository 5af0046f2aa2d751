//! Permutations, the pairwise-marginal embedding and Kendall tau geometry.
//!
//! A ranking of `n` items is embedded as a vector indexed by the pairs
//! `(a, b)` with `a < b`, listed in lexicographic order. Coordinate `(a, b)`
//! is `+1/2` when item `a` is ranked ahead of item `b` and `-1/2` otherwise.
//! With this scale every disagreeing pair contributes exactly 1 to the
//! squared Euclidean distance, so `‖ι(σ₁) − ι(σ₂)‖² = d_KT(σ₁, σ₂)`. Under a
//! `±1` embedding the same identity picks up a factor 1/4.

use crate::error::{Error, Result};

/// A total order over items `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    order: Vec<usize>,
    position: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from `order[r]` = item at rank `r` (rank 0 is the
    /// most preferred).
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(Error::InvalidPermutation("empty order".into()));
        }
        let mut position = vec![usize::MAX; n];
        for (rank, &item) in order.iter().enumerate() {
            if item >= n {
                return Err(Error::InvalidPermutation(format!(
                    "item {item} out of range for n = {n}"
                )));
            }
            if position[item] != usize::MAX {
                return Err(Error::InvalidPermutation(format!(
                    "item {item} appears twice"
                )));
            }
            position[item] = rank;
        }
        Ok(Permutation { order, position })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            order: (0..n).collect(),
            position: (0..n).collect(),
        }
    }

    pub fn reversed(n: usize) -> Self {
        let order: Vec<usize> = (0..n).rev().collect();
        Permutation::from_order(order).expect("reversal is a bijection")
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn position(&self) -> &[usize] {
        &self.position
    }

    pub fn item_at(&self, rank: usize) -> usize {
        self.order[rank]
    }

    pub fn rank_of(&self, item: usize) -> usize {
        self.position[item]
    }

    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.position[a] < self.position[b]
    }
}

/// Number of item pairs, `n(n−1)/2`.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Lexicographic index of the pair `(a, b)`, `a < b < n`.
pub fn pair_index(a: usize, b: usize, n: usize) -> Result<usize> {
    if a >= b || b >= n {
        return Err(Error::InvalidPair { a, b, n });
    }
    Ok(pair_index_unchecked(a, b, n))
}

#[inline]
pub(crate) fn pair_index_unchecked(a: usize, b: usize, n: usize) -> usize {
    // rows 0..a hold (n-1) + (n-2) + ... + (n-a) pairs
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_of(index: usize, n: usize) -> Result<(usize, usize)> {
    let d = pair_count(n);
    if index >= d {
        return Err(Error::invalid(format!(
            "pair index {index} out of range for n = {n} (d = {d})"
        )));
    }
    let mut rest = index;
    for a in 0..n {
        let row = n - 1 - a;
        if rest < row {
            return Ok((a, a + 1 + rest));
        }
        rest -= row;
    }
    unreachable!("index < d always lands in some row")
}

/// Pair enumeration for a fixed item count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairIndexer {
    n: usize,
}

impl PairIndexer {
    pub fn new(n: usize) -> Self {
        PairIndexer { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        pair_count(self.n)
    }

    pub fn index(&self, a: usize, b: usize) -> Result<usize> {
        pair_index(a, b, self.n)
    }

    pub fn pair(&self, index: usize) -> Result<(usize, usize)> {
        pair_of(index, self.n)
    }

    /// All pairs in index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
    }
}

/// A pairwise-comparison vector with entries in `{−1/2, +1/2, missing}`.
///
/// Stored as signs: `+1`, `-1`, or `0` for a missing entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EmbeddedObservation {
    n: usize,
    signs: Vec<i8>,
}

impl EmbeddedObservation {
    /// Builds an observation from per-pair values; `None` marks a missing
    /// entry and every present value must be exactly `±0.5`.
    pub fn from_entries(n: usize, entries: &[Option<f64>]) -> Result<Self> {
        let d = pair_count(n);
        if entries.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: entries.len(),
            });
        }
        let signs = entries
            .iter()
            .map(|e| match *e {
                None => Ok(0),
                Some(v) if v == 0.5 => Ok(1),
                Some(v) if v == -0.5 => Ok(-1),
                Some(v) => Err(Error::invalid(format!(
                    "observed entry {v} is not ±0.5"
                ))),
            })
            .collect::<Result<Vec<i8>>>()?;
        Ok(EmbeddedObservation { n, signs })
    }

    pub(crate) fn from_signs(n: usize, signs: Vec<i8>) -> Self {
        debug_assert_eq!(signs.len(), pair_count(n));
        EmbeddedObservation { n, signs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.signs.len()
    }

    /// Value at coordinate `index`, `None` if missing.
    pub fn get(&self, index: usize) -> Option<f64> {
        match self.signs[index] {
            0 => None,
            s => Some(0.5 * f64::from(s)),
        }
    }

    pub fn is_missing(&self, index: usize) -> bool {
        self.signs[index] == 0
    }

    pub fn is_fully_observed(&self) -> bool {
        self.signs.iter().all(|&s| s != 0)
    }

    pub fn observed_count(&self) -> usize {
        self.signs.iter().filter(|&&s| s != 0).count()
    }

    /// Raw signs, `0` for missing.
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub(crate) fn signs_mut(&mut self) -> &mut [i8] {
        &mut self.signs
    }

    /// Entries with missing values filled by zero.
    pub fn filled_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.signs.iter().map(|&s| 0.5 * f64::from(s))
    }

    pub fn entries(&self) -> Vec<Option<f64>> {
        (0..self.d()).map(|i| self.get(i)).collect()
    }
}

/// The pairwise-marginal embedding of a permutation.
pub fn embed(perm: &Permutation) -> EmbeddedObservation {
    let n = perm.n();
    let pos = perm.position();
    let mut signs = Vec::with_capacity(pair_count(n));
    for a in 0..n {
        for b in a + 1..n {
            signs.push(if pos[a] < pos[b] { 1 } else { -1 });
        }
    }
    EmbeddedObservation::from_signs(n, signs)
}

/// Kendall tau distance: the number of pairs the two rankings order
/// differently. Runs in `O(n log n)` by counting inversions with merge sort.
pub fn kendall_tau(p1: &Permutation, p2: &Permutation) -> Result<usize> {
    if p1.n() != p2.n() {
        return Err(Error::DimensionMismatch {
            expected: p1.n(),
            actual: p2.n(),
        });
    }
    // ranks under p1 of the items listed in p2's order
    let mut seq: Vec<usize> = p2.order().iter().map(|&item| p1.rank_of(item)).collect();
    let mut buf = vec![0; seq.len()];
    Ok(count_inversions(&mut seq, &mut buf))
}

fn count_inversions(seq: &mut [usize], buf: &mut [usize]) -> usize {
    let len = seq.len();
    if len < 2 {
        return 0;
    }
    let mid = len / 2;
    let mut count = {
        let (left, right) = seq.split_at_mut(mid);
        let (lb, rb) = buf.split_at_mut(mid);
        count_inversions(left, lb) + count_inversions(right, rb)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < len {
        if seq[i] <= seq[j] {
            buf[k] = seq[i];
            i += 1;
        } else {
            buf[k] = seq[j];
            count += mid - i;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + (mid - i)].copy_from_slice(&seq[i..mid]);
    k += mid - i;
    buf[k..k + (len - j)].copy_from_slice(&seq[j..len]);
    seq.copy_from_slice(&buf[..len]);
    count
}

/// Squared Euclidean distance between two fully observed embeddings.
pub fn embedding_distance_sq(e1: &EmbeddedObservation, e2: &EmbeddedObservation) -> Result<f64> {
    if e1.n() != e2.n() {
        return Err(Error::DimensionMismatch {
            expected: e1.n(),
            actual: e2.n(),
        });
    }
    if !e1.is_fully_observed() || !e2.is_fully_observed() {
        return Err(Error::MissingEntries);
    }
    Ok(e1
        .filled_values()
        .zip(e2.filled_values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}
