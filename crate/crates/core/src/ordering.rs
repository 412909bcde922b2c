//! Weak orderings over item indices.
//!
//! An [`Ordering`] is a sequence of tie-blocks. Earlier blocks hold items with
//! lower rank scores; items inside one block are tied. A total ordering has
//! only singleton blocks.

use std::cmp::Ordering as CmpOrdering;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ordering {
    blocks: Vec<Vec<usize>>,
    n: usize,
}

impl Ordering {
    /// Builds an ordering from explicit blocks, which must partition `0..n`.
    pub fn new(blocks: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut count = 0;
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::InvalidOrdering("empty block".into()));
            }
            for &i in block {
                if i >= n {
                    return Err(Error::InvalidOrdering(format!(
                        "index {i} out of range for {n} items"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidOrdering(format!("index {i} repeated")));
                }
                seen[i] = true;
                count += 1;
            }
        }
        if count != n {
            return Err(Error::InvalidOrdering(format!(
                "blocks cover {count} of {n} items"
            )));
        }
        Ok(Ordering { blocks, n })
    }

    /// Total ordering from a sequence of items, lowest first.
    pub fn total(sequence: Vec<usize>) -> Result<Self> {
        let n = sequence.len();
        Ordering::new(sequence.into_iter().map(|i| vec![i]).collect(), n)
    }

    /// Identity total ordering `0 < 1 < ... < n-1`.
    pub fn identity(n: usize) -> Self {
        Ordering {
            blocks: (0..n).map(|i| vec![i]).collect(),
            n,
        }
    }

    /// A single block holding every item.
    pub fn all_tied(n: usize) -> Self {
        let blocks = if n == 0 {
            vec![]
        } else {
            vec![(0..n).collect()]
        };
        Ordering { blocks, n }
    }

    /// Weak ordering induced by scores; exactly equal scores share a block.
    ///
    /// Panics if any score is NaN.
    pub fn from_scores(scores: &[f64]) -> Self {
        let idx = argsort_ascending(scores);
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut last: Option<f64> = None;
        for i in idx {
            match last {
                Some(v) if v == scores[i] => blocks.last_mut().unwrap().push(i),
                _ => blocks.push(vec![i]),
            }
            last = Some(scores[i]);
        }
        Ordering {
            blocks,
            n: scores.len(),
        }
    }

    /// Total ordering by ascending score, ties broken by lower index first.
    pub fn from_scores_total(scores: &[f64]) -> Self {
        Ordering {
            blocks: argsort_ascending(scores)
                .into_iter()
                .map(|i| vec![i])
                .collect(),
            n: scores.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_total(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    /// Items in block order (lowest first). Within a block, stored order.
    pub fn sequence(&self) -> Vec<usize> {
        self.blocks.iter().flatten().copied().collect()
    }

    /// Block index of every item.
    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block {
                out[i] = b;
            }
        }
        out
    }

    /// Block index of every item as a score vector (higher = more relevant).
    pub fn to_scores(&self) -> Vec<f64> {
        self.block_of().into_iter().map(|b| b as f64).collect()
    }

    /// Breaks ties inside each block by ascending `keys`, then lower index.
    pub fn refine_by(&self, keys: &[f64]) -> Ordering {
        debug_assert_eq!(keys.len(), self.n);
        let mut blocks = Vec::with_capacity(self.n);
        for block in &self.blocks {
            let mut b = block.clone();
            b.sort_by(|&i, &j| cmp_key_then_index(keys, i, j));
            blocks.extend(b.into_iter().map(|i| vec![i]));
        }
        Ordering { blocks, n: self.n }
    }

    /// Same as [`Ordering::refine_by`] but keeps each block as a sorted
    /// sequence instead of splitting it.
    pub(crate) fn sorted_within_blocks(&self, keys: &[f64]) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .map(|block| {
                let mut b = block.clone();
                b.sort_by(|&i, &j| cmp_key_then_index(keys, i, j));
                b
            })
            .collect()
    }

    /// True when `values` never decreases along the block sequence:
    /// every value in a block is at most every value in any later block.
    pub fn admits(&self, values: &[f64]) -> bool {
        if values.len() != self.n {
            return false;
        }
        let mut prev_max = f64::NEG_INFINITY;
        for block in &self.blocks {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in block {
                lo = lo.min(values[i]);
                hi = hi.max(values[i]);
            }
            if lo < prev_max {
                return false;
            }
            prev_max = hi;
        }
        true
    }

    /// True when `other` is a coarsening of `self`: every block of `other`
    /// is a union of consecutive blocks of `self`.
    pub fn coarsens_to(&self, other: &Ordering) -> bool {
        if self.n != other.n {
            return false;
        }
        let mine = self.block_of();
        let theirs = other.block_of();
        let mut pairs: Vec<(usize, usize)> = (0..self.n).map(|i| (mine[i], theirs[i])).collect();
        pairs.sort_unstable();
        pairs.dedup();
        // each fine block maps to one coarse block, and coarse index is
        // nondecreasing in fine index
        pairs.windows(2).all(|w| {
            if w[0].0 == w[1].0 {
                false
            } else {
                w[0].1 <= w[1].1
            }
        })
    }

    /// Relabels items: item `i` of `self` becomes item `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Ordering {
        Ordering {
            blocks: self
                .blocks
                .iter()
                .map(|b| b.iter().map(|&i| perm[i]).collect())
                .collect(),
            n: self.n,
        }
    }

    /// Canonical form with each block's indices sorted ascending.
    pub fn canonical(&self) -> Ordering {
        let mut blocks = self.blocks.clone();
        for b in &mut blocks {
            b.sort_unstable();
        }
        Ordering { blocks, n: self.n }
    }
}

fn cmp_key_then_index(keys: &[f64], i: usize, j: usize) -> CmpOrdering {
    keys[i].total_cmp(&keys[j]).then(i.cmp(&j))
}

/// Indices sorted by ascending value, lower index first on ties.
pub fn argsort_ascending(values: &[f64]) -> Vec<usize> {
    assert!(
        values.iter().all(|v| !v.is_nan()),
        "cannot order NaN scores"
    );
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| cmp_key_then_index(values, i, j));
    idx
}

/// Indices sorted by descending value, lower index first on ties.
pub fn argsort_descending(values: &[f64]) -> Vec<usize> {
    assert!(
        values.iter().all(|v| !v.is_nan()),
        "cannot order NaN scores"
    );
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    idx
}
