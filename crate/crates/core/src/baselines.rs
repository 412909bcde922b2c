//! Reference rank aggregators that use the expert lists only.
//!
//! All methods take an `n × p` matrix of expert scores (higher = better) and
//! return one score per item. Missing entries may be marked with NaN; they
//! count as "not retrieved" for the Comb family and are skipped elsewhere.
//!
//! The Markov-chain transition rules follow the usual MC1–MC4 constructions:
//!
//! - MC1: from `i`, move uniformly to an item ranked at least as high as `i`
//!   by some list.
//! - MC2: pick a list uniformly, then move uniformly to an item that list
//!   ranks at least as high as `i`.
//! - MC3: pick a list and an item uniformly; move if that list ranks the item
//!   at least as high as `i`, otherwise stay.
//! - MC4: pick an item uniformly; move if a strict majority of lists rank it
//!   at least as high as `i`, otherwise stay.
//!
//! Each chain is mixed with the uniform chain (`damping`) so the stationary
//! distribution is unique; its mass is the item score.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::metrics::mid_ranks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    Borda,
    CombSum,
    CombMnz,
    CombAnz,
    CombMin,
    CombMax,
    Mc1,
    Mc2,
    Mc3,
    Mc4,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 10] = [
        BaselineMethod::Borda,
        BaselineMethod::CombSum,
        BaselineMethod::CombMnz,
        BaselineMethod::CombAnz,
        BaselineMethod::CombMin,
        BaselineMethod::CombMax,
        BaselineMethod::Mc1,
        BaselineMethod::Mc2,
        BaselineMethod::Mc3,
        BaselineMethod::Mc4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Borda => "borda",
            BaselineMethod::CombSum => "combsum",
            BaselineMethod::CombMnz => "combmnz",
            BaselineMethod::CombAnz => "combanz",
            BaselineMethod::CombMin => "combmin",
            BaselineMethod::CombMax => "combmax",
            BaselineMethod::Mc1 => "mc1",
            BaselineMethod::Mc2 => "mc2",
            BaselineMethod::Mc3 => "mc3",
            BaselineMethod::Mc4 => "mc4",
        }
    }

    /// Scores with default settings: min-max normalization for the Comb
    /// family, [`MarkovOptions::default`] for the chains.
    pub fn scores(self, r: &DMatrix<f64>) -> Result<Vec<f64>> {
        use BaselineMethod::*;
        match self {
            Borda => Ok(borda(r)),
            CombSum | CombMnz | CombAnz | CombMin | CombMax => {
                Ok(comb(&normalize(r, Normalization::MinMax), self))
            }
            Mc1 | Mc2 | Mc3 | Mc4 => markov_chain(r, self, &MarkovOptions::default()),
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        BaselineMethod::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown baseline method `{s}`")))
    }
}

/// Borda count: mean over lists of the number of items scored strictly lower,
/// plus half the number of other items tied with it.
pub fn borda(r: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = r.shape();
    let mut scores = vec![0.0; n];
    let mut lists = vec![0usize; n];
    for k in 0..p {
        let col = r.column(k);
        for i in 0..n {
            let v = col[i];
            if v.is_nan() {
                continue;
            }
            let (mut lower, mut tied) = (0usize, 0usize);
            for j in 0..n {
                if j == i || col[j].is_nan() {
                    continue;
                }
                if col[j] < v {
                    lower += 1;
                } else if col[j] == v {
                    tied += 1;
                }
            }
            scores[i] += lower as f64 + 0.5 * tied as f64;
            lists[i] += 1;
        }
    }
    for (s, &c) in scores.iter_mut().zip(&lists) {
        if c > 0 {
            *s /= c as f64;
        }
    }
    scores
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Per-column `(v − min) / (max − min)`; constant columns map to 0.
    MinMax,
    /// Per-column mid-rank scaled to `[0, 1]`.
    Rank,
}

/// Column normalization applied before score fusion. NaN entries pass through.
pub fn normalize(r: &DMatrix<f64>, how: Normalization) -> DMatrix<f64> {
    let mut out = r.clone();
    for k in 0..r.ncols() {
        let present: Vec<(usize, f64)> = r
            .column(k)
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .collect();
        if present.is_empty() {
            continue;
        }
        match how {
            Normalization::MinMax => {
                let lo = present.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let hi = present
                    .iter()
                    .map(|p| p.1)
                    .fold(f64::NEG_INFINITY, f64::max);
                for &(i, v) in &present {
                    out[(i, k)] = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                }
            }
            Normalization::Rank => {
                let vals: Vec<f64> = present.iter().map(|p| p.1).collect();
                let ranks = mid_ranks(&vals);
                let m = vals.len() as f64;
                for (&(i, _), r) in present.iter().zip(ranks) {
                    out[(i, k)] = if m > 1.0 { (r - 1.0) / (m - 1.0) } else { 0.0 };
                }
            }
        }
    }
    out
}

/// Score fusion on already-normalized scores. Non-Comb methods fall back to
/// CombSUM.
pub fn comb(r: &DMatrix<f64>, kind: BaselineMethod) -> Vec<f64> {
    (0..r.nrows())
        .map(|i| {
            let present: Vec<f64> = r.row(i).iter().copied().filter(|v| !v.is_nan()).collect();
            if present.is_empty() {
                return 0.0;
            }
            let sum: f64 = present.iter().sum();
            let hits = present.len() as f64;
            match kind {
                BaselineMethod::CombMnz => sum * hits,
                BaselineMethod::CombAnz => sum / hits,
                BaselineMethod::CombMin => present.iter().copied().fold(f64::INFINITY, f64::min),
                BaselineMethod::CombMax => {
                    present.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
                _ => sum,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOptions {
    /// Weight of the uniform chain mixed into the transition matrix.
    pub damping: f64,
    /// L1 change between power iterates that counts as stationary.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MarkovOptions {
    fn default() -> Self {
        MarkovOptions {
            damping: 0.05,
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

/// Row-stochastic transition matrix for one of the MC constructions, before
/// damping.
pub fn transition_matrix(r: &DMatrix<f64>, kind: BaselineMethod) -> Result<DMatrix<f64>> {
    let (n, p) = r.shape();
    if n < 2 {
        return Err(Error::Degenerate(
            "Markov-chain aggregation needs n >= 2".into(),
        ));
    }
    // list k ranks j at least as high as i
    let ge = |k: usize, i: usize, j: usize| {
        let (a, b) = (r[(i, k)], r[(j, k)]);
        !a.is_nan() && !b.is_nan() && b >= a
    };
    let mut t = DMatrix::zeros(n, n);
    match kind {
        BaselineMethod::Mc1 => {
            for i in 0..n {
                let set: Vec<usize> = (0..n)
                    .filter(|&j| j == i || (0..p).any(|k| ge(k, i, j)))
                    .collect();
                let w = 1.0 / set.len() as f64;
                for j in set {
                    t[(i, j)] = w;
                }
            }
        }
        BaselineMethod::Mc2 => {
            for i in 0..n {
                let mut used = 0;
                for k in 0..p {
                    if r[(i, k)].is_nan() {
                        continue;
                    }
                    used += 1;
                    let set: Vec<usize> = (0..n).filter(|&j| ge(k, i, j)).collect();
                    let w = 1.0 / set.len() as f64;
                    for j in set {
                        t[(i, j)] += w;
                    }
                }
                if used == 0 {
                    t[(i, i)] = 1.0;
                } else {
                    for j in 0..n {
                        t[(i, j)] /= used as f64;
                    }
                }
            }
        }
        BaselineMethod::Mc3 => {
            for i in 0..n {
                let mut moved = 0.0;
                for j in (0..n).filter(|&j| j != i) {
                    let votes = (0..p).filter(|&k| ge(k, i, j)).count();
                    let prob = votes as f64 / (p as f64 * n as f64);
                    t[(i, j)] = prob;
                    moved += prob;
                }
                t[(i, i)] = 1.0 - moved;
            }
        }
        BaselineMethod::Mc4 => {
            for i in 0..n {
                let mut moved = 0.0;
                for j in (0..n).filter(|&j| j != i) {
                    let votes = (0..p).filter(|&k| ge(k, i, j)).count();
                    if 2 * votes > p {
                        t[(i, j)] = 1.0 / n as f64;
                        moved += 1.0 / n as f64;
                    }
                }
                t[(i, i)] = 1.0 - moved;
            }
        }
        other => {
            return Err(Error::Config(format!(
                "{other} is not a Markov-chain method"
            )));
        }
    }
    Ok(t)
}

/// Stationary distribution of the damped chain, by power iteration.
pub fn markov_chain(
    r: &DMatrix<f64>,
    kind: BaselineMethod,
    opts: &MarkovOptions,
) -> Result<Vec<f64>> {
    let t = transition_matrix(r, kind)?;
    let n = t.nrows();
    let a = opts.damping;
    let damped = t * (1.0 - a) + DMatrix::from_element(n, n, a / n as f64);
    stationary(&damped, opts)
}

/// Left fixed point `pi P = pi` of a row-stochastic matrix.
pub fn stationary(p: &DMatrix<f64>, opts: &MarkovOptions) -> Result<Vec<f64>> {
    let n = p.nrows();
    let pt = p.transpose();
    let mut pi = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let mut next = &pt * &pi;
        let s: f64 = next.iter().sum();
        next /= s;
        residual = (&next - &pi).iter().map(|v| v.abs()).sum();
        pi = next;
        if residual < opts.tol {
            return Ok(pi.iter().copied().collect());
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn borda_examples() {
        assert_eq!(borda(&col(&[10., 20., 30.])), vec![0., 1., 2.]);
        let two = DMatrix::from_row_slice(3, 2, &[10., 10., 20., 20., 30., 30.]);
        assert_eq!(borda(&two), vec![0., 1., 2.]);
        let split = DMatrix::from_row_slice(2, 2, &[1., 2., 2., 1.]);
        assert_eq!(borda(&split), vec![0.5, 0.5]);
    }

    #[test]
    fn comb_examples() {
        let r = DMatrix::from_row_slice(2, 2, &[1., 1., 2., 2.]);
        assert_eq!(comb(&r, BaselineMethod::CombSum), vec![2., 4.]);
        assert_eq!(comb(&r, BaselineMethod::CombMin), vec![1., 2.]);
        assert_eq!(comb(&r, BaselineMethod::CombMax), vec![1., 2.]);
        assert_eq!(comb(&r, BaselineMethod::CombMnz), vec![4., 8.]);
        assert_eq!(comb(&r, BaselineMethod::CombAnz), vec![1., 2.]);
    }

    #[test]
    fn mnz_counts_retrieved_entries() {
        let r = DMatrix::from_row_slice(2, 2, &[0.5, f64::NAN, 0.4, 0.4]);
        // item 0: sum .5, one hit; item 1: sum .8, two hits
        assert_eq!(comb(&r, BaselineMethod::CombMnz), vec![0.5, 1.6]);
        assert_eq!(comb(&r, BaselineMethod::CombAnz), vec![0.5, 0.4]);
    }

    #[test]
    fn minmax_normalization() {
        let r = DMatrix::from_row_slice(3, 2, &[1., 5., 2., 5., 3., 5.]);
        let z = normalize(&r, Normalization::MinMax);
        assert_eq!(
            z.column(0).iter().copied().collect::<Vec<_>>(),
            vec![0., 0.5, 1.]
        );
        assert_eq!(
            z.column(1).iter().copied().collect::<Vec<_>>(),
            vec![0., 0., 0.]
        );
    }

    #[test]
    fn split_two_item_chains_are_uniform() {
        let r = DMatrix::from_row_slice(2, 2, &[1., 2., 2., 1.]);
        for m in [
            BaselineMethod::Mc1,
            BaselineMethod::Mc2,
            BaselineMethod::Mc3,
            BaselineMethod::Mc4,
        ] {
            let pi = markov_chain(&r, m, &MarkovOptions::default()).unwrap();
            assert_relative_eq!(pi[0], 0.5, epsilon = 1e-9);
            assert_relative_eq!(pi[1], 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn full_damping_is_uniform() {
        let r = DMatrix::from_row_slice(3, 1, &[1., 2., 3.]);
        let opts = MarkovOptions {
            damping: 1.0,
            ..MarkovOptions::default()
        };
        let pi = markov_chain(&r, BaselineMethod::Mc2, &opts).unwrap();
        for v in pi {
            assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in BaselineMethod::ALL {
            assert_eq!(m.name().parse::<BaselineMethod>().unwrap(), m);
        }
        assert!("foo".parse::<BaselineMethod>().is_err());
    }

    #[test]
    fn markov_needs_two_items() {
        assert!(
            markov_chain(&col(&[1.0]), BaselineMethod::Mc1, &MarkovOptions::default()).is_err()
        );
    }
}
