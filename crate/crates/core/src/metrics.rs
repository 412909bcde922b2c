//! Rank correlation and graded-relevance metrics.

use crate::error::{Error, Result};
use crate::ordering::argsort_descending;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::UndefinedMetric("need at least two items".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    Ok(())
}

/// Kendall's tau-b between two score vectors.
///
/// Ties are corrected for, so two vectors inducing the same weak ordering
/// score exactly 1. Errors when either side is constant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    let (mut concordant, mut discordant) = (0u64, 0u64);
    let (mut tied_a, mut tied_b) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].partial_cmp(&a[j]).unwrap();
            let db = b[i].partial_cmp(&b[j]).unwrap();
            use std::cmp::Ordering::Equal;
            match (da, db) {
                (Equal, Equal) => {}
                (Equal, _) => tied_a += 1,
                (_, Equal) => tied_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let c_d = (concordant + discordant) as f64;
    let denom = ((c_d + tied_a as f64) * (c_d + tied_b as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(
            "Kendall tau is undefined for a constant vector".into(),
        ));
    }
    Ok((concordant as f64 - discordant as f64) / denom)
}

/// Average (mid) ranks, 1-based, lowest value first.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // positions start..end share rank (start+1 + end)/2
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let ra = mid_ranks(a);
    let rb = mid_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedMetric(
            "Spearman rho is undefined for zero-variance ranks".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// NDCG@k with gain `2^rel − 1` and discount `log2(i + 1)`.
///
/// Items are ranked by descending predicted score, lower index first on ties.
/// Returns 0 when the ideal DCG is zero.
pub fn ndcg_at_k(predicted: &[f64], relevance: &[i32], k: usize) -> Result<f64> {
    if predicted.len() != relevance.len() {
        return Err(Error::LengthMismatch {
            expected: predicted.len(),
            actual: relevance.len(),
        });
    }
    if k == 0 || k > predicted.len() {
        return Err(Error::UndefinedMetric(format!(
            "k = {k} outside 1..={}",
            predicted.len()
        )));
    }
    if let Some(r) = relevance.iter().find(|&&r| r < 0) {
        return Err(Error::UndefinedMetric(format!("negative relevance {r}")));
    }
    let ideal = ideal_dcg(relevance, k);
    if ideal == 0.0 {
        return Ok(0.0);
    }
    let order = argsort_descending(predicted);
    Ok(dcg(order.iter().map(|&i| relevance[i]), k) / ideal)
}

fn gain(rel: i32) -> f64 {
    (2f64).powi(rel) - 1.0
}

fn dcg(rels: impl Iterator<Item = i32>, k: usize) -> f64 {
    rels.take(k)
        .enumerate()
        .map(|(pos, r)| gain(r) / ((pos + 2) as f64).log2())
        .sum()
}

fn ideal_dcg(relevance: &[i32], k: usize) -> f64 {
    let mut sorted = relevance.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    dcg(sorted.into_iter(), k)
}

/// NDCG@k averaged over queries.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanNdcg {
    /// Mean over queries with nonzero ideal DCG; NaN if there are none.
    pub mean: f64,
    pub counted: usize,
    /// Queries skipped because every relevance grade was zero.
    pub skipped: usize,
}

/// Averages NDCG@k over `(predicted, relevance)` pairs, skipping queries whose
/// relevance is all zero. Queries shorter than `k` are evaluated at their
/// full length.
pub fn mean_ndcg_at_k<'a, I>(queries: I, k: usize) -> Result<MeanNdcg>
where
    I: IntoIterator<Item = (&'a [f64], &'a [i32])>,
{
    let (mut sum, mut counted, mut skipped) = (0.0, 0, 0);
    for (pred, rel) in queries {
        if rel.iter().all(|&r| r == 0) {
            skipped += 1;
            continue;
        }
        sum += ndcg_at_k(pred, rel, k.min(pred.len()))?;
        counted += 1;
    }
    Ok(MeanNdcg {
        mean: if counted == 0 {
            f64::NAN
        } else {
            sum / counted as f64
        },
        counted,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn tau_examples() {
        assert_eq!(kendall_tau(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        assert_relative_eq!(
            kendall_tau(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        // identical weak orderings with ties still give 1
        assert_eq!(kendall_tau(&[1., 1., 2.], &[5., 5., 9.]).unwrap(), 1.0);
        assert!(matches!(
            kendall_tau(&[1., 1.], &[1., 2.]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn rho_examples() {
        assert_eq!(spearman_rho(&[1., 2., 3.], &[10., 20., 30.]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        assert_relative_eq!(
            spearman_rho(&[1., 2., 3., 4.], &[2., 1., 4., 3.]).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        assert!(spearman_rho(&[1., 2.], &[3., 3.]).is_err());
    }

    #[test]
    fn ndcg_examples() {
        for k in 1..=3 {
            assert_eq!(ndcg_at_k(&[3., 2., 1.], &[2, 1, 0], k).unwrap(), 1.0);
        }
        let v = ndcg_at_k(&[0., 1.], &[2, 0], 2).unwrap();
        assert_relative_eq!(v, 1.0 / 3f64.log2(), epsilon = 1e-15);
        assert_relative_eq!(v, 0.6309, epsilon = 1e-4);
        assert_eq!(ndcg_at_k(&[0., 1.], &[0, 0], 2).unwrap(), 0.0);
        assert!(ndcg_at_k(&[0., 1.], &[-1, 0], 2).is_err());
        assert!(ndcg_at_k(&[0., 1.], &[1, 0], 3).is_err());
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[10., 20., 10., 30.]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn mean_ndcg_skips_zero_queries() {
        let p1 = [1.0, 0.0];
        let r1 = [1, 0];
        let p2 = [1.0, 0.0];
        let r2 = [0, 0];
        let m = mean_ndcg_at_k([(&p1[..], &r1[..]), (&p2[..], &r2[..])], 1).unwrap();
        assert_eq!(m.mean, 1.0);
        assert_eq!((m.counted, m.skipped), (1, 1));
    }
}
