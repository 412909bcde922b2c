//! Input data: query groups, synthetic generators and LETOR files.

mod letor;
mod synthetic;

pub use letor::{parse_letor, parse_letor_file, write_letor, ColumnMap, ParseOptions};
pub use synthetic::{
    default_corruptions, generate_synthetic, graded_relevance, CorruptionKind, CorruptionOp,
    SyntheticInstance, SyntheticSpec,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Items retrieved for one query, with their features and expert scores.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query_id: String,
    /// `n × d` item features.
    pub x: DMatrix<f64>,
    /// `n × p` expert scores, one column per list.
    pub r: DMatrix<f64>,
    /// Ground-truth grades, used for evaluation only.
    pub relevance: Option<Vec<i32>>,
    /// Per-item trailing comments from the source file, if any.
    pub doc_ids: Vec<String>,
}

impl QueryGroup {
    pub fn new(
        query_id: impl Into<String>,
        x: DMatrix<f64>,
        r: DMatrix<f64>,
        relevance: Option<Vec<i32>>,
    ) -> Result<Self> {
        let n = x.nrows();
        if r.nrows() != n {
            return Err(Error::Dimension(format!(
                "feature matrix has {n} rows, rank-list matrix has {}",
                r.nrows()
            )));
        }
        if let Some(rel) = &relevance {
            if rel.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: rel.len(),
                });
            }
        }
        Ok(QueryGroup {
            query_id: query_id.into(),
            x,
            r,
            relevance,
            doc_ids: vec![String::new(); n],
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Appends `oracle_scores` as one more rank list. Nothing records which
/// column was added.
pub fn augment_with_quality_list(group: &QueryGroup, oracle_scores: &[f64]) -> Result<QueryGroup> {
    let n = group.len();
    if oracle_scores.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: oracle_scores.len(),
        });
    }
    if let Some(i) = oracle_scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "augmenting list",
            row: i,
            col: 0,
        });
    }
    if n > 1 && oracle_scores.iter().all(|&v| v == oracle_scores[0]) {
        return Err(Error::Degenerate("augmenting list is constant".into()));
    }
    let p = group.r.ncols();
    let mut r = group.r.clone().insert_column(p, 0.0);
    for (i, &v) in oracle_scores.iter().enumerate() {
        r[(i, p)] = v;
    }
    Ok(QueryGroup { r, ..group.clone() })
}
