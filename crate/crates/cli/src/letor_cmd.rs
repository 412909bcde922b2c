use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rankagg::baselines::BaselineMethod;
use rankagg::data::{augment_with_quality_list, QueryGroup};
use rankagg::metrics::mean_ndcg_at_k;
use rankagg::{mr_rank_agg, AggregationConfig, Error};
use rayon::prelude::*;

use crate::output::{ndcg_header, num, write_csv};
use crate::Failure;

pub const NDCG_SCHEMA: &str = "rankagg aggregate-ndcg v1";
pub const MAX_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mr,
    Baseline(BaselineMethod),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mr => f.write_str("mr"),
            Method::Baseline(b) => f.write_str(b.name()),
        }
    }
}

pub fn valid_methods() -> Vec<String> {
    std::iter::once("mr".to_string())
        .chain(BaselineMethod::ALL.iter().map(|m| m.name().to_string()))
        .collect()
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>, Failure> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = if name.eq_ignore_ascii_case("mr") {
            Method::Mr
        } else {
            match name.parse::<BaselineMethod>() {
                Ok(b) => Method::Baseline(b),
                Err(_) => {
                    return Err(Failure::Usage(format!(
                        "unknown method `{name}`; valid methods: {}",
                        valid_methods().join(", ")
                    )))
                }
            }
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Failure::Usage(format!(
            "no methods given; valid methods: {}",
            valid_methods().join(", ")
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct NdcgTable {
    pub methods: Vec<Method>,
    /// Queries with at least one nonzero grade.
    pub queries: usize,
    /// `ndcg[m][k - 1]`, averaged over queries.
    pub ndcg: Vec<Vec<f64>>,
}

pub fn run(
    groups: &[QueryGroup],
    methods: &[Method],
    cfg: &AggregationConfig,
) -> Result<NdcgTable, Failure> {
    if let Some(g) = groups.iter().find(|g| g.relevance.is_none()) {
        return Err(Failure::Runtime(format!(
            "query {} has no relevance grades",
            g.query_id
        )));
    }
    let scores: Vec<Vec<Vec<f64>>> = groups
        .par_iter()
        .map(|g| {
            methods
                .iter()
                .map(|&m| {
                    method_scores(g, m, cfg)
                        .map_err(|e| Failure::Runtime(format!("query {}, {m}: {e}", g.query_id)))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let mut ndcg = Vec::with_capacity(methods.len());
    let mut queries = 0;
    for j in 0..methods.len() {
        let mut row = Vec::with_capacity(MAX_K);
        for k in 1..=MAX_K {
            let pairs = groups
                .iter()
                .zip(&scores)
                .map(|(g, s)| (s[j].as_slice(), g.relevance.as_deref().unwrap_or(&[])));
            let mean = mean_ndcg_at_k(pairs, k)?;
            queries = mean.counted;
            row.push(mean.mean);
        }
        ndcg.push(row);
    }
    Ok(NdcgTable {
        methods: methods.to_vec(),
        queries,
        ndcg,
    })
}

fn method_scores(g: &QueryGroup, m: Method, cfg: &AggregationConfig) -> Result<Vec<f64>, Error> {
    match m {
        Method::Baseline(b) => b.scores(&g.r),
        Method::Mr => {
            let keep: Vec<usize> = (0..g.r.ncols())
                .filter(|&k| {
                    let c = g.r.column(k);
                    c.iter().any(|&v| v != c[0])
                })
                .collect();
            if keep.is_empty() || g.len() < 2 {
                log::warn!(
                    "query {}: no informative rank list, all items tied",
                    g.query_id
                );
                return Ok(vec![0.0; g.len()]);
            }
            if keep.len() < g.r.ncols() {
                log::debug!(
                    "query {}: dropped {} constant rank lists",
                    g.query_id,
                    g.r.ncols() - keep.len()
                );
            }
            let r = g.r.select_columns(&keep);
            let res = mr_rank_agg(&r, &g.x, cfg)?;
            Ok(res.consensus_scores())
        }
    }
}

/// Adds one rank list per query from `path`.
///
/// A file containing `qid:` tokens is read as LETOR and its grades are used
/// as scores; otherwise each line holds a score, optionally preceded by a
/// query id. Items are matched by position within their query. A query whose
/// extra list is constant is left unchanged.
pub fn augment(groups: Vec<QueryGroup>, path: &Path) -> Result<Vec<QueryGroup>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let lists = parse_scores(&text, &groups)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    groups
        .into_iter()
        .zip(lists)
        .map(|(g, scores)| match augment_with_quality_list(&g, &scores) {
            Ok(a) => Ok(a),
            Err(Error::Degenerate(_)) => {
                log::warn!("query {}: augmenting list is constant, skipped", g.query_id);
                Ok(g)
            }
            Err(e) => Err(Failure::Runtime(format!("query {}: {e}", g.query_id))),
        })
        .collect()
}

fn parse_scores(text: &str, groups: &[QueryGroup]) -> Result<Vec<Vec<f64>>, String> {
    let letor = text.contains("qid:");
    let mut by_query: HashMap<String, Vec<f64>> = HashMap::new();
    let mut bare = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| format!("line {}: {what}", lineno + 1);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (qid, value) = if letor {
            let qid = tokens
                .get(1)
                .and_then(|t| t.strip_prefix("qid:"))
                .ok_or_else(|| bad("expected `<grade> qid:<id> ...`"))?;
            (Some(qid), tokens[0])
        } else {
            match tokens.as_slice() {
                [v] => (None, *v),
                [q, v] => (Some(q.strip_prefix("qid:").unwrap_or(q)), *v),
                _ => return Err(bad("expected `[qid] score`")),
            }
        };
        let value: f64 = value
            .parse()
            .map_err(|_| bad(&format!("bad score `{value}`")))?;
        match qid {
            Some(q) => by_query.entry(q.to_string()).or_default().push(value),
            None => bare.push(value),
        }
    }
    if !bare.is_empty() && !by_query.is_empty() {
        return Err("mixes lines with and without query ids".into());
    }
    let mut out = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        let scores = if by_query.is_empty() {
            let end = offset + g.len();
            let s = bare.get(offset..end).ok_or_else(|| {
                format!(
                    "{} scores for {} items",
                    bare.len(),
                    groups.iter().map(QueryGroup::len).sum::<usize>()
                )
            })?;
            offset = end;
            s.to_vec()
        } else {
            by_query
                .remove(&g.query_id)
                .ok_or_else(|| format!("no scores for query {}", g.query_id))?
        };
        if scores.len() != g.len() {
            return Err(format!(
                "query {} has {} items but {} scores",
                g.query_id,
                g.len(),
                scores.len()
            ));
        }
        out.push(scores);
    }
    if by_query.is_empty() && offset != bare.len() {
        return Err(format!("{} scores left over", bare.len() - offset));
    }
    Ok(out)
}

pub fn write(table: &NdcgTable, dir: &Path) -> Result<(), Failure> {
    let mut header = vec!["method".to_string(), "queries".to_string()];
    header.extend(ndcg_header(MAX_K));
    let rows: Vec<Vec<String>> = table
        .methods
        .iter()
        .zip(&table.ndcg)
        .map(|(m, row)| {
            let mut r = vec![m.to_string(), table.queries.to_string()];
            r.extend(row.iter().map(|&v| num(v)));
            r
        })
        .collect();
    write_csv(&dir.join("aggregate_ndcg.csv"), NDCG_SCHEMA, &header, &rows)
}

pub fn summary_table(table: &NdcgTable) -> String {
    let mut out = format!("{:<10}", "method");
    for k in 1..=MAX_K {
        out += &format!(" {:>7}", format!("@{k}"));
    }
    out.push('\n');
    for (m, row) in table.methods.iter().zip(&table.ndcg) {
        out += &format!("{:<10}", m.to_string());
        for v in row {
            out += &format!(" {v:>7.4}");
        }
        out.push('\n');
    }
    out += &format!("{} queries with graded items\n", table.queries);
    out
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;

    fn groups() -> Vec<QueryGroup> {
        let g = |id: &str, n: usize| {
            QueryGroup::new(
                id,
                DMatrix::from_element(n, 1, 0.0),
                DMatrix::from_fn(n, 1, |i, _| i as f64),
                Some(vec![0; n]),
            )
            .unwrap()
        };
        vec![g("1", 2), g("2", 3)]
    }

    #[test]
    fn methods_parse_and_reject_unknown_names() {
        assert_eq!(
            parse_methods("borda, mr").unwrap(),
            vec![Method::Baseline(BaselineMethod::Borda), Method::Mr]
        );
        let Err(Failure::Usage(msg)) = parse_methods("borda,foo") else {
            panic!("expected a usage error");
        };
        assert!(msg.contains("foo") && msg.contains("combmnz"), "{msg}");
    }

    #[test]
    fn bare_scores_follow_query_order() {
        let s = parse_scores("1\n2\n3\n4\n5\n", &groups()).unwrap();
        assert_eq!(s, vec![vec![1.0, 2.0], vec![3.0, 4.0, 5.0]]);
        assert!(parse_scores("1\n2\n", &groups()).is_err());
    }

    #[test]
    fn letor_grades_are_matched_by_query() {
        let text = "2 qid:2 1:0\n0 qid:1 1:0\n1 qid:2 1:0\n1 qid:1 1:0\n0 qid:2 1:0\n";
        let s = parse_scores(text, &groups()).unwrap();
        assert_eq!(s, vec![vec![0.0, 1.0], vec![2.0, 1.0, 0.0]]);
    }
}
