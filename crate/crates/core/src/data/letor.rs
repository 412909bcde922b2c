//! LETOR / SVMlight text format.
//!
//! ```text
//! <grade> qid:<id> <idx>:<value> ... [#comment]
//! ```
//!
//! Feature indices are 1-based. A [`ColumnMap`] decides which indices become
//! item features and which become expert score columns.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::QueryGroup;
use crate::error::{Error, Result};

/// Split of 1-based feature indices into feature columns and list columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    x: Vec<usize>,
    r: Vec<usize>,
}

impl ColumnMap {
    pub fn new(x: Vec<usize>, r: Vec<usize>) -> Result<Self> {
        if r.is_empty() {
            return Err(Error::Config("column map has no rank-list columns".into()));
        }
        let mut seen = HashMap::new();
        for (&c, side) in x.iter().map(|c| (c, "x")).chain(r.iter().map(|c| (c, "r"))) {
            if c == 0 {
                return Err(Error::Config("feature indices are 1-based".into()));
            }
            if let Some(prev) = seen.insert(c, side) {
                return Err(Error::Config(if prev == side {
                    format!("column {c} listed twice in {side}")
                } else {
                    format!("column {c} is in both x and r")
                }));
            }
        }
        Ok(ColumnMap { x, r })
    }

    /// LETOR 4.0 (MQ2007, MQ2008): the 25 TF-IDF, BM25 and LMIR columns are
    /// rank lists, the other 21 are item features.
    pub fn mq() -> Self {
        let r: Vec<usize> = (11..=15).chain(21..=40).collect();
        let x = (1..=46).filter(|c| !r.contains(c)).collect();
        ColumnMap { x, r }
    }

    /// LETOR 3.0 OHSUMED: BM25 and LMIR for each of the three fields are the
    /// 15 rank lists, the remaining 30 columns are item features.
    pub fn ohsumed() -> Self {
        let r: Vec<usize> = (11..=15).chain(26..=30).chain(41..=45).collect();
        let x = (1..=45).filter(|c| !r.contains(c)).collect();
        ColumnMap { x, r }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "mq" | "mq2007" | "mq2008" => Some(Self::mq()),
            "ohsumed" => Some(Self::ohsumed()),
            _ => None,
        }
    }

    pub fn x_columns(&self) -> &[usize] {
        &self.x
    }

    pub fn r_columns(&self) -> &[usize] {
        &self.r
    }
}

fn parse_ranges(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::Config(format!("bad column range '{part}'"));
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

impl FromStr for ColumnMap {
    type Err = Error;

    /// Accepts a preset name or `x=1-6,9;r=7-8`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(map) = Self::preset(&s.to_ascii_lowercase()) {
            return Ok(map);
        }
        let (mut x, mut r) = (None, None);
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=ranges, got '{part}'")))?;
            let slot = match key.trim() {
                "x" => &mut x,
                "r" => &mut r,
                other => {
                    return Err(Error::Config(format!(
                        "unknown column group '{other}' (expected x or r)"
                    )))
                }
            };
            *slot = Some(parse_ranges(val)?);
        }
        let r = r.ok_or_else(|| {
            Error::Config(format!(
                "column map '{s}' is neither a preset (mq, ohsumed) nor has an r= group"
            ))
        })?;
        ColumnMap::new(x.unwrap_or_default(), r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOptions {
    pub columns: ColumnMap,
    /// Reject a query id that reappears after another query started.
    pub strict_grouping: bool,
    /// Fill absent mapped features with zero instead of failing.
    pub pad_missing: bool,
}

impl ParseOptions {
    pub fn new(columns: ColumnMap) -> Self {
        ParseOptions {
            columns,
            strict_grouping: false,
            pad_missing: false,
        }
    }
}

struct Line {
    grade: i32,
    qid: String,
    features: BTreeMap<usize, f64>,
    comment: String,
}

fn parse_line(text: &str, line: usize) -> Result<Option<Line>> {
    let err = |message: String| Error::Parse { line, message };
    let (body, comment) = match text.split_once('#') {
        Some((b, c)) => (b, c.trim().to_string()),
        None => (text, String::new()),
    };
    let mut tokens = body.split_whitespace();
    let Some(grade_tok) = tokens.next() else {
        return Ok(None);
    };
    let grade: i32 = grade_tok
        .parse()
        .map_err(|_| err(format!("relevance grade '{grade_tok}' is not an integer")))?;
    let qid = match tokens.next() {
        Some(t) => t
            .strip_prefix("qid:")
            .filter(|q| !q.is_empty())
            .ok_or_else(|| err(format!("expected qid:<id>, got '{t}'")))?
            .to_string(),
        None => return Err(err("missing qid".into())),
    };
    let mut features = BTreeMap::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| err(format!("expected <index>:<value>, got '{tok}'")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| err(format!("bad feature index in '{tok}'")))?;
        if idx == 0 {
            return Err(err("feature indices are 1-based".into()));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| err(format!("bad feature value in '{tok}'")))?;
        if !val.is_finite() {
            return Err(err(format!("non-finite feature value in '{tok}'")));
        }
        if features.insert(idx, val).is_some() {
            return Err(err(format!("feature {idx} appears twice")));
        }
    }
    Ok(Some(Line {
        grade,
        qid,
        features,
        comment,
    }))
}

/// Parses LETOR text into query groups, in order of first appearance.
pub fn parse_letor<R: BufRead>(reader: R, opts: &ParseOptions) -> Result<Vec<QueryGroup>> {
    struct Acc {
        qid: String,
        rows_x: Vec<f64>,
        rows_r: Vec<f64>,
        grades: Vec<i32>,
        comments: Vec<String>,
    }
    let cols = &opts.columns;
    let mut groups: Vec<Acc> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut current: Option<usize> = None;

    for (i, text) in reader.lines().enumerate() {
        let lineno = i + 1;
        let text = text?;
        let Some(line) = parse_line(&text, lineno)? else {
            continue;
        };
        let gi = match index.get(&line.qid) {
            Some(&gi) => {
                if opts.strict_grouping && current != Some(gi) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("qid {} reappears after another query", line.qid),
                    });
                }
                gi
            }
            None => {
                index.insert(line.qid.clone(), groups.len());
                groups.push(Acc {
                    qid: line.qid.clone(),
                    rows_x: vec![],
                    rows_r: vec![],
                    grades: vec![],
                    comments: vec![],
                });
                groups.len() - 1
            }
        };
        current = Some(gi);
        let g = &mut groups[gi];
        for (set, dest) in [(&cols.x, &mut g.rows_x), (&cols.r, &mut g.rows_r)] {
            for &c in set {
                match line.features.get(&c) {
                    Some(&v) => dest.push(v),
                    None if opts.pad_missing => dest.push(0.0),
                    None => {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("feature {c} is missing"),
                        })
                    }
                }
            }
        }
        g.grades.push(line.grade);
        g.comments.push(line.comment);
    }

    groups
        .into_iter()
        .map(|a| {
            let n = a.grades.len();
            let x = DMatrix::from_row_slice(n, cols.x.len(), &a.rows_x);
            let r = DMatrix::from_row_slice(n, cols.r.len(), &a.rows_r);
            let mut g = QueryGroup::new(a.qid, x, r, Some(a.grades))?;
            g.doc_ids = a.comments;
            Ok(g)
        })
        .collect()
}

pub fn parse_letor_file(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<Vec<QueryGroup>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_letor(BufReader::new(file), opts).map_err(|e| e.context(path.display().to_string()))
}

/// Writes groups in LETOR format. Values use the shortest representation
/// that parses back to the same `f64`. Missing grades are written as 0.
pub fn write_letor<W: Write>(mut out: W, groups: &[QueryGroup], columns: &ColumnMap) -> Result<()> {
    for g in groups {
        if g.x.ncols() != columns.x.len() || g.r.ncols() != columns.r.len() {
            return Err(Error::Dimension(format!(
                "query {} has {}+{} columns, column map has {}+{}",
                g.query_id,
                g.x.ncols(),
                g.r.ncols(),
                columns.x.len(),
                columns.r.len()
            )));
        }
        for i in 0..g.len() {
            let mut feats: Vec<(usize, f64)> = columns
                .x
                .iter()
                .enumerate()
                .map(|(j, &c)| (c, g.x[(i, j)]))
                .chain(columns.r.iter().enumerate().map(|(j, &c)| (c, g.r[(i, j)])))
                .collect();
            feats.sort_by_key(|&(c, _)| c);
            let grade = g.relevance.as_ref().map_or(0, |rel| rel[i]);
            let mut line = format!("{grade} qid:{}", g.query_id);
            for (c, v) in feats {
                write!(line, " {c}:{v:?}").unwrap();
            }
            if let Some(doc) = g.doc_ids.get(i).filter(|d| !d.is_empty()) {
                write!(line, " #{doc}").unwrap();
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}
