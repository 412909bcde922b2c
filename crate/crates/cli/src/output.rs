use std::fs;
use std::io::Write;
use std::path::Path;

use rankagg::selftest::SelftestReport;
use serde_json::json;

use crate::Failure;

/// Number formatting for CSV cells: shortest round-trip form, empty for NaN.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes `# <schema>` and then a header row and records.
pub fn write_csv(
    path: &Path,
    schema: &str,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut file = fs::File::create(path)?;
    writeln!(file, "# {schema}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn ndcg_header(max_k: usize) -> impl Iterator<Item = String> {
    (1..=max_k).map(|k| format!("ndcg@{k}"))
}

pub fn selftest_table(report: &SelftestReport) -> String {
    let mut out = String::new();
    for c in &report.checks {
        out += &format!(
            "{} {:<34} {:>5} cases  max error {:.3e}  tolerance {:.0e}\n",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.cases,
            c.max_error,
            c.tolerance
        );
        if let Some(d) = &c.detail {
            out += &format!("     first failure: {d}\n");
        }
    }
    out += if report.passed() {
        "all checks passed\n"
    } else {
        "some checks failed\n"
    };
    out
}

pub fn selftest_json(report: &SelftestReport) -> String {
    let checks: Vec<_> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "passed": c.passed(),
                "cases": c.cases,
                "failures": c.failures,
                "max_error": c.max_error,
                "tolerance": c.tolerance,
                "detail": c.detail,
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({ "passed": report.passed(), "checks": checks }))
        .expect("report serializes")
}
