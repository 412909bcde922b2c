use std::path::Path;

use rankagg::baselines::BaselineMethod;
use rankagg::data::{generate_synthetic, graded_relevance, SyntheticSpec};
use rankagg::metrics::{kendall_tau, ndcg_at_k, spearman_rho};
use rankagg::mr_rank_agg;
use rayon::prelude::*;

use crate::config::SynthConfig;
use crate::output::{ndcg_header, num, write_csv};
use crate::Failure;

pub const TRACE_SCHEMA: &str = "rankagg synth-trace v1";
pub const SUMMARY_SCHEMA: &str = "rankagg synth-summary v1";

/// Tau at or above this counts as exact recovery.
pub const RECOVERED: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: usize,
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub feature_kendall_tau: f64,
    pub feature_spearman_rho: f64,
    pub coupled_cost: f64,
    pub margin_applied: bool,
}

#[derive(Debug, Clone)]
pub struct MethodScore {
    pub method: String,
    pub kendall_tau: f64,
    pub spearman_rho: f64,
    pub ndcg: Vec<f64>,
    /// Outer iterations, for the aggregation method only.
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Replicate {
    pub seed: u64,
    pub trace: Vec<TraceRow>,
    pub methods: Vec<MethodScore>,
}

#[derive(Debug, Clone)]
pub struct SynthReport {
    pub max_k: usize,
    pub replicates: Vec<Replicate>,
}

pub fn run(cfg: &SynthConfig) -> Result<SynthReport, Failure> {
    let seeds: Vec<u64> = (0..cfg.replicates).map(|k| cfg.data.seed + k).collect();
    let replicates = seeds
        .par_iter()
        .map(|&seed| {
            replicate(
                cfg,
                &SyntheticSpec {
                    seed,
                    ..cfg.data.clone()
                },
            )
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    Ok(SynthReport {
        max_k: cfg.max_k,
        replicates,
    })
}

fn replicate(cfg: &SynthConfig, spec: &SyntheticSpec) -> Result<Replicate, Failure> {
    let inst = generate_synthetic(spec)?;
    let truth = &inst.true_scores;
    let relevance = graded_relevance(truth, cfg.relevance_levels);
    let (r, x) = (&inst.group.r, &inst.group.x);
    let max_k = cfg.max_k.min(spec.n);

    let score = |method: &str, scores: &[f64], iterations| -> Result<MethodScore, Failure> {
        Ok(MethodScore {
            method: method.to_string(),
            kendall_tau: kendall_tau(scores, truth)?,
            spearman_rho: spearman_rho(scores, truth)?,
            ndcg: (1..=max_k)
                .map(|k| ndcg_at_k(scores, &relevance, k))
                .collect::<Result<_, _>>()?,
            iterations,
        })
    };

    let res = mr_rank_agg(r, x, &cfg.aggregation)
        .map_err(|e| Failure::Runtime(format!("seed {}: {e}", spec.seed)))?;
    let mut trace = Vec::with_capacity(res.records.len() + 1);
    let init = res.initial_order.to_scores();
    trace.push(TraceRow {
        iteration: 0,
        kendall_tau: kendall_tau(&init, truth)?,
        spearman_rho: spearman_rho(&init, truth)?,
        feature_kendall_tau: f64::NAN,
        feature_spearman_rho: f64::NAN,
        coupled_cost: f64::NAN,
        margin_applied: false,
    });
    for rec in &res.records {
        let c = rec.consensus.to_scores();
        let f = rec.feature_order.to_scores();
        trace.push(TraceRow {
            iteration: rec.iteration,
            kendall_tau: kendall_tau(&c, truth)?,
            spearman_rho: spearman_rho(&c, truth)?,
            feature_kendall_tau: kendall_tau(&f, truth)?,
            feature_spearman_rho: spearman_rho(&f, truth)?,
            coupled_cost: rec.coupled_cost,
            margin_applied: rec.margin_applied(),
        });
    }

    let mut methods = vec![score("mr", &res.consensus_scores(), Some(res.iterations))?];
    for m in BaselineMethod::ALL {
        methods.push(score(m.name(), &m.scores(r)?, None)?);
    }
    Ok(Replicate {
        seed: spec.seed,
        trace,
        methods,
    })
}

pub fn write(report: &SynthReport, dir: &Path) -> Result<(), Failure> {
    let header: Vec<String> = [
        "seed",
        "iteration",
        "kendall_tau",
        "spearman_rho",
        "feature_kendall_tau",
        "feature_spearman_rho",
        "coupled_cost",
        "margin_applied",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = report
        .replicates
        .iter()
        .flat_map(|rep| {
            rep.trace.iter().map(move |t| {
                vec![
                    rep.seed.to_string(),
                    t.iteration.to_string(),
                    num(t.kendall_tau),
                    num(t.spearman_rho),
                    num(t.feature_kendall_tau),
                    num(t.feature_spearman_rho),
                    num(t.coupled_cost),
                    t.margin_applied.to_string(),
                ]
            })
        })
        .collect();
    write_csv(&dir.join("synth_trace.csv"), TRACE_SCHEMA, &header, &rows)?;

    let mut header: Vec<String> = [
        "seed",
        "method",
        "kendall_tau",
        "spearman_rho",
        "iterations",
    ]
    .map(String::from)
    .to_vec();
    header.extend(ndcg_header(report.max_k));
    let rows: Vec<Vec<String>> = report
        .replicates
        .iter()
        .flat_map(|rep| {
            rep.methods.iter().map(move |m| {
                let mut row = vec![
                    rep.seed.to_string(),
                    m.method.clone(),
                    num(m.kendall_tau),
                    num(m.spearman_rho),
                    m.iterations.map(|i| i.to_string()).unwrap_or_default(),
                ];
                row.extend(
                    (0..report.max_k).map(|k| m.ndcg.get(k).copied().map(num).unwrap_or_default()),
                );
                row
            })
        })
        .collect();
    write_csv(
        &dir.join("synth_summary.csv"),
        SUMMARY_SCHEMA,
        &header,
        &rows,
    )
}

/// Per-method means over replicates and the number of exact recoveries.
pub fn summary_table(report: &SynthReport) -> String {
    let Some(first) = report.replicates.first() else {
        return String::new();
    };
    let total = report.replicates.len();
    let k = report.max_k;
    let mut out = format!(
        "{:<10} {:>9} {:>9} {:>9} {:>9}\n",
        "method",
        "recovered",
        "tau",
        "rho",
        format!("ndcg@{k}")
    );
    for (j, m) in first.methods.iter().enumerate() {
        let col = |f: &dyn Fn(&MethodScore) -> f64| {
            report
                .replicates
                .iter()
                .map(|r| f(&r.methods[j]))
                .sum::<f64>()
                / total as f64
        };
        let recovered = report
            .replicates
            .iter()
            .filter(|r| r.methods[j].kendall_tau >= RECOVERED)
            .count();
        out += &format!(
            "{:<10} {:>9} {:>9.4} {:>9.4} {:>9.4}\n",
            m.method,
            format!("{recovered}/{total}"),
            col(&|s| s.kendall_tau),
            col(&|s| s.spearman_rho),
            col(&|s| s.ndcg.last().copied().unwrap_or(f64::NAN)),
        );
    }
    out
}
