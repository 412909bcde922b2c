//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rankagg::aggregate::OuterRecord;
use rankagg::baselines::BaselineMethod;
use rankagg::bregman::mean_map;
use rankagg::data::{generate_synthetic, graded_relevance, SyntheticSpec};
use rankagg::metrics::{kendall_tau, ndcg_at_k, spearman_rho};
use rankagg::selftest::{self, SelftestOptions, SelftestReport};
use rankagg::{
    fit_glm, mr_rank_agg, AggregationConfig, DivergenceSpec, GlmOptions, Regularization,
};
use rayon::prelude::*;

const SEEDS: u64 = 10;
const REQUIRED: usize = 8;
const EXACT: f64 = 1.0 - 1e-9;
const MAX_OUTER: usize = 25;
const MAX_K: usize = 10;

struct Run {
    seed: u64,
    tau: f64,
    rho: f64,
    iterations: usize,
    first_exact: Option<usize>,
    seconds: f64,
    mr_ndcg: Vec<f64>,
    baseline_taus: Vec<(BaselineMethod, f64)>,
    baseline_ndcg: Vec<(BaselineMethod, Vec<f64>)>,
    descent_violations: Vec<String>,
}

impl Run {
    fn recovered(&self) -> bool {
        self.tau >= EXACT
            && self.rho >= EXACT
            && self.iterations <= MAX_OUTER
            && self.seconds < 60.0
    }
}

/// Matches the bundled gauss-recovery and poisson-recovery configs.
fn run(family: DivergenceSpec, seed: u64) -> Run {
    let inst = generate_synthetic(&SyntheticSpec {
        family,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let (r, x, truth) = (&inst.group.r, &inst.group.x, &inst.true_scores);
    let cfg = AggregationConfig {
        phi_r: family,
        phi_z: family,
        outer_max_iter: MAX_OUTER,
        ..AggregationConfig::default()
    };
    let start = Instant::now();
    let res = mr_rank_agg(r, x, &cfg).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let scores = res.consensus_scores();
    let relevance = graded_relevance(truth, MAX_K);
    let ndcg = |s: &[f64]| -> Vec<f64> {
        (1..=MAX_K)
            .map(|k| ndcg_at_k(s, &relevance, k).unwrap())
            .collect()
    };
    let first_exact = res
        .records
        .iter()
        .find(|rec| kendall_tau(&rec.consensus.to_scores(), truth).unwrap() >= EXACT)
        .map(|rec| rec.iteration);
    let mut baseline_taus = Vec::new();
    let mut baseline_ndcg = Vec::new();
    for m in BaselineMethod::ALL {
        let s = m.scores(r).unwrap();
        baseline_taus.push((m, kendall_tau(&s, truth).unwrap()));
        baseline_ndcg.push((m, ndcg(&s)));
    }
    Run {
        seed,
        tau: kendall_tau(&scores, truth).unwrap(),
        rho: spearman_rho(&scores, truth).unwrap(),
        iterations: res.iterations,
        first_exact,
        seconds,
        mr_ndcg: ndcg(&scores),
        baseline_taus,
        baseline_ndcg,
        descent_violations: descent_violations(&res.records),
    }
}

fn descent_violations(records: &[OuterRecord]) -> Vec<String> {
    let mut out = Vec::new();
    for w in records.windows(2) {
        if !w[1].margin_applied() && w[1].coupled_cost > w[0].coupled_cost + 1e-9 {
            out.push(format!(
                "coupled cost at outer {}: {:e} -> {:e}",
                w[1].iteration, w[0].coupled_cost, w[1].coupled_cost
            ));
        }
    }
    for rec in records {
        for (side, step) in [("feature", &rec.z_step), ("aggregation", &rec.r_step)] {
            for (i, c) in step.cost_trace.windows(2).enumerate() {
                if !step.margin_iterations.contains(&(i + 1)) && c[1] > c[0] + 1e-9 {
                    out.push(format!(
                        "{side} step of outer {}, inner {}: {:e} -> {:e}",
                        rec.iteration,
                        i + 1,
                        c[0],
                        c[1]
                    ));
                }
            }
        }
    }
    out
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: usize, pass: bool, what: &str, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!(
            "{} criterion {n:>2}: {what}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn recovery_line(report: &mut Report, n: usize, name: &str, runs: &[Run]) {
    let ok: Vec<&Run> = runs.iter().filter(|r| r.recovered()).collect();
    let missed: Vec<u64> = runs
        .iter()
        .filter(|r| !r.recovered())
        .map(|r| r.seed)
        .collect();
    let slowest = runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let latest = ok.iter().filter_map(|r| r.first_exact).max().unwrap_or(0);
    report.line(
        n,
        ok.len() >= REQUIRED,
        &format!("{name} exact recovery"),
        format!(
            "{}/{} seeds with tau and rho >= 1 - 1e-9 within {MAX_OUTER} outer iterations \
             (first exact by iteration {latest}, slowest run {slowest:.2}s, missed seeds {missed:?})",
            ok.len(),
            runs.len()
        ),
    );
}

fn rankagg(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_rankagg"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success() || args[0] == "selftest",
        "rankagg {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini.letor")
}

/// Mean NDCG@k per method from an aggregate run.
fn aggregate_ndcg(dir: &Path, augment: bool, k: usize) -> Vec<(String, f64)> {
    let fixture = fixture();
    let mut args = vec![
        "aggregate",
        fixture.to_str().unwrap(),
        "--methods",
        "mr,combmnz",
        "--output",
        dir.to_str().unwrap(),
    ];
    if augment {
        args.extend(["--augment", fixture.to_str().unwrap()]);
    }
    rankagg(&args);
    let text = fs::read_to_string(dir.join("aggregate_ndcg.csv")).unwrap();
    let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let col = rdr
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == format!("ndcg@{k}"))
        .unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[col].parse().unwrap())
        })
        .collect()
}

fn check<'a>(report: &'a SelftestReport, name: &str) -> &'a selftest::CheckResult {
    report.checks.iter().find(|c| c.name == name).unwrap()
}

fn glm_checks() -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let se = DivergenceSpec::squared_euclidean();
    let gi = DivergenceSpec::generalized_i();
    let mut normal_gap: f64 = 0.0;
    let mut planted_objective: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(10..80);
        let m = rng.random_range(1..6);
        let x = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let fit = fit_glm(&se, &x, &z, &Regularization::None, &GlmOptions::default()).unwrap();
        let a = x.clone().insert_column(m, 1.0);
        let w = (a.transpose() * &a)
            .lu()
            .solve(&(a.transpose() * DVector::from_column_slice(&z)))
            .unwrap();
        for j in 0..m {
            normal_gap = normal_gap.max((fit.weights[j] - w[j]).abs());
        }
        normal_gap = normal_gap.max((fit.intercept - w[m]).abs());

        let w0: Vec<f64> = (0..m)
            .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let target = mean_map(&gi, (&x * DVector::from_column_slice(&w0)).as_slice()).unwrap();
        let fit = fit_glm(
            &gi,
            &x,
            &target,
            &Regularization::None,
            &GlmOptions::default(),
        )
        .unwrap();
        planted_objective = planted_objective.max(fit.objective);
    }
    (normal_gap, planted_objective)
}

fn main() {
    let mut report = Report { failed: 0 };
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let gauss: Vec<Run> = seeds
        .par_iter()
        .map(|&s| run(DivergenceSpec::squared_euclidean(), s))
        .collect();
    let poisson: Vec<Run> = seeds
        .par_iter()
        .map(|&s| run(DivergenceSpec::generalized_i(), s))
        .collect();

    recovery_line(&mut report, 1, "Gaussian", &gauss);
    recovery_line(&mut report, 2, "Poisson", &poisson);

    let non_recovery = |runs: &[Run]| {
        runs.iter()
            .filter(|r| r.baseline_taus.iter().all(|(_, t)| *t < EXACT))
            .count()
    };
    let best = |runs: &[Run]| {
        runs.iter()
            .flat_map(|r| r.baseline_taus.iter().map(|(_, t)| *t))
            .fold(f64::MIN, f64::max)
    };
    let (g3, p3) = (non_recovery(&gauss), non_recovery(&poisson));
    report.line(
        3,
        g3 >= REQUIRED && p3 >= REQUIRED,
        "baselines miss the true order",
        format!(
            "every baseline below tau 1 - 1e-9 on {g3}/{SEEDS} Gaussian and {p3}/{SEEDS} Poisson seeds \
             (best baseline tau {:.4} / {:.4})",
            best(&gauss),
            best(&poisson)
        ),
    );

    let mut recovered = 0;
    let mut ndcg_ok = 0;
    for r in gauss.iter().chain(&poisson).filter(|r| r.recovered()) {
        recovered += 1;
        let mr_perfect = r.mr_ndcg.iter().all(|v| (v - 1.0).abs() <= 1e-12);
        let baselines_miss = r
            .baseline_ndcg
            .iter()
            .all(|(_, v)| v.iter().any(|x| *x < 1.0 - 1e-12));
        if mr_perfect && baselines_miss {
            ndcg_ok += 1;
        }
    }
    report.line(
        4,
        recovered > 0 && ndcg_ok == recovered,
        "NDCG@1..10 dominance",
        format!(
            "{ndcg_ok}/{recovered} recovered instances with MR NDCG = 1 at every K and every baseline below 1 at some K"
        ),
    );

    let dir = tempfile::tempdir().unwrap();
    let before = aggregate_ndcg(&dir.path().join("plain"), false, 5);
    let after = aggregate_ndcg(&dir.path().join("augmented"), true, 5);
    let delta = |m: &str| {
        let get = |v: &[(String, f64)]| v.iter().find(|(n, _)| n == m).unwrap().1;
        get(&after) - get(&before)
    };
    let (d_mr, d_mnz) = (delta("mr"), delta("combmnz"));
    report.line(
        5,
        d_mr > 0.0 && d_mnz.abs() < d_mr,
        "augmentation on the bundled fixture",
        format!("NDCG@5 change: MR {d_mr:+.4}, CombMNZ {d_mnz:+.4}"),
    );

    let st = selftest::run(&SelftestOptions::default());
    let pav = check(&st, "pav_l2_brute_force");
    report.line(
        6,
        pav.passed() && pav.cases >= 500 && pav.tolerance <= 1e-6,
        "PAV against brute force",
        format!(
            "{} cases, {} failures, max objective gap {:.2e} (tolerance {:.0e})",
            pav.cases, pav.failures, pav.max_error, pav.tolerance
        ),
    );

    let violations: Vec<String> = gauss
        .iter()
        .chain(&poisson)
        .flat_map(|r| {
            r.descent_violations
                .iter()
                .map(move |v| format!("seed {}: {v}", r.seed))
        })
        .collect();
    report.line(
        7,
        violations.is_empty(),
        "monotone descent",
        if violations.is_empty() {
            format!(
                "no increase above 1e-9 outside margin iterations in {} runs",
                2 * SEEDS
            )
        } else {
            format!("{} increases, first: {}", violations.len(), violations[0])
        },
    );

    let metric_checks = [
        "kendall_tau_brute_force",
        "spearman_rho_brute_force",
        "ndcg_brute_force",
    ]
    .map(|n| check(&st, n));
    report.line(
        8,
        metric_checks
            .iter()
            .all(|c| c.passed() && c.cases >= 200 && c.tolerance <= 1e-12),
        "metric oracles",
        metric_checks
            .iter()
            .map(|c| format!("{} {} cases max error {:.1e}", c.name, c.cases, c.max_error))
            .collect::<Vec<_>>()
            .join(", "),
    );

    let (normal_gap, planted) = glm_checks();
    let grad = check(&st, "glm_gradient_finite_difference");
    report.line(
        9,
        normal_gap <= 1e-8 && planted < 1e-8 && grad.passed() && grad.tolerance <= 1e-5,
        "GLM correctness",
        format!(
            "normal-equation gap {normal_gap:.1e}, planted GI objective {planted:.1e}, \
             gradient relative error {:.1e} over {} cases",
            grad.max_error, grad.cases
        ),
    );

    let fixture = fixture();
    let fixture = fixture.to_str().unwrap();
    let commands: Vec<(&str, Vec<&str>, &[&str])> = vec![
        (
            "synth gaussian",
            vec!["synth", "--config", "gauss-recovery", "--seed", "7"],
            &["synth_trace.csv", "synth_summary.csv"],
        ),
        (
            "synth poisson",
            vec!["synth", "--config", "poisson-recovery", "--seed", "7"],
            &["synth_trace.csv", "synth_summary.csv"],
        ),
        (
            "aggregate",
            vec!["aggregate", fixture, "--seed", "7"],
            &["aggregate_ndcg.csv"],
        ),
        (
            "aggregate --augment",
            vec!["aggregate", fixture, "--augment", fixture, "--seed", "7"],
            &["aggregate_ndcg.csv"],
        ),
    ];
    let mut differing = Vec::new();
    for (name, args, files) in &commands {
        let outs: Vec<PathBuf> = ["a", "b"]
            .iter()
            .map(|t| dir.path().join(format!("{name}-{t}")))
            .collect();
        for out in &outs {
            let mut a = args.clone();
            a.extend(["--output", out.to_str().unwrap()]);
            rankagg(&a);
        }
        for f in *files {
            if fs::read(outs[0].join(f)).unwrap() != fs::read(outs[1].join(f)).unwrap() {
                differing.push(format!("{name}: {f}"));
            }
        }
    }
    let json_same = rankagg(&["selftest", "--json", "--seed", "7"])
        == rankagg(&["selftest", "--json", "--seed", "7"]);
    report.line(
        10,
        differing.is_empty() && json_same,
        "determinism",
        if differing.is_empty() && json_same {
            format!(
                "{} commands and selftest --json byte-identical across two runs",
                commands.len()
            )
        } else {
            format!("differing outputs: {differing:?}, selftest json identical: {json_same}")
        },
    );

    if report.failed > 0 {
        println!("{} acceptance criteria failed", report.failed);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
