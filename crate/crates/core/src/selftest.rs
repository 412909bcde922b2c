//! Randomized checks of the solvers against brute-force references.
//!
//! The references here deliberately avoid the shortcuts the solvers use:
//! isotonic fits enumerate every linear extension and every contiguous
//! partition, GI block values come from a golden-section search, gradients
//! from central differences, and metrics from their textbook definitions.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bregman::{DivergenceSpec, Family};
use crate::glm::{GlmObjective, Regularization};
use crate::isotonic::{pav_fit_with_rule, PoolRule};
use crate::metrics::{kendall_tau, ndcg_at_k, spearman_rho};
use crate::ordering::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestOptions {
    pub seed: u64,
    pub pav_cases: usize,
    pub gradient_cases: usize,
    pub metric_cases: usize,
    #[doc(hidden)]
    pub pool_rule: PoolRule,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            seed: 0,
            pav_cases: 500,
            gradient_cases: 50,
            metric_cases: 200,
            pool_rule: PoolRule::DualMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest discrepancy seen, in the check's own units.
    pub max_error: f64,
    pub tolerance: f64,
    /// First failing case, if any.
    pub detail: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

struct Tally {
    r: CheckResult,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tally {
            r: CheckResult {
                name,
                cases: 0,
                failures: 0,
                max_error: 0.0,
                tolerance,
                detail: None,
            },
        }
    }

    fn record(&mut self, err: f64, describe: impl FnOnce() -> String) {
        self.r.cases += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        self.r.max_error = self.r.max_error.max(err);
        if err > self.r.tolerance {
            self.r.failures += 1;
            if self.r.detail.is_none() {
                self.r.detail = Some(describe());
            }
        }
    }

    fn fail(&mut self, describe: String) {
        self.record(f64::INFINITY, || describe);
    }
}

pub fn run(opts: &SelftestOptions) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let checks = vec![
        check_pav_l2(&mut rng, opts),
        check_pav_gi(&mut rng, opts),
        check_gradients(&mut rng, opts),
        check_kendall(&mut rng, opts),
        check_spearman(&mut rng, opts),
        check_ndcg(&mut rng, opts),
    ];
    SelftestReport { checks }
}

/// Random weak ordering of `n` items: a shuffled sequence cut at random
/// positions.
pub fn random_weak_order(rng: &mut impl Rng, n: usize) -> Ordering {
    let mut seq: Vec<usize> = (0..n).collect();
    seq.shuffle(rng);
    let mut blocks = vec![vec![]];
    for (k, i) in seq.into_iter().enumerate() {
        if k > 0 && rng.random_bool(0.6) {
            blocks.push(vec![]);
        }
        blocks.last_mut().unwrap().push(i);
    }
    Ordering::new(blocks, n).expect("valid partition")
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (k, &first) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

/// Every total order consistent with `order`.
pub fn linear_extensions(order: &Ordering) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for block in order.blocks() {
        let perms = permutations(block);
        out = out
            .into_iter()
            .flat_map(|prefix| {
                perms.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.extend(p);
                    v
                })
            })
            .collect();
    }
    out
}

/// Exhaustive order-constrained fit. `block_value` returns the best common
/// value for a set of items and its cost. Exponential; meant for `n <= 7`.
pub fn brute_force_isotonic(
    order: &Ordering,
    block_value: impl Fn(&[usize]) -> (f64, f64),
) -> (Vec<f64>, f64) {
    let n = order.len();
    let mut best = (vec![f64::NAN; n], f64::INFINITY);
    for chain in linear_extensions(order) {
        // bit k set: cut between chain[k] and chain[k + 1]
        for mask in 0u32..(1 << n.saturating_sub(1)) {
            let mut values = vec![0.0; n];
            let mut cost = 0.0;
            let mut prev = f64::NEG_INFINITY;
            let mut start = 0;
            let mut feasible = true;
            for end in 1..=n {
                if end == n || mask & (1 << (end - 1)) != 0 {
                    let (v, c) = block_value(&chain[start..end]);
                    if v < prev - 1e-12 {
                        feasible = false;
                        break;
                    }
                    prev = v;
                    cost += c;
                    for &i in &chain[start..end] {
                        values[i] = v;
                    }
                    start = end;
                }
            }
            if feasible && cost < best.1 {
                best = (values, cost);
            }
        }
    }
    best
}

/// Squared-Euclidean reference: a block's best value is its plain average.
pub fn brute_force_isotonic_l2(theta: &[f64], order: &Ordering) -> (Vec<f64>, f64) {
    brute_force_isotonic(order, |items| {
        let v = items.iter().map(|&i| theta[i]).sum::<f64>() / items.len() as f64;
        let c = items.iter().map(|&i| 0.5 * (v - theta[i]).powi(2)).sum();
        (v, c)
    })
}

/// Minimizer of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol * (1.0 + lo.abs().max(hi.abs())) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

/// Generalized-I reference: a block's value minimizes
/// `sum_i z log(z / mu_i) - z + mu_i` by golden-section search.
pub fn brute_force_isotonic_gi(theta: &[f64], order: &Ordering) -> (Vec<f64>, f64) {
    let mu: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    brute_force_isotonic(order, |items| {
        let cost = |z: f64| -> f64 {
            items
                .iter()
                .map(|&i| z * (z / mu[i]).ln() - z + mu[i])
                .sum()
        };
        let lo = items.iter().map(|&i| mu[i]).fold(f64::INFINITY, f64::min);
        let hi = items.iter().map(|&i| mu[i]).fold(0.0, f64::max);
        let z = golden_section(cost, lo, hi, 1e-13);
        (z, cost(z))
    })
}

fn check_pav_l2(rng: &mut ChaCha8Rng, opts: &SelftestOptions) -> CheckResult {
    let spec = DivergenceSpec::squared_euclidean();
    let mut t = Tally::new("pav_l2_brute_force", 1e-6);
    for _ in 0..opts.pav_cases {
        let n = rng.random_range(1..=6);
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let order = random_weak_order(rng, n);
        match pav_fit_with_rule(&spec, &theta, &order, opts.pool_rule) {
            Ok(sol) => {
                let (_, best) = brute_force_isotonic_l2(&theta, &order);
                let feasible = order.admits(&sol.fitted);
                let err = if feasible {
                    (sol.objective - best).abs()
                } else {
                    f64::INFINITY
                };
                t.record(err, || {
                    format!("theta={theta:?} order={:?}", order.blocks())
                });
            }
            Err(e) => t.fail(format!("theta={theta:?}: {e}")),
        }
    }
    t.r
}

fn check_pav_gi(rng: &mut ChaCha8Rng, opts: &SelftestOptions) -> CheckResult {
    let spec = DivergenceSpec::generalized_i();
    let mut t = Tally::new("pav_gi_brute_force", 1e-7);
    for _ in 0..opts.pav_cases / 5 {
        let n = rng.random_range(2..=5);
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let order = random_weak_order(rng, n);
        match pav_fit_with_rule(&spec, &theta, &order, opts.pool_rule) {
            Ok(sol) => {
                let (_, best) = brute_force_isotonic_gi(&theta, &order);
                let feasible = order.admits(&sol.fitted);
                let err = if feasible {
                    (sol.objective - best).abs() / best.max(1.0)
                } else {
                    f64::INFINITY
                };
                t.record(err, || {
                    format!("theta={theta:?} order={:?}", order.blocks())
                });
            }
            Err(e) => t.fail(format!("theta={theta:?}: {e}")),
        }
    }
    t.r
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences.
pub fn gradient_discrepancy(obj: &GlmObjective<'_>, w: &[f64]) -> f64 {
    let g = match obj.gradient(w) {
        Ok(g) => g,
        Err(_) => return f64::INFINITY,
    };
    let mut worst: f64 = 0.0;
    for j in 0..w.len() {
        let h = 1e-6 * (1.0 + w[j].abs());
        let mut wp = w.to_vec();
        let mut wm = w.to_vec();
        wp[j] += h;
        wm[j] -= h;
        let (fp, fm) = match (obj.value(&wp), obj.value(&wm)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return f64::INFINITY,
        };
        let fd = (fp - fm) / (2.0 * h);
        let scale = g[j].abs().max(fd.abs()).max(1e-3);
        worst = worst.max((g[j] - fd).abs() / scale);
    }
    worst
}

fn check_gradients(rng: &mut ChaCha8Rng, opts: &SelftestOptions) -> CheckResult {
    let mut t = Tally::new("glm_gradient_finite_difference", 1e-5);
    for case in 0..opts.gradient_cases {
        let family = [Family::SquaredEuclidean, Family::GeneralizedI, Family::Kl][case % 3];
        let spec = DivergenceSpec::of(family);
        let n = rng.random_range(3..=8);
        let d = rng.random_range(1..=3);
        let design = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let mut target: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        if family == Family::Kl {
            let s: f64 = target.iter().sum();
            target.iter_mut().for_each(|v| *v /= s);
        }
        let reg = if case % 2 == 0 {
            Regularization::Ridge(0.3)
        } else {
            Regularization::None
        };
        let obj = match GlmObjective::new(spec, &design, &target, reg, true) {
            Ok(o) => o,
            Err(e) => {
                t.fail(format!("{family:?}: {e}"));
                continue;
            }
        };
        let w: Vec<f64> = (0..obj.dim())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let err = gradient_discrepancy(&obj, &w);
        t.record(err, || format!("{family:?} n={n} d={d} w={w:?}"));
    }
    t.r
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // few distinct values so ties are common
    (0..n).map(|_| rng.random_range(0..4) as f64).collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Tau-b from the sign-product definition.
pub fn brute_kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut num, mut na, mut nb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i < j {
                let sa = sign(a[i] - a[j]);
                let sb = sign(b[i] - b[j]);
                num += sa * sb;
                na += sa * sa;
                nb += sb * sb;
            }
        }
    }
    num / (na * nb).sqrt()
}

/// Spearman's rho with ranks counted directly: `1 + #less + (#equal - 1) / 2`.
pub fn brute_spearman_rho(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                1.0 + less + (equal - 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// NDCG@k with the ideal DCG taken as the best over all permutations.
/// Predicted ties are broken by lower index first.
pub fn brute_ndcg(pred: &[f64], rel: &[i32], k: usize) -> f64 {
    let n = pred.len();
    let dcg = |seq: &[usize]| -> f64 {
        seq.iter()
            .take(k)
            .enumerate()
            .map(|(pos, &i)| (2f64.powi(rel[i]) - 1.0) / (pos as f64 + 2.0).log2())
            .sum()
    };
    let idx: Vec<usize> = (0..n).collect();
    let ideal = permutations(&idx)
        .iter()
        .map(|p| dcg(p))
        .fold(0.0, f64::max);
    if ideal == 0.0 {
        return 0.0;
    }
    // selection sort: repeatedly take the highest score, lowest index
    let mut remaining = idx;
    let mut ranked = Vec::with_capacity(n);
    while !remaining.is_empty() {
        let mut best = 0;
        for (pos, &i) in remaining.iter().enumerate() {
            if pred[i] > pred[remaining[best]] {
                best = pos;
            }
        }
        ranked.push(remaining.remove(best));
    }
    dcg(&ranked) / ideal
}

fn check_kendall(rng: &mut ChaCha8Rng, opts: &SelftestOptions) -> CheckResult {
    let mut t = Tally::new("kendall_tau_brute_force", 1e-12);
    let mut done = 0;
    while done < opts.metric_cases {
        let n = rng.random_range(2..=7);
        let (a, b) = (random_scores(rng, n), random_scores(rng, n));
        let oracle = brute_kendall_tau(&a, &b);
        if !oracle.is_finite() {
            continue;
        }
        done += 1;
        let err = kendall_tau(&a, &b).map_or(f64::INFINITY, |v| (v - oracle).abs());
        t.record(err, || format!("a={a:?} b={b:?}"));
    }
    t.r
}

fn check_spearman(rng: &mut ChaCha8Rng, opts: &SelftestOptions) -> CheckResult {
    let mut t = Tally::new("spearman_rho_brute_force", 1e-12);
    let mut done = 0;
    while done < opts.metric_cases {
        let n = rng.random_range(2..=7);
        let (a, b) = (random_scores(rng, n), random_scores(rng, n));
        let oracle = brute_spearman_rho(&a, &b);
        if !oracle.is_finite() {
            continue;
        }
        done += 1;
        let err = spearman_rho(&a, &b).map_or(f64::INFINITY, |v| (v - oracle).abs());
        t.record(err, || format!("a={a:?} b={b:?}"));
    }
    t.r
}

fn check_ndcg(rng: &mut ChaCha8Rng, opts: &SelftestOptions) -> CheckResult {
    let mut t = Tally::new("ndcg_brute_force", 1e-12);
    for _ in 0..opts.metric_cases {
        let n = rng.random_range(1..=7);
        let pred = random_scores(rng, n);
        let rel: Vec<i32> = (0..n).map(|_| rng.random_range(0..=3)).collect();
        let k = rng.random_range(1..=n);
        let oracle = brute_ndcg(&pred, &rel, k);
        let err = ndcg_at_k(&pred, &rel, k).map_or(f64::INFINITY, |v| (v - oracle).abs());
        t.record(err, || format!("pred={pred:?} rel={rel:?} k={k}"));
    }
    t.r
}
