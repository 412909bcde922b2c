//! Rank aggregation with item features.
//!
//! Two monotone-retargeting problems share one ordering. The feature step
//! fits `z ≈ mean_z(X ω)` under the ordering of the current consensus `r`;
//! the aggregation step fits `r ≈ mean_r(R β)` under the ordering of the new
//! `z`. The orderings passed between the steps are the tie-block structures
//! produced by PAV, never re-totalized, so ties pooled in one step can be
//! reordered in the next.

use nalgebra::DMatrix;

use crate::baselines::BaselineMethod;
use crate::bregman::{DivergenceSpec, Domain, Family};
use crate::error::{Error, Result, ResultExt};
use crate::glm::Regularization;
use crate::metrics::kendall_tau;
use crate::ordering::Ordering;
use crate::retarget::{extract_total_order, mr_from, MrOptions, MrResult, MrStart};

/// Rank lists with an entry below this are shifted before taking logs.
pub const POSITIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationConfig {
    /// Divergence of the aggregation step, over the rank lists.
    pub phi_r: DivergenceSpec,
    /// Divergence of the feature step.
    pub phi_z: DivergenceSpec,
    /// Weight of the feature-step divergence in the coupled cost.
    pub lambda: f64,
    pub epsilon_margin: f64,
    pub init_method: BaselineMethod,
    pub reg_beta: Regularization,
    pub reg_omega: Regularization,
    /// Relative change of each side's divergence below which the loop stops.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Stop once this many consecutive consensus orders are identical.
    pub stable_orders: usize,
    /// How each inner problem is started.
    pub inner_start: InnerStart,
    /// Starting ordering; overrides `init_method` when set.
    pub initial_order: Option<Ordering>,
    /// Settings shared by both inner problems. `reg` and `epsilon` are
    /// replaced by the per-side values above.
    pub inner: MrOptions,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            phi_r: DivergenceSpec::squared_euclidean(),
            phi_z: DivergenceSpec::squared_euclidean(),
            lambda: 1.0,
            epsilon_margin: 1e-3,
            init_method: BaselineMethod::Borda,
            reg_beta: Regularization::None,
            reg_omega: Regularization::None,
            outer_tol: 1e-7,
            outer_max_iter: 50,
            stable_orders: 3,
            inner_start: InnerStart::Scores,
            initial_order: None,
            inner: MrOptions {
                max_iter: 3,
                ..MrOptions::default()
            },
        }
    }
}

impl AggregationConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.epsilon_margin > 0.0) {
            return Err(Error::Config(format!(
                "epsilon_margin must be positive, got {}",
                self.epsilon_margin
            )));
        }
        if self.outer_max_iter == 0 {
            return Err(Error::Config("outer_max_iter must be at least 1".into()));
        }
        self.reg_beta.validate()?;
        self.reg_omega.validate()?;
        Ok(())
    }

    fn side_options(&self, reg: &Regularization) -> MrOptions {
        MrOptions {
            reg: *reg,
            epsilon: self.epsilon_margin,
            ..self.inner.clone()
        }
    }
}

/// Starting point of the inner retargeting runs after the first outer
/// iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InnerStart {
    /// GLM fitted to the block ranks of the constraint.
    Ranks,
    /// GLM fitted to the other side's current scores.
    Scores,
    /// The side's own coefficients from the previous outer iteration.
    Coefficients,
}

/// Summary of one inner retargeting run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Tie-blocks of the retargeted scores.
    pub induced_order: Ordering,
    /// Unregularized divergence at the returned iterate.
    pub cost: f64,
    pub cost_trace: Vec<f64>,
    pub margin_iterations: Vec<usize>,
    pub inner_iterations: usize,
    pub converged: bool,
}

impl StepRecord {
    fn from_mr(res: &MrResult) -> Self {
        StepRecord {
            induced_order: res.induced_order.clone(),
            cost: res.cost(),
            cost_trace: res.cost_trace.clone(),
            margin_iterations: res.margin_iterations.clone(),
            inner_iterations: res.iterations,
            converged: res.converged,
        }
    }

    pub fn margin_applied(&self) -> bool {
        !self.margin_iterations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    /// 1-based outer iteration.
    pub iteration: usize,
    pub z_step: StepRecord,
    pub r_step: StepRecord,
    /// `D_r + lambda · D_z` after the iteration.
    pub coupled_cost: f64,
    /// Total order extracted from the aggregation step.
    pub consensus: Ordering,
    /// Total order extracted from the feature step.
    pub feature_order: Ordering,
}

impl OuterRecord {
    pub fn margin_applied(&self) -> bool {
        self.z_step.margin_applied() || self.r_step.margin_applied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    pub r_bar: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_intercept: f64,
    pub z_bar: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_intercept: f64,
    /// Total order, lowest item first.
    pub consensus_order: Ordering,
    pub coupled_cost_trace: Vec<f64>,
    /// Ordering the loop started from.
    pub initial_order: Ordering,
    pub records: Vec<OuterRecord>,
    /// The rank lists after preprocessing, as used for the fit.
    pub r_processed: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostic: Option<String>,
}

impl AggregationResult {
    /// Position of each item in the consensus, 0 for the lowest.
    pub fn consensus_scores(&self) -> Vec<f64> {
        self.consensus_order.to_scores()
    }

    /// Partial orderings in the order they were produced: the feature step,
    /// then the aggregation step, for every outer iteration.
    pub fn per_step_orders(&self) -> Vec<&Ordering> {
        self.records
            .iter()
            .flat_map(|r| [&r.z_step.induced_order, &r.r_step.induced_order])
            .collect()
    }
}

/// Coefficients of the rank lists in the aggregation model.
pub fn expert_weights(result: &AggregationResult) -> &[f64] {
    &result.beta
}

/// `(iteration, consensus, tau to the previous consensus)` per outer
/// iteration. The first entry is compared with the initial ordering. A tau
/// that is undefined (a constant ordering) is reported as NaN.
pub fn permutation_trace(result: &AggregationResult) -> Vec<(usize, Ordering, f64)> {
    let mut prev = result.initial_order.to_scores();
    result
        .records
        .iter()
        .map(|rec| {
            let cur = rec.consensus.to_scores();
            let tau = kendall_tau(&prev, &cur).unwrap_or(f64::NAN);
            prev = cur;
            (rec.iteration, rec.consensus.clone(), tau)
        })
        .collect()
}

/// Rank lists in the form the aggregation step fits: z-scored columns for the
/// squared Euclidean family, log scores otherwise, so that the fitted mean is
/// a weighted geometric mean of the lists. Columns that are not strictly
/// positive are first shifted to a minimum of 1.
pub fn preprocess_rank_lists(r: &DMatrix<f64>, spec: &DivergenceSpec) -> Result<DMatrix<f64>> {
    let (n, p) = r.shape();
    let mut out = r.clone();
    for k in 0..p {
        let col: Vec<f64> = r.column(k).iter().copied().collect();
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "rank list",
                row: i,
                col: k,
            });
        }
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::Degenerate(format!("rank list {k} is constant")));
        }
        match (spec.family(), spec.domain()) {
            (Family::SquaredEuclidean, Domain::Reals) => {
                let mean = col.iter().sum::<f64>() / n as f64;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
                for i in 0..n {
                    out[(i, k)] = (col[i] - mean) / sd;
                }
            }
            _ => {
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                let shift = if min < POSITIVE_FLOOR {
                    log::debug!(
                        "rank list {k} shifted by {:e} into the positive orthant",
                        1.0 - min
                    );
                    1.0 - min
                } else {
                    0.0
                };
                for i in 0..n {
                    out[(i, k)] = (col[i] + shift).ln();
                }
            }
        }
    }
    Ok(out)
}

/// The feature step followed by the aggregation step.
#[allow(clippy::too_many_arguments)]
fn outer_step(
    cfg: &AggregationConfig,
    x: &DMatrix<f64>,
    rp: &DMatrix<f64>,
    r_order: &Ordering,
    r_scores: &[f64],
    z_opts: &MrOptions,
    r_opts: &MrOptions,
    how: InnerStart,
    z_warm: &Option<Vec<f64>>,
    r_warm: &Option<Vec<f64>>,
) -> Result<(MrResult, MrResult)> {
    let z_res = mr_from(&cfg.phi_z, x, r_order, z_opts, how.start(z_warm, r_scores))
        .context(|| "feature step".to_string())?;
    let r_res = mr_from(
        &cfg.phi_r,
        rp,
        &z_res.induced_order,
        r_opts,
        how.start(r_warm, &z_res.retarget),
    )
    .context(|| "aggregation step".to_string())?;
    Ok((z_res, r_res))
}

impl InnerStart {
    fn start<'a>(self, own: &'a Option<Vec<f64>>, other: &'a [f64]) -> MrStart<'a> {
        match (self, own) {
            (_, None) => MrStart::Scores(other),
            (InnerStart::Coefficients, Some(w)) => MrStart::Coefficients(w),
            (InnerStart::Ranks, _) => MrStart::Ranks,
            (InnerStart::Scores, _) => MrStart::Scores(other),
        }
    }
}

fn rel_change(prev: f64, cur: f64) -> f64 {
    let scale = prev.abs().max(cur.abs());
    if scale == 0.0 {
        0.0
    } else {
        (prev - cur).abs() / scale
    }
}

/// Runs the alternating aggregation on rank lists `r` (`n × p`) and item
/// features `x` (`n × d`).
pub fn mr_rank_agg(
    r: &DMatrix<f64>,
    x: &DMatrix<f64>,
    cfg: &AggregationConfig,
) -> Result<AggregationResult> {
    cfg.validate()?;
    let n = r.nrows();
    if x.nrows() != n {
        return Err(Error::Dimension(format!(
            "rank lists cover {n} items, features cover {}",
            x.nrows()
        )));
    }
    if r.ncols() == 0 {
        return Err(Error::Dimension("no rank lists".into()));
    }
    for i in 0..n {
        for j in 0..x.ncols() {
            if !x[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    what: "feature matrix",
                    row: i,
                    col: j,
                });
            }
        }
    }
    if n <= 1 {
        return Ok(degenerate_result(r, x, n));
    }
    let rp = preprocess_rank_lists(r, &cfg.phi_r).context(|| "rank-list preprocessing".into())?;

    let initial_order = match &cfg.initial_order {
        Some(o) if o.len() != n => {
            return Err(Error::Dimension(format!(
                "initial ordering covers {} items, expected {n}",
                o.len()
            )))
        }
        Some(o) => o.clone(),
        None => Ordering::from_scores(
            &cfg.init_method
                .scores(r)
                .context(|| format!("{} initialization", cfg.init_method))?,
        ),
    };

    let z_opts = cfg.side_options(&cfg.reg_omega);
    let r_opts = cfg.side_options(&cfg.reg_beta);

    let mut r_order = initial_order.clone();
    let mut r_scores = initial_order.to_scores();
    let mut z_warm: Option<Vec<f64>> = None;
    let mut r_warm: Option<Vec<f64>> = None;
    let mut records: Vec<OuterRecord> = Vec::new();
    let mut coupled_cost_trace = Vec::new();
    let mut last: Option<(MrResult, MrResult)> = None;
    let mut converged = false;
    let mut stable_run = 0usize;

    for iteration in 1..=cfg.outer_max_iter {
        let previous = last.as_ref().map(|(z, r)| r.cost() + cfg.lambda * z.cost());
        let mut pair = outer_step(
            cfg,
            x,
            &rp,
            &r_order,
            &r_scores,
            &z_opts,
            &r_opts,
            cfg.inner_start,
            &z_warm,
            &r_warm,
        )
        .context(|| format!("outer iteration {iteration}"))?;
        if let Some(prev) = previous {
            let cost = pair.1.cost() + cfg.lambda * pair.0.cost();
            if cost > prev && cfg.inner_start != InnerStart::Coefficients {
                log::debug!("outer iteration {iteration}: restart raised the cost to {cost:.6e} from {prev:.6e}; using the warm start");
                pair = outer_step(
                    cfg,
                    x,
                    &rp,
                    &r_order,
                    &r_scores,
                    &z_opts,
                    &r_opts,
                    InnerStart::Coefficients,
                    &z_warm,
                    &r_warm,
                )
                .context(|| format!("outer iteration {iteration}"))?;
            }
        }
        let (z_res, r_res) = pair;
        let z_order = &z_res.induced_order;

        let cov = r_res
            .covariate_scores(&cfg.phi_r, &rp)
            .context(|| format!("consensus scores, outer iteration {iteration}"))?;
        let consensus = extract_total_order(&r_res, &cov);
        let z_cov = z_res
            .covariate_scores(&cfg.phi_z, x)
            .context(|| format!("feature scores, outer iteration {iteration}"))?;
        let feature_order = extract_total_order(&z_res, &z_cov);
        let coupled = r_res.cost() + cfg.lambda * z_res.cost();

        let record = OuterRecord {
            iteration,
            z_step: StepRecord::from_mr(&z_res),
            r_step: StepRecord::from_mr(&r_res),
            coupled_cost: coupled,
            consensus,
            feature_order,
        };
        if record.margin_applied() {
            log::info!("outer iteration {iteration}: range margin applied");
        }
        log::debug!(
            "outer iteration {iteration}: D_z = {:.6e}, D_r = {:.6e}, blocks z/r = {}/{}",
            z_res.cost(),
            r_res.cost(),
            z_order.num_blocks(),
            r_res.induced_order.num_blocks()
        );

        let side_converged = last.as_ref().is_some_and(|(pz, pr)| {
            rel_change(pz.cost(), z_res.cost()) <= cfg.outer_tol
                && rel_change(pr.cost(), r_res.cost()) <= cfg.outer_tol
        });
        if records
            .last()
            .is_some_and(|prev| prev.consensus == record.consensus)
        {
            stable_run += 1;
        } else {
            stable_run = 1;
        }

        coupled_cost_trace.push(coupled);
        records.push(record);
        r_order = r_res.induced_order.clone();
        r_scores = r_res.retarget.clone();
        z_warm = Some(z_res.fit.packed(z_opts.glm.intercept));
        r_warm = Some(r_res.fit.packed(r_opts.glm.intercept));
        last = Some((z_res, r_res));

        if side_converged {
            converged = true;
            break;
        }
        if cfg.stable_orders > 0 && stable_run >= cfg.stable_orders {
            log::debug!("consensus unchanged for {stable_run} iterations");
            converged = true;
            break;
        }
    }

    let (z_res, r_res) = last.expect("outer_max_iter >= 1 is validated");
    let consensus_order = records
        .last()
        .expect("at least one record")
        .consensus
        .clone();
    let mut diagnostic = None;
    if r_res.induced_order.num_blocks() < 2 {
        converged = false;
        diagnostic = Some(
            "aggregation step pooled every item into one block; the consensus order is \
             decided entirely by the tie-break"
                .to_string(),
        );
    }
    Ok(AggregationResult {
        r_bar: r_res.retarget.clone(),
        beta: r_res.fit.weights.clone(),
        beta_intercept: r_res.fit.intercept,
        z_bar: z_res.retarget.clone(),
        omega: z_res.fit.weights.clone(),
        omega_intercept: z_res.fit.intercept,
        consensus_order,
        coupled_cost_trace,
        initial_order,
        iterations: records.len(),
        records,
        r_processed: rp,
        converged,
        diagnostic,
    })
}

fn degenerate_result(r: &DMatrix<f64>, x: &DMatrix<f64>, n: usize) -> AggregationResult {
    let order = Ordering::identity(n);
    AggregationResult {
        r_bar: vec![0.0; n],
        beta: vec![0.0; r.ncols()],
        beta_intercept: 0.0,
        z_bar: vec![0.0; n],
        omega: vec![0.0; x.ncols()],
        omega_intercept: 0.0,
        consensus_order: order.clone(),
        coupled_cost_trace: vec![],
        initial_order: order,
        records: vec![],
        r_processed: r.clone(),
        iterations: 0,
        converged: false,
        diagnostic: Some(format!("{n} item(s): nothing to aggregate")),
    }
}
