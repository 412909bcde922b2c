//! Monotone retargeting: jointly fit a GLM and a monotone transformation of a
//! target ordering.
//!
//! ```text
//! min_{z, w}  D_phi(z || mean(M w))   s.t. z consistent with the target ordering
//! ```
//!
//! solved by alternating an order-constrained projection of the current model
//! means (PAV, followed by the range margin) with a GLM refit on the projected
//! targets.

use nalgebra::DMatrix;

use crate::bregman::{self, DivergenceSpec, Domain};
use crate::error::{Error, Result, ResultExt};
use crate::glm::{fit_glm_from, GlmFit, GlmOptions, Regularization};
use crate::isotonic::{enforce_range_margin, pav_fit};
use crate::ordering::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct MrOptions {
    /// Relative change of the cost below which the loop stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Minimum range of the retargeted scores.
    pub epsilon: f64,
    pub reg: Regularization,
    pub glm: GlmOptions,
}

impl Default for MrOptions {
    fn default() -> Self {
        MrOptions {
            tol: 1e-8,
            max_iter: 100,
            epsilon: 1e-3,
            reg: Regularization::None,
            glm: GlmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrResult {
    /// Retargeted scores, consistent with the target ordering.
    pub retarget: Vec<f64>,
    /// GLM fitted to `retarget`.
    pub fit: GlmFit,
    /// Tie-blocks of `retarget`.
    pub induced_order: Ordering,
    /// Unregularized divergence after every iteration.
    pub cost_trace: Vec<f64>,
    /// Divergence plus penalty after every iteration.
    pub penalized_trace: Vec<f64>,
    /// Iterations (0-based, indexing the traces) where the range margin
    /// rescaled the projection.
    pub margin_iterations: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl MrResult {
    pub fn weights(&self) -> &[f64] {
        &self.fit.weights
    }

    pub fn cost(&self) -> f64 {
        self.cost_trace.last().copied().unwrap_or(0.0)
    }

    /// Model means `mean(M w)`, the covariate scores used to break ties.
    pub fn covariate_scores(
        &self,
        spec: &DivergenceSpec,
        design: &DMatrix<f64>,
    ) -> Result<Vec<f64>> {
        bregman::mean_map(spec, &self.fit.linear_predictor(design))
    }
}

/// Where the alternation starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MrStart<'a> {
    /// Fit the GLM to the block ranks of the target ordering.
    Ranks,
    /// Fit the GLM to these scores, shifted into the domain if needed.
    Scores(&'a [f64]),
    /// Packed GLM coefficients (weights, then intercept when enabled), as
    /// left by a previous run.
    Coefficients(&'a [f64]),
}

/// Runs monotone retargeting from the block ranks of the target ordering.
pub fn mr(
    spec: &DivergenceSpec,
    design: &DMatrix<f64>,
    target_order: &Ordering,
    opts: &MrOptions,
) -> Result<MrResult> {
    mr_from(spec, design, target_order, opts, MrStart::Ranks)
}

pub fn mr_from(
    spec: &DivergenceSpec,
    design: &DMatrix<f64>,
    target_order: &Ordering,
    opts: &MrOptions,
    start: MrStart<'_>,
) -> Result<MrResult> {
    let n = design.nrows();
    if target_order.len() != n {
        return Err(Error::Dimension(format!(
            "target ordering covers {} items, design has {n} rows",
            target_order.len()
        )));
    }
    if n == 0 {
        return Err(Error::Dimension("no items".into()));
    }
    if n == 1 {
        return Ok(single_item(spec, design, opts));
    }

    let mut packed = match start {
        MrStart::Coefficients(w) => w.to_vec(),
        MrStart::Ranks | MrStart::Scores(_) => {
            let init = match start {
                MrStart::Scores(s) if s.len() != n => {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        actual: s.len(),
                    })
                }
                MrStart::Scores(s) => scores_in_domain(spec, s),
                _ => initial_targets(spec, target_order),
            };
            fit_glm_from(spec, design, &init, &opts.reg, &opts.glm, None)
                .context(|| "initial GLM fit".to_string())?
                .packed(opts.glm.intercept)
        }
    };

    let mut cost_trace = Vec::new();
    let mut penalized_trace = Vec::new();
    let mut margin_iterations = Vec::new();
    let mut best: Option<(f64, Vec<f64>, GlmFit, Ordering)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let multi_block = target_order.num_blocks() >= 2;

    while iterations < opts.max_iter {
        let eta = linear_predictor(design, &packed, opts.glm.intercept);
        let mut sol = pav_fit(spec, &eta, target_order)
            .context(|| format!("projection at iteration {iterations}"))?;
        if multi_block {
            sol = enforce_range_margin(spec, sol, opts.epsilon)?;
        }
        if sol.margin_applied {
            margin_iterations.push(iterations);
            log::debug!("margin rescale at retargeting iteration {iterations}");
        }
        let fit = fit_glm_from(
            spec,
            design,
            &sol.fitted,
            &opts.reg,
            &opts.glm,
            Some(&packed),
        )
        .context(|| format!("GLM fit at iteration {iterations}"))?;
        let cost = fit.objective;
        packed = fit.packed(opts.glm.intercept);
        let prev = cost_trace.last().copied();
        cost_trace.push(cost);
        penalized_trace.push(fit.penalized_objective);
        iterations += 1;

        let improves = best
            .as_ref()
            .is_none_or(|(c, ..)| fit.penalized_objective <= *c);
        if improves {
            best = Some((fit.penalized_objective, sol.fitted, fit, sol.induced_order));
        }
        if let Some(prev) = prev {
            if (prev - cost).abs() <= opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if cost == 0.0 {
            converged = true;
            break;
        }
    }

    let (_, retarget, fit, induced_order) = best.expect("at least one iteration runs");
    Ok(MrResult {
        retarget,
        fit,
        induced_order,
        cost_trace,
        penalized_trace,
        margin_iterations,
        iterations,
        converged,
    })
}

/// Total order most consistent with the covariates: ties in the induced
/// ordering are broken by ascending covariate score, then by index.
pub fn extract_total_order(result: &MrResult, covariate_scores: &[f64]) -> Ordering {
    result.induced_order.refine_by(covariate_scores)
}

pub(crate) fn linear_predictor(design: &DMatrix<f64>, packed: &[f64], intercept: bool) -> Vec<f64> {
    let m = design.ncols();
    let b = if intercept { packed[m] } else { 0.0 };
    (0..design.nrows())
        .map(|i| {
            design
                .row(i)
                .iter()
                .zip(&packed[..m])
                .map(|(x, w)| x * w)
                .sum::<f64>()
                + b
        })
        .collect()
}

/// Block ranks of the ordering mapped into the domain, range one.
fn initial_targets(spec: &DivergenceSpec, order: &Ordering) -> Vec<f64> {
    let blocks = order.num_blocks().max(2) as f64 - 1.0;
    let ranks: Vec<f64> = order
        .block_of()
        .into_iter()
        .map(|b| b as f64 / blocks)
        .collect();
    match spec.domain() {
        Domain::Reals => ranks,
        Domain::PositiveOrthant => ranks.into_iter().map(|r| 1.0 + r).collect(),
        Domain::Simplex => {
            let shifted: Vec<f64> = ranks.into_iter().map(|r| 1.0 + r).collect();
            let s: f64 = shifted.iter().sum();
            shifted.into_iter().map(|v| v / s).collect()
        }
    }
}

/// Scores moved into the domain of `spec`: shifted so the smallest is one
/// when any entry is not positive, then normalized on the simplex.
fn scores_in_domain(spec: &DivergenceSpec, scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    if spec.domain() == Domain::Reals {
        return v;
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        v.iter_mut().for_each(|x| *x += 1.0 - min);
    }
    if spec.domain() == Domain::Simplex {
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

fn single_item(spec: &DivergenceSpec, design: &DMatrix<f64>, opts: &MrOptions) -> MrResult {
    let value = match spec.domain() {
        Domain::Reals => 0.0,
        _ => 1.0,
    };
    let m = design.ncols();
    let intercept = if opts.glm.intercept {
        spec.link(value)
    } else {
        0.0
    };
    MrResult {
        retarget: vec![value],
        fit: GlmFit {
            weights: vec![0.0; m],
            intercept,
            objective: 0.0,
            penalized_objective: 0.0,
            iterations: 0,
            converged: true,
            trace: vec![0.0],
        },
        induced_order: Ordering::identity(1),
        cost_trace: vec![0.0],
        penalized_trace: vec![0.0],
        margin_iterations: vec![],
        iterations: 0,
        converged: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_item_returns_immediately() {
        let x = DMatrix::from_element(1, 3, 0.5);
        let res = mr(
            &DivergenceSpec::squared_euclidean(),
            &x,
            &Ordering::identity(1),
            &MrOptions::default(),
        )
        .unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.induced_order.is_total());
        assert!(res.converged);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let x = DMatrix::from_element(3, 2, 0.5);
        let err = mr(
            &DivergenceSpec::squared_euclidean(),
            &x,
            &Ordering::identity(4),
            &MrOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn extract_total_order_breaks_ties_by_covariate() {
        let base = MrResult {
            retarget: vec![1.0; 3],
            fit: GlmFit {
                weights: vec![],
                intercept: 0.0,
                objective: 0.0,
                penalized_objective: 0.0,
                iterations: 0,
                converged: true,
                trace: vec![],
            },
            induced_order: Ordering::all_tied(3),
            cost_trace: vec![],
            penalized_trace: vec![],
            margin_iterations: vec![],
            iterations: 0,
            converged: true,
        };
        let t = extract_total_order(&base, &[0.3, 0.1, 0.2]);
        assert_eq!(t.sequence(), vec![1, 2, 0]);

        let mut two = base.clone();
        two.induced_order = Ordering::all_tied(2);
        assert_eq!(
            extract_total_order(&two, &[0.5, 0.5]).sequence(),
            vec![0, 1]
        );

        let mut total = base;
        total.induced_order = Ordering::total(vec![2, 0, 1]).unwrap();
        let t = extract_total_order(&total, &[9.0, 8.0, 7.0]);
        assert_eq!(t, total.induced_order);
    }
}
