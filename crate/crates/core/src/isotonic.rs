//! Order-constrained Bregman projection by pool-adjacent-violators.
//!
//! Given natural parameters `theta` and a weak ordering, [`pav_fit`] solves
//!
//! ```text
//! min_z  D_phi(z || mean(theta))   s.t. z nondecreasing along the ordering
//! ```
//!
//! Items tied in the constraint are first sorted by ascending `theta`; the
//! standard chain PAV then runs over that refined total order. Pooling happens
//! in the dual space: a pooled block takes the value
//! `inv_grad_phi(mean of its natural parameters)`, which is the first-order
//! optimum of the blockwise divergence.

use crate::bregman::{self, DivergenceSpec, Domain};
use crate::error::{Error, Result};
use crate::ordering::Ordering;

#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicSolution {
    /// Fitted values, nondecreasing along the constraint.
    pub fitted: Vec<f64>,
    /// Tie-blocks of equal fitted values, lowest first.
    pub induced_order: Ordering,
    /// `D_phi(fitted || mean(theta))`.
    pub objective: f64,
    /// Whether [`enforce_range_margin`] rescaled this solution.
    pub margin_applied: bool,
    /// Constraint blocks with each block sorted by ascending natural parameter.
    pub refined: Vec<Vec<usize>>,
    means: Vec<f64>,
}

/// Pooling rule used by the solver. Only [`PoolRule::DualMean`] is correct;
/// the primal variant exists so the self-test can show that its oracles
/// reject a broken solver.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolRule {
    DualMean,
    PrimalMean,
}

/// Order-constrained projection of `mean(natural_params)` onto the cone of
/// vectors nondecreasing along `constraint`.
pub fn pav_fit(
    spec: &DivergenceSpec,
    natural_params: &[f64],
    constraint: &Ordering,
) -> Result<IsotonicSolution> {
    pav_fit_with_rule(spec, natural_params, constraint, PoolRule::DualMean)
}

#[doc(hidden)]
pub fn pav_fit_with_rule(
    spec: &DivergenceSpec,
    natural_params: &[f64],
    constraint: &Ordering,
    rule: PoolRule,
) -> Result<IsotonicSolution> {
    let n = natural_params.len();
    if constraint.len() != n {
        return Err(Error::LengthMismatch {
            expected: constraint.len(),
            actual: n,
        });
    }
    let means = bregman::mean_map(spec, natural_params)?;
    let refined = constraint.sorted_within_blocks(natural_params);
    let chain: Vec<usize> = refined.iter().flatten().copied().collect();

    // stack of pooled runs: (sum of pooled values, count)
    let pool_value = |i: usize| match rule {
        PoolRule::DualMean => natural_params[i],
        PoolRule::PrimalMean => spec.inv_link(natural_params[i]),
    };
    let mut sums: Vec<f64> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for &i in &chain {
        let mut s = pool_value(i);
        let mut c = 1usize;
        while let (Some(&ps), Some(&pc)) = (sums.last(), counts.last()) {
            if ps / pc as f64 >= s / c as f64 {
                s += ps;
                c += pc;
                sums.pop();
                counts.pop();
            } else {
                break;
            }
        }
        sums.push(s);
        counts.push(c);
    }

    let mut fitted = vec![0.0; n];
    let mut blocks = Vec::with_capacity(sums.len());
    let mut pos = 0;
    for (&s, &c) in sums.iter().zip(&counts) {
        let avg = s / c as f64;
        let value = match rule {
            PoolRule::DualMean => {
                spec.check_natural(&[avg])?;
                spec.inv_link(avg)
            }
            PoolRule::PrimalMean => avg,
        };
        let block: Vec<usize> = chain[pos..pos + c].to_vec();
        for &i in &block {
            fitted[i] = value;
        }
        blocks.push(block);
        pos += c;
    }
    if spec.domain() == Domain::Simplex {
        let total: f64 = fitted.iter().sum();
        fitted.iter_mut().for_each(|v| *v /= total);
    }

    let induced_order = Ordering::new(blocks, n)?;
    let objective = bregman::divergence_unchecked(spec, &fitted, &means);
    Ok(IsotonicSolution {
        fitted,
        induced_order,
        objective,
        margin_applied: false,
        refined,
        means,
    })
}

/// Enforces `max(fitted) - min(fitted) >= epsilon`.
///
/// A solution whose range already meets the margin is returned unchanged.
/// A solution with a positive but short range is stretched affinely about its
/// midpoint (about its mean on the simplex, so the sum is kept). A fully
/// pooled solution is split at the extremes: the items of the lowest
/// constraint block move down and those of the highest block move up, which
/// refines the tie structure only there.
pub fn enforce_range_margin(
    spec: &DivergenceSpec,
    sol: IsotonicSolution,
    epsilon: f64,
) -> Result<IsotonicSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!(
            "margin must be positive, got {epsilon}"
        )));
    }
    let n = sol.fitted.len();
    if n == 0 {
        return Ok(sol);
    }
    let (lo, hi) = min_max(&sol.fitted);
    let range = hi - lo;
    if range >= epsilon {
        return Ok(sol);
    }
    if sol.refined.len() < 2 {
        return Err(Error::Degenerate(
            "range margin is undefined for a constraint with a single block".into(),
        ));
    }

    let mut fitted = sol.fitted.clone();
    let induced_order;
    if range > 0.0 {
        let scale = epsilon / range;
        let center = match spec.domain() {
            Domain::Reals => 0.5 * (lo + hi),
            Domain::PositiveOrthant => (0.5 * (lo + hi)).max(epsilon),
            Domain::Simplex => fitted.iter().sum::<f64>() / n as f64,
        };
        let anchor = match spec.domain() {
            Domain::Simplex => center,
            _ => 0.5 * (lo + hi),
        };
        for v in fitted.iter_mut() {
            *v = center + (*v - anchor) * scale;
        }
        induced_order = sol.induced_order.clone();
    } else {
        let first = &sol.refined[0];
        let last = &sol.refined[sol.refined.len() - 1];
        let (a, b) = (first.len() as f64, last.len() as f64);
        // mean-preserving split: a·down = b·up, down + up = epsilon
        let down = epsilon * b / (a + b);
        let up = epsilon * a / (a + b);
        let mut base = lo;
        if spec.domain() != Domain::Reals && base - down <= 0.0 {
            base = down + epsilon;
        }
        for v in fitted.iter_mut() {
            *v = base;
        }
        for &i in first {
            fitted[i] = base - down;
        }
        for &i in last {
            fitted[i] = base + up;
        }
        let middle: Vec<usize> = sol.refined[1..sol.refined.len() - 1]
            .iter()
            .flatten()
            .copied()
            .collect();
        let mut blocks = vec![first.clone()];
        if !middle.is_empty() {
            blocks.push(middle);
        }
        blocks.push(last.clone());
        induced_order = Ordering::new(blocks, n)?;
    }
    if spec.domain() != Domain::Reals {
        if let Some((i, &v)) = fitted.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::Degenerate(format!(
                "range margin {epsilon} pushes item {i} to {v}, outside the {:?} domain",
                spec.domain()
            )));
        }
    }
    if spec.domain() == Domain::Simplex {
        // guard against drift in the mean-preserving arithmetic
        let total: f64 = fitted.iter().sum();
        fitted.iter_mut().for_each(|v| *v /= total);
    }
    log::debug!("range margin applied: range {range:e} -> {epsilon:e}");
    let objective = bregman::divergence_unchecked(spec, &fitted, &sol.means);
    Ok(IsotonicSolution {
        fitted,
        induced_order,
        objective,
        margin_applied: true,
        refined: sol.refined,
        means: sol.means,
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}
