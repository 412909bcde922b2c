//! GLM parameter estimation under a Bregman matching loss.
//!
//! Minimizes `D_phi(target || mean(M w)) + penalty(w)`. Every family here uses
//! its canonical link, so the gradient of the loss is `Mᵀ(mean − target)` and
//! the Hessian is `Mᵀ V M` with `V` the variance of the mean map.
//!
//! Smooth problems are solved by damped Newton steps with Armijo
//! backtracking; lasso problems use accelerated proximal gradient.

use nalgebra::{DMatrix, DVector};

use crate::bregman::{self, DivergenceSpec, Family};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Regularization {
    #[default]
    None,
    /// `strength/2 · ‖w‖²`
    Ridge(f64),
    /// `strength · ‖w‖₁`
    Lasso(f64),
}

impl Regularization {
    pub fn strength(&self) -> f64 {
        match *self {
            Regularization::None => 0.0,
            Regularization::Ridge(s) | Regularization::Lasso(s) => s,
        }
    }

    /// Equivalent to no penalty.
    pub fn is_inactive(&self) -> bool {
        self.strength() == 0.0
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let s = self.strength();
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Config(format!(
                "regularization strength must be finite and nonnegative, got {s}"
            )));
        }
        Ok(())
    }

    /// Penalty value on the penalized coordinates of `w`.
    pub fn penalty(&self, w: &[f64]) -> f64 {
        match *self {
            Regularization::None => 0.0,
            Regularization::Ridge(s) => 0.5 * s * w.iter().map(|v| v * v).sum::<f64>(),
            Regularization::Lasso(s) => s * w.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmOptions {
    /// Relative objective decrease below which the fit is converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Iteration cap for the proximal-gradient (lasso) solver.
    pub prox_max_iter: usize,
    /// Append an unpenalized all-ones column.
    pub intercept: bool,
    /// Diagonal floor added to the Newton system.
    pub ridge_floor: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            tol: 1e-9,
            max_iter: 200,
            prox_max_iter: 20_000,
            intercept: true,
            ridge_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    /// One coefficient per design column.
    pub weights: Vec<f64>,
    /// Intercept, zero when the fit had none.
    pub intercept: f64,
    /// Unpenalized divergence at the solution.
    pub objective: f64,
    /// Divergence plus penalty at the solution.
    pub penalized_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after every accepted iterate, starting value first.
    pub trace: Vec<f64>,
}

impl GlmFit {
    /// `M w + b` for a design with the same columns as the fit.
    pub fn linear_predictor(&self, design: &DMatrix<f64>) -> Vec<f64> {
        let w = DVector::from_column_slice(&self.weights);
        (design * w).iter().map(|v| v + self.intercept).collect()
    }

    /// Packed coefficients (weights, then intercept when present).
    pub fn packed(&self, intercept: bool) -> Vec<f64> {
        let mut p = self.weights.clone();
        if intercept {
            p.push(self.intercept);
        }
        p
    }
}

/// Smooth part of the GLM objective with its derivatives, on a design that
/// already includes any intercept column.
#[derive(Debug, Clone)]
pub struct GlmObjective<'a> {
    spec: DivergenceSpec,
    design: DMatrix<f64>,
    target: &'a [f64],
    reg: Regularization,
    /// Number of leading columns that carry the penalty.
    penalized: usize,
}

impl<'a> GlmObjective<'a> {
    pub fn new(
        spec: DivergenceSpec,
        design: &DMatrix<f64>,
        target: &'a [f64],
        reg: Regularization,
        intercept: bool,
    ) -> Result<Self> {
        if design.nrows() != target.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows, target has {} entries",
                design.nrows(),
                target.len()
            )));
        }
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::Dimension("design must be at least 1x1".into()));
        }
        check_finite("design", design)?;
        reg.validate()?;
        spec.check_domain(target)?;
        let penalized = design.ncols();
        let design = if intercept {
            design.clone().insert_column(design.ncols(), 1.0)
        } else {
            design.clone()
        };
        Ok(GlmObjective {
            spec,
            design,
            target,
            reg,
            penalized,
        })
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn eta(&self, w: &[f64]) -> Vec<f64> {
        (&self.design * DVector::from_column_slice(w))
            .iter()
            .copied()
            .collect()
    }

    /// Unpenalized divergence `D(target || mean(Mw))`.
    pub fn loss(&self, w: &[f64]) -> Result<f64> {
        let mu = bregman::mean_map(&self.spec, &self.eta(w))?;
        Ok(bregman::divergence_unchecked(&self.spec, self.target, &mu))
    }

    /// Loss plus the smooth (ridge) penalty.
    pub fn value(&self, w: &[f64]) -> Result<f64> {
        let mut v = self.loss(w)?;
        if let Regularization::Ridge(_) = self.reg {
            v += self.reg.penalty(&w[..self.penalized]);
        }
        Ok(v)
    }

    /// Loss plus whichever penalty is configured.
    pub fn penalized_value(&self, w: &[f64]) -> Result<f64> {
        Ok(self.loss(w)? + self.reg.penalty(&w[..self.penalized]))
    }

    /// Gradient of [`GlmObjective::value`].
    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mu = bregman::mean_map(&self.spec, &self.eta(w))?;
        let resid =
            DVector::from_iterator(mu.len(), mu.iter().zip(self.target).map(|(m, t)| m - t));
        let mut g: Vec<f64> = (self.design.transpose() * resid).iter().copied().collect();
        if let Regularization::Ridge(s) = self.reg {
            for (gi, wi) in g.iter_mut().zip(w).take(self.penalized) {
                *gi += s * wi;
            }
        }
        Ok(g)
    }

    /// Hessian of [`GlmObjective::value`].
    pub fn hessian(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        let mu = bregman::mean_map(&self.spec, &self.eta(w))?;
        let m = &self.design;
        let mut h = match self.spec.family() {
            Family::SquaredEuclidean => m.transpose() * m,
            Family::GeneralizedI => {
                let mut scaled = m.clone();
                for (mut row, &v) in scaled.row_iter_mut().zip(&mu) {
                    row *= v;
                }
                m.transpose() * scaled
            }
            Family::Kl => {
                // Mᵀ(diag(mu) − mu muᵀ)M
                let mut scaled = m.clone();
                for (mut row, &v) in scaled.row_iter_mut().zip(&mu) {
                    row *= v;
                }
                let mu_v = DVector::from_column_slice(&mu);
                let mt_mu = m.transpose() * mu_v;
                m.transpose() * scaled - &mt_mu * mt_mu.transpose()
            }
        };
        if let Regularization::Ridge(s) = self.reg {
            for j in 0..self.penalized {
                h[(j, j)] += s;
            }
        }
        Ok(h)
    }
}

fn check_finite(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    what,
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

/// Fits GLM weights from `w = 0`.
pub fn fit_glm(
    spec: &DivergenceSpec,
    design: &DMatrix<f64>,
    target: &[f64],
    reg: &Regularization,
    opts: &GlmOptions,
) -> Result<GlmFit> {
    fit_glm_from(spec, design, target, reg, opts, None)
}

/// Fits GLM weights starting from packed coefficients `init` (weights, then
/// intercept). An `init` whose natural parameters overflow is ignored.
pub fn fit_glm_from(
    spec: &DivergenceSpec,
    design: &DMatrix<f64>,
    target: &[f64],
    reg: &Regularization,
    opts: &GlmOptions,
    init: Option<&[f64]>,
) -> Result<GlmFit> {
    let obj = GlmObjective::new(*spec, design, target, *reg, opts.intercept)?;
    let dim = obj.dim();
    let zero = vec![0.0; dim];
    let start = match init {
        Some(w) if w.len() == dim && obj.penalized_value(w).is_ok() => w.to_vec(),
        _ => zero,
    };
    let (w, iterations, converged, trace) = match reg {
        Regularization::Lasso(s) if *s > 0.0 => proximal_gradient(&obj, start, *s, opts)?,
        _ => newton(&obj, start, opts)?,
    };
    let objective = obj.loss(&w)?;
    let penalized_objective = obj.penalized_value(&w)?;
    let (weights, intercept) = if opts.intercept {
        (w[..dim - 1].to_vec(), w[dim - 1])
    } else {
        (w, 0.0)
    };
    Ok(GlmFit {
        weights,
        intercept,
        objective,
        penalized_objective,
        iterations,
        converged,
        trace,
    })
}

type SolverOutput = (Vec<f64>, usize, bool, Vec<f64>);

fn newton(obj: &GlmObjective<'_>, mut w: Vec<f64>, opts: &GlmOptions) -> Result<SolverOutput> {
    let mut f = obj.value(&w)?;
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let g = obj.gradient(&w)?;
        if g.iter().all(|&v| v == 0.0) {
            converged = true;
            break;
        }
        let h = obj.hessian(&w)?;
        let d = solve_spd(h, &g, opts.ridge_floor)?;
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            converged = slope.abs() <= 1e-14 * (1.0 + f.abs());
            break;
        }

        let mut step = 1.0;
        let mut accepted = None;
        let mut overflowed = false;
        while step > 1e-12 {
            let trial: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            match obj.value(&trial) {
                Ok(ft) if ft <= f + 1e-4 * step * slope => {
                    accepted = Some((trial, ft));
                    break;
                }
                Ok(_) => {}
                Err(Error::NaturalParamOverflow { .. }) => overflowed = true,
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((trial, ft)) = accepted else {
            // no descent left: either at the optimum up to rounding, or pinned
            // against the natural-parameter cap
            if overflowed && -slope > opts.tol * (1.0 + f.abs()) {
                return Err(Error::Diverged {
                    iteration: iterations,
                    detail: format!(
                        "natural-parameter cap of {} blocks every step from w = {:?}",
                        bregman::NATURAL_PARAM_CAP,
                        w
                    ),
                });
            }
            converged = -slope <= 1e-10 * (1.0 + f.abs());
            break;
        };
        let decrease = f - ft;
        w = trial;
        f = ft;
        trace.push(f);
        if decrease <= opts.tol * f.abs().max(f64::MIN_POSITIVE) + f64::MIN_POSITIVE {
            converged = true;
            break;
        }
    }
    Ok((w, iterations, converged, trace))
}

fn solve_spd(h: DMatrix<f64>, g: &[f64], floor: f64) -> Result<Vec<f64>> {
    let rhs = -DVector::from_column_slice(g);
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
    let mut extra = floor;
    for _ in 0..12 {
        let mut hh = h.clone();
        for i in 0..hh.nrows() {
            hh[(i, i)] += extra;
        }
        if let Some(chol) = hh.cholesky() {
            let d = chol.solve(&rhs);
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d.iter().copied().collect());
            }
        }
        extra = (extra * 100.0).max(1e-12 * scale);
    }
    // last resort: steepest descent
    Ok(rhs.iter().copied().collect())
}

/// FISTA with backtracking and adaptive restart for `loss + s‖w‖₁`.
fn proximal_gradient(
    obj: &GlmObjective<'_>,
    mut w: Vec<f64>,
    strength: f64,
    opts: &GlmOptions,
) -> Result<SolverOutput> {
    let pen = obj.penalized;
    let soft = |v: f64, t: f64| v.signum() * (v.abs() - t).max(0.0);
    let full = |x: &[f64]| -> Result<f64> { obj.penalized_value(x) };

    let mut lipschitz = 1.0;
    let mut f_full = full(&w)?;
    let mut trace = vec![f_full];
    let mut y = w.clone();
    let mut momentum = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut quiet = 0;
    while iterations < opts.prox_max_iter {
        iterations += 1;
        let fy = match obj.value(&y) {
            Ok(v) => v,
            Err(Error::NaturalParamOverflow { .. }) => {
                y = w.clone();
                momentum = 1.0;
                obj.value(&y)?
            }
            Err(e) => return Err(e),
        };
        let gy = obj.gradient(&y)?;
        let next = loop {
            let cand: Vec<f64> = (0..y.len())
                .map(|j| {
                    let v = y[j] - gy[j] / lipschitz;
                    if j < pen {
                        soft(v, strength / lipschitz)
                    } else {
                        v
                    }
                })
                .collect();
            let diff: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bound = fy
                + diff.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>()
                + 0.5 * lipschitz * diff.iter().map(|v| v * v).sum::<f64>();
            match obj.value(&cand) {
                Ok(fc) if fc <= bound + 1e-12 * fy.abs() => break cand,
                Ok(_) | Err(Error::NaturalParamOverflow { .. }) => {
                    lipschitz *= 2.0;
                    if lipschitz > 1e20 {
                        return Err(Error::Diverged {
                            iteration: iterations,
                            detail: "proximal step size collapsed".into(),
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        };
        let f_next = full(&next)?;
        if f_next > f_full {
            // restart momentum from the last iterate
            y = w.clone();
            momentum = 1.0;
            continue;
        }
        let step: f64 = next
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = w.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let decrease = f_full - f_next;
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = next
            .iter()
            .zip(&w)
            .map(|(a, b)| a + (momentum - 1.0) / m_next * (a - b))
            .collect();
        momentum = m_next;
        w = next;
        f_full = f_next;
        trace.push(f_full);
        if decrease <= opts.tol * f_full.abs().max(f64::MIN_POSITIVE) && step <= 1e-10 * scale {
            quiet += 1;
            if quiet >= 3 {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
        // slowly relax the step estimate so it can grow back
        lipschitz *= 0.95;
    }
    Ok((w, iterations, converged, trace))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn no_intercept() -> GlmOptions {
        GlmOptions {
            intercept: false,
            ..GlmOptions::default()
        }
    }

    #[test]
    fn identity_design_recovers_target() {
        let m = DMatrix::<f64>::identity(3, 3);
        let fit = fit_glm(
            &DivergenceSpec::squared_euclidean(),
            &m,
            &[1.0, 2.0, 3.0],
            &Regularization::None,
            &no_intercept(),
        )
        .unwrap();
        for (w, e) in fit.weights.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*w, e, epsilon = 1e-8);
        }
        assert!(fit.objective < 1e-16);
        assert!(fit.converged);
    }

    #[test]
    fn ridge_matches_closed_form() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 1.0, 1.5, 2.0]);
        let z = [1.0, -0.5, 2.0, 0.3];
        let lambda = 0.7;
        let fit = fit_glm(
            &DivergenceSpec::squared_euclidean(),
            &m,
            &z,
            &Regularization::Ridge(lambda),
            &no_intercept(),
        )
        .unwrap();
        let a = m.transpose() * &m + DMatrix::identity(2, 2) * lambda;
        let b = m.transpose() * DVector::from_column_slice(&z);
        let expect = a.lu().solve(&b).unwrap();
        for j in 0..2 {
            assert_relative_eq!(fit.weights[j], expect[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn rejects_non_finite_design() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(1, 0)] = f64::NAN;
        let err = fit_glm(
            &DivergenceSpec::squared_euclidean(),
            &m,
            &[1.0, 2.0],
            &Regularization::None,
            &GlmOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0, .. }));
    }

    #[test]
    fn unreachable_target_hits_the_cap() {
        // a mean of 1e30 needs a natural parameter of about 69
        let m = DMatrix::from_element(2, 1, 1.0);
        let err = fit_glm(
            &DivergenceSpec::generalized_i(),
            &m,
            &[1e30, 1e30],
            &Regularization::None,
            &no_intercept(),
        );
        assert!(matches!(err, Err(Error::Diverged { .. })), "{err:?}");
    }

    #[test]
    fn kl_fit_uses_softmax_mean() {
        let m = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let w0 = 0.8;
        let target = bregman::softmax(&[0.0, w0, 2.0 * w0]);
        let fit = fit_glm(
            &DivergenceSpec::kl(),
            &m,
            &target,
            &Regularization::None,
            &GlmOptions::default(),
        )
        .unwrap();
        assert!(fit.objective < 1e-12);
        assert_relative_eq!(fit.weights[0], w0, epsilon = 1e-6);
    }
}
