//! Bregman divergences and the matching GLM link functions.
//!
//! | family            | phi(x)               | grad phi   | domain            |
//! |-------------------|----------------------|------------|-------------------|
//! | squared Euclidean | ½‖x‖²                | x          | all reals         |
//! | KL                | Σ x log x            | 1 + log x  | probability simplex |
//! | generalized I     | Σ (x log x − x)      | log x      | positive orthant  |
//!
//! Divergences are evaluated through their closed forms rather than the
//! generic `phi(y) - phi(x) - <grad phi(x), y - x>` definition.

use std::fmt;

use crate::error::{Error, Result};

/// Entries of an exp-linked natural parameter vector must stay within this
/// magnitude; larger values mean the iterates have diverged.
pub const NATURAL_PARAM_CAP: f64 = 50.0;

/// Tolerance on the sum of a simplex vector.
pub const SIMPLEX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    SquaredEuclidean,
    Kl,
    GeneralizedI,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Reals,
    Simplex,
    PositiveOrthant,
}

impl Domain {
    fn name(self) -> &'static str {
        match self {
            Domain::Reals => "real",
            Domain::Simplex => "probability simplex",
            Domain::PositiveOrthant => "positive orthant",
        }
    }
}

/// A Bregman divergence family together with its domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DivergenceSpec {
    family: Family,
    domain: Domain,
}

impl DivergenceSpec {
    pub fn new(family: Family, domain: Domain) -> Result<Self> {
        let expected = Self::natural_domain(family);
        if expected != domain {
            return Err(Error::InconsistentSpec(format!(
                "{family:?} requires the {} domain, got {}",
                expected.name(),
                domain.name()
            )));
        }
        Ok(DivergenceSpec { family, domain })
    }

    pub fn of(family: Family) -> Self {
        DivergenceSpec {
            family,
            domain: Self::natural_domain(family),
        }
    }

    pub fn squared_euclidean() -> Self {
        Self::of(Family::SquaredEuclidean)
    }

    pub fn kl() -> Self {
        Self::of(Family::Kl)
    }

    pub fn generalized_i() -> Self {
        Self::of(Family::GeneralizedI)
    }

    fn natural_domain(family: Family) -> Domain {
        match family {
            Family::SquaredEuclidean => Domain::Reals,
            Family::Kl => Domain::Simplex,
            Family::GeneralizedI => Domain::PositiveOrthant,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Checks that `x` lies in the domain.
    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        for (i, &v) in x.iter().enumerate() {
            let ok = match self.domain {
                Domain::Reals => v.is_finite(),
                Domain::PositiveOrthant => v.is_finite() && v > 0.0,
                Domain::Simplex => v.is_finite() && v > 0.0 && v <= 1.0,
            };
            if !ok {
                return Err(Error::Domain {
                    index: i,
                    value: v,
                    domain: self.domain.name(),
                });
            }
        }
        if self.domain == Domain::Simplex {
            let sum: f64 = x.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::NotOnSimplex { sum });
            }
        }
        Ok(())
    }

    /// Scalar link `grad phi` for one coordinate.
    pub fn link(&self, x: f64) -> f64 {
        match self.family {
            Family::SquaredEuclidean => x,
            Family::Kl => 1.0 + x.ln(),
            Family::GeneralizedI => x.ln(),
        }
    }

    /// Scalar inverse link for one coordinate, without the overflow guard.
    pub fn inv_link(&self, theta: f64) -> f64 {
        match self.family {
            Family::SquaredEuclidean => theta,
            Family::Kl => (theta - 1.0).exp(),
            Family::GeneralizedI => theta.exp(),
        }
    }

    fn uses_exp_link(&self) -> bool {
        !matches!(self.family, Family::SquaredEuclidean)
    }

    /// Rejects natural parameters that would overflow an exponential link.
    pub fn check_natural(&self, theta: &[f64]) -> Result<()> {
        for (i, &t) in theta.iter().enumerate() {
            if !t.is_finite() || (self.uses_exp_link() && t.abs() > NATURAL_PARAM_CAP) {
                return Err(Error::NaturalParamOverflow {
                    index: i,
                    value: t,
                    cap: NATURAL_PARAM_CAP,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.family {
            Family::SquaredEuclidean => "squared-euclidean",
            Family::Kl => "kl",
            Family::GeneralizedI => "generalized-i",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for DivergenceSpec {
    type Err = Error;

    /// Accepts the display names plus `gaussian` and `poisson`.
    fn from_str(s: &str) -> Result<Self> {
        let family = match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "squared-euclidean" | "gaussian" => Family::SquaredEuclidean,
            "kl" => Family::Kl,
            "generalized-i" | "gi" | "poisson" => Family::GeneralizedI,
            other => {
                return Err(Error::Config(format!(
                    "unknown family `{other}` (expected gaussian, poisson or kl)"
                )))
            }
        };
        Ok(Self::of(family))
    }
}

/// Convex generator `phi(x)`.
pub fn phi(spec: &DivergenceSpec, x: &[f64]) -> Result<f64> {
    spec.check_domain(x)?;
    Ok(match spec.family {
        Family::SquaredEuclidean => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
        Family::Kl => x.iter().map(|&v| v * v.ln()).sum(),
        Family::GeneralizedI => x.iter().map(|&v| v * v.ln() - v).sum(),
    })
}

/// Elementwise gradient of `phi`, mapping means to natural parameters.
///
/// Only positivity is required for the log-based families; the simplex sum
/// is not checked here since the link is defined on the whole open orthant.
pub fn grad_phi(spec: &DivergenceSpec, x: &[f64]) -> Result<Vec<f64>> {
    check_interior(spec, x)?;
    Ok(x.iter().map(|&v| spec.link(v)).collect())
}

/// Elementwise inverse link, mapping natural parameters to means.
pub fn inv_grad_phi(spec: &DivergenceSpec, theta: &[f64]) -> Result<Vec<f64>> {
    spec.check_natural(theta)?;
    Ok(theta.iter().map(|&t| spec.inv_link(t)).collect())
}

/// Mean vector of the GLM with natural parameters `theta`.
///
/// Identical to [`inv_grad_phi`] except on the simplex, where the result is
/// renormalized to sum to one (a softmax of `theta`).
pub fn mean_map(spec: &DivergenceSpec, theta: &[f64]) -> Result<Vec<f64>> {
    spec.check_natural(theta)?;
    match spec.domain {
        Domain::Simplex => Ok(softmax(theta)),
        _ => Ok(theta.iter().map(|&t| spec.inv_link(t)).collect()),
    }
}

pub(crate) fn softmax(theta: &[f64]) -> Vec<f64> {
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = theta.iter().map(|&t| (t - max).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// `D_phi(y || x)`, evaluated in closed form.
pub fn divergence(spec: &DivergenceSpec, y: &[f64], x: &[f64]) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: x.len(),
        });
    }
    spec.check_domain(y)?;
    spec.check_domain(x)?;
    Ok(divergence_unchecked(spec, y, x))
}

/// Closed-form divergence without domain checks. Callers guarantee the
/// arguments are in-domain.
pub(crate) fn divergence_unchecked(spec: &DivergenceSpec, y: &[f64], x: &[f64]) -> f64 {
    match spec.family {
        Family::SquaredEuclidean => {
            0.5 * y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        Family::Kl => y.iter().zip(x).map(|(&a, &b)| a * (a / b).ln()).sum(),
        Family::GeneralizedI => y
            .iter()
            .zip(x)
            .map(|(&a, &b)| a * (a / b).ln() - a + b)
            .sum(),
    }
}

fn check_interior(spec: &DivergenceSpec, x: &[f64]) -> Result<()> {
    for (i, &v) in x.iter().enumerate() {
        let ok = match spec.domain {
            Domain::Reals => v.is_finite(),
            _ => v.is_finite() && v > 0.0,
        };
        if !ok {
            return Err(Error::Domain {
                index: i,
                value: v,
                domain: spec.domain.name(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{E, LN_2};

    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn phi_values() {
        let se = DivergenceSpec::squared_euclidean();
        assert_relative_eq!(phi(&se, &[3.0, 4.0]).unwrap(), 12.5);
        let kl = DivergenceSpec::kl();
        assert_relative_eq!(phi(&kl, &[0.5, 0.5]).unwrap(), -LN_2, epsilon = 1e-15);
        let gi = DivergenceSpec::generalized_i();
        assert_relative_eq!(phi(&gi, &[1.0, 1.0]).unwrap(), -2.0);
    }

    #[test]
    fn phi_domain_errors() {
        let gi = DivergenceSpec::generalized_i();
        assert!(matches!(
            phi(&gi, &[1.0, 0.0]),
            Err(Error::Domain { index: 1, .. })
        ));
        let kl = DivergenceSpec::kl();
        assert!(matches!(
            phi(&kl, &[0.5, 0.6]),
            Err(Error::NotOnSimplex { .. })
        ));
        assert!(phi(&kl, &[0.5, 0.5 + 5e-9]).is_ok());
    }

    #[test]
    fn links() {
        let se = DivergenceSpec::squared_euclidean();
        assert_eq!(grad_phi(&se, &[2.0, -1.0]).unwrap(), vec![2.0, -1.0]);
        let gi = DivergenceSpec::generalized_i();
        let g = grad_phi(&gi, &[1.0, E]).unwrap();
        assert_relative_eq!(g[0], 0.0);
        assert_relative_eq!(g[1], 1.0, epsilon = 1e-15);
        assert_eq!(grad_phi(&DivergenceSpec::kl(), &[1.0]).unwrap(), vec![1.0]);
        assert!(grad_phi(&gi, &[-1.0]).is_err());

        assert_eq!(inv_grad_phi(&se, &[5.0]).unwrap(), vec![5.0]);
        assert_eq!(inv_grad_phi(&gi, &[0.0]).unwrap(), vec![1.0]);
        let m = inv_grad_phi(&gi, &[1.0, 2.0]).unwrap();
        assert_relative_eq!(m[0], E, max_relative = 1e-15);
        assert_relative_eq!(m[1], E * E, max_relative = 1e-15);
    }

    #[test]
    fn natural_parameter_cap() {
        let gi = DivergenceSpec::generalized_i();
        let err = inv_grad_phi(&gi, &[1.0, 50.5]).unwrap_err();
        assert!(matches!(err, Error::NaturalParamOverflow { index: 1, .. }));
        // identity link has no cap
        assert!(inv_grad_phi(&DivergenceSpec::squared_euclidean(), &[1e6]).is_ok());
    }

    #[test]
    fn divergence_values() {
        let se = DivergenceSpec::squared_euclidean();
        assert_eq!(divergence(&se, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(divergence(&se, &[3.0, 0.0], &[1.0, 1.0]).unwrap(), 2.5);
        let gi = DivergenceSpec::generalized_i();
        assert_relative_eq!(
            divergence(&gi, &[2.0, 1.0], &[1.0, 1.0]).unwrap(),
            2.0 * LN_2 - 1.0,
            epsilon = 1e-15
        );
        assert!(divergence(&se, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spec_consistency() {
        assert!(DivergenceSpec::new(Family::Kl, Domain::Simplex).is_ok());
        assert!(DivergenceSpec::new(Family::Kl, Domain::Reals).is_err());
        assert!(DivergenceSpec::new(Family::GeneralizedI, Domain::Simplex).is_err());
    }

    #[test]
    fn softmax_mean_map_on_simplex() {
        let kl = DivergenceSpec::kl();
        let m = mean_map(&kl, &[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(m.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(kl.check_domain(&m).is_ok());
    }
}
