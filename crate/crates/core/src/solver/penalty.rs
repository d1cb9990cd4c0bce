//! Sparsity penalties and their adaptive (reweighting) weights.
//!
//! Each penalty is a function `pi(t)` of a coefficient magnitude `t >= 0`;
//! the weight used in the reweighted lasso is `pi'(t)`.

use serde::{Deserialize, Serialize};

use super::bessel::bessel_k01;
use crate::error::{Error, Result};

/// Below this value of `gamma * sqrt(delta^2 + t^2)` the NIG weight uses
/// its small-argument closed form.
const NIG_SMALL_ARG: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyFunction {
    /// Plain lasso: `pi(t) = weight * t`.
    Constant { weight: f64 },
    /// Laplace prior: `pi(t) = t / scale`.
    Laplace { scale: f64 },
    /// Generalized t prior: `pi(t) = (a + 1) log(1 + t / b)` up to a constant.
    GeneralizedT { a: f64, b: f64 },
    /// Normal inverse Gaussian: `pi(t) = log r - log K1(gamma r)`, `r = sqrt(delta^2 + t^2)`.
    Nig { delta: f64, gamma: f64 },
}

impl Default for PenaltyFunction {
    fn default() -> Self {
        PenaltyFunction::Nig {
            delta: 1.0,
            gamma: 1e-6,
        }
    }
}

impl PenaltyFunction {
    pub fn generalized_t_default() -> Self {
        PenaltyFunction::GeneralizedT { a: 1.0, b: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PenaltyFunction::Constant { weight } => weight > 0.0 && weight.is_finite(),
            PenaltyFunction::Laplace { scale } => scale > 0.0 && scale.is_finite(),
            PenaltyFunction::GeneralizedT { a, b } => {
                a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()
            }
            PenaltyFunction::Nig { delta, gamma } => {
                delta > 0.0 && gamma > 0.0 && delta.is_finite() && gamma.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "penalty parameters out of range: {self:?}"
            )))
        }
    }

    /// Adaptive weight `pi'(t)` at magnitude `t`.
    pub fn weight(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::arg(format!(
                "penalty weight needs a finite non-negative magnitude, got {t}"
            )));
        }
        Ok(match *self {
            PenaltyFunction::Constant { weight } => weight,
            PenaltyFunction::Laplace { scale } => 1.0 / scale,
            PenaltyFunction::GeneralizedT { a, b } => (a + 1.0) / (b + t),
            PenaltyFunction::Nig { delta, gamma } => {
                let r2 = delta * delta + t * t;
                let z = gamma * r2.sqrt();
                if z < NIG_SMALL_ARG {
                    2.0 * t / r2
                } else {
                    let (k0, k1) = bessel_k01(z);
                    t / r2 * (2.0 + z * k0 / k1)
                }
            }
        })
    }

    /// Penalty value `pi(t)`.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            PenaltyFunction::Constant { weight } => weight * t,
            PenaltyFunction::Laplace { scale } => t / scale,
            PenaltyFunction::GeneralizedT { a, b } => {
                (2.0 * b / a).ln() + (a + 1.0) * (1.0 + t / b).ln()
            }
            PenaltyFunction::Nig { delta, gamma } => {
                let r = (delta * delta + t * t).sqrt();
                r.ln() - bessel_k01(gamma * r).1.ln()
            }
        }
    }

    /// Fills `out` with the weights at `|x_j|`.
    pub fn weights_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (w, &xj) in out.iter_mut().zip(x) {
            *w = self.weight(xj.abs())?;
        }
        Ok(())
    }
}

/// Free-function form of [`PenaltyFunction::weight`].
pub fn penalty_weight(p: &PenaltyFunction, t: f64) -> Result<f64> {
    p.weight(t)
}
