//! Weighted lasso by cyclic coordinate descent.
//!
//! Minimizes `sum_j w_j |x_j| + (beta / 2) ||b - A x||^2`. The Gram matrix
//! `A^T A` is formed once so a sweep costs O(n^2) regardless of d.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::svt::soft_threshold;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoSettings {
    pub max_sweeps: usize,
    /// Exit once the largest coordinate change in a sweep and the largest
    /// optimality-condition violation are both below this.
    pub tol: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tol: 1e-10,
        }
    }
}

/// Precomputed `A^T A` for repeated solves against one dictionary.
#[derive(Clone, Debug)]
pub struct Gram {
    gram: DMatrix<f64>,
}

impl Gram {
    pub fn new(atoms: &DMatrix<f64>) -> Self {
        Self {
            gram: atoms.tr_mul(atoms),
        }
    }

    pub fn n(&self) -> usize {
        self.gram.nrows()
    }

    /// Coordinate descent given the correlations `A^T b`; `x` holds the warm
    /// start on entry and the solution on exit. Returns the sweep count.
    pub fn solve(
        &self,
        atb: &DVector<f64>,
        weights: &[f64],
        beta: f64,
        inner: &LassoSettings,
        x: &mut [f64],
    ) -> usize {
        let n = self.n();
        let g = &self.gram;
        // grad[j] = a_j^T (b - A x)
        let mut grad: Vec<f64> = (0..n)
            .map(|j| atb[j] - (0..n).map(|k| g[(j, k)] * x[k]).sum::<f64>())
            .collect();
        for sweep in 1..=inner.max_sweeps {
            let mut max_change: f64 = 0.0;
            for j in 0..n {
                let gjj = g[(j, j)];
                if gjj <= 0.0 {
                    continue;
                }
                let old = x[j];
                let rho = grad[j] + gjj * old;
                let new = soft_threshold(rho, weights[j] / beta) / gjj;
                let delta = new - old;
                if delta != 0.0 {
                    x[j] = new;
                    let col = g.column(j);
                    for (gk, &gkj) in grad.iter_mut().zip(col.iter()) {
                        *gk -= gkj * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < inner.tol && kkt_from_grad(&grad, weights, beta, x) <= inner.tol {
                return sweep;
            }
        }
        inner.max_sweeps
    }
}

fn kkt_from_grad(grad: &[f64], weights: &[f64], beta: f64, x: &[f64]) -> f64 {
    grad.iter()
        .zip(weights)
        .zip(x)
        .map(|((&g, &w), &xj)| kkt_term(beta * g, w, xj))
        .fold(0.0, f64::max)
}

#[inline]
fn kkt_term(corr: f64, w: f64, xj: f64) -> f64 {
    if xj != 0.0 {
        (corr - w * xj.signum()).abs()
    } else {
        (corr.abs() - w).max(0.0)
    }
}

/// Weighted lasso from scratch (forms the Gram matrix internally).
pub fn weighted_lasso(
    atoms: &DMatrix<f64>,
    b: &[f64],
    weights: &[f64],
    beta: f64,
    inner: &LassoSettings,
    x0: &[f64],
) -> Result<Vec<f64>> {
    let (d, n) = atoms.shape();
    if b.len() != d || weights.len() != n || x0.len() != n {
        return Err(Error::arg(format!(
            "lasso dimensions: A is {d}x{n}, b has {}, weights {}, x0 {}",
            b.len(),
            weights.len(),
            x0.len()
        )));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::arg(format!("beta must be positive, got {beta}")));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::arg("lasso weights must be finite and non-negative"));
    }
    let atb = atoms.tr_mul(&DVector::from_column_slice(b));
    let mut x = x0.to_vec();
    Gram::new(atoms).solve(&atb, weights, beta, inner, &mut x);
    Ok(x)
}

/// `sum_j w_j |x_j| + (beta / 2) ||b - A x||^2`.
pub fn lasso_objective(
    atoms: &DMatrix<f64>,
    b: &[f64],
    weights: &[f64],
    beta: f64,
    x: &[f64],
) -> f64 {
    let r = DVector::from_column_slice(b) - atoms * DVector::from_column_slice(x);
    let l1: f64 = weights.iter().zip(x).map(|(w, xj)| w * xj.abs()).sum();
    l1 + 0.5 * beta * r.norm_squared()
}

/// Largest violation of the lasso optimality conditions at `x`.
pub fn kkt_violation(
    atoms: &DMatrix<f64>,
    b: &[f64],
    weights: &[f64],
    beta: f64,
    x: &[f64],
) -> f64 {
    let r = DVector::from_column_slice(b) - atoms * DVector::from_column_slice(x);
    let corr = atoms.tr_mul(&r) * beta;
    x.iter()
        .zip(weights)
        .zip(corr.iter())
        .map(|((&xj, &wj), &cj)| kkt_term(cj, wj, xj))
        .fold(0.0, f64::max)
}
