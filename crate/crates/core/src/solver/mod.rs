//! Hierarchical adaptive sparse + low-rank regression.
//!
//! Solves
//!
//! ```text
//! min_{x, L}  alpha ||Mat(L)||_*  +  sum_j pi(|x_j|)   s.t.  y = A x + L
//! ```
//!
//! by ADMM. Each outer iteration runs one SVT step for `L`, one reweighted
//! lasso for `x` (weights `pi'(|x_j|)` taken from the previous iterate), and
//! a dual ascent step for the multiplier `z`.

pub mod bessel;
mod dictionary;
mod lasso;
mod penalty;
mod svt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dictionary::{build_dictionary, ClassId, Dictionary};
pub use lasso::{kkt_violation, lasso_objective, weighted_lasso, Gram, LassoSettings};
pub use penalty::{penalty_weight, PenaltyFunction};
pub use svt::{nuclear_norm, singular_values, soft_threshold, svt};

pub const DEFAULT_ALPHA: f64 = 100.0;
pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_REL_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 500;

/// Denominator floor of the relative-change test.
const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Nuclear-norm weight.
    pub alpha: f64,
    /// Augmented-Lagrangian penalty.
    pub beta: f64,
    pub penalty: PenaltyFunction,
    /// (height, width) used to reshape L.
    pub image_shape: (usize, usize),
    pub rel_tol: f64,
    pub max_iters: usize,
    pub lasso_inner: LassoSettings,
}

impl SolverConfig {
    pub fn new(image_shape: (usize, usize)) -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            penalty: PenaltyFunction::default(),
            image_shape,
            rel_tol: DEFAULT_REL_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            lasso_inner: LassoSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::arg(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("rel_tol", self.rel_tol)?;
        positive("lasso tol", self.lasso_inner.tol)?;
        if self.max_iters == 0 || self.lasso_inner.max_sweeps == 0 {
            return Err(Error::arg("iteration limits must be positive"));
        }
        if self.image_shape.0 == 0 || self.image_shape.1 == 0 {
            return Err(Error::arg("image shape must be positive"));
        }
        self.penalty.validate()
    }

    fn dim(&self) -> usize {
        self.image_shape.0 * self.image_shape.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub x: Vec<f64>,
    /// Error term, flattened column-major.
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `||y - A x - L||_2` at exit.
    pub primal_residual: f64,
    /// `alpha ||Mat(L)||_* + sum_j pi(|x_j|)` after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Objective of the constrained problem at `(x, L)` (constraint ignored).
pub fn objective(x: &[f64], l: &[f64], cfg: &SolverConfig) -> Result<f64> {
    let nuc = nuclear_norm(l, cfg.image_shape)?;
    let pen: f64 = x.iter().map(|xj| cfg.penalty.value(xj.abs())).sum();
    Ok(cfg.alpha * nuc + pen)
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / old.max(NORM_FLOOR)
}

fn numeric(iteration: usize, what: &str) -> Error {
    Error::Numeric {
        iteration,
        message: format!("{what} became non-finite"),
    }
}

/// Runs ADMM from `x = 0, L = 0, z = 1`.
pub fn admm_solve(dict: &Dictionary, y: &[f64], cfg: &SolverConfig) -> Result<SolverResult> {
    cfg.validate()?;
    let d = dict.dim();
    let n = dict.len();
    if y.len() != d {
        return Err(Error::arg(format!(
            "observation has length {}, dictionary rows {d}",
            y.len()
        )));
    }
    if cfg.dim() != d {
        return Err(Error::arg(format!(
            "image shape {:?} does not match feature dimension {d}",
            cfg.image_shape
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(numeric(0, "observation"));
    }

    let atoms = dict.atoms();
    let gram = Gram::new(atoms);
    let beta = cfg.beta;
    let tau = cfg.alpha / beta;
    let y = DVector::from_column_slice(y);

    let mut x = vec![0.0; n];
    let mut l = DVector::<f64>::zeros(d);
    let mut z = DVector::<f64>::from_element(d, 1.0);
    let mut weights = vec![0.0; n];
    let mut ax = DVector::<f64>::zeros(d);
    let mut x_norm = 0.0;
    let mut l_norm = 0.0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=cfg.max_iters {
        iterations = k;

        // L-update: SVT of y - A x + z / beta
        let target = &y - &ax + &z / beta;
        let l_new = DVector::from_vec(svt(target.as_slice(), tau, cfg.image_shape).map_err(
            |e| match e {
                Error::Numeric { message, .. } => Error::Numeric {
                    iteration: k,
                    message,
                },
                other => other,
            },
        )?);

        // x-update: one reweighting step, weights from the previous x
        let rhs = &y - &l_new + &z / beta;
        let atb = atoms.tr_mul(&rhs);
        cfg.penalty
            .weights_into(&x, &mut weights)
            .map_err(|_| numeric(k, "x"))?;
        let mut x_new = x.clone();
        gram.solve(&atb, &weights, beta, &cfg.lasso_inner, &mut x_new);
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(numeric(k, "x"));
        }
        ax = atoms * DVector::from_column_slice(&x_new);

        // dual ascent
        let residual = &y - &ax - &l_new;
        z += &residual * beta;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(numeric(k, "z"));
        }

        let x_norm_new = x_new.iter().map(|v| v * v).sum::<f64>().sqrt();
        let l_norm_new = l_new.norm();
        let done = relative_change(x_norm_new, x_norm) < cfg.rel_tol
            && relative_change(l_norm_new, l_norm) < cfg.rel_tol;

        x = x_new;
        l = l_new;
        x_norm = x_norm_new;
        l_norm = l_norm_new;
        trace.push(objective(&x, l.as_slice(), cfg)?);

        if done {
            converged = true;
            break;
        }
    }

    let primal_residual = (&y - &ax - &l).norm();
    Ok(SolverResult {
        x,
        l: l.as_slice().to_vec(),
        z: z.as_slice().to_vec(),
        iterations,
        converged,
        primal_residual,
        objective_trace: trace,
    })
}
