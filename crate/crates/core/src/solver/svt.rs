//! Singular value thresholding and nuclear norms of flattened rasters.
//!
//! Vectors are interpreted column-major, which is also nalgebra's storage
//! order, so reshaping is a copy with no index shuffling.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Soft thresholding: `sign(t) * max(|t| - tau, 0)`.
#[inline]
pub fn soft_threshold(t: f64, tau: f64) -> f64 {
    if t > tau {
        t - tau
    } else if t < -tau {
        t + tau
    } else {
        0.0
    }
}

fn reshape(v: &[f64], shape: (usize, usize)) -> Result<DMatrix<f64>> {
    let (h, w) = shape;
    if h * w != v.len() {
        return Err(Error::arg(format!(
            "vector of length {} does not match shape {h}x{w}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(h, w, v))
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            iteration: 0,
            message: "SVD input contains non-finite values".into(),
        })
    }
}

/// Proximal operator of `tau * ||Mat(.)||_*` applied to `v`.
pub fn svt(v: &[f64], tau: f64, shape: (usize, usize)) -> Result<Vec<f64>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::arg(format!(
            "threshold must be non-negative, got {tau}"
        )));
    }
    let m = reshape(v, shape)?;
    check_finite(v)?;
    if tau == 0.0 {
        return Ok(v.to_vec());
    }
    let mut svd = m.svd(true, true);
    let mut any = false;
    for s in svd.singular_values.iter_mut() {
        *s = soft_threshold(*s, tau);
        any |= *s > 0.0;
    }
    if !any {
        return Ok(vec![0.0; v.len()]);
    }
    let out = svd.recompose().map_err(|e| Error::Numeric {
        iteration: 0,
        message: e.to_string(),
    })?;
    Ok(out.as_slice().to_vec())
}

/// Singular values of `Mat(v)`, descending.
pub fn singular_values(v: &[f64], shape: (usize, usize)) -> Result<Vec<f64>> {
    let m = reshape(v, shape)?;
    check_finite(v)?;
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Nuclear norm (sum of singular values) of `Mat(v)`.
pub fn nuclear_norm(v: &[f64], shape: (usize, usize)) -> Result<f64> {
    Ok(singular_values(v, shape)?.iter().sum())
}
