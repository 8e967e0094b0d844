//! Ordinary least squares with classical standard errors.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub p_value: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    pub r2: f64,
    pub n: usize,
    pub k: usize,
    /// `(X'X)^{-1}`.
    #[serde(skip)]
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn df(&self) -> usize {
        self.n - self.k
    }

    /// Two-sided critical value of the Student t with the residual degrees
    /// of freedom.
    pub fn t_critical(&self, level: f64) -> f64 {
        t_quantile(0.5 + level / 2.0, self.df() as f64)
    }
}

pub fn t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).map(|d| d.inverse_cdf(p)).unwrap_or(f64::NAN)
}

/// Regresses `y` on the columns of `x` (row-major `n x k`, no implicit
/// intercept). Uses an SVD so nearly collinear designs do not blow up.
pub fn ols(y: &[f64], x: &[f64], k: usize) -> Result<OlsFit> {
    let n = y.len();
    if k == 0 || x.len() != n * k {
        return Err(Error::InvalidArgument(format!(
            "design has {} entries, expected {n} x {k}",
            x.len()
        )));
    }
    if n <= k {
        return Err(Error::Degenerate(format!("{n} observations for {k} regressors")));
    }
    let xm = DMatrix::from_row_slice(n, k, x);
    let yv = DVector::from_column_slice(y);
    let svd = xm.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * n as f64;
    if svd.singular_values.min() <= tol {
        return Err(Error::Singular("regressors are collinear".into()));
    }
    let beta = svd
        .solve(&yv, tol)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let v = svd.v_t.as_ref().expect("requested").transpose();
    let inv_s2 = svd.singular_values.map(|s| 1.0 / (s * s));
    let xtx_inv = &v * DMatrix::from_diagonal(&inv_s2) * v.transpose();
    let fitted = &xm * &beta;
    let resid = &yv - fitted;
    let rss = resid.dot(&resid);
    let df = (n - k) as f64;
    let sigma2 = rss / df;
    let ybar = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - ybar).powi(2)).sum();
    let t_dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut se = Vec::with_capacity(k);
    let mut t_stat = Vec::with_capacity(k);
    let mut p_value = Vec::with_capacity(k);
    for j in 0..k {
        let s = (sigma2 * xtx_inv[(j, j)]).sqrt();
        let t = beta[j] / s;
        se.push(s);
        t_stat.push(t);
        p_value.push(2.0 * (1.0 - t_dist.cdf(t.abs())));
    }
    Ok(OlsFit {
        coef: beta.as_slice().to_vec(),
        se,
        t_stat,
        p_value,
        residuals: resid.as_slice().to_vec(),
        sigma2,
        r2: if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN },
        n,
        k,
        xtx_inv,
    })
}

/// Logistic regression of `y` in {-1, +1} on the columns of `x` by
/// iteratively reweighted least squares. Returns the coefficients.
pub fn logit_irls(y: &[f64], x: &[f64], k: usize, max_iter: usize) -> Result<Vec<f64>> {
    let n = y.len();
    if x.len() != n * k || n <= k {
        return Err(Error::InvalidArgument("logit design has the wrong shape".into()));
    }
    let mut beta = DVector::zeros(k);
    for _ in 0..max_iter {
        let mut xtwx = DMatrix::<f64>::zeros(k, k);
        let mut grad = DVector::<f64>::zeros(k);
        for i in 0..n {
            let row = &x[i * k..(i + 1) * k];
            let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let p = crate::params::logistic(eta);
            let w = (p * (1.0 - p)).max(1e-12);
            let target = if y[i] > 0.0 { 1.0 } else { 0.0 };
            for a in 0..k {
                grad[a] += row[a] * (target - p);
                for b in 0..=a {
                    xtwx[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let step = xtwx
            .cholesky()
            .ok_or_else(|| Error::Singular("logit information matrix".into()))?
            .solve(&grad);
        beta += &step;
        if step.amax() < 1e-10 * (1.0 + beta.amax()) {
            break;
        }
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("logit fit diverged (separable data?)".into()));
    }
    Ok(beta.as_slice().to_vec())
}
