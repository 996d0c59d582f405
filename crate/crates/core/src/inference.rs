//! Standard errors, Wald tests, the Vuong comparison and the jackknife.

use crate::error::{Error, Result};
use crate::optim::numerical_hessian;
use crate::panel::OrdinalPanel;
use crate::special::norm_cdf;
use crate::transform::jacobian;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative step of the numerical Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;

/// Covariance of the maximizer on the free scale: the inverse of the
/// negative numerical Hessian.
pub fn hessian_cov(f: impl FnMut(&[f64]) -> f64, argmax: &[f64]) -> Result<DMatrix<f64>> {
    let mut f = f;
    let n = argmax.len();
    let h = numerical_hessian(&mut f, argmax, HESSIAN_STEP);
    let neg = DMatrix::from_fn(n, n, |i, j| -h[i][j]);
    let eig = SymmetricEigen::new(neg.clone());
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        return Err(Error::HessianNotPd { eigenvalues: ev });
    }
    let inv = eig.eigenvectors.clone()
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v))
        * eig.eigenvectors.transpose();
    Ok(inv)
}

/// Standard errors of `to_natural(argmax)`: the free-scale covariance from
/// [`hessian_cov`] mapped by the delta method.
pub fn hessian_se(
    f: impl FnMut(&[f64]) -> f64,
    argmax: &[f64],
    to_natural: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<Vec<f64>> {
    let cov = hessian_cov(f, argmax)?;
    Ok(delta_se(&cov, &to_natural, argmax))
}

pub fn delta_se(cov: &DMatrix<f64>, to_natural: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<f64> {
    let jac = jacobian(to_natural, x, 1e-6);
    jac.iter()
        .map(|row| {
            let mut v = 0.0;
            for a in 0..row.len() {
                for b in 0..row.len() {
                    v += row[a] * cov[(a, b)] * row[b];
                }
            }
            v.max(0.0).sqrt()
        })
        .collect()
}

/// Two-sided standard-normal tail probability of `z`.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * norm_cdf(-z.abs())).min(1.0)
}

/// Z = estimate/se with its two-sided normal p-value.
pub fn wald_test(estimate: f64, se: f64) -> Result<(f64, f64)> {
    if !(se > 0.0) {
        return Err(Error::domain("Wald test", se, "se > 0"));
    }
    let z = estimate / se;
    Ok((z, two_sided_p(z)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VuongResult {
    pub z0: f64,
    pub p_value: f64,
    pub d_bar: f64,
    pub s: f64,
    pub n: usize,
}

/// Vuong statistic z₀ = √N·D̄/s with Dᵢ = log f⁽²⁾ᵢ − log f⁽¹⁾ᵢ; positive
/// values favour model 2.
pub fn vuong_test(model1: &[f64], model2: &[f64]) -> Result<VuongResult> {
    if model1.len() != model2.len() {
        return Err(Error::invalid("Vuong test needs equally many terms from both models"));
    }
    let n = model1.len();
    if n < 2 {
        return Err(Error::invalid("Vuong test needs at least two subjects"));
    }
    let d: Vec<f64> = model1.iter().zip(model2).map(|(a, b)| b - a).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite log-likelihood term in Vuong test"));
    }
    let d_bar = d.iter().sum::<f64>() / n as f64;
    let s = (d.iter().map(|v| (v - d_bar).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let scale = d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if s <= 1e-12 * scale {
        return Err(Error::DegenerateVariance);
    }
    let z0 = (n as f64).sqrt() * d_bar / s;
    Ok(VuongResult { z0, p_value: two_sided_p(z0), d_bar, s, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifeResult {
    pub se: Vec<f64>,
    pub replicates: usize,
    /// Deleted subject and error message of each failed replicate.
    pub dropped: Vec<(usize, String)>,
}

pub const JACKKNIFE_MIN_SUBJECTS: usize = 30;

/// Delete-one-subject jackknife of the estimator `fit`. Failed replicates
/// are dropped and listed.
pub fn jackknife_se(
    fit: impl Fn(&OrdinalPanel) -> Result<Vec<f64>> + Sync,
    panel: &OrdinalPanel,
    min_subjects: usize,
) -> Result<JackknifeResult> {
    let n = panel.n();
    if n < min_subjects.max(2) {
        return Err(Error::invalid(format!(
            "jackknife needs at least {} subjects, found {n}",
            min_subjects.max(2)
        )));
    }
    let reps: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| fit(&panel.select((0..n).filter(|&k| k != i))))
        .collect();
    let mut ok = Vec::new();
    let mut dropped = Vec::new();
    for (i, r) in reps.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => dropped.push((i, e.to_string())),
        }
    }
    let m = ok.len();
    if m < 2 {
        return Err(Error::invalid("fewer than two jackknife replicates succeeded"));
    }
    let p = ok[0].len();
    if ok.iter().any(|v| v.len() != p) {
        return Err(Error::invalid("jackknife replicates returned different parameter counts"));
    }
    let se = (0..p)
        .map(|k| {
            let mean = ok.iter().map(|v| v[k]).sum::<f64>() / m as f64;
            let ss: f64 = ok.iter().map(|v| (v[k] - mean).powi(2)).sum();
            ((m - 1) as f64 / m as f64 * ss).sqrt()
        })
        .collect();
    Ok(JackknifeResult { se, replicates: m, dropped })
}
