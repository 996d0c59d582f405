//! First-order copula Markov chain for one ordinal series.
//!
//! Consecutive observations (Y_{t−1}, Y_t) have joint cdf C(F(y_{t−1}), F(y_t))
//! for a bivariate copula C, so the chain keeps the ordinal margins while C
//! controls persistence. A jump in time or a missing value restarts the chain.

use crate::copula::BivCopulaSpec;
use crate::error::{Error, ObsId, Result};
use crate::marginal::{check_series, LogLik, MarginalParams};
use crate::panel::OrdinalPanel;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesModel {
    pub marginal: MarginalParams,
    pub temporal: BivCopulaSpec,
}

/// Caches copula cdf values within one likelihood evaluation; with discrete
/// covariates the same (u, v) pairs recur many times.
pub struct CdfMemo<'a> {
    spec: &'a BivCopulaSpec,
    map: HashMap<(u64, u64), f64>,
}

impl<'a> CdfMemo<'a> {
    pub fn new(spec: &'a BivCopulaSpec) -> Self {
        CdfMemo { spec, map: HashMap::new() }
    }

    #[inline]
    pub fn cdf(&mut self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v.min(1.0);
        }
        if v >= 1.0 {
            return u;
        }
        let spec = self.spec;
        *self.map.entry((u.to_bits(), v.to_bits())).or_insert_with(|| spec.cdf(u, v))
    }
}

impl SeriesModel {
    pub fn new(marginal: MarginalParams, temporal: BivCopulaSpec) -> Result<Self> {
        let m = SeriesModel { marginal, temporal };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.marginal.validate()?;
        self.temporal.validate()
    }

    /// Conditional cdf values (P(Y_t ≤ y − 1 | ·), P(Y_t ≤ y | ·)). Without a
    /// predecessor these are the marginal cdf values. A predecessor with zero
    /// probability gives `None`.
    pub fn cond_interval(
        &self,
        y: u32,
        x: &[f64],
        prev: Option<(u32, &[f64])>,
        memo: &mut CdfMemo,
    ) -> Option<(f64, f64)> {
        let m = &self.marginal;
        let eta = m.eta(x);
        let v_lo = m.cdf_eta(y - 1, eta);
        let v_hi = m.cdf_eta(y, eta);
        let Some((y0, x0)) = prev else {
            return Some((v_lo, v_hi));
        };
        if self.temporal.is_independence() {
            return Some((v_lo, v_hi));
        }
        let eta0 = m.eta(x0);
        let u_lo = m.cdf_eta(y0 - 1, eta0);
        let u_hi = m.cdf_eta(y0, eta0);
        let f0 = u_hi - u_lo;
        if f0 <= 0.0 {
            return None;
        }
        let k = m.k();
        let cond = |v: f64, yy: u32, memo: &mut CdfMemo| -> f64 {
            if yy == 0 {
                0.0
            } else if yy >= k {
                1.0
            } else {
                ((memo.cdf(u_hi, v) - memo.cdf(u_lo, v)) / f0).clamp(0.0, 1.0)
            }
        };
        let lo = cond(v_lo, y - 1, memo);
        let hi = cond(v_hi, y, memo);
        Some((lo.min(hi), hi))
    }

    /// P(Y_t = y | Y_{t−1} = y_prev), computed from the four-term rectangle
    /// so the result keeps relative accuracy when small.
    pub fn trans_prob(&self, y: u32, x: &[f64], y0: u32, x0: &[f64], memo: &mut CdfMemo) -> Option<f64> {
        let m = &self.marginal;
        if self.temporal.is_independence() {
            return Some(m.pmf_eta(y, m.eta(x)));
        }
        let eta = m.eta(x);
        let eta0 = m.eta(x0);
        let (u_lo, u_hi) = (m.cdf_eta(y0 - 1, eta0), m.cdf_eta(y0, eta0));
        let (v_lo, v_hi) = (m.cdf_eta(y - 1, eta), m.cdf_eta(y, eta));
        let f0 = u_hi - u_lo;
        if f0 <= 0.0 {
            return None;
        }
        let rect = memo.cdf(u_hi, v_hi) - memo.cdf(u_lo, v_hi) - memo.cdf(u_hi, v_lo) + memo.cdf(u_lo, v_lo);
        Some((rect.max(0.0) / f0).min(1.0))
    }

    fn check_args(&self, y: u32, y_prev: u32, x_t: &[f64], x_prev: &[f64], lo: u32) -> Result<()> {
        self.validate()?;
        let k = self.marginal.k();
        if y < lo || y > k || y_prev < 1 || y_prev > k {
            return Err(Error::invalid(format!("categories ({y}, {y_prev}) out of range for K = {k}")));
        }
        let p = self.marginal.p();
        if x_t.len() != p || x_prev.len() != p {
            return Err(Error::invalid("covariate arity does not match beta"));
        }
        let eta0 = self.marginal.eta(x_prev);
        if self.marginal.cdf_eta(y_prev, eta0) - self.marginal.cdf_eta(y_prev - 1, eta0) <= 0.0 {
            return Err(Error::NullConditioning { category: y_prev });
        }
        Ok(())
    }
}

/// P(Y_t ≤ y_t | Y_{t−1} = y_prev) = [C(F(y_prev), F(y_t)) − C(F(y_prev − 1), F(y_t))] / f(y_prev).
pub fn transition_cdf(m: &SeriesModel, y_t: u32, y_prev: u32, x_t: &[f64], x_prev: &[f64]) -> Result<f64> {
    m.check_args(y_t, y_prev, x_t, x_prev, 0)?;
    if y_t == 0 {
        return Ok(0.0);
    }
    let mut memo = CdfMemo::new(&m.temporal);
    let (_, hi) = m
        .cond_interval(y_t, x_t, Some((y_prev, x_prev)), &mut memo)
        .ok_or(Error::NullConditioning { category: y_prev })?;
    Ok(hi)
}

/// P(Y_t = y_t | Y_{t−1} = y_prev).
pub fn transition_pmf(m: &SeriesModel, y_t: u32, y_prev: u32, x_t: &[f64], x_prev: &[f64]) -> Result<f64> {
    m.check_args(y_t, y_prev, x_t, x_prev, 1)?;
    let mut memo = CdfMemo::new(&m.temporal);
    m.trans_prob(y_t, x_t, y_prev, x_prev, &mut memo)
        .ok_or(Error::NullConditioning { category: y_prev })
}

/// Per-subject contributions log f(y_1) + Σ_t log f(y_t | y_{t−1}) of series `j`.
pub fn series_loglik_terms(m: &SeriesModel, panel: &OrdinalPanel, j: usize) -> Vec<LogLik> {
    let mut memo = CdfMemo::new(&m.temporal);
    let par = &m.marginal;
    panel
        .subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut ll = LogLik::zero();
            for o in s.series(j) {
                let at = || ObsId { subject: i, time: o.time, series: Some(j) };
                let p = match o.prev {
                    None => par.pmf_eta(o.y, par.eta(o.x)),
                    Some((y0, x0)) => m.trans_prob(o.y, o.x, y0, x0, &mut memo).unwrap_or(0.0),
                };
                ll.push(p, at);
            }
            ll
        })
        .collect()
}

/// Series log-likelihood with floored probabilities.
pub fn series_loglik_floored(m: &SeriesModel, panel: &OrdinalPanel, j: usize) -> LogLik {
    LogLik::total(&series_loglik_terms(m, panel, j))
}

/// Series log-likelihood; zero-probability observations are errors.
pub fn series_loglik(m: &SeriesModel, panel: &OrdinalPanel, j: usize) -> Result<f64> {
    m.validate()?;
    check_series(&m.marginal, panel, j)?;
    series_loglik_floored(m, panel, j).strict()
}
