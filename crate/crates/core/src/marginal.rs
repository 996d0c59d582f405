//! Ordinal regression margins.
//!
//! The cumulative probabilities are F(α_y + xᵀβ) with α_0 = −∞ and α_K = +∞.
//! Note the sign: a positive coefficient moves mass toward the *lower*
//! categories as the covariate grows, the opposite of the common
//! F(α_y − xᵀβ) convention.

use crate::error::{Error, ObsId, Result};
use crate::panel::OrdinalPanel;
use crate::special::{norm_cdf, norm_quantile, Sum};
use serde::{Deserialize, Serialize};

/// Probabilities below this are floored inside log-likelihoods.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Probit,
    Logit,
}

impl Link {
    #[inline]
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Link::Probit => norm_cdf(x),
            Link::Logit => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn quantile(self, p: f64) -> f64 {
        match self {
            Link::Probit => norm_quantile(p),
            Link::Logit => (p / (1.0 - p)).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalParams {
    pub beta: Vec<f64>,
    pub cutpoints: Vec<f64>,
    #[serde(default)]
    pub link: Link,
}

impl MarginalParams {
    pub fn new(beta: Vec<f64>, cutpoints: Vec<f64>, link: Link) -> Result<Self> {
        let m = MarginalParams { beta, cutpoints, link };
        m.validate()?;
        Ok(m)
    }

    /// Number of categories.
    pub fn k(&self) -> u32 {
        self.cutpoints.len() as u32 + 1
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutpoints.is_empty() {
            return Err(Error::invalid("at least one cutpoint (K >= 2) is required"));
        }
        if self.cutpoints.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::invalid("marginal parameters must be finite"));
        }
        if self.cutpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "cutpoints must be strictly increasing: {:?}",
                self.cutpoints
            )));
        }
        Ok(())
    }

    /// Linear predictor xᵀβ.
    #[inline]
    pub fn eta(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    /// F(α_y + η) for y in 0..=K, without argument checks.
    #[inline]
    pub fn cdf_eta(&self, y: u32, eta: f64) -> f64 {
        if y == 0 {
            0.0
        } else if y as usize > self.cutpoints.len() {
            1.0
        } else {
            self.link.cdf(self.cutpoints[y as usize - 1] + eta)
        }
    }

    /// P(Y = y) at linear predictor η, using the upper tail when that keeps
    /// more digits.
    #[inline]
    pub fn pmf_eta(&self, y: u32, eta: f64) -> f64 {
        let k = self.k();
        let lo = if y <= 1 { f64::NEG_INFINITY } else { self.cutpoints[y as usize - 2] + eta };
        let hi = if y >= k { f64::INFINITY } else { self.cutpoints[y as usize - 1] + eta };
        if lo > 0.0 {
            (self.link.cdf(-lo) - self.link.cdf(-hi)).max(0.0)
        } else {
            (self.link.cdf(hi) - self.link.cdf(lo)).max(0.0)
        }
    }

    fn check(&self, y: u32, x: &[f64], lo: u32) -> Result<()> {
        self.validate()?;
        if x.len() != self.beta.len() {
            return Err(Error::invalid(format!(
                "covariate vector has length {} but beta has {}",
                x.len(),
                self.beta.len()
            )));
        }
        if y < lo || y > self.k() {
            return Err(Error::invalid(format!("category {y} outside {lo}..={}", self.k())));
        }
        Ok(())
    }
}

/// F(α_y + xᵀβ); y = 0 gives 0 and y = K gives 1.
pub fn ordinal_cdf(par: &MarginalParams, y: u32, x: &[f64]) -> Result<f64> {
    par.check(y, x, 0)?;
    Ok(par.cdf_eta(y, par.eta(x)))
}

/// F(α_y + xᵀβ) − F(α_{y−1} + xᵀβ) for y in 1..=K.
pub fn ordinal_pmf(par: &MarginalParams, y: u32, x: &[f64]) -> Result<f64> {
    par.check(y, x, 1)?;
    Ok(par.pmf_eta(y, par.eta(x)))
}

/// Log-likelihood value with a record of floored probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub underflows: usize,
    pub first_underflow: Option<ObsId>,
}

impl LogLik {
    pub fn zero() -> Self {
        LogLik { value: 0.0, underflows: 0, first_underflow: None }
    }

    /// Adds log(max(p, floor)), recording an underflow when p is below it.
    #[inline]
    pub fn push(&mut self, p: f64, at: impl FnOnce() -> ObsId) {
        if p > PROB_FLOOR {
            self.value += p.ln();
        } else {
            self.value += PROB_FLOOR.ln();
            self.underflows += 1;
            if self.first_underflow.is_none() {
                self.first_underflow = Some(at());
            }
        }
    }

    /// Sum of several contributions, with compensated summation.
    pub fn total<'a>(terms: impl IntoIterator<Item = &'a LogLik>) -> LogLik {
        let mut acc = Sum::default();
        let mut out = LogLik::zero();
        for t in terms {
            acc.add(t.value);
            out.merge(t);
        }
        out.value = acc.total();
        out
    }

    pub fn merge(&mut self, other: &LogLik) {
        self.value += other.value;
        self.underflows += other.underflows;
        if self.first_underflow.is_none() {
            self.first_underflow = other.first_underflow;
        }
    }

    /// The value, or a zero-probability error if anything was floored.
    pub fn strict(self) -> Result<f64> {
        match self.first_underflow {
            Some(id) => Err(Error::ZeroProbability(id)),
            None => Ok(self.value),
        }
    }
}

/// Per-subject log-likelihood contributions of series `j` under independence
/// over time.
pub fn loglik_independent_terms(par: &MarginalParams, panel: &OrdinalPanel, j: usize) -> Vec<LogLik> {
    panel
        .subjects
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut ll = LogLik::zero();
            for o in s.series(j) {
                let p = par.pmf_eta(o.y, par.eta(o.x));
                ll.push(p, || ObsId { subject: i, time: o.time, series: Some(j) });
            }
            ll
        })
        .collect()
}

/// Σ_i Σ_t log f(y_itj) with floored probabilities and underflow tracking.
pub fn loglik_independent_floored(par: &MarginalParams, panel: &OrdinalPanel, j: usize) -> LogLik {
    LogLik::total(&loglik_independent_terms(par, panel, j))
}

/// Independence log-likelihood of series `j`; a zero-probability
/// observation is an error naming it.
pub fn loglik_independent(par: &MarginalParams, panel: &OrdinalPanel, j: usize) -> Result<f64> {
    par.validate()?;
    check_series(par, panel, j)?;
    loglik_independent_floored(par, panel, j).strict()
}

pub(crate) fn check_series(par: &MarginalParams, panel: &OrdinalPanel, j: usize) -> Result<()> {
    if j >= panel.d {
        return Err(Error::invalid(format!("series {j} does not exist (d = {})", panel.d)));
    }
    for (i, s) in panel.subjects.iter().enumerate() {
        for r in &s.records {
            if let Some(y) = r.responses[j] {
                if y < 1 || y > par.k() {
                    return Err(Error::invalid(format!(
                        "category {y} outside 1..={} at subject {i}, time {}, series {j}",
                        par.k(),
                        r.time
                    )));
                }
                if r.covariates[j].len() != par.p() {
                    return Err(Error::invalid(format!(
                        "covariate arity {} != {} at subject {i}, time {}",
                        r.covariates[j].len(),
                        par.p(),
                        r.time
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Record, Subject};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel_of(obs: &[(u32, f64)]) -> OrdinalPanel {
        OrdinalPanel {
            d: 1,
            subjects: obs
                .iter()
                .enumerate()
                .map(|(i, &(y, x))| Subject {
                    id: i.to_string(),
                    records: vec![Record { time: 1, responses: vec![Some(y)], covariates: vec![vec![x]] }],
                })
                .collect(),
        }
    }

    #[test]
    fn probit_reference_values() {
        let m = MarginalParams::new(vec![0.0], vec![-1.0, 1.0], Link::Probit).unwrap();
        assert!((ordinal_cdf(&m, 1, &[0.3]).unwrap() - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((ordinal_cdf(&m, 2, &[0.3]).unwrap() - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert_eq!(ordinal_cdf(&m, 0, &[0.3]).unwrap(), 0.0);
        assert_eq!(ordinal_cdf(&m, 3, &[0.3]).unwrap(), 1.0);
        let p: Vec<f64> = (1..=3).map(|y| ordinal_pmf(&m, y, &[0.0]).unwrap()).collect();
        assert!((p[1] - 0.682_689_492_137_085_9).abs() < 1e-15);
        let l = MarginalParams::new(vec![], vec![0.0], Link::Logit).unwrap();
        assert_eq!(ordinal_cdf(&l, 1, &[]).unwrap(), 0.5);
    }

    #[test]
    fn sign_convention() {
        // larger x with positive beta lowers the expected category
        let m = MarginalParams::new(vec![1.0], vec![0.0], Link::Probit).unwrap();
        assert!(ordinal_pmf(&m, 1, &[2.0]).unwrap() > ordinal_pmf(&m, 1, &[0.0]).unwrap());
    }

    #[test]
    fn pmf_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = rng.random_range(2..8);
            let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.random_range(-3.0..3.0)).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let link = if rng.random() { Link::Probit } else { Link::Logit };
            let m = MarginalParams::new(vec![rng.random_range(-2.0..2.0)], cuts, link).unwrap();
            let x = [rng.random_range(-2.0..2.0)];
            let s: f64 = (1..=m.k()).map(|y| ordinal_pmf(&m, y, &x).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loglik_by_hand() {
        let m = MarginalParams::new(vec![0.0], vec![-1.0, 1.0], Link::Probit).unwrap();
        let p: [f64; 3] = [0.158_655_253_931_457_05, 0.682_689_492_137_085_9, 0.158_655_253_931_457_05];
        let obs = [(1, 0.5), (2, 0.1), (2, -1.0), (3, 2.0), (2, 0.0)];
        let expected = p[0].ln() + 3.0 * p[1].ln() + p[2].ln();
        let got = loglik_independent(&m, &panel_of(&obs), 0).unwrap();
        assert!((got - expected).abs() < 1e-12);
        let one = loglik_independent(&m, &panel_of(&[(2, 0.0)]), 0).unwrap();
        let two = loglik_independent(&m, &panel_of(&[(2, 0.0), (2, 0.0)]), 0).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn zero_probability_is_reported() {
        let m = MarginalParams::new(vec![1.0], vec![-1.0, 1.0], Link::Probit).unwrap();
        let e = loglik_independent(&m, &panel_of(&[(2, 0.0), (1, -60.0)]), 0).unwrap_err();
        assert!(matches!(e, Error::ZeroProbability(ObsId { subject: 1, time: 1, series: Some(0) })));
        let f = loglik_independent_floored(&m, &panel_of(&[(1, -60.0)]), 0);
        assert_eq!(f.underflows, 1);
        assert!(f.value.is_finite());
    }

    #[test]
    fn rejects_unordered_cutpoints() {
        assert!(MarginalParams::new(vec![], vec![0.5, 0.5], Link::Probit).is_err());
        let bad = MarginalParams { beta: vec![], cutpoints: vec![1.0, 0.0], link: Link::Probit };
        assert!(ordinal_cdf(&bad, 1, &[]).is_err());
    }
}
