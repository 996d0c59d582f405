//! The d-variate model: an MVN or MVT copula over the per-series conditional
//! distributions given each series' own past.
//!
//! Every likelihood term is one d-dimensional rectangle probability whose
//! limits are copula-scale quantiles of the per-series conditional cdfs.

use crate::error::{Error, ObsId, Result};
use crate::lattice::QmcConfig;
use crate::marginal::LogLik;
use crate::markov::{CdfMemo, SeriesModel};
use crate::panel::OrdinalPanel;
use crate::rect::{mvn_rect, mvt_rect, CorrelationMatrix, Rectangle};
use crate::special::{norm_quantile, t_quantile};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "copula", rename_all = "lowercase")]
pub enum LinkCopula {
    Mvn,
    Mvt { nu: f64 },
}

impl LinkCopula {
    pub fn name(&self) -> String {
        match self {
            LinkCopula::Mvn => "MVN".into(),
            LinkCopula::Mvt { nu } => format!("MVT(nu={nu})"),
        }
    }

    /// Univariate quantile on the copula scale; 0 and 1 map to ∓∞.
    #[inline]
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            LinkCopula::Mvn => norm_quantile(u),
            LinkCopula::Mvt { nu } => t_quantile(u, nu),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LinkCopula::Mvt { nu } if !(nu > 0.0 && nu.is_finite()) => Err(Error::domain("MVT", nu, "nu > 0")),
            _ => Ok(()),
        }
    }

    /// Rectangle probability under this copula's latent distribution.
    pub fn rect_prob(&self, rect: &Rectangle, corr: &CorrelationMatrix, cfg: &QmcConfig) -> Result<(f64, f64)> {
        match *self {
            LinkCopula::Mvn => mvn_rect(rect, corr, cfg),
            LinkCopula::Mvt { nu } => mvt_rect(rect, corr, nu, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    pub series: Vec<SeriesModel>,
    pub corr: CorrelationMatrix,
    pub link: LinkCopula,
}

impl JointParams {
    pub fn new(series: Vec<SeriesModel>, corr: CorrelationMatrix, link: LinkCopula) -> Result<Self> {
        let jp = JointParams { series, corr, link };
        jp.validate()?;
        Ok(jp)
    }

    pub fn d(&self) -> usize {
        self.series.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::invalid("the joint model needs at least one series"));
        }
        if self.corr.dim() != self.series.len() {
            return Err(Error::invalid(format!(
                "correlation matrix is {}x{} but there are {} series",
                self.corr.dim(),
                self.corr.dim(),
                self.series.len()
            )));
        }
        for s in &self.series {
            s.validate()?;
        }
        self.link.validate()
    }

    fn check_obs(&self, y: &[u32], x: &[Vec<f64>]) -> Result<()> {
        if y.len() != self.d() || x.len() != self.d() {
            return Err(Error::invalid("observation does not have one entry per series"));
        }
        for (j, s) in self.series.iter().enumerate() {
            if y[j] < 1 || y[j] > s.marginal.k() {
                return Err(Error::invalid(format!("category {} out of range for series {j}", y[j])));
            }
            if x[j].len() != s.marginal.p() {
                return Err(Error::invalid(format!("covariate arity mismatch for series {j}")));
            }
        }
        Ok(())
    }

    /// Maps per-series cdf intervals to a copula-scale rectangle.
    pub fn rectangle(&self, intervals: &[(f64, f64)]) -> Rectangle {
        Rectangle {
            lower: intervals.iter().map(|&(lo, _)| self.link.quantile(lo)).collect(),
            upper: intervals.iter().map(|&(_, hi)| self.link.quantile(hi)).collect(),
        }
    }
}

/// Joint pmf of the first observation, with its QMC standard error.
pub fn joint_pmf_initial(jp: &JointParams, y: &[u32], x: &[Vec<f64>], cfg: &QmcConfig) -> Result<(f64, f64)> {
    jp.validate()?;
    jp.check_obs(y, x)?;
    let iv: Vec<(f64, f64)> = jp
        .series
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut memo = CdfMemo::new(&s.temporal);
            s.cond_interval(y[j], &x[j], None, &mut memo).expect("no conditioning")
        })
        .collect();
    jp.link.rect_prob(&jp.rectangle(&iv), &jp.corr, cfg)
}

/// Joint conditional pmf of y_t given y_{t−1}, with its QMC standard error.
pub fn joint_pmf_transition(
    jp: &JointParams,
    y_t: &[u32],
    y_prev: &[u32],
    x_t: &[Vec<f64>],
    x_prev: &[Vec<f64>],
    cfg: &QmcConfig,
) -> Result<(f64, f64)> {
    jp.validate()?;
    jp.check_obs(y_t, x_t)?;
    jp.check_obs(y_prev, x_prev)?;
    let mut iv = Vec::with_capacity(jp.d());
    for (j, s) in jp.series.iter().enumerate() {
        let mut memo = CdfMemo::new(&s.temporal);
        let v = s
            .cond_interval(y_t[j], &x_t[j], Some((y_prev[j], &x_prev[j])), &mut memo)
            .ok_or(Error::NullConditioning { category: y_prev[j] })?;
        iv.push(v);
    }
    jp.link.rect_prob(&jp.rectangle(&iv), &jp.corr, cfg)
}

/// Conditional-cdf intervals of every complete record, deduplicated. They
/// depend only on the series models, so the table can be reused while the
/// correlation matrix or link copula varies.
#[derive(Debug, Clone)]
pub struct TermTable {
    /// Distinct per-series interval vectors.
    pub unique: Vec<Vec<(f64, f64)>>,
    /// Per subject, each term's location and index into `unique`; `None`
    /// when some series conditions on a zero-probability predecessor.
    pub subjects: Vec<Vec<(ObsId, Option<usize>)>>,
}

impl TermTable {
    pub fn build(series: &[SeriesModel], panel: &OrdinalPanel) -> Self {
        let mut memos: Vec<CdfMemo> = series.iter().map(|s| CdfMemo::new(&s.temporal)).collect();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut unique = Vec::new();
        let subjects = panel
            .subjects
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.complete_records()
                    .into_iter()
                    .map(|(k, linked)| {
                        let r = &s.records[k];
                        let prev = if linked { Some(&s.records[k - 1]) } else { None };
                        let mut iv = Vec::with_capacity(series.len());
                        for (j, m) in series.iter().enumerate() {
                            let y = r.responses[j].expect("complete record");
                            let p = prev.map(|p| (p.responses[j].expect("complete record"), p.covariates[j].as_slice()));
                            match m.cond_interval(y, &r.covariates[j], p, &mut memos[j]) {
                                Some(v) => iv.push(v),
                                None => break,
                            }
                        }
                        let at = ObsId { subject: i, time: r.time, series: None };
                        if iv.len() < series.len() {
                            return (at, None);
                        }
                        let key: Vec<u64> = iv.iter().flat_map(|&(a, b)| [a.to_bits(), b.to_bits()]).collect();
                        let u = *index.entry(key).or_insert_with(|| {
                            unique.push(iv);
                            unique.len() - 1
                        });
                        (at, Some(u))
                    })
                    .collect()
            })
            .collect();
        TermTable { unique, subjects }
    }

    /// Copula-scale rectangles of the distinct terms.
    pub fn rectangles(&self, link: &LinkCopula) -> Vec<Rectangle> {
        self.unique
            .iter()
            .map(|iv| Rectangle {
                lower: iv.iter().map(|&(lo, _)| link.quantile(lo)).collect(),
                upper: iv.iter().map(|&(_, hi)| link.quantile(hi)).collect(),
            })
            .collect()
    }

    /// Per-subject log-likelihood contributions given the rectangles of
    /// [`TermTable::rectangles`].
    pub fn loglik_terms(
        &self,
        rects: &[Rectangle],
        link: &LinkCopula,
        corr: &CorrelationMatrix,
        cfg: &QmcConfig,
    ) -> Result<Vec<LogLik>> {
        let probs = rects
            .par_iter()
            .map(|r| link.rect_prob(r, corr, cfg).map(|v| v.0))
            .collect::<Result<Vec<f64>>>()?;
        Ok(self
            .subjects
            .iter()
            .map(|sub| {
                let mut ll = LogLik::zero();
                for &(at, u) in sub {
                    ll.push(u.map_or(0.0, |u| probs[u]), || at);
                }
                ll
            })
            .collect())
    }

    pub fn n_terms(&self) -> usize {
        self.subjects.iter().map(Vec::len).sum()
    }
}

/// Per-subject terms Σ_t log f(y_it | y_i,t−1) of the joint model.
pub fn joint_loglik_terms(jp: &JointParams, panel: &OrdinalPanel, cfg: &QmcConfig) -> Result<Vec<LogLik>> {
    jp.validate()?;
    check_panel(jp, panel)?;
    let table = TermTable::build(&jp.series, panel);
    table.loglik_terms(&table.rectangles(&jp.link), &jp.link, &jp.corr, cfg)
}

/// Joint log-likelihood with floored probabilities.
pub fn joint_loglik_floored(jp: &JointParams, panel: &OrdinalPanel, cfg: &QmcConfig) -> Result<LogLik> {
    Ok(LogLik::total(&joint_loglik_terms(jp, panel, cfg)?))
}

/// Σ_i [log f(y_i1) + Σ_{t≥2} log f(y_it | y_i,t−1)]; zero-probability
/// terms are errors.
pub fn joint_loglik(jp: &JointParams, panel: &OrdinalPanel, cfg: &QmcConfig) -> Result<f64> {
    joint_loglik_floored(jp, panel, cfg)?.strict()
}

pub(crate) fn check_panel(jp: &JointParams, panel: &OrdinalPanel) -> Result<()> {
    let ks: Vec<u32> = jp.series.iter().map(|s| s.marginal.k()).collect();
    let ps: Vec<usize> = jp.series.iter().map(|s| s.marginal.p()).collect();
    panel.validate(&ks, &ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{BivCopulaFamily, BivCopulaSpec};
    use crate::marginal::{ordinal_pmf, Link, MarginalParams};
    use crate::markov::transition_pmf;

    fn cfg() -> QmcConfig {
        QmcConfig { seed: 1, shifts: 8, points_per_shift: 1024, max_dim: 8, ..Default::default() }
    }

    fn series(fam: BivCopulaFamily, theta: f64, cuts: Vec<f64>, beta: f64) -> SeriesModel {
        SeriesModel::new(
            MarginalParams::new(vec![beta], cuts, Link::Probit).unwrap(),
            BivCopulaSpec::new(fam, theta).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_factorizes() {
        let s1 = series(BivCopulaFamily::Frank, 4.0, vec![-0.5, 0.5], 0.3);
        let s2 = series(BivCopulaFamily::Gumbel, 1.8, vec![0.2], -0.4);
        let jp = JointParams::new(vec![s1.clone(), s2.clone()], CorrelationMatrix::identity(2), LinkCopula::Mvn).unwrap();
        let x = vec![vec![0.7], vec![-1.0]];
        let (p, se) = joint_pmf_initial(&jp, &[2, 1], &x, &cfg()).unwrap();
        let q = ordinal_pmf(&s1.marginal, 2, &x[0]).unwrap() * ordinal_pmf(&s2.marginal, 1, &x[1]).unwrap();
        assert!((p - q).abs() <= 3.0 * se + 1e-12);
        let xp = vec![vec![0.1], vec![0.4]];
        let (p, se) = joint_pmf_transition(&jp, &[3, 2], &[1, 1], &x, &xp, &cfg()).unwrap();
        let q = transition_pmf(&s1, 3, 1, &x[0], &xp[0]).unwrap() * transition_pmf(&s2, 2, 1, &x[1], &xp[1]).unwrap();
        assert!((p - q).abs() <= 3.0 * se + 1e-12, "{p} {q} {se}");
    }

    #[test]
    fn cells_partition_unity() {
        let s = |t| series(BivCopulaFamily::Bvn, t, vec![-0.6, 0.4], 0.0);
        let corr = CorrelationMatrix::from_upper(3, &[0.3, 0.5, 0.2]).unwrap();
        for link in [LinkCopula::Mvn, LinkCopula::Mvt { nu: 5.0 }] {
            let jp = JointParams::new(vec![s(0.2), s(0.5), s(0.7)], corr.clone(), link).unwrap();
            let x = vec![vec![0.0]; 3];
            let (mut tot, mut var) = (0.0, 0.0);
            let mut first = [0.0; 3];
            for a in 1..=3 {
                for b in 1..=3 {
                    for c in 1..=3 {
                        let (p, se) = joint_pmf_initial(&jp, &[a, b, c], &x, &cfg()).unwrap();
                        tot += p;
                        var += se * se;
                        first[a as usize - 1] += p;
                    }
                }
            }
            assert!((tot - 1.0).abs() <= 3.0 * var.sqrt() + 1e-12, "{link:?} {tot}");
            for a in 1..=3u32 {
                let m = ordinal_pmf(&jp.series[0].marginal, a, &[0.0]).unwrap();
                assert!((first[a as usize - 1] - m).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn orthant_cell() {
        let s = series(BivCopulaFamily::Independence, 0.0, vec![0.0], 0.0);
        let jp = JointParams::new(vec![s.clone(), s], CorrelationMatrix::exchangeable(2, 0.5).unwrap(), LinkCopula::Mvn).unwrap();
        let (p, se) = joint_pmf_initial(&jp, &[1, 1], &[vec![0.0], vec![0.0]], &cfg()).unwrap();
        assert!((p - 1.0 / 3.0).abs() <= 3.0 * se);
    }

    #[test]
    fn independent_temporal_copulas_give_initial_pmf() {
        let s = series(BivCopulaFamily::Independence, 0.0, vec![-0.3, 0.8], 0.5);
        let jp = JointParams::new(vec![s.clone(), s], CorrelationMatrix::exchangeable(2, 0.4).unwrap(), LinkCopula::Mvt { nu: 6.0 }).unwrap();
        let x = vec![vec![0.2], vec![-0.6]];
        let a = joint_pmf_transition(&jp, &[2, 3], &[1, 1], &x, &x, &cfg()).unwrap();
        let b = joint_pmf_initial(&jp, &[2, 3], &x, &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_shapes() {
        let s = series(BivCopulaFamily::Independence, 0.0, vec![0.0], 0.0);
        assert!(JointParams::new(vec![], CorrelationMatrix::identity(1), LinkCopula::Mvn).is_err());
        assert!(JointParams::new(vec![s.clone(), s.clone()], CorrelationMatrix::identity(3), LinkCopula::Mvn).is_err());
        assert!(JointParams::new(vec![s.clone(), s], CorrelationMatrix::identity(2), LinkCopula::Mvt { nu: -1.0 }).is_err());
    }
}
