//! Probability limits of the exact and simulated maximum-likelihood
//! estimators for an exchangeable probit-MVN model, computed from the full
//! case distribution instead of sampled data.

use crate::error::{Error, Result};
use crate::lattice::QmcConfig;
use crate::optim::{quasi_newton_max, QnOptions, StopReason};
use crate::rect::{mvn_rect, mvn_rect_exchangeable, CorrelationMatrix, Rectangle, EXCHANGEABLE_TOL};
use crate::special::norm_interval;
use crate::transform::{cutpoints_from_free, cutpoints_to_free};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Common margins P(Y ≤ y | x) = Φ(γ_y + βx) for all d responses, tied by an
/// exchangeable normal copula with correlation ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymParams {
    pub beta: f64,
    pub cutpoints: Vec<f64>,
    pub rho: f64,
}

impl AsymParams {
    pub fn k(&self) -> u32 {
        self.cutpoints.len() as u32 + 1
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.cutpoints.is_empty() || self.cutpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("cutpoints must be non-empty and strictly increasing"));
        }
        if !self.beta.is_finite() || self.cutpoints.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        let lo = -1.0 / (d as f64 - 1.0);
        if !(self.rho > lo && self.rho < 1.0) {
            return Err(Error::domain("exchangeable correlation", self.rho, format!("{lo} < rho < 1")));
        }
        Ok(())
    }

    fn to_free(&self) -> Vec<f64> {
        let mut v = vec![self.beta];
        v.extend(cutpoints_to_free(&self.cutpoints));
        v.push(self.rho.atanh());
        v
    }

    fn from_free(x: &[f64]) -> Self {
        let n = x.len();
        AsymParams { beta: x[0], cutpoints: cutpoints_from_free(&x[1..n - 1]), rho: x[n - 1].tanh() }
    }

    /// Parameters in the order β, cutpoints, ρ.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.beta];
        v.extend(&self.cutpoints);
        v.push(self.rho);
        v
    }

    /// Latent-scale rectangle of outcome `y` at covariate `x`.
    fn rectangle(&self, y: &[u32], x: f64) -> Rectangle {
        let k = self.k();
        let eta = self.beta * x;
        let lower = y
            .iter()
            .map(|&c| if c == 1 { f64::NEG_INFINITY } else { self.cutpoints[c as usize - 2] + eta })
            .collect();
        let upper = y
            .iter()
            .map(|&c| if c == k { f64::INFINITY } else { self.cutpoints[c as usize - 1] + eta })
            .collect();
        Rectangle { lower, upper }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    /// Randomized-QMC rectangle probabilities: the simulated likelihood.
    Qmc,
    /// One-dimensional quadrature: the exact likelihood.
    Exact1D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub y: Vec<u32>,
    pub x: f64,
}

/// Every outcome-covariate combination with its population probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTable {
    pub d: usize,
    pub k: u32,
    pub cases: Vec<Case>,
    pub weights: Vec<f64>,
    /// Cases grouped by covariate and sorted outcome, which share a cell
    /// probability under exchangeability: (representative case, total weight).
    groups: Vec<(usize, f64)>,
}

impl CaseTable {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }
}

pub const CASE_CAP: usize = 1_000_000;

fn cell_prob(par: &AsymParams, y: &[u32], x: f64, d: usize, eval: Evaluator, cfg: &QmcConfig) -> Result<f64> {
    let rect = par.rectangle(y, x);
    if par.rho == 0.0 {
        return Ok(rect.lower.iter().zip(&rect.upper).map(|(&a, &b)| norm_interval(a, b)).product());
    }
    match eval {
        Evaluator::Exact1D => mvn_rect_exchangeable(&rect, par.rho, EXCHANGEABLE_TOL),
        Evaluator::Qmc => Ok(mvn_rect(&rect, &CorrelationMatrix::exchangeable(d, par.rho)?, cfg)?.0),
    }
}

/// Enumerates the K^d outcomes at each covariate support point, weighted by
/// exact cell probability times covariate mass.
pub fn enumerate_cases(truth: &AsymParams, d: usize, support: &[(f64, f64)], cap: usize) -> Result<CaseTable> {
    if d < 1 {
        return Err(Error::invalid("dimension must be positive"));
    }
    truth.validate(d.max(2))?;
    let k = truth.k();
    let mass: f64 = support.iter().map(|s| s.1).sum();
    if support.is_empty() || support.iter().any(|s| !(s.1 >= 0.0)) || (mass - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("covariate masses must be nonnegative and sum to 1"));
    }
    let count = (k as usize).checked_pow(d as u32).and_then(|c| c.checked_mul(support.len()));
    match count {
        Some(c) if c <= cap => {}
        _ => return Err(Error::CapExceeded { what: "case", count: count.unwrap_or(usize::MAX), cap }),
    }
    let mut cases = Vec::new();
    for &(x, _) in support {
        let mut y = vec![1u32; d];
        loop {
            cases.push(Case { y: y.clone(), x });
            let mut i = d;
            while i > 0 {
                i -= 1;
                if y[i] < k {
                    y[i] += 1;
                    break;
                }
                y[i] = 1;
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX {
                break;
            }
        }
    }
    let mut key_of: BTreeMap<(u64, Vec<u32>), usize> = BTreeMap::new();
    let mut reps = Vec::new();
    let mut member = Vec::with_capacity(cases.len());
    for (t, c) in cases.iter().enumerate() {
        let mut s = c.y.clone();
        s.sort_unstable();
        let g = *key_of.entry((c.x.to_bits(), s)).or_insert_with(|| {
            reps.push(t);
            reps.len() - 1
        });
        member.push(g);
    }
    let cfg = QmcConfig::default();
    let probs = reps
        .par_iter()
        .map(|&t| cell_prob(truth, &cases[t].y, cases[t].x, d, Evaluator::Exact1D, &cfg))
        .collect::<Result<Vec<f64>>>()?;
    let mass_of = |x: f64| support.iter().filter(|s| s.0.to_bits() == x.to_bits()).map(|s| s.1).sum::<f64>();
    let weights: Vec<f64> = cases.iter().zip(&member).map(|(c, &g)| probs[g] * mass_of(c.x)).collect();
    let mut groups: Vec<(usize, f64)> = reps.iter().map(|&t| (t, 0.0)).collect();
    for (t, &g) in member.iter().enumerate() {
        groups[g].1 += weights[t];
    }
    Ok(CaseTable { d, k, cases, weights, groups })
}

/// Σ_t p⁽ᵗ⁾ log h(y⁽ᵗ⁾; params), the per-observation limit of the
/// log-likelihood. A zero cell with positive weight is an error.
pub fn limit_loglik(par: &AsymParams, table: &CaseTable, eval: Evaluator, cfg: &QmcConfig) -> Result<f64> {
    par.validate(table.d.max(2))?;
    if par.k() != table.k {
        return Err(Error::invalid("parameter and case table disagree on the number of categories"));
    }
    if eval == Evaluator::Exact1D && par.rho < 0.0 {
        return Err(Error::domain("one-factor quadrature", par.rho, "rho >= 0"));
    }
    let terms = table
        .groups
        .par_iter()
        .map(|&(t, w)| {
            if w == 0.0 {
                return Ok(0.0);
            }
            let c = &table.cases[t];
            let h = cell_prob(par, &c.y, c.x, table.d, eval, cfg)?;
            if !(h > 0.0) {
                return Err(Error::ZeroProbability(crate::error::ObsId { subject: t, time: 0, series: None }));
            }
            Ok(w * h.ln())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFit {
    pub params: AsymParams,
    pub value: f64,
    pub converged: bool,
    pub stop: StopReason,
    pub iterations: usize,
}

/// Maximizer of [`limit_loglik`]: the limiting MLE under
/// [`Evaluator::Exact1D`], the limiting simulated-likelihood estimator under
/// [`Evaluator::Qmc`].
pub fn limiting_estimates(
    table: &CaseTable,
    eval: Evaluator,
    init: &AsymParams,
    cfg: &QmcConfig,
    opts: &QnOptions,
) -> Result<LimitFit> {
    init.validate(table.d.max(2))?;
    let f = |x: &[f64]| match limit_loglik(&AsymParams::from_free(x), table, eval, cfg) {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    };
    let q = quasi_newton_max(f, &init.to_free(), opts).map_err(|e| match e {
        Error::Optimizer { message, .. } => Error::Optimizer { stage: "limiting estimates".into(), message },
        other => other,
    })?;
    Ok(LimitFit {
        params: AsymParams::from_free(&q.x),
        value: q.value,
        converged: q.converged,
        stop: q.stop,
        iterations: q.iterations,
    })
}

/// One row of the simulated-versus-exact comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignComparison {
    pub d: usize,
    pub k: u32,
    pub truth: AsymParams,
    pub cases: usize,
    pub distinct_cells: usize,
    pub mle: LimitFit,
    pub msle: LimitFit,
    pub max_gap: f64,
}

/// Binary covariate with equal mass on 0 and 1.
pub const BINARY_SUPPORT: [(f64, f64); 2] = [(0.0, 0.5), (1.0, 0.5)];

/// Default design truth: β = 0.5 and evenly spread cutpoints.
pub fn design_truth(k: u32, rho: f64) -> AsymParams {
    let cutpoints = match k {
        2 => vec![0.2],
        3 => vec![-0.6, 0.4],
        _ => (1..k).map(|i| -1.0 + 2.0 * i as f64 / k as f64).collect(),
    };
    AsymParams { beta: 0.5, cutpoints, rho }
}

/// Neutral optimizer start: β = 0, cutpoints evenly spread over [−1, 1],
/// ρ = 0.5.
pub fn neutral_start(k: u32) -> AsymParams {
    let cutpoints = if k == 2 { vec![0.0] } else { (0..k - 1).map(|i| -1.0 + 2.0 * i as f64 / (k - 2) as f64).collect() };
    AsymParams { beta: 0.0, cutpoints, rho: 0.5 }
}

/// Limiting MLE from a neutral start and the limiting simulated-likelihood
/// estimator started from it.
pub fn compare_design(
    d: usize,
    truth: &AsymParams,
    support: &[(f64, f64)],
    cfg: &QmcConfig,
    opts: &QnOptions,
) -> Result<DesignComparison> {
    let table = enumerate_cases(truth, d, support, CASE_CAP)?;
    let mle = limiting_estimates(&table, Evaluator::Exact1D, &neutral_start(truth.k()), cfg, opts)?;
    let msle = limiting_estimates(&table, Evaluator::Qmc, &mle.params, cfg, opts)?;
    let max_gap = mle
        .params
        .to_vec()
        .iter()
        .zip(msle.params.to_vec())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(DesignComparison {
        d,
        k: truth.k(),
        truth: truth.clone(),
        cases: table.cases.len(),
        distinct_cells: table.n_groups(),
        mle,
        msle,
        max_gap,
    })
}
