//! Stepwise maximum likelihood: per-series fits, then the cross-sectional
//! correlation matrix with the series fixed, then optionally everything.

use crate::copula::{param_from_tau, BivCopulaFamily, BivCopulaSpec};
use crate::error::{Error, Result};
use crate::inference::hessian_se;
use crate::joint::{check_panel, joint_loglik_floored, JointParams, LinkCopula, TermTable};
use crate::lattice::QmcConfig;
use crate::marginal::{loglik_independent_floored, Link, LogLik, MarginalParams};
use crate::markov::{series_loglik_floored, SeriesModel};
use crate::optim::{quasi_newton_max, QnOptions, QnResult, StopReason};
use crate::panel::OrdinalPanel;
use crate::rect::CorrelationMatrix;
use crate::transform::{corr_from_free, corr_to_free, theta_to_free, SeriesLayout};
use serde::{Deserialize, Serialize};

/// Model choices for one response series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub k: u32,
    #[serde(default)]
    pub link: Link,
    #[serde(flatten)]
    pub family: BivCopulaFamily,
    /// Degrees of freedom profiled for a BVT temporal copula; empty means
    /// the family's own ν.
    #[serde(default)]
    pub nu_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub qn: QnOptions,
    /// Largest free-parameter count step 3 accepts unless forced.
    pub step3_cap: usize,
    pub force_step3: bool,
    pub compute_se: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { qn: QnOptions::default(), step3_cap: 60, force_step3: false, compute_se: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P> {
    pub params: P,
    pub loglik: f64,
    /// Reporting-scale estimates in `names` order.
    pub estimates: Vec<f64>,
    pub names: Vec<String>,
    pub se: Option<Vec<f64>>,
    /// Why standard errors are missing, when they are.
    pub se_error: Option<String>,
    pub converged: bool,
    pub stop: StopReason,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuProfile {
    pub nu: f64,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step1Fit {
    pub series: usize,
    /// Final joint (margins and copula) fit of step 1(c).
    pub fit: FitResult<SeriesModel>,
    /// Log-likelihood after step 1(a), the independence fit.
    pub loglik_independence: f64,
    /// Log-likelihood after step 1(b), copula parameter at fixed margins.
    pub loglik_copula: f64,
    pub nu_profile: Vec<NuProfile>,
    pub tau: f64,
}

fn optimizer_error(stage: &str, e: Error) -> Error {
    match e {
        Error::Optimizer { message, .. } => Error::Optimizer { stage: stage.into(), message },
        other => other,
    }
}

fn finite_or_neg_inf(v: Result<f64>) -> f64 {
    match v {
        Ok(x) if x.is_finite() => x,
        _ => f64::NEG_INFINITY,
    }
}

/// Cutpoints matching the smoothed cumulative category proportions.
fn initial_cutpoints(panel: &OrdinalPanel, j: usize, k: u32, link: Link) -> Vec<f64> {
    let counts = panel.category_counts(j, k);
    let total: f64 = counts.iter().map(|&c| c as f64 + 0.5).sum();
    let mut acc = 0.0;
    let mut cuts: Vec<f64> = Vec::with_capacity(k as usize - 1);
    for &c in &counts[..k as usize - 1] {
        acc += c as f64 + 0.5;
        let mut v = link.quantile(acc / total);
        if let Some(&last) = cuts.last() {
            v = v.max(last + 1e-3);
        }
        cuts.push(v);
    }
    cuts
}

fn series_arity(panel: &OrdinalPanel, j: usize) -> Result<usize> {
    panel
        .subjects
        .iter()
        .flat_map(|s| s.records.first())
        .map(|r| r.covariates[j].len())
        .next()
        .ok_or_else(|| Error::invalid("panel has no observations"))
}

fn tau_grid(family: BivCopulaFamily) -> &'static [f64] {
    match family {
        BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => &[0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        _ => &[-0.6, -0.4, -0.2, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
    }
}

/// Free-scale point at which the family reduces to independence, if any.
fn independence_free(family: BivCopulaFamily) -> Option<f64> {
    match family {
        BivCopulaFamily::Frank | BivCopulaFamily::Bvn => Some(0.0),
        // 1 + softplus(−40) rounds to exactly 1.
        BivCopulaFamily::Gumbel | BivCopulaFamily::SurvivalGumbel => Some(-40.0),
        _ => None,
    }
}

fn finish<P>(
    params: P,
    qn: &QnResult,
    estimates: Vec<f64>,
    names: Vec<String>,
    se: Option<Result<Vec<f64>>>,
) -> FitResult<P> {
    let (se, se_error) = match se {
        Some(Ok(v)) => (Some(v), None),
        Some(Err(e)) => (None, Some(e.to_string())),
        None => (None, Some("not requested".into())),
    };
    FitResult {
        params,
        loglik: qn.value,
        estimates,
        names,
        se,
        se_error,
        converged: qn.converged,
        stop: qn.stop,
        iterations: qn.iterations,
        grad_norm: qn.grad_norm,
    }
}

/// Step 1 for series `j`: (a) margins under independence, (b) the copula
/// parameter at those margins, (c) both jointly from (a)–(b). For a BVT
/// family every ν of `spec.nu_grid` is tried and the best kept.
pub fn fit_step1(panel: &OrdinalPanel, j: usize, spec: &SeriesSpec, opts: &FitOptions) -> Result<Step1Fit> {
    if j >= panel.d {
        return Err(Error::invalid(format!("series {j} does not exist")));
    }
    if spec.k < 2 {
        return Err(Error::invalid("an ordinal response needs at least two categories"));
    }
    let p = series_arity(panel, j)?;
    panel.validate_series(j, spec.k, p)?;

    // (a) independence
    let init_m = MarginalParams::new(vec![0.0; p], initial_cutpoints(panel, j, spec.k, spec.link), spec.link)?;
    let mlay = SeriesLayout { p, k: spec.k, link: spec.link, family: BivCopulaFamily::Independence };
    let fa = |x: &[f64]| {
        finite_or_neg_inf(mlay.marginal_from_free(x).map(|m| loglik_independent_floored(&m, panel, j).value))
    };
    let qa = quasi_newton_max(fa, &mlay.marginal_to_free(&init_m), &opts.qn)
        .map_err(|e| optimizer_error("step 1(a)", e))?;
    let margin = mlay.marginal_from_free(&qa.x)?;

    let families: Vec<BivCopulaFamily> = match spec.family {
        BivCopulaFamily::Bvt { nu } if spec.nu_grid.is_empty() => vec![BivCopulaFamily::Bvt { nu }],
        BivCopulaFamily::Bvt { .. } => spec.nu_grid.iter().map(|&nu| BivCopulaFamily::Bvt { nu }).collect(),
        f => vec![f],
    };

    let mut best: Option<Step1Fit> = None;
    let mut profile = Vec::new();
    for family in families {
        BivCopulaSpec::new(family, family.independence_theta().unwrap_or(0.0))?;
        let lay = SeriesLayout { p, k: spec.k, link: spec.link, family };
        let eval = |x: &[f64]| finite_or_neg_inf(lay.from_free(x).map(|m| series_loglik_floored(&m, panel, j).value));
        let (xb, lb) = if family.has_parameter() {
            // (b) copula parameter with the margins of (a)
            let base = mlay.marginal_to_free(&margin);
            let at = |t: f64| {
                let mut x = base.clone();
                x.push(t);
                x
            };
            let mut start = None;
            for &tau in tau_grid(family) {
                if let Ok(c) = param_from_tau(family, tau) {
                    let t = theta_to_free(family, c.theta);
                    let v = eval(&at(t));
                    if start.is_none_or(|(_, b)| v > b) {
                        start = Some((t, v));
                    }
                }
            }
            let (t0, _) = start.ok_or_else(|| Error::Optimizer {
                stage: "step 1(b)".into(),
                message: "no finite starting value on the tau grid".into(),
            })?;
            let qb = quasi_newton_max(|t: &[f64]| eval(&at(t[0])), &[t0], &opts.qn)
                .map_err(|e| optimizer_error("step 1(b)", e))?;
            let mut xb = at(qb.x[0]);
            let mut lb = qb.value;
            if let Some(t) = independence_free(family) {
                if lb < qa.value {
                    xb = at(t);
                    lb = eval(&xb);
                }
            }
            (xb, lb)
        } else {
            (mlay.marginal_to_free(&margin), qa.value)
        };
        // (c) everything from the stacked (a)–(b) estimates
        let qc = quasi_newton_max(eval, &xb, &opts.qn).map_err(|e| optimizer_error("step 1(c)", e))?;
        let model = lay.from_free(&qc.x)?;
        if let BivCopulaFamily::Bvt { nu } = family {
            profile.push(NuProfile { nu, loglik: qc.value });
        }
        if best.as_ref().is_none_or(|b| qc.value > b.fit.loglik) {
            let se = opts.compute_se.then(|| {
                hessian_se(eval, &qc.x, |x| lay.from_free(x).map(|m| SeriesLayout::natural(&m)).unwrap_or_default())
            });
            let tau = model.temporal.kendall_tau();
            let fit = finish(model.clone(), &qc, SeriesLayout::natural(&model), lay.names(), se);
            best = Some(Step1Fit {
                series: j,
                fit,
                loglik_independence: qa.value,
                loglik_copula: lb,
                nu_profile: Vec::new(),
                tau,
            });
        }
    }
    let mut out = best.expect("at least one family");
    out.nu_profile = profile;
    Ok(out)
}

fn corr_names(d: usize) -> Vec<String> {
    let mut v = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            v.push(format!("rho[{a},{b}]"));
        }
    }
    v
}

/// Step 2: maximizes the joint log-likelihood over the correlation matrix
/// with every series model fixed, once per link-copula candidate.
pub fn fit_step2(
    panel: &OrdinalPanel,
    series: &[SeriesModel],
    links: &[LinkCopula],
    cfg: &QmcConfig,
    opts: &FitOptions,
) -> Result<Vec<FitResult<JointParams>>> {
    let d = series.len();
    if links.is_empty() {
        return Err(Error::invalid("the link-copula grid is empty"));
    }
    let probe = JointParams::new(series.to_vec(), CorrelationMatrix::identity(d), LinkCopula::Mvn)?;
    check_panel(&probe, panel)?;
    cfg.validate()?;
    let table = TermTable::build(series, panel);
    let mut out = Vec::with_capacity(links.len());
    for link in links {
        link.validate()?;
        let rects = table.rectangles(link);
        let eval = |x: &[f64]| {
            finite_or_neg_inf(corr_from_free(d, x).and_then(|r| {
                let terms = table.loglik_terms(&rects, link, &r, cfg)?;
                Ok(LogLik::total(&terms).value)
            }))
        };
        let q = quasi_newton_max(eval, &vec![0.0; d * (d - 1) / 2], &opts.qn)
            .map_err(|e| optimizer_error(&format!("step 2 ({})", link.name()), e))?;
        let corr = corr_from_free(d, &q.x)?;
        let se = opts
            .compute_se
            .then(|| hessian_se(eval, &q.x, |x| corr_from_free(d, x).map(|r| r.upper()).unwrap_or_default()));
        let jp = JointParams::new(series.to_vec(), corr.clone(), *link)?;
        out.push(finish(jp, &q, corr.upper(), corr_names(d), se));
    }
    Ok(out)
}

fn joint_layouts(jp: &JointParams) -> Vec<SeriesLayout> {
    jp.series.iter().map(SeriesLayout::of).collect()
}

fn joint_from_free(lays: &[SeriesLayout], link: LinkCopula, x: &[f64]) -> Result<JointParams> {
    let mut off = 0;
    let mut series = Vec::with_capacity(lays.len());
    for l in lays {
        series.push(l.from_free(&x[off..off + l.len()])?);
        off += l.len();
    }
    let corr = corr_from_free(lays.len(), &x[off..])?;
    JointParams::new(series, corr, link)
}

fn joint_natural(jp: &JointParams) -> Vec<f64> {
    let mut v: Vec<f64> = jp.series.iter().flat_map(SeriesLayout::natural).collect();
    v.extend(jp.corr.upper());
    v
}

/// Step 3: maximizes the joint log-likelihood over all parameters from the
/// step-2 estimates. Refuses more than `opts.step3_cap` free parameters
/// unless `opts.force_step3`.
pub fn fit_step3(
    panel: &OrdinalPanel,
    start: &JointParams,
    cfg: &QmcConfig,
    opts: &FitOptions,
) -> Result<FitResult<JointParams>> {
    start.validate()?;
    check_panel(start, panel)?;
    let lays = joint_layouts(start);
    let mut x0: Vec<f64> = start.series.iter().zip(&lays).flat_map(|(m, l)| l.to_free(m)).collect();
    x0.extend(corr_to_free(&start.corr)?);
    if x0.len() > opts.step3_cap && !opts.force_step3 {
        return Err(Error::CapExceeded { what: "step-3 parameter", count: x0.len(), cap: opts.step3_cap });
    }
    let link = start.link;
    let eval = |x: &[f64]| {
        finite_or_neg_inf(joint_from_free(&lays, link, x).and_then(|jp| Ok(joint_loglik_floored(&jp, panel, cfg)?.value)))
    };
    let q = quasi_newton_max(eval, &x0, &opts.qn).map_err(|e| optimizer_error("step 3", e))?;
    let jp = joint_from_free(&lays, link, &q.x)?;
    let se = opts.compute_se.then(|| {
        hessian_se(eval, &q.x, |x| joint_from_free(&lays, link, x).map(|m| joint_natural(&m)).unwrap_or_default())
    });
    let mut names: Vec<String> = lays
        .iter()
        .enumerate()
        .flat_map(|(j, l)| l.names().into_iter().map(move |n| format!("series[{j}].{n}")))
        .collect();
    names.extend(corr_names(lays.len()));
    Ok(finish(jp.clone(), &q, joint_natural(&jp), names, se))
}

/// Output of the two-step pipeline, with the optional third step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub step1: Vec<Step1Fit>,
    /// One fit per link-copula candidate; empty for a single series.
    pub step2: Vec<FitResult<JointParams>>,
    /// Index into `step2` of the candidate with the largest log-likelihood.
    pub selected_link: Option<usize>,
    pub step3: Option<FitResult<JointParams>>,
}

/// Runs step 1 for every series, then step 2 over `links`, then step 3 on
/// the selected link when `stage` is 3.
pub fn fit_pipeline(
    panel: &OrdinalPanel,
    specs: &[SeriesSpec],
    links: &[LinkCopula],
    stage: u8,
    cfg: &QmcConfig,
    opts: &FitOptions,
) -> Result<PipelineFit> {
    if specs.len() != panel.d {
        return Err(Error::invalid(format!("{} series specs for a panel with {} responses", specs.len(), panel.d)));
    }
    if !(1..=3).contains(&stage) {
        return Err(Error::invalid(format!("pipeline stage must be 1, 2 or 3, got {stage}")));
    }
    let step1 = specs
        .iter()
        .enumerate()
        .map(|(j, s)| fit_step1(panel, j, s, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut out = PipelineFit { step1, step2: Vec::new(), selected_link: None, step3: None };
    if stage == 1 || panel.d < 2 {
        return Ok(out);
    }
    let models: Vec<SeriesModel> = out.step1.iter().map(|f| f.fit.params.clone()).collect();
    out.step2 = fit_step2(panel, &models, links, cfg, opts)?;
    let sel = (0..out.step2.len())
        .max_by(|&a, &b| out.step2[a].loglik.total_cmp(&out.step2[b].loglik).then(b.cmp(&a)))
        .expect("non-empty link grid");
    out.selected_link = Some(sel);
    if stage == 3 {
        out.step3 = Some(fit_step3(panel, &out.step2[sel].params, cfg, opts)?);
    }
    Ok(out)
}
