//! JSON reports of fits, model comparisons and the asymptotic comparison.

use crate::asymptotics::{compare_design, design_truth, DesignComparison, BINARY_SUPPORT};
use crate::error::{Error, Result};
use crate::estimate::{fit_pipeline, FitResult, NuProfile, PipelineFit};
use crate::inference::{vuong_test, wald_test, VuongResult};
use crate::io::ModelConfig;
use crate::joint::{joint_loglik_terms, LinkCopula};
use crate::lattice::QmcConfig;
use crate::markov::series_loglik_terms;
use crate::optim::{QnOptions, StopReason};
use crate::copula::BivCopulaFamily;
use crate::panel::OrdinalPanel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub loglik: f64,
    pub converged: bool,
    pub stop: StopReason,
    pub iterations: usize,
    pub grad_norm: f64,
    pub se_error: Option<String>,
    pub estimates: Vec<EstimateRow>,
}

impl StageSummary {
    pub fn of<P>(f: &FitResult<P>) -> Self {
        let estimates = f
            .names
            .iter()
            .zip(&f.estimates)
            .enumerate()
            .map(|(i, (name, &estimate))| {
                let se = f.se.as_ref().map(|s| s[i]);
                let zp = se.and_then(|s| wald_test(estimate, s).ok());
                EstimateRow { name: name.clone(), estimate, se, z: zp.map(|v| v.0), p_value: zp.map(|v| v.1) }
            })
            .collect();
        StageSummary {
            loglik: f.loglik,
            converged: f.converged,
            stop: f.stop,
            iterations: f.iterations,
            grad_norm: f.grad_norm,
            se_error: f.se_error.clone(),
            estimates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub response: String,
    pub family: String,
    /// Degrees of freedom chosen by profiling, for a BVT family.
    pub selected_nu: Option<f64>,
    pub nu_profile: Vec<NuProfile>,
    pub tau: f64,
    pub loglik_independence: f64,
    pub loglik_copula: f64,
    pub fit: StageSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub link: LinkCopula,
    pub name: String,
    pub fit: StageSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub version: String,
    pub seed: u64,
    /// The configuration with every default filled in.
    pub config: ModelConfig,
    pub n_subjects: usize,
    pub n_records: usize,
    pub step1: Vec<SeriesReport>,
    pub step2: Vec<LinkReport>,
    pub selected_link: Option<String>,
    pub step3: Option<StageSummary>,
    /// Last stage actually fitted.
    pub final_stage: u8,
    pub final_loglik: f64,
    /// Whether every fitted stage converged.
    pub converged: bool,
    pub subject_ids: Vec<String>,
    /// Per-subject log-likelihood of the final model, in `subject_ids` order.
    pub subject_loglik: Vec<f64>,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn subject_terms(panel: &OrdinalPanel, fit: &PipelineFit, cfg: &QmcConfig) -> Result<(u8, Vec<f64>)> {
    let (stage, terms) = if let Some(s3) = &fit.step3 {
        (3, joint_loglik_terms(&s3.params, panel, cfg)?)
    } else if let Some(sel) = fit.selected_link {
        (2, joint_loglik_terms(&fit.step2[sel].params, panel, cfg)?)
    } else {
        let mut tot: Vec<_> = vec![crate::marginal::LogLik::zero(); panel.n()];
        for (j, s1) in fit.step1.iter().enumerate() {
            for (t, l) in tot.iter_mut().zip(series_loglik_terms(&s1.fit.params, panel, j)) {
                t.merge(&l);
            }
        }
        (1, tot)
    };
    Ok((stage, terms.into_iter().map(|t| t.strict()).collect::<Result<Vec<_>>>()?))
}

/// Fits the configured pipeline and assembles its report.
pub fn run_fit(panel: &OrdinalPanel, cfg: &ModelConfig) -> Result<FitReport> {
    cfg.validate()?;
    let fit = fit_pipeline(panel, &cfg.specs(), &cfg.links, cfg.stage, &cfg.qmc, &cfg.fit)?;
    let step1: Vec<SeriesReport> = fit
        .step1
        .iter()
        .zip(&cfg.responses)
        .map(|(s, r)| SeriesReport {
            response: r.column.clone(),
            family: s.fit.params.temporal.family.name(),
            selected_nu: match s.fit.params.temporal.family {
                BivCopulaFamily::Bvt { nu } => Some(nu),
                _ => None,
            },
            nu_profile: s.nu_profile.clone(),
            tau: s.tau,
            loglik_independence: s.loglik_independence,
            loglik_copula: s.loglik_copula,
            fit: StageSummary::of(&s.fit),
        })
        .collect();
    let step2: Vec<LinkReport> = fit
        .step2
        .iter()
        .map(|f| LinkReport { link: f.params.link, name: f.params.link.name(), fit: StageSummary::of(f) })
        .collect();
    let step3 = fit.step3.as_ref().map(StageSummary::of);
    let (final_stage, subject_loglik) = subject_terms(panel, &fit, &cfg.qmc)?;
    let final_loglik = match final_stage {
        3 => step3.as_ref().expect("fitted").loglik,
        2 => step2[fit.selected_link.expect("selected")].fit.loglik,
        _ => step1.iter().map(|s| s.fit.loglik).sum(),
    };
    let converged = step1.iter().all(|s| s.fit.converged)
        && step2.iter().all(|s| s.fit.converged)
        && step3.as_ref().is_none_or(|s| s.converged);
    Ok(FitReport {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.qmc.seed,
        config: cfg.clone(),
        n_subjects: panel.n(),
        n_records: panel.n_records(),
        selected_link: fit.selected_link.map(|i| step2[i].name.clone()),
        step1,
        step2,
        step3,
        final_stage,
        final_loglik,
        converged,
        subject_ids: panel.subjects.iter().map(|s| s.id.clone()).collect(),
        subject_loglik,
    })
}

/// Vuong test of the final models of two fits on the same subjects;
/// positive z favours `second`.
pub fn vuong_from_reports(first: &FitReport, second: &FitReport) -> Result<VuongResult> {
    if first.subject_ids != second.subject_ids {
        return Err(Error::invalid("the two reports were fitted to different subjects"));
    }
    vuong_test(&first.subject_loglik, &second.subject_loglik)
}

fn default_dims() -> Vec<usize> {
    vec![3, 5]
}

fn default_categories() -> Vec<u32> {
    vec![2, 3]
}

fn default_rhos() -> Vec<f64> {
    vec![0.3, 0.6]
}

fn default_support() -> Vec<(f64, f64)> {
    BINARY_SUPPORT.to_vec()
}

fn default_asym_optimizer() -> QnOptions {
    QnOptions { tol: 1e-8, max_iter: 500 }
}

/// Design grid of the limiting-estimator comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_categories")]
    pub categories: Vec<u32>,
    #[serde(default = "default_rhos")]
    pub rhos: Vec<f64>,
    /// Covariate support points and masses.
    #[serde(default = "default_support")]
    pub support: Vec<(f64, f64)>,
    #[serde(default)]
    pub qmc: QmcConfig,
    #[serde(default = "default_asym_optimizer")]
    pub optimizer: QnOptions,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub config: AsymptoticsConfig,
    pub designs: Vec<DesignComparison>,
    pub max_gap: f64,
}

/// Runs every (d, K, ρ) design of the grid.
pub fn run_asymptotics(cfg: &AsymptoticsConfig) -> Result<AsymptoticsReport> {
    cfg.qmc.validate()?;
    if cfg.dims.is_empty() || cfg.categories.is_empty() || cfg.rhos.is_empty() {
        return Err(Error::invalid("asymptotics grid is empty"));
    }
    let mut designs = Vec::new();
    for &d in &cfg.dims {
        for &k in &cfg.categories {
            if k < 2 {
                return Err(Error::invalid("designs need at least two categories"));
            }
            for &rho in &cfg.rhos {
                designs.push(compare_design(d, &design_truth(k, rho), &cfg.support, &cfg.qmc, &cfg.optimizer)?);
            }
        }
    }
    let max_gap = designs.iter().fold(0.0f64, |m, c| m.max(c.max_gap));
    Ok(AsymptoticsReport { config: cfg.clone(), designs, max_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::simulate_panel;

    fn config(stage: u8) -> ModelConfig {
        let s = format!(
            r#"{{
                "responses": [
                    {{"column": "y1", "k": 3, "covariates": ["x"], "family": "frank"}},
                    {{"column": "y2", "k": 3, "covariates": ["x"], "family": "gumbel"}}
                ],
                "qmc": {{"shifts": 2, "points_per_shift": 32}},
                "stage": {stage},
                "simulation": {{
                    "n": 150, "times": 3, "seed": 5,
                    "covariates": {{"kind": "bernoulli", "p": 0.5}},
                    "truth": {{
                        "series": [
                            {{"marginal": {{"beta": [0.5], "cutpoints": [-0.4, 0.6], "link": "probit"}},
                              "temporal": {{"family": "frank", "theta": 4.0}}}},
                            {{"marginal": {{"beta": [-0.3], "cutpoints": [-0.2, 0.8], "link": "probit"}},
                              "temporal": {{"family": "gumbel", "theta": 1.8}}}}
                        ],
                        "corr": [[1.0, 0.4], [0.4, 1.0]],
                        "link": {{"copula": "mvn"}}
                    }}
                }}
            }}"#
        );
        ModelConfig::from_json(&s).unwrap()
    }

    fn panel(cfg: &ModelConfig) -> OrdinalPanel {
        simulate_panel(&cfg.sim_design(cfg.simulation.as_ref().unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn stage_two_report() {
        let cfg = config(2);
        let p = panel(&cfg);
        let r = run_fit(&p, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.final_stage, 2);
        assert_eq!(r.step1.len(), 2);
        assert_eq!(r.selected_link.as_deref(), Some("MVN"));
        let total: f64 = r.subject_loglik.iter().sum();
        assert!((total - r.final_loglik).abs() < 1e-8 * r.final_loglik.abs());
        let rho = &r.step2[0].fit.estimates[0];
        assert_eq!(rho.name, "rho[0,1]");
        assert!(rho.se.unwrap() > 0.0 && rho.z.is_some());
        assert_eq!(r.to_json().unwrap(), run_fit(&p, &cfg).unwrap().to_json().unwrap());
    }

    #[test]
    fn vuong_of_a_model_against_itself_is_degenerate() {
        let cfg = config(1);
        let p = panel(&cfg);
        let r = run_fit(&p, &cfg).unwrap();
        assert_eq!(r.final_stage, 1);
        assert!(matches!(vuong_from_reports(&r, &r), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn asymptotics_defaults() {
        let c = AsymptoticsConfig::default();
        assert_eq!(c.dims, vec![3, 5]);
        assert_eq!(c.optimizer.tol, 1e-8);
        let small = AsymptoticsConfig { dims: vec![2], categories: vec![2], rhos: vec![0.4], ..c };
        let r = run_asymptotics(&small).unwrap();
        assert_eq!(r.designs.len(), 1);
        assert!(r.max_gap < 1e-4, "{}", r.max_gap);
    }
}
