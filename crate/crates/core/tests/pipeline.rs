use ordcop::copula::BivCopulaFamily;
use ordcop::estimate::{fit_pipeline, FitOptions, SeriesSpec};
use ordcop::joint::{joint_loglik, JointParams, LinkCopula};
use ordcop::lattice::QmcConfig;
use ordcop::io::ModelConfig;
use ordcop::simulate::simulate_panel;

#[test]
fn each_stage_improves_the_loglik() {
    let cfg = ModelConfig::from_json(
        r#"{
            "responses": [
                {"column": "y1", "k": 4, "covariates": ["x"], "family": "gumbel"},
                {"column": "y2", "k": 3, "covariates": ["x"], "family": "bvt", "nu": 4, "nu_grid": [3, 6]}
            ],
            "simulation": {
                "n": 150, "times": 4, "seed": 3,
                "covariates": {"kind": "normal"},
                "truth": {
                    "series": [
                        {"marginal": {"beta": [0.6], "cutpoints": [-0.8, 0.1, 0.9], "link": "probit"},
                         "temporal": {"family": "gumbel", "theta": 2.2}},
                        {"marginal": {"beta": [-0.4], "cutpoints": [-0.3, 0.7], "link": "probit"},
                         "temporal": {"family": "bvt", "nu": 4, "theta": 0.6}}
                    ],
                    "corr": [[1.0, 0.45], [0.45, 1.0]],
                    "link": {"copula": "mvn"}
                }
            }
        }"#,
    )
    .unwrap();
    let panel = simulate_panel(&cfg.sim_design(cfg.simulation.as_ref().unwrap()).unwrap()).unwrap();
    let qmc = QmcConfig::default().with_budget(2, 64);
    let specs: Vec<SeriesSpec> = cfg.specs();
    let fit = fit_pipeline(&panel, &specs, &[LinkCopula::Mvn, LinkCopula::Mvt { nu: 8.0 }], 3, &qmc, &FitOptions::default()).unwrap();
    for s in &fit.step1 {
        assert!(s.fit.converged);
        assert!(s.loglik_copula >= s.loglik_independence - 1e-9 || s.fit.params.temporal.family.independence_theta().is_none());
        assert!(s.fit.loglik >= s.loglik_copula - 1e-9);
    }
    assert!(matches!(fit.step1[1].fit.params.temporal.family, BivCopulaFamily::Bvt { .. }));
    assert_eq!(fit.step1[1].nu_profile.len(), 2);
    let sel = fit.selected_link.unwrap();
    let s2 = &fit.step2[sel];
    let s3 = fit.step3.as_ref().unwrap();
    assert!(s3.converged);
    assert!(s3.loglik >= s2.loglik - 1e-9, "{} {}", s3.loglik, s2.loglik);
    let recomputed = joint_loglik(&s3.params, &panel, &qmc).unwrap();
    assert!((recomputed - s3.loglik).abs() < 1e-9 * recomputed.abs());
    let series: Vec<_> = fit.step1.iter().map(|s| s.fit.params.clone()).collect();
    let fixed = JointParams::new(series, s2.params.corr.clone(), s2.params.link).unwrap();
    assert!((joint_loglik(&fixed, &panel, &qmc).unwrap() - s2.loglik).abs() < 1e-9 * s2.loglik.abs());
}
