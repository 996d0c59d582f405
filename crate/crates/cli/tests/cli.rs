use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "responses": [
    {"column": "y1", "k": 3, "covariates": ["x"], "family": "frank"},
    {"column": "y2", "k": 4, "covariates": ["x"], "family": "gumbel"}
  ],
  "links": [{"copula": "mvn"}, {"copula": "mvt", "nu": 10}],
  "qmc": {"shifts": 2, "points_per_shift": 32},
  "stage": 2,
  "simulation": {
    "n": 120, "times": 3, "seed": 11,
    "covariates": {"kind": "normal"},
    "truth": {
      "series": [
        {"marginal": {"beta": [0.5], "cutpoints": [-0.4, 0.6], "link": "probit"},
         "temporal": {"family": "frank", "theta": 4.0}},
        {"marginal": {"beta": [-0.3], "cutpoints": [-0.8, 0.0, 0.9], "link": "probit"},
         "temporal": {"family": "gumbel", "theta": 1.8}}
      ],
      "corr": [[1.0, 0.4], [0.4, 1.0]],
      "link": {"copula": "mvn"}
    }
  }
}"#;

fn ordcop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordcop")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_kind(o: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).expect("error JSON on stderr");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn setup() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

#[test]
fn simulate_then_fit_is_deterministic() {
    let (dir, cfg) = setup();
    let out = dir.path().join("sim");
    let o = ordcop(&["simulate", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = out.join("panel.csv");
    let csv = std::fs::read_to_string(&data).unwrap();
    assert_eq!(csv.lines().count(), 1 + 120 * 3);
    assert!(csv.starts_with("subject_id,time,y1,y2,x"));

    let mut reports = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "2")] {
        let o = ordcop(&["fit", "--config", path(&cfg), "--data", path(&data), "--threads", threads, "--out", path(&dir.path().join(name))]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(std::fs::read(dir.path().join(name).join("fit_report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let r: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(r["converged"], true);
    assert_eq!(r["final_stage"], 2);
    assert_eq!(r["step2"].as_array().unwrap().len(), 2);
    assert_eq!(r["config"]["qmc"]["points_per_shift"], 32);
    assert!(r["config"]["fit"]["qn"]["max_iter"].is_u64());
    assert_eq!(r["step1"][0]["fit"]["estimates"][0]["name"], "beta[0]");
    assert!(r["step1"][0]["fit"]["estimates"][0]["p_value"].is_f64());

    let o = ordcop(&["fit", "--config", path(&cfg), "--data", path(&data), "--seed", "99", "--stage", "1", "--out", path(&dir.path().join("c"))]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("c/fit_report.json")).unwrap()).unwrap();
    assert_eq!(r["seed"], 99);
    assert_eq!(r["final_stage"], 1);

    let a = dir.path().join("a/fit_report.json");
    let c = dir.path().join("c/fit_report.json");
    let o = ordcop(&["vuong", path(&c), path(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["z0"].is_f64());

    let o = ordcop(&["vuong", path(&a), path(&a)]);
    assert!(!o.status.success());
    assert_eq!(error_kind(&o), "degenerate_variance");
}

#[test]
fn validation_errors_exit_with_code_two() {
    let (dir, cfg) = setup();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "subject_id,time,y1,y2,x\n1,1,2,7,0.3\n").unwrap();
    let o = ordcop(&["fit", "--config", path(&cfg), "--data", path(&data)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "schema");
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(v["error"]["message"].as_str().unwrap().contains("row 2"));

    let o = ordcop(&["fit", "--data", path(&data)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "invalid");

    let o = ordcop(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "usage");
}

#[test]
fn density_grid_csv() {
    let o = ordcop(&["density-grid", "--family", "gumbel", "--tau", "0.6", "--grid-n", "31"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = String::from_utf8(o.stdout).unwrap();
    assert_eq!(s.lines().count(), 1 + 31 * 31);
    assert_eq!(s.lines().next().unwrap(), "z1,z2,density");
    let o = ordcop(&["density-grid", "--family", "frank"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_asymptotics_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("asym.json");
    std::fs::write(&cfg, r#"{"dims": [2], "categories": [2], "rhos": [0.5]}"#).unwrap();
    let o = ordcop(&["asymptotics", "--config", path(&cfg), "--qmc-shifts", "4", "--qmc-points", "512"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["config"]["qmc"]["points_per_shift"], 512);
    assert!(v["max_gap"].as_f64().unwrap() < 1e-3);
}
