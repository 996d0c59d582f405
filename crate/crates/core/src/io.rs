//! Model configuration, long-format CSV panels and density grids.

use crate::copula::BivCopulaSpec;
use crate::error::{Error, Result};
use crate::estimate::{FitOptions, SeriesSpec};
use crate::joint::{JointParams, LinkCopula};
use crate::lattice::QmcConfig;
use crate::panel::{OrdinalPanel, Record, Subject};
use crate::simulate::{CovariateGen, SimDesign};
use crate::special::norm_cdf;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

/// One ordinal response: its CSV column, covariate columns and model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseConfig {
    pub column: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(flatten)]
    pub spec: SeriesSpec,
}

/// Truth and design of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub times: usize,
    pub truth: JointParams,
    pub covariates: CovariateGen,
    #[serde(default)]
    pub seed: u64,
}

fn default_id() -> String {
    "subject_id".into()
}

fn default_time() -> String {
    "time".into()
}

fn default_links() -> Vec<LinkCopula> {
    vec![LinkCopula::Mvn]
}

fn default_stage() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_id")]
    pub id_column: String,
    #[serde(default = "default_time")]
    pub time_column: String,
    pub responses: Vec<ResponseConfig>,
    /// Link-copula candidates compared in step 2.
    #[serde(default = "default_links")]
    pub links: Vec<LinkCopula>,
    #[serde(default)]
    pub qmc: QmcConfig,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default = "default_stage")]
    pub stage: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

impl ModelConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.responses.is_empty() {
            return Err(Error::invalid("config lists no responses"));
        }
        if self.links.is_empty() {
            return Err(Error::invalid("link-copula grid is empty"));
        }
        for l in &self.links {
            l.validate()?;
        }
        if !(1..=3).contains(&self.stage) {
            return Err(Error::invalid(format!("stage must be 1, 2 or 3, got {}", self.stage)));
        }
        self.qmc.validate()?;
        if !(self.fit.qn.tol > 0.0) || self.fit.qn.max_iter == 0 {
            return Err(Error::invalid("optimizer tolerance and iteration limit must be positive"));
        }
        let mut seen = vec![self.id_column.as_str(), self.time_column.as_str()];
        if seen[0] == seen[1] {
            return Err(Error::invalid("id and time columns must differ"));
        }
        for r in &self.responses {
            if seen.contains(&r.column.as_str()) {
                return Err(Error::invalid(format!("column {} used twice", r.column)));
            }
            seen.push(&r.column);
            if r.spec.k < 2 {
                return Err(Error::invalid(format!("response {} needs at least two categories", r.column)));
            }
            if r.spec.nu_grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!("response {} has a non-positive nu in its grid", r.column)));
            }
            let mut own: Vec<&str> = Vec::new();
            for c in &r.covariates {
                if own.contains(&c.as_str()) {
                    return Err(Error::invalid(format!("covariate {c} listed twice for response {}", r.column)));
                }
                own.push(c);
            }
        }
        for c in self.covariate_columns() {
            if seen.contains(&c.as_str()) {
                return Err(Error::invalid(format!("covariate column {c} clashes with an id, time or response column")));
            }
        }
        if let Some(sim) = &self.simulation {
            self.sim_design(sim)?.validate()?;
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<SeriesSpec> {
        self.responses.iter().map(|r| r.spec.clone()).collect()
    }

    /// Distinct covariate columns in order of first mention.
    pub fn covariate_columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in self.responses.iter().flat_map(|r| &r.covariates) {
            if !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }

    /// Simulation design matching the configured columns. Responses must
    /// either all share one covariate list or use disjoint columns.
    pub fn sim_design(&self, sim: &SimulationConfig) -> Result<SimDesign> {
        let t = &sim.truth;
        if t.series.len() != self.responses.len() {
            return Err(Error::invalid("simulation truth and config disagree on the number of responses"));
        }
        for (r, s) in self.responses.iter().zip(&t.series) {
            if s.marginal.k() != r.spec.k || s.marginal.p() != r.covariates.len() {
                return Err(Error::invalid(format!(
                    "simulation truth for {} does not match its categories or covariates",
                    r.column
                )));
            }
        }
        let first = &self.responses[0].covariates;
        let shared = self.responses.len() > 1 && !first.is_empty() && self.responses.iter().all(|r| &r.covariates == first);
        if !shared {
            let all: usize = self.responses.iter().map(|r| r.covariates.len()).sum();
            if all != self.covariate_columns().len() {
                return Err(Error::invalid(
                    "simulation needs responses to share one covariate list or use disjoint columns",
                ));
            }
        }
        Ok(SimDesign {
            n: sim.n,
            times: sim.times,
            params: t.clone(),
            covariates: sim.covariates.clone(),
            shared_covariates: shared,
            seed: sim.seed,
        })
    }
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s == "NA"
}

/// Reads a long-format panel. Subjects keep their order of first
/// appearance; records within a subject are sorted by time.
pub fn read_panel(reader: impl Read, cfg: &ModelConfig) -> Result<OrdinalPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema { row: 1, message: format!("missing column {name}") })
    };
    let id_col = col(&cfg.id_column)?;
    let time_col = col(&cfg.time_column)?;
    let resp_cols = cfg.responses.iter().map(|r| col(&r.column)).collect::<Result<Vec<_>>>()?;
    let cov_cols = cfg
        .responses
        .iter()
        .map(|r| r.covariates.iter().map(|c| col(c)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let d = cfg.responses.len();

    let mut subjects: Vec<Subject> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let schema = |message: String| Error::Schema { row, message };
        let id = rec[id_col].to_string();
        if id.is_empty() {
            return Err(schema("empty subject id".into()));
        }
        let time: i64 = rec[time_col].parse().map_err(|_| schema(format!("time {:?} is not an integer", &rec[time_col])))?;
        let mut responses = Vec::with_capacity(d);
        for (j, &c) in resp_cols.iter().enumerate() {
            let v = &rec[c];
            if is_missing(v) {
                responses.push(None);
                continue;
            }
            let y: u32 = v
                .parse()
                .map_err(|_| schema(format!("response {} value {v:?} is not a category", cfg.responses[j].column)))?;
            let k = cfg.responses[j].spec.k;
            if y < 1 || y > k {
                return Err(schema(format!("response {} category {y} outside 1..={k}", cfg.responses[j].column)));
            }
            responses.push(Some(y));
        }
        let mut covariates = Vec::with_capacity(d);
        for (j, cols) in cov_cols.iter().enumerate() {
            let mut x = Vec::with_capacity(cols.len());
            for (m, &c) in cols.iter().enumerate() {
                let name = &cfg.responses[j].covariates[m];
                let v = &rec[c];
                if is_missing(v) {
                    return Err(schema(format!("missing covariate {name}")));
                }
                let val: f64 = v.parse().map_err(|_| schema(format!("covariate {name} value {v:?} is not a number")))?;
                if !val.is_finite() {
                    return Err(schema(format!("covariate {name} is not finite")));
                }
                x.push(val);
            }
            covariates.push(x);
        }
        let s = *index.entry(id.clone()).or_insert_with(|| {
            subjects.push(Subject { id, records: Vec::new() });
            rows.push(Vec::new());
            subjects.len() - 1
        });
        subjects[s].records.push(Record { time, responses, covariates });
        rows[s].push(row);
    }
    for (s, sub) in subjects.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..sub.records.len()).collect();
        order.sort_by_key(|&i| (sub.records[i].time, rows[s][i]));
        for w in order.windows(2) {
            if sub.records[w[0]].time == sub.records[w[1]].time {
                return Err(Error::Schema {
                    row: rows[s][w[1]],
                    message: format!("duplicate time {} for subject {}", sub.records[w[1]].time, sub.id),
                });
            }
        }
        let mut recs: Vec<Option<Record>> = std::mem::take(&mut sub.records).into_iter().map(Some).collect();
        sub.records = order.iter().map(|&i| recs[i].take().expect("each index once")).collect();
    }
    let panel = OrdinalPanel { d, subjects };
    let ks: Vec<u32> = cfg.responses.iter().map(|r| r.spec.k).collect();
    let ps: Vec<usize> = cfg.responses.iter().map(|r| r.covariates.len()).collect();
    panel.validate(&ks, &ps)?;
    Ok(panel)
}

pub fn load_panel_csv(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<OrdinalPanel> {
    read_panel(std::fs::File::open(path)?, cfg)
}

/// Writes one row per (subject, time). A covariate column shared by several
/// responses must carry the same value for each of them.
pub fn write_panel(panel: &OrdinalPanel, cfg: &ModelConfig, writer: impl Write) -> Result<()> {
    if panel.d != cfg.responses.len() {
        return Err(Error::invalid("panel and config disagree on the number of responses"));
    }
    let covs = cfg.covariate_columns();
    // For each column, every (response, position) that reads it.
    let sources: Vec<Vec<(usize, usize)>> = covs
        .iter()
        .map(|c| {
            cfg.responses
                .iter()
                .enumerate()
                .flat_map(|(j, r)| r.covariates.iter().enumerate().filter(|(_, n)| *n == c).map(move |(m, _)| (j, m)))
                .collect()
        })
        .collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![cfg.id_column.clone(), cfg.time_column.clone()];
    header.extend(cfg.responses.iter().map(|r| r.column.clone()));
    header.extend(covs.iter().cloned());
    w.write_record(&header)?;
    for s in &panel.subjects {
        for r in &s.records {
            let mut row = vec![s.id.clone(), r.time.to_string()];
            row.extend(r.responses.iter().map(|y| y.map_or_else(|| "NA".to_string(), |v| v.to_string())));
            for (c, src) in covs.iter().zip(&sources) {
                let (j, m) = src[0];
                let v = *r.covariates[j]
                    .get(m)
                    .ok_or_else(|| Error::invalid(format!("record lacks covariate {c}")))?;
                if src.iter().any(|&(j2, m2)| r.covariates[j2].get(m2) != Some(&v)) {
                    return Err(Error::invalid(format!(
                        "covariate column {c} has different values across responses for subject {}",
                        s.id
                    )));
                }
                row.push(v.to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_panel_csv(panel: &OrdinalPanel, cfg: &ModelConfig, path: impl AsRef<Path>) -> Result<()> {
    write_panel(panel, cfg, std::fs::File::create(path)?)
}

/// Half-width of the mixed finite difference used for densities.
pub const DENSITY_STEP: f64 = 5e-3;

/// Joint density with standard normal margins on a square grid over
/// [−3, 3]²; `density[i][j]` is the value at (z[i], z[j]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub z: Vec<f64>,
    pub density: Vec<Vec<f64>>,
}

impl DensityGrid {
    /// Grid location (z₁, z₂) of the largest density value.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0, 0);
        for (i, row) in self.density.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > self.density[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        (self.z[best.0], self.z[best.1])
    }

    /// Riemann sum of the density over the grid cells.
    pub fn mass(&self) -> f64 {
        let h = self.z[1] - self.z[0];
        self.density.iter().flatten().sum::<f64>() * h * h
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["z1", "z2", "density"])?;
        for (i, row) in self.density.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                w.write_record([self.z[i].to_string(), self.z[j].to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// c(Φ(z₁), Φ(z₂))·φ(z₁)·φ(z₂) on a `grid_n`² grid, from the copula
/// probability of a small square around each point.
pub fn emit_density_grid(spec: &BivCopulaSpec, grid_n: usize) -> Result<DensityGrid> {
    spec.validate()?;
    if grid_n < 2 {
        return Err(Error::invalid("density grid needs at least two points per axis"));
    }
    let z: Vec<f64> = (0..grid_n).map(|i| -3.0 + 6.0 * i as f64 / (grid_n - 1) as f64).collect();
    let h = DENSITY_STEP;
    let edges: Vec<(f64, f64)> = z.iter().map(|&v| (norm_cdf(v - h), norm_cdf(v + h))).collect();
    let density = edges
        .iter()
        .map(|&(a1, b1)| {
            edges
                .iter()
                .map(|&(a2, b2)| spec.rect_prob(a1, b1, a2, b2) / (4.0 * h * h))
                .collect()
        })
        .collect();
    Ok(DensityGrid { z, density })
}
