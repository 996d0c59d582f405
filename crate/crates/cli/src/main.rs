use clap::{Args, Parser, Subcommand, ValueEnum};
use ordcop::copula::{param_from_tau, BivCopulaFamily, BivCopulaSpec};
use ordcop::io::{emit_density_grid, load_panel_csv, write_panel, ModelConfig};
use ordcop::report::{run_asymptotics, run_fit, vuong_from_reports, AsymptoticsConfig, FitReport};
use ordcop::simulate::simulate_panel;
use ordcop::Error;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ordcop", version, about = "Copula Markov models for multivariate ordinal panels")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed of the QMC shifts (and of the simulation, for `simulate`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Lattice points per QMC shift.
    #[arg(long, global = true)]
    qmc_points: Option<usize>,
    /// Number of randomly shifted lattice replicates.
    #[arg(long, global = true)]
    qmc_shifts: Option<usize>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the configured pipeline to a long-format CSV panel.
    Fit {
        /// Panel CSV.
        #[arg(long)]
        data: PathBuf,
        /// Override the configured pipeline stage.
        #[arg(long)]
        stage: Option<u8>,
    },
    /// Simulate the configured truth and write the panel as CSV.
    Simulate,
    /// Vuong test between the final models of two fit reports.
    Vuong { first: PathBuf, second: PathBuf },
    /// Limiting exact versus simulated maximum-likelihood estimates.
    Asymptotics,
    /// Joint density on normal-score margins over [-3, 3]^2.
    DensityGrid {
        #[arg(long, value_enum)]
        family: Family,
        /// Kendall's tau; converted to the family parameter.
        #[arg(long, conflicts_with = "theta")]
        tau: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// Degrees of freedom for the bivariate t.
        #[arg(long, default_value_t = 4.0)]
        nu: f64,
        #[arg(long, default_value_t = 121)]
        grid_n: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Bvn,
    Bvt,
    Frank,
    Gumbel,
    SurvivalGumbel,
    Independence,
}

impl Family {
    fn resolve(self, nu: f64) -> BivCopulaFamily {
        match self {
            Family::Bvn => BivCopulaFamily::Bvn,
            Family::Bvt => BivCopulaFamily::Bvt { nu },
            Family::Frank => BivCopulaFamily::Frank,
            Family::Gumbel => BivCopulaFamily::Gumbel,
            Family::SurvivalGumbel => BivCopulaFamily::SurvivalGumbel,
            Family::Independence => BivCopulaFamily::Independence,
        }
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn emit(out: Option<&Path>, file: &str, body: &[u8]) -> Result<(), Error> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(file), body)?;
        }
        None => std::io::stdout().write_all(body)?,
    }
    Ok(())
}

fn model_config(g: &Global) -> Result<ModelConfig, Error> {
    let path = g.config.as_ref().ok_or_else(|| Error::Invalid("--config is required".into()))?;
    let mut cfg = ModelConfig::load(path)?;
    if let Some(p) = g.qmc_points {
        cfg.qmc.points_per_shift = p;
    }
    if let Some(s) = g.qmc_shifts {
        cfg.qmc.shifts = s;
    }
    if let Some(seed) = g.seed {
        cfg.qmc.seed = seed;
    }
    Ok(cfg)
}

fn read_report(path: &Path) -> Result<FitReport, Error> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn run(cli: Cli) -> Result<(), Error> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    }
    let out = g.out.as_deref();
    match cli.command {
        Command::Fit { data, stage } => {
            let mut cfg = model_config(g)?;
            if let Some(s) = stage {
                cfg.stage = s;
            }
            cfg.validate()?;
            let panel = load_panel_csv(&data, &cfg)?;
            let report = run_fit(&panel, &cfg)?;
            emit(out, "fit_report.json", report.to_json()?.as_bytes())
        }
        Command::Simulate => {
            let mut cfg = model_config(g)?;
            let sim = cfg
                .simulation
                .as_mut()
                .ok_or_else(|| Error::Invalid("config has no simulation section".into()))?;
            if let Some(seed) = g.seed {
                sim.seed = seed;
            }
            let sim = sim.clone();
            let panel = simulate_panel(&cfg.sim_design(&sim)?)?;
            let mut buf = Vec::new();
            write_panel(&panel, &cfg, &mut buf)?;
            emit(out, "panel.csv", &buf)
        }
        Command::Vuong { first, second } => {
            let v = vuong_from_reports(&read_report(&first)?, &read_report(&second)?)?;
            emit(out, "vuong.json", serde_json::to_string_pretty(&v)?.as_bytes())
        }
        Command::Asymptotics => {
            let mut cfg = match &g.config {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => AsymptoticsConfig::default(),
            };
            if let Some(p) = g.qmc_points {
                cfg.qmc.points_per_shift = p;
            }
            if let Some(s) = g.qmc_shifts {
                cfg.qmc.shifts = s;
            }
            if let Some(seed) = g.seed {
                cfg.qmc.seed = seed;
            }
            let r = run_asymptotics(&cfg)?;
            emit(out, "asymptotics_report.json", serde_json::to_string_pretty(&r)?.as_bytes())
        }
        Command::DensityGrid { family, tau, theta, nu, grid_n } => {
            let fam = family.resolve(nu);
            let spec = match (tau, theta) {
                (Some(t), _) => param_from_tau(fam, t)?,
                (None, Some(th)) => BivCopulaSpec::new(fam, th)?,
                (None, None) if !fam.has_parameter() => BivCopulaSpec::independence(),
                (None, None) => return Err(Error::Invalid("give --tau or --theta".into())),
            };
            let grid = emit_density_grid(&spec, grid_n)?;
            let mut buf = Vec::new();
            grid.write_csv(&mut buf)?;
            emit(out, "density_grid.csv", &buf)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), if e.is_validation() { 2 } else { 3 }),
    }
}
