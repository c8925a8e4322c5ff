//! The `heatinv` command line.
//!
//! Every command writes its outputs and a `manifest.json` into `--out`.
//! The manifest holds the resolved configuration, the command with its
//! arguments, the derived seeds and the output file names, so
//! `heatinv replay --manifest <dir>/manifest.json --out <other>` reruns the
//! command and compares the outputs byte for byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::checks::run_checks;
use super::config::Config;
use super::lowerbound::lower_bound_report;
use super::oracle::oracle_check;
use super::rates::{run_rate_study, truth_field};
use crate::error::{Error, Result};
use crate::grid::{save_spacetime, FieldFormat, SpatialField};
use crate::inference::{diagnostics, posterior_mean, push_forward, run_chain, ChainConfig};
use crate::measurement::{generate_data, load_dataset, save_dataset, ForwardModel};
use crate::prior::{link_phi_field, Prior};
use crate::rng;
use crate::solver::solve_forward;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "heatinv", version, about = "Absorption-coefficient recovery for the heat equation with killing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct Common {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the root seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Solve the forward problem for the configured truth and dump `u`.
    Forward {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Compare the solver with Feynman-Kac path estimates.
    OracleCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a dataset from the configured truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of observations.
        #[arg(long)]
        n: usize,
        /// Replicate index; selects the seed exactly as the rate study does.
        #[arg(long, default_value_t = 0)]
        replicate: usize,
    },
    /// Run the pCN chain on a dataset.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
    },
    /// Run the contraction-rate study.
    Rates {
        #[command(flatten)]
        common: Common,
    },
    /// Build the hypercube alternatives and report separations and KL.
    Lowerbound {
        #[command(flatten)]
        common: Common,
    },
    /// Run the inequality checks.
    Checks {
        #[command(flatten)]
        common: Common,
    },
    /// Rerun the command recorded in a manifest and compare outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Binary,
}

impl Command {
    fn common(&self) -> Option<&Common> {
        match self {
            Command::Forward { common, .. }
            | Command::OracleCheck { common }
            | Command::Simulate { common, .. }
            | Command::Sample { common, .. }
            | Command::Rates { common }
            | Command::Lowerbound { common }
            | Command::Checks { common } => Some(common),
            Command::Replay { .. } => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Forward { .. } => "forward",
            Command::OracleCheck { .. } => "oracle-check",
            Command::Simulate { .. } => "simulate",
            Command::Sample { .. } => "sample",
            Command::Rates { .. } => "rates",
            Command::Lowerbound { .. } => "lowerbound",
            Command::Checks { .. } => "checks",
            Command::Replay { .. } => "replay",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub config: Config,
    pub seeds: serde_json::Value,
    pub versions: serde_json::Value,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Result of one command: files written and a JSON summary.
struct Outcome {
    outputs: Vec<String>,
    seeds: serde_json::Value,
    summary: serde_json::Value,
}

fn resolve_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(dir: &Path, name: &str, v: &impl Serialize) -> Result<String> {
    let mut file = fs::File::create(dir.join(name))?;
    writeln!(file, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(name.into())
}

fn write_spatial_csv(dir: &Path, name: &str, columns: &[(&str, &SpatialField)]) -> Result<String> {
    let grid = *columns[0].1.grid();
    let mut w = csv::Writer::from_path(dir.join(name))?;
    let mut header: Vec<String> = (1..=grid.dim()).map(|a| format!("x{a}")).collect();
    header.extend(columns.iter().map(|(c, _)| c.to_string()));
    w.write_record(&header)?;
    for idx in 0..grid.n_space() {
        let x = grid.node_coords(idx);
        let mut row: Vec<String> = x[..grid.dim()].iter().map(|c| format!("{c:.16e}")).collect();
        row.extend(columns.iter().map(|(_, f)| format!("{:.16e}", f.values()[idx])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(name.into())
}

fn execute(cmd: &Command, cfg: &Config, out: &Path) -> Result<Outcome> {
    let grid = cfg.grid()?;
    let mut outputs = Vec::new();
    let mut seeds = json!({ "root": cfg.seed });
    let summary = match cmd {
        Command::Forward { format, .. } => {
            let bd = cfg.boundary.build(grid)?;
            let f0 = link_phi_field(&truth_field(cfg, grid)?, &cfg.link)?;
            let u = solve_forward(&f0, &bd, &grid, &cfg.scheme)?;
            let format = match format {
                Format::Csv => FieldFormat::Csv,
                Format::Binary => FieldFormat::Binary,
            };
            save_spacetime(&u, &out.join("u"), format)?;
            outputs.push("u.json".into());
            outputs.push(if format == FieldFormat::Csv { "u.csv" } else { "u.bin" }.into());
            outputs.push(write_spatial_csv(out, "f0.csv", &[("f", f0.field())])?);
            json!({ "u_min": u.min(), "u_max": u.max_abs() })
        }
        Command::OracleCheck { .. } => {
            let check = oracle_check(cfg)?;
            check.report.write_csv(&out.join("oracle.csv"), grid.dim())?;
            outputs.push("oracle.csv".into());
            let summary = json!({
                "solver": check.report.summary_json(),
                "corrupted_control": check.control.summary_json(),
                "pass": check.pass(),
            });
            outputs.push(write_json(out, "oracle_summary.json", &summary)?);
            summary
        }
        Command::Simulate { n, replicate, .. } => {
            let data_seed = rng::derive_seed(cfg.seed, &[*n as u64, *replicate as u64, 0]);
            seeds["data"] = data_seed.into();
            let bd = cfg.boundary.build(grid)?;
            let f0 = link_phi_field(&truth_field(cfg, grid)?, &cfg.link)?;
            let data = generate_data(&f0, &bd, &grid, &cfg.scheme, *n, cfg.study.sigma, data_seed)?
                .with_truth(json!({ "series_coefficients": cfg.study.truth, "alpha": cfg.prior.alpha }));
            save_dataset(&data, &out.join("data.csv"))?;
            outputs.extend(["data.csv".into(), "data.json".into()]);
            json!({ "n": n, "sigma": cfg.study.sigma })
        }
        Command::Sample { data, replicate, .. } => {
            let data = load_dataset(data)?;
            let n = data.len();
            let chain_seed = rng::derive_seed(cfg.seed, &[n as u64, *replicate as u64, 1]);
            seeds["chain"] = chain_seed.into();
            let bd = cfg.boundary.build(grid)?;
            let mut model = ForwardModel::new(&data, cfg.link, bd, cfg.scheme)?;
            if data.sigma() == 0.0 {
                model = model.with_noiseless_limit();
            }
            let prior = Prior::new(&cfg.prior.spec_for(n, grid.dim()), &cfg.cutoff, grid)?;
            let chain_cfg = ChainConfig {
                seed: chain_seed,
                ..cfg.chain
            };
            let chain = run_chain(&chain_cfg, &model, &prior, None)?;
            chain.save(&out.join("chain"))?;
            outputs.extend(["chain.json".into(), "chain.bin".into()]);
            let f_bar = posterior_mean(&chain, &prior)?;
            let f = push_forward(&f_bar, &cfg.link)?;
            outputs.push(write_spatial_csv(out, "posterior_mean.csv", &[("F", &f_bar), ("f", f.field())])?);
            let diag = diagnostics(&chain, &prior, &cfg.study.thresholds)?;
            outputs.push(write_json(out, "diagnostics.json", &diag)?);
            serde_json::to_value(&diag)?
        }
        Command::Rates { .. } => {
            let study = run_rate_study(cfg)?;
            outputs.extend(study.write(out)?);
            serde_json::to_value(&study.slopes)?
        }
        Command::Lowerbound { .. } => {
            let report = lower_bound_report(cfg)?;
            outputs.push(write_json(out, "lowerbound.json", &report)?);
            json!({ "m": report.m, "epsilon": report.epsilon, "violations": report.violations, "pass": report.pass })
        }
        Command::Checks { .. } => {
            let reports = run_checks(cfg)?;
            outputs.push(write_json(out, "checks.json", &reports)?);
            json!(reports.iter().map(|r| json!({ "name": r.name, "max_ratios": r.max_ratios, "pass": r.pass })).collect::<Vec<_>>())
        }
        Command::Replay { .. } => unreachable!("replay is dispatched by run"),
    };
    Ok(Outcome { outputs, seeds, summary })
}

fn run_and_record(cmd: &Command, cfg: &Config, out: &Path) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let outcome = execute(cmd, cfg, out)?;
    let manifest = Manifest {
        command: cmd.clone(),
        config: cfg.clone(),
        seeds: outcome.seeds,
        versions: json!({ "heatinv": env!("CARGO_PKG_VERSION"), "manifest": 1 }),
        outputs: outcome.outputs,
        summary: outcome.summary,
    };
    write_json(out, MANIFEST, &manifest)?;
    Ok(manifest)
}

/// Reruns a recorded command into `out` and compares every output file.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<serde_json::Value> {
    let recorded = Manifest::load(manifest_path)?;
    let source = manifest_path.parent().unwrap_or(Path::new("."));
    let rerun = run_and_record(&recorded.command, &recorded.config, out)?;
    let mut mismatched = Vec::new();
    for name in recorded.outputs.iter().chain(std::iter::once(&MANIFEST.to_string())) {
        if fs::read(source.join(name))? != fs::read(out.join(name))? {
            mismatched.push(name.clone());
        }
    }
    if rerun.outputs != recorded.outputs {
        mismatched.push("output list".into());
    }
    if !mismatched.is_empty() {
        return Err(Error::Replay(mismatched.join(", ")));
    }
    Ok(json!({ "replay": { "command": recorded.command.name(), "identical": recorded.outputs.len() + 1 } }))
}

/// Runs a parsed command; returns the JSON printed on success.
pub fn run(cli: Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Replay { manifest, out } => replay(manifest, out),
        cmd => {
            let mut cmd = cmd.clone();
            // record inputs by absolute path so a replay can run from anywhere
            if let Command::Sample { data, .. } = &mut cmd {
                *data = fs::canonicalize(&*data)
                    .map_err(|e| Error::Config(format!("cannot read dataset {}: {e}", data.display())))?;
            }
            let cmd = &cmd;
            let common = cmd.common().expect("non-replay commands carry common arguments");
            let cfg = resolve_config(common)?;
            let manifest = run_and_record(cmd, &cfg, &common.out)?;
            Ok(json!({ "command": cmd.name(), "out": common.out, "outputs": manifest.outputs, "summary": manifest.summary }))
        }
    }
}

/// `{"error": {"category": ..., "message": ...}}`.
pub fn error_json(e: &Error) -> serde_json::Value {
    json!({ "error": { "category": e.category(), "message": e.to_string() } })
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            1
        }
    }
}
