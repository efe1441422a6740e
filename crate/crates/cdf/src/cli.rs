//! Command-line entry point. Every command writes its artifacts and a
//! `manifest.json` (command, seed, versions, effective configuration and the
//! list of written files) into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cdf_core::causal::discover;
use cdf_core::coldstart::{self, Donor, Strategy};
use cdf_core::eval::{chronological_split, ExperimentResult, Metric, SweepRow, SweepTarget};
use cdf_core::model::{fit_model, predict, tune, CdfModel, ForecastResult};
use cdf_core::preprocess::preprocess_pipeline;
use cdf_core::synth::{generate_fleet, make_scenario, FleetSpec};
use cdf_core::{Fleet, Panel};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentKind, RunConfig};
use crate::harness;
use crate::io::{self, IoError};

#[derive(Debug, Parser)]
#[command(name = "cdf-cold", version, about = "Causal-graph forecasting and cold-start transfer for data-center fleets")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Fleet directory (`schema.json` + panel CSVs); without it the fleet is generated.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fleet with its ground-truth graph.
    Synth,
    /// Discover the causal graph of each center's training part.
    Discover {
        #[arg(long)]
        center: Option<String>,
    },
    /// Train one model per center and save the bundles.
    Train {
        #[arg(long)]
        center: Option<String>,
        /// Tune over the configured grid (or a small default grid) first.
        #[arg(long)]
        tune: bool,
    },
    /// Forecast with a saved model bundle.
    Forecast {
        #[arg(long)]
        center: String,
        /// Directory holding `<center>.model.json`.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Last observed row; defaults to the last row with a full horizon after it.
        #[arg(long)]
        origin: Option<usize>,
    },
    /// Cold-start forecast for one center using the others as donors.
    Coldstart {
        #[arg(long)]
        center: String,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        /// First row with full history; defaults to the configured cut fraction.
        #[arg(long)]
        cut: Option<usize>,
        #[arg(long)]
        origin: Option<usize>,
        /// Apply the configured cold-start scenario to the center first.
        #[arg(long)]
        simulate: bool,
    },
    /// Run a forecasting or cold-start comparison and write the result table.
    Experiment {
        #[arg(long)]
        kind: Option<String>,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Cold-start error as a function of k.
    Sweep {
        /// `eros` (donor count) or `gmm` (component count).
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        seeds: Option<u64>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Serialize)]
struct Versions {
    cdf_cold: &'static str,
    cdf_core: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    versions: Versions,
    outputs: Vec<String>,
    config: &'a RunConfig,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Runtime(e.to_string()),
        _ => CliError::Config(e.to_string()),
    })?;
    execute(&cli)
}

fn apply_overrides(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let c = &cli.common;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.paths.out_dir = o.clone();
    }
    if let Some(d) = &c.data {
        cfg.paths.data_dir = Some(d.clone());
    }
    cfg.fleet.seed = cfg.seed;
    match &cli.command {
        Command::Train { tune, .. } if *tune => cfg.experiment.tune = true,
        Command::Forecast { models: Some(m), .. } => cfg.paths.model_dir = m.clone(),
        Command::Coldstart { strategy, k, .. } => {
            if let Some(s) = strategy {
                cfg.coldstart.strategy =
                    Strategy::parse(s).ok_or_else(|| CliError::Config(format!("unknown strategy `{s}`")))?;
            }
            if let Some(k) = k {
                cfg.coldstart.k = *k;
            }
        }
        Command::Experiment { kind, methods, seeds } => {
            if let Some(kind) = kind {
                cfg.experiment.kind = match kind.as_str() {
                    "forecast" => ExperimentKind::Forecast,
                    "coldstart" => ExperimentKind::Coldstart,
                    other => return Err(CliError::Config(format!("unknown experiment kind `{other}`"))),
                };
            }
            if let Some(m) = methods {
                cfg.experiment.methods = Some(m.clone());
            }
            if let Some(s) = seeds {
                cfg.experiment.seeds = *s;
            }
        }
        Command::Sweep { target, k_min, k_max, seeds } => {
            if let Some(t) = target {
                cfg.sweep.target =
                    SweepTarget::parse(t).ok_or_else(|| CliError::Config(format!("unknown sweep target `{t}`")))?;
            }
            if let Some(k) = k_min {
                cfg.sweep.k_min = *k;
            }
            if let Some(k) = k_max {
                cfg.sweep.k_max = *k;
            }
            if let Some(s) = seeds {
                cfg.experiment.seeds = *s;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    if let Some(d) = &cfg.paths.data_dir {
        if !d.is_dir() {
            return Err(CliError::Config(format!("data directory {} does not exist", d.display())));
        }
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = apply_overrides(cli)?;
    let out = cfg.paths.out_dir.clone();
    io::ensure_dir(&out)?;
    let pool = harness::pool(cli.common.jobs);
    let (name, outputs) = match &cli.command {
        Command::Synth => ("synth", cmd_synth(&cfg, &out)?),
        Command::Discover { center } => ("discover", cmd_discover(&cfg, &out, center.as_deref(), &pool)?),
        Command::Train { center, .. } => ("train", cmd_train(&cfg, &out, center.as_deref(), &pool)?),
        Command::Forecast { center, origin, .. } => ("forecast", cmd_forecast(&cfg, &out, center, *origin)?),
        Command::Coldstart { center, cut, origin, simulate, .. } => {
            ("coldstart", cmd_coldstart(&cfg, &out, center, *cut, *origin, *simulate, &pool)?)
        }
        Command::Experiment { .. } => ("experiment", cmd_experiment(&cfg, &out, &pool)?),
        Command::Sweep { .. } => ("sweep", cmd_sweep(&cfg, &out, &pool)?),
    };
    write_manifest(&out, name, &cfg, outputs)
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig, written: Vec<PathBuf>) -> Result<(), CliError> {
    let outputs = written
        .iter()
        .map(|p| p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/"))
        .collect();
    let manifest = Manifest {
        command,
        seed: cfg.seed,
        versions: Versions { cdf_cold: env!("CARGO_PKG_VERSION"), cdf_core: cdf_core::VERSION },
        outputs,
        config: cfg,
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(())
}

fn fleet_for_seed(cfg: &RunConfig, seed: u64) -> Result<Fleet, CliError> {
    match &cfg.paths.data_dir {
        Some(dir) => Ok(io::load_fleet(dir)?),
        None => Ok(generate_fleet(&FleetSpec { seed, ..cfg.fleet.clone() }).map_err(runtime)?.0),
    }
}

fn select<'a>(fleet: &'a Fleet, center: Option<&str>) -> Result<Vec<&'a Panel>, CliError> {
    match center {
        Some(id) => Ok(vec![fleet.get(id).ok_or_else(|| CliError::Runtime(format!("center `{id}` not found in the fleet")))?]),
        None => Ok(fleet.panels().iter().collect()),
    }
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (fleet, truth) = generate_fleet(&cfg.fleet).map_err(runtime)?;
    let mut written = io::save_fleet(&fleet, out)?;
    let truth_path = out.join("ground_truth.json");
    io::write_json(&truth_path, &truth)?;
    written.push(truth_path);
    Ok(written)
}

fn cmd_discover(cfg: &RunConfig, out: &Path, center: Option<&str>, pool: &rayon::ThreadPool) -> Result<Vec<PathBuf>, CliError> {
    let fleet = fleet_for_seed(cfg, cfg.seed)?;
    let panels = select(&fleet, center)?;
    let e = &cfg.experiment;
    let graphs: Vec<_> = pool.install(|| {
        panels
            .par_iter()
            .map(|p| {
                let split = chronological_split(p.rows(), e.train_fraction, e.validation_fraction).map_err(runtime)?;
                let training = p.slice(0, split.train_end).map_err(runtime)?;
                let (transformed, _) = preprocess_pipeline(&training, &cfg.pipeline.into()).map_err(runtime)?;
                discover(&transformed, &cfg.causal).map_err(|err| CliError::Runtime(format!("{}: {err}", p.id())))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut written = Vec::new();
    for (p, g) in panels.iter().zip(&graphs) {
        let path = out.join(format!("graph_{}.json", p.id()));
        io::write_json(&path, g)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    center: &'a str,
    train_end: usize,
    val_end: usize,
    validation_loss: f64,
    train_loss: &'a [f64],
    val_loss: &'a [f64],
}

fn cmd_train(cfg: &RunConfig, out: &Path, center: Option<&str>, pool: &rayon::ThreadPool) -> Result<Vec<PathBuf>, CliError> {
    let fleet = fleet_for_seed(cfg, cfg.seed)?;
    let panels = select(&fleet, center)?;
    let ec = cfg.experiment_config(cfg.seed);
    let fitted: Vec<_> = pool.install(|| {
        panels
            .par_iter()
            .map(|p| {
                let split = chronological_split(p.rows(), ec.train_fraction, ec.validation_fraction).map_err(runtime)?;
                let mut fit = ec.fit;
                if let Some(grid) = &ec.grid {
                    fit.model = tune(p, split.train_end, split.val_end, &fit, grid).map_err(runtime)?.best;
                }
                let f = fit_model(p, split.train_end, split.val_end, &fit)
                    .map_err(|err| CliError::Runtime(format!("{}: {err}", p.id())))?;
                Ok((split, f))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut written = Vec::new();
    for (p, (split, f)) in panels.iter().zip(&fitted) {
        let model_path = out.join(format!("{}.model.json", p.id()));
        io::write_json(&model_path, &f.model)?;
        let report_path = out.join(format!("{}.report.json", p.id()));
        let summary = TrainSummary {
            center: p.id(),
            train_end: split.train_end,
            val_end: split.val_end,
            validation_loss: f.validation_loss,
            train_loss: &f.report.train_loss,
            val_loss: &f.report.val_loss,
        };
        io::write_json(&report_path, &summary)?;
        written.push(model_path);
        written.push(report_path);
    }
    Ok(written)
}

fn cmd_forecast(cfg: &RunConfig, out: &Path, center: &str, origin: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let bundle = cfg.paths.model_dir.join(format!("{center}.model.json"));
    if !bundle.is_file() {
        return Err(CliError::Runtime(format!("model bundle not found: {}", bundle.display())));
    }
    let model: CdfModel = io::read_json(&bundle)?;
    let fleet = fleet_for_seed(cfg, cfg.seed)?;
    let panel = select(&fleet, Some(center))?[0];
    let h = model.config.horizon;
    let origin = match origin {
        Some(o) => o,
        None => panel.rows().checked_sub(h + 1).ok_or_else(|| CliError::Runtime("panel shorter than the horizon".into()))?,
    };
    let f = predict(&model, panel, origin).map_err(runtime)?;
    let path = out.join(format!("forecast_{center}.csv"));
    io::write_forecasts_csv(&[(None, &f)], &path)?;
    Ok(vec![path])
}

#[allow(clippy::too_many_arguments)]
fn cmd_coldstart(
    cfg: &RunConfig,
    out: &Path,
    center: &str,
    cut: Option<usize>,
    origin: Option<usize>,
    simulate: bool,
    pool: &rayon::ThreadPool,
) -> Result<Vec<PathBuf>, CliError> {
    let fleet = fleet_for_seed(cfg, cfg.seed)?;
    let target = fleet
        .panels()
        .iter()
        .position(|p| p.id() == center)
        .ok_or_else(|| CliError::Runtime(format!("center `{center}` not found in the fleet")))?;
    let ec = cfg.experiment_config(cfg.seed);
    let rows = fleet.panels()[target].rows();
    let cut = match cut {
        Some(c) if c > 0 && c < rows => c,
        Some(c) => return Err(CliError::Config(format!("cut {c} outside (0, {rows})"))),
        None => ec.cut(rows).map_err(runtime)?,
    };
    let fleet = if simulate {
        make_scenario(ec.scenario, &fleet, target, ec.masked_services, cut).map_err(runtime)?.fleet
    } else {
        fleet
    };
    let donor_cfg = cdf_core::eval::ExperimentConfig { cut_fraction: cut as f64 / rows as f64, ..ec.clone() };
    let others: Vec<usize> = (0..fleet.len()).filter(|&i| i != target).collect();
    let models: Vec<CdfModel> = pool.install(|| {
        others
            .par_iter()
            .map(|&i| {
                let p = &fleet.panels()[i];
                fit_model(p, cut, cut, &donor_cfg.fit).map(|f| f.model).map_err(|e| CliError::Runtime(format!("{}: {e}", p.id())))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let donors: Vec<Donor> =
        others.iter().zip(&models).map(|(&i, model)| Donor { panel: &fleet.panels()[i], model }).collect();
    let panel = &fleet.panels()[target];
    let cs = cdf_core::coldstart::ColdStartConfig { seed: cfg.seed, ..cfg.coldstart };
    let plan = coldstart::plan(panel, cut, &donors, &cs, &ec.fit).map_err(runtime)?;
    let origin = origin.unwrap_or(cut - 1);
    let forecast = plan.forecast(panel, origin).map_err(runtime)?;

    let mut written = Vec::new();
    let path = out.join(format!("coldstart_{center}.csv"));
    io::write_forecasts_csv(&[(None, &forecast)], &path)?;
    written.push(path);

    let candidates = plan.candidates(panel, origin).map_err(runtime)?;
    if !candidates.is_empty() {
        let as_results: Vec<ForecastResult> = candidates
            .iter()
            .map(|c| ForecastResult {
                panel_id: center.to_string(),
                origin,
                attributes: forecast.attributes.clone(),
                values: c.values.clone(),
            })
            .collect();
        let rows: Vec<(Option<&str>, &ForecastResult)> =
            candidates.iter().zip(&as_results).map(|(c, f)| (Some(c.source.as_str()), f)).collect();
        let path = out.join(format!("candidates_{center}.csv"));
        io::write_forecasts_csv(&rows, &path)?;
        written.push(path);
    }

    let mut ranking = String::from("rank,center,score,selected\n");
    for (i, (id, score)) in plan.ranking.entries.iter().enumerate() {
        let _ = writeln!(ranking, "{},{id},{score},{}", i + 1, plan.selected.contains(id));
    }
    let path = out.join(format!("ranking_{center}.csv"));
    io::write_text(&path, &ranking)?;
    written.push(path);
    Ok(written)
}

fn summary_text(results: &[(u64, ExperimentResult)]) -> String {
    let mut s = String::new();
    for (seed, r) in results {
        let _ = writeln!(s, "seed {seed}: median over {} centers", r.rows.iter().map(|x| &x.center).collect::<std::collections::BTreeSet<_>>().len());
        let _ = writeln!(s, "  {:<12} {:>16} {:>16} {:>12}", "method", "mse", "mae", "mape");
        for m in r.methods() {
            let fmt = |metric| r.median(&m, metric).map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(s, "  {:<12} {:>16} {:>16} {:>12}", m, fmt(Metric::Mse), fmt(Metric::Mae), fmt(Metric::Mape));
        }
    }
    s
}

fn cmd_experiment(cfg: &RunConfig, out: &Path, pool: &rayon::ThreadPool) -> Result<Vec<PathBuf>, CliError> {
    let mut per_seed = Vec::new();
    for seed in cfg.seeds() {
        let fleet = fleet_for_seed(cfg, seed)?;
        let ec = cfg.experiment_config(seed);
        let result = match cfg.experiment.kind {
            ExperimentKind::Forecast => harness::forecast_experiment(pool, &fleet, &cfg.forecast_methods()?, &ec),
            ExperimentKind::Coldstart => harness::coldstart_experiment(pool, &fleet, &cfg.coldstart_methods()?, &ec),
        }
        .map_err(runtime)?;
        per_seed.push((seed, result));
    }
    let all = ExperimentResult { rows: per_seed.iter().flat_map(|(_, r)| r.rows.iter().cloned()).collect() };
    let csv_path = out.join("results.csv");
    io::write_results_csv(&all, &csv_path)?;
    let summary_path = out.join("summary.txt");
    io::write_text(&summary_path, &summary_text(&per_seed))?;
    Ok(vec![csv_path, summary_path])
}

fn cmd_sweep(cfg: &RunConfig, out: &Path, pool: &rayon::ThreadPool) -> Result<Vec<PathBuf>, CliError> {
    let ks = cfg.sweep_ks();
    let mut rows: Vec<(u64, SweepRow)> = Vec::new();
    for seed in cfg.seeds() {
        let fleet = fleet_for_seed(cfg, seed)?;
        let ec = cfg.experiment_config(seed);
        let table = harness::sweep(pool, &fleet, cfg.sweep.target, &ks, &ec).map_err(runtime)?;
        rows.extend(table.into_iter().map(|r| (seed, r)));
    }
    let path = out.join("sweep.csv");
    io::write_sweep_csv(&rows, &path)?;
    Ok(vec![path])
}
