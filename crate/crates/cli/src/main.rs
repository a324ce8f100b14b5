use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use medsurv::config::{RunConfig, ThresholdSetting};
use medsurv::data::{load_dataset, Schema};
use medsurv::error::{ConfigError, DataError, Error};
use medsurv::pipeline::{analysis_stream, calibrate_null_sim, calibrate_permutation, run_pipeline, CalibrationRun};
use medsurv::result::{build_result, AnalysisResult, ThresholdInfo};
use medsurv::select::{Thresholds, ThresholdsFile};
use medsurv::simgen::{censoring_rate, gen_scenario, Family, Scenario, ScenarioSpec};

#[derive(Parser)]
#[command(
    name = "medsurv",
    version,
    about = "Subgroups with heterogeneous mediation effects in survival data"
)]
struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset and its truth file.
    Simulate(SimulateArgs),
    /// Calibrate the selection thresholds under a homogeneous null.
    Calibrate(CalibrateArgs),
    /// Run the full analysis on a dataset.
    Analyze(AnalyzeArgs),
    /// Print a text report from a result file.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long, default_value = "complex")]
    family: String,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Target censoring fraction.
    #[arg(long)]
    censoring: Option<f64>,
}

impl ScenarioArgs {
    fn spec(&self) -> Result<ScenarioSpec, Error> {
        let family: Family = self.family.parse().map_err(usage)?;
        let name = self
            .scenario
            .as_deref()
            .ok_or_else(|| usage("--scenario is required".into()))?;
        let scenario: Scenario = name.parse().map_err(usage)?;
        let mut spec = ScenarioSpec::new(family, scenario, self.n);
        if let Some(l) = self.lambda_scale {
            spec.lambda_scale = l;
        }
        if let Some(c) = self.censoring {
            spec.censoring_rate_target = c;
        }
        spec.validate().map_err(usage)?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, env = "MEDSURV_SEED", default_value_t = 1)]
    seed: u64,
    /// Dataset path; the truth file is written next to it as `<stem>.truth.csv`.
    #[arg(long, default_value = "sim.csv")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SchemaArgs {
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "event")]
    event_col: String,
    #[arg(long, default_value = "trt")]
    trt_col: String,
    #[arg(long, default_value = "mediator")]
    mediator_col: String,
    /// Comma-separated covariate columns (default: all remaining columns).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long)]
    mediator_time_col: Option<String>,
}

impl SchemaArgs {
    fn schema(&self) -> Schema {
        Schema {
            time_col: self.time_col.clone(),
            event_col: self.event_col.clone(),
            treatment_col: self.trt_col.clone(),
            mediator_col: self.mediator_col.clone(),
            covariates: self.covariates.clone(),
            mediator_time_col: self.mediator_time_col.clone(),
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Calibrate on simulated homogeneous datasets.
    #[arg(long, conflicts_with = "permute")]
    null_sim: bool,
    /// Calibrate by permuting covariate rows of this dataset.
    #[arg(long, value_name = "DATA")]
    permute: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long)]
    perms: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "MEDSURV_SEED")]
    seed: Option<u64>,
    #[arg(long, default_value = "thresholds.txt")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    data: PathBuf,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Thresholds file written by `calibrate`.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    /// Permutations used when the config asks for in-run calibration.
    #[arg(long, default_value_t = 100)]
    perms: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, env = "MEDSURV_SEED")]
    seed: Option<u64>,
    #[arg(long, default_value = "result.json")]
    out: PathBuf,
    /// Directory for figure-data files (default: `<out stem>_figures`).
    #[arg(long)]
    figures: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    result: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn usage(message: String) -> Error {
    Error::Config(ConfigError::Invalid(message))
}

fn check_alpha(alpha: f64) -> Result<(), Error> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(usage(format!("--alpha must lie in [0, 1], got {alpha}")))
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(Error::Io)
                .with_context(|| format!("reading config {}", p.display()))?;
            RunConfig::parse(&text).map_err(Error::Config)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents)
        .map_err(Error::Io)
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let spec = args.scenario.spec()?;
    let sim = gen_scenario(&spec, args.seed).map_err(Error::Data)?;
    let truth_path = sibling(&args.out, ".truth.csv");
    write(&args.out, &sim.dataset.to_csv(&Schema::default()))?;
    write(&truth_path, &sim.truth_csv())?;
    println!(
        "simulated {} {}: n = {}, events = {}, censoring rate = {:.3} -> {}, {}",
        spec.family,
        spec.scenario,
        sim.dataset.n(),
        sim.dataset.n_events(),
        censoring_rate(&sim.dataset),
        args.out.display(),
        truth_path.display()
    );
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> anyhow::Result<()> {
    check_alpha(args.alpha)?;
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    let seed = cfg.rng_seed;
    let (run, method, count): (CalibrationRun, String, usize) = match (&args.permute, args.null_sim) {
        (Some(path), _) => {
            let ing = load_dataset(path, &args.schema.schema()).map_err(Error::Data)?;
            cfg.validate(Some(ing.dataset.n())).map_err(Error::Config)?;
            let perms = args.perms.unwrap_or(args.reps);
            info!("permutation calibration: {perms} permutations of {}", path.display());
            let run = calibrate_permutation(&ing.dataset, &cfg, perms, args.alpha, seed)?;
            (run, format!("permutation:{}", path.display()), perms)
        }
        (None, true) => {
            let spec = args.scenario.spec()?;
            if spec.scenario.is_heterogeneous() {
                return Err(usage(format!(
                    "null simulation needs a homogeneous scenario (Null or Global), got {}",
                    spec.scenario
                ))
                .into());
            }
            cfg.validate(Some(spec.n)).map_err(Error::Config)?;
            info!(
                "null-simulation calibration: {} reps of {} {} at n = {}",
                args.reps, spec.family, spec.scenario, spec.n
            );
            let run = calibrate_null_sim(&spec, &cfg, args.reps, args.alpha, seed)?;
            (
                run,
                format!("null-sim:{}:{}:n={}", spec.family, spec.scenario, spec.n),
                args.reps,
            )
        }
        (None, false) => return Err(usage("calibrate needs --null-sim or --permute <DATA>".into()).into()),
    };
    if run.failed > 0 {
        warn!(
            "{} of {count} calibration replicates failed and count as non-detections",
            run.failed
        );
    }
    let file = ThresholdsFile {
        py_star: run.calibration.thresholds.py_star,
        pm_star: run.calibration.thresholds.pm_star,
        alpha: args.alpha,
        n_reps: count,
        method,
        seed,
        joint_rate: Some(run.calibration.joint_rate),
    };
    write(&args.out, &file.to_text())?;
    println!(
        "pY* = {:e}, pM* = {:e}, joint rate = {:.3} over {count} replicates -> {}",
        file.py_star,
        file.pm_star,
        run.calibration.joint_rate,
        args.out.display()
    );
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    check_alpha(args.alpha)?;
    let cfg = load_config(args.config.as_deref(), args.seed)?;
    let seed = cfg.rng_seed;
    let ing = load_dataset(&args.data, &args.schema.schema()).map_err(Error::Data)?;
    let ds = &ing.dataset;
    cfg.validate(Some(ds.n())).map_err(Error::Config)?;

    let info = if let Some(path) = &args.thresholds {
        let text = std::fs::read_to_string(path)
            .map_err(Error::Io)
            .with_context(|| format!("reading thresholds {}", path.display()))?;
        let file = ThresholdsFile::parse(&text).map_err(Error::Config)?;
        ThresholdInfo {
            py_star: file.py_star,
            pm_star: file.pm_star,
            source: format!(
                "{} ({}, alpha {}, {} reps)",
                path.display(),
                file.method,
                file.alpha,
                file.n_reps
            ),
            calibrated: true,
        }
    } else {
        match cfg.thresholds {
            ThresholdSetting::Calibrate => {
                info!("calibrating thresholds with {} covariate permutations", args.perms);
                let run = calibrate_permutation(ds, &cfg, args.perms, args.alpha, seed)?;
                ThresholdInfo {
                    py_star: run.calibration.thresholds.py_star,
                    pm_star: run.calibration.thresholds.pm_star,
                    source: format!(
                        "in-run permutation calibration (alpha {}, {} perms)",
                        args.alpha, args.perms
                    ),
                    calibrated: true,
                }
            }
            ThresholdSetting::Fixed { py_star, pm_star } => {
                warn!("UNCALIBRATED thresholds pY* = {py_star}, pM* = {pm_star}; run `medsurv calibrate` for error control");
                ThresholdInfo {
                    py_star,
                    pm_star,
                    source: "fixed in configuration".into(),
                    calibrated: false,
                }
            }
        }
    };
    let thresholds = Thresholds {
        py_star: info.py_star,
        pm_star: info.pm_star,
    };
    let run = run_pipeline(ds, &cfg, thresholds, &analysis_stream(seed))?;
    let result = build_result(ds, Some(&ing), &cfg, &run, info, seed)?;
    write(&args.out, &result.to_json())?;
    let fig_dir = args.figures.unwrap_or_else(|| sibling(&args.out, "_figures"));
    result.write_figures(&fig_dir)?;
    println!(
        "verdict: {:?}, {} subgroup(s) -> {}, figures in {}",
        result.verdict,
        result.subgroups.len(),
        args.out.display(),
        fig_dir.display()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.result)
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", args.result.display()))?;
    let result = AnalysisResult::from_json(&text)?;
    let report = result.report();
    match args.out {
        Some(p) => write(&p, &report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return e.exit_code() as u8;
        }
        if cause.downcast_ref::<DataError>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
    }
    1
}

/// The cause chain, skipping causes already quoted by their parent.
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !prev.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        prev = msg;
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global() {
            warn!("could not set thread count: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
