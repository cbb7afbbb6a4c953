//! Command line front end for the estimation library: build and check
//! models, run single inferences, sweep the occlusion grid, and time the
//! engines.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use aase_core::schema::{
    model_from_json, model_to_json, posterior_to_csv, posterior_to_json, trace_from_json,
    trace_to_json,
};
use aase_core::{
    accuracy_plot_svg, apply_occlusion, bench_to_csv, build_traffic_model, report_to_csv,
    run_bench, run_table, simulate, validate_model, AaseModel, BenchConfig, EngineChoice,
    HarnessError, InferenceError, InferenceOptions, OcclusionKind, OcclusionPattern, RunConfig,
    SchemaError, Sweep, TrafficConfig, TrafficError,
};

#[derive(Parser)]
#[command(name = "aase", version, about = "Agent-aware state estimation harness")]
struct Cli {
    /// Master seed; overrides the seeds in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file with `traffic`, `run`, and `bench` sections.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Report file format for `table` and `bench`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    ContStart,
    ContEnd,
    ContRandom,
    DiscontRandom,
}

impl From<KindArg> for OcclusionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::ContStart => OcclusionKind::ContStart,
            KindArg::ContEnd => OcclusionKind::ContEnd,
            KindArg::ContRandom => OcclusionKind::ContRandom,
            KindArg::DiscontRandom => OcclusionKind::DiscontRandom,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Auto,
    Exact,
    Factored,
}

impl From<EngineArg> for EngineChoice {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Auto => EngineChoice::Auto,
            EngineArg::Exact => EngineChoice::Exact,
            EngineArg::Factored => EngineChoice::Factored,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Smoothing,
    Filtering,
}

impl From<SweepArg> for Sweep {
    fn from(s: SweepArg) -> Self {
        match s {
            SweepArg::Smoothing => Sweep::Smoothing,
            SweepArg::Filtering => Sweep::Filtering,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and list every violation.
    Validate {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
    /// Build the intersection model from the config and write it out.
    BuildTraffic {
        /// Output file name, joined to --out unless absolute.
        #[arg(long, value_name = "FILE", default_value = "traffic_model.json")]
        model_out: PathBuf,
    },
    /// Sample a ground-truth trajectory and its observation trace.
    Simulate {
        /// Model file; defaults to the config's intersection model.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 300)]
        horizon: usize,
        #[arg(long, value_name = "FILE", default_value = "trace.json")]
        trace_out: PathBuf,
    },
    /// Blank out part of a trace's light channel.
    Occlude {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        fraction: f64,
        #[arg(long, value_name = "FILE", default_value = "occluded.json")]
        trace_out: PathBuf,
    },
    /// Smooth a trace and write the posterior.
    Infer {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        #[arg(long, value_enum, default_value_t = EngineArg::Auto)]
        engine: EngineArg,
        #[arg(long, value_enum, default_value_t = SweepArg::Smoothing)]
        sweep: SweepArg,
    },
    /// Run the occlusion grid and write the accuracy report and plots.
    Table,
    /// Time smoothing across agent counts and fit the line.
    Bench,
}

/// Top-level shape of the config file.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    traffic: Option<TrafficConfig>,
    run: Option<RunConfig>,
    bench: Option<BenchConfig>,
}

enum CliError {
    /// Bad values: config mistakes, failed model validation. Exit 2.
    Validation(String),
    /// The engines rejected the problem (dead evidence). Exit 3.
    Inference(String),
    /// Unreadable or unwritable files, malformed documents. Exit 4.
    Io(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Inference(m) | CliError::Io(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Inference(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TrafficError> for CliError {
    fn from(e: TrafficError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        CliError::Inference(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::BadConfig(m) => CliError::Validation(m),
            HarnessError::Traffic(t) => t.into(),
            HarnessError::Inference(i) => i.into(),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Validate { model } => cmd_validate(model),
        Command::BuildTraffic { model_out } => cmd_build_traffic(cli, &config, model_out),
        Command::Simulate {
            model,
            horizon,
            trace_out,
        } => cmd_simulate(cli, &config, model.as_deref(), *horizon, trace_out),
        Command::Occlude {
            model,
            trace,
            kind,
            fraction,
            trace_out,
        } => cmd_occlude(cli, model, trace, (*kind).into(), *fraction, trace_out),
        Command::Infer {
            model,
            trace,
            engine,
            sweep,
        } => cmd_infer(cli, model, trace, (*engine).into(), (*sweep).into()),
        Command::Table => cmd_table(cli, &config),
        Command::Bench => cmd_bench(cli, &config),
    }
}

fn load_config(cli: &Cli) -> Result<ConfigFile, CliError> {
    let Some(path) = &cli.config else {
        return Ok(ConfigFile::default());
    };
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// The run section with the traffic section and the seed flag folded in.
fn merged_run_config(cli: &Cli, config: &ConfigFile) -> RunConfig {
    let mut run = config.run.clone().unwrap_or_default();
    if let Some(traffic) = &config.traffic {
        run.traffic = traffic.clone();
    }
    if let Some(seed) = cli.seed {
        run.master_seed = seed;
    }
    run
}

fn merged_bench_config(cli: &Cli, config: &ConfigFile) -> BenchConfig {
    let mut bench = config.bench.clone().unwrap_or_default();
    if let Some(traffic) = &config.traffic {
        bench.traffic = traffic.clone();
    }
    if let Some(seed) = cli.seed {
        bench.master_seed = seed;
    }
    bench
}

fn out_path(cli: &Cli, name: &Path) -> PathBuf {
    cli.out.join(name)
}

fn load_model(path: &Path) -> Result<AaseModel, CliError> {
    let model = model_from_json(&read_file(path)?)?;
    let report = validate_model(&model);
    if report.is_ok() {
        Ok(model)
    } else {
        Err(CliError::Validation(format!(
            "{}: model failed validation ({} violations); run `aase validate` for the list",
            path.display(),
            report.violations.len()
        )))
    }
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let model: AaseModel = model_from_json(&read_file(path)?)?;
    let report = validate_model(&model);
    if report.is_ok() {
        println!(
            "ok: {} light states, {} agents",
            model.global.space.len(),
            model.agents.len()
        );
        Ok(())
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        Err(CliError::Validation(format!(
            "{}: model failed validation ({} violations)",
            path.display(),
            report.violations.len()
        )))
    }
}

fn cmd_build_traffic(cli: &Cli, config: &ConfigFile, model_out: &Path) -> Result<(), CliError> {
    let traffic = config.traffic.clone().unwrap_or_default();
    let model: AaseModel = build_traffic_model(&traffic)?;
    let path = out_path(cli, model_out);
    write_file(&path, &model_to_json(&model))?;
    println!(
        "wrote {} ({} light states, {} vehicles)",
        path.display(),
        model.global.space.len(),
        model.agents.len()
    );
    Ok(())
}

fn cmd_simulate(
    cli: &Cli,
    config: &ConfigFile,
    model_path: Option<&Path>,
    horizon: usize,
    trace_out: &Path,
) -> Result<(), CliError> {
    if horizon == 0 {
        return Err(CliError::Validation("horizon must be at least 1".into()));
    }
    let model = match model_path {
        Some(p) => load_model(p)?,
        None => build_traffic_model(&config.traffic.clone().unwrap_or_default())?,
    };
    let seed = cli.seed.unwrap_or(0);
    let (truth, trace) = simulate(&model, horizon, seed);
    let path = out_path(cli, trace_out);
    write_file(&path, &trace_to_json(&model, &trace, Some(&truth)))?;
    println!(
        "wrote {} (horizon {}, {} agent channels, seed {})",
        path.display(),
        trace.horizon,
        trace.agent_obs.len(),
        seed
    );
    Ok(())
}

fn cmd_occlude(
    cli: &Cli,
    model_path: &Path,
    trace_path: &Path,
    kind: OcclusionKind,
    fraction: f64,
    trace_out: &Path,
) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CliError::Validation(format!(
            "occlusion fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let model = load_model(model_path)?;
    let (trace, truth) = trace_from_json(&model, &read_file(trace_path)?)?;
    let pattern = OcclusionPattern::new(kind, fraction, cli.seed.unwrap_or(0));
    let occluded = apply_occlusion(&trace, &pattern);
    let dropped = occluded.global_obs.iter().filter(|o| o.is_none()).count()
        - trace.global_obs.iter().filter(|o| o.is_none()).count();
    let path = out_path(cli, trace_out);
    write_file(&path, &trace_to_json(&model, &occluded, truth.as_ref()))?;
    println!(
        "wrote {} ({kind} {fraction}: dropped {dropped} of {} light observations)",
        path.display(),
        trace.horizon
    );
    Ok(())
}

fn cmd_infer(
    cli: &Cli,
    model_path: &Path,
    trace_path: &Path,
    engine: EngineChoice,
    sweep: Sweep,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let (trace, _) = trace_from_json(&model, &read_file(trace_path)?)?;
    let opts = InferenceOptions {
        engine,
        sweep,
        ..InferenceOptions::default()
    };
    let (post, stats) = aase_core::smooth_with(&model, &trace, &opts)?;

    let json_path = out_path(cli, Path::new("posterior.json"));
    let csv_path = out_path(cli, Path::new("posterior.csv"));
    write_file(&json_path, &posterior_to_json(&post, stats.engine))?;
    write_file(&csv_path, &posterior_to_csv(&post))?;

    let labels: Vec<&str> = post
        .map_ix
        .iter()
        .map(|&ix| post.space.label(ix))
        .collect();
    println!("loglik {:.6}", post.loglik);
    println!("map {}", labels.join(" "));
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn cmd_table(cli: &Cli, config: &ConfigFile) -> Result<(), CliError> {
    let run = merged_run_config(cli, config);
    let report = run_table(&run)?;

    let report_path = match cli.format {
        Format::Csv => {
            let p = out_path(cli, Path::new("report.csv"));
            write_file(&p, &report_to_csv(&report))?;
            p
        }
        Format::Json => {
            let p = out_path(cli, Path::new("report.json"));
            let text = serde_json::to_string_pretty(&report)
                .expect("report serialization cannot fail");
            write_file(&p, &text)?;
            p
        }
    };

    let mut plot_paths = Vec::new();
    for &kind in &run.kinds {
        let name = format!("accuracy_{kind}.svg");
        let p = out_path(cli, Path::new(&name));
        write_file(&p, &accuracy_plot_svg(&report, kind))?;
        plot_paths.push(p);
    }

    println!(
        "{} scenarios x horizon {}: majority {} at {:.3}",
        report.scenarios, report.horizon, report.majority_label, report.majority_accuracy
    );
    println!("wrote {}", report_path.display());
    for p in plot_paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_bench(cli: &Cli, config: &ConfigFile) -> Result<(), CliError> {
    let bench = merged_bench_config(cli, config);
    let report = run_bench(&bench)?;

    let path = match cli.format {
        Format::Csv => {
            let p = out_path(cli, Path::new("bench.csv"));
            write_file(&p, &bench_to_csv(&report))?;
            p
        }
        Format::Json => {
            let p = out_path(cli, Path::new("bench.json"));
            let text = serde_json::to_string_pretty(&report)
                .expect("bench serialization cannot fail");
            write_file(&p, &text)?;
            p
        }
    };

    for point in &report.points {
        println!("n {:>3}: {:.1} ms", point.agents, point.median_ms);
    }
    println!(
        "slope {:.2} ms/agent, intercept {:.2} ms, r2 {:.4}",
        report.slope_ms_per_agent, report.intercept_ms, report.r_squared
    );
    println!("wrote {}", path.display());
    Ok(())
}
