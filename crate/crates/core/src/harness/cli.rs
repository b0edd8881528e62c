//! Command-line front end. Each subcommand loads the experiment config,
//! applies its overrides and writes plain-text outputs.

use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{digest, provenance, ExperimentConfig};
use super::suite::{run_experiment_suite_with, METRICS_HEADER, LOSS_HEADER};
use crate::dataset::{
    export_beam_log, ingest_beam_trace, synth_beam_traces, BeamTraceFile, Dataset, DatasetMeta,
    TaskKind, TaskSpec, BEAM_LOG_HEADER,
};
use crate::error::{Error, Result};
use crate::mobility::{read_traces, run_simulation, write_traces, MobilityTrace, TraceKind};
use crate::radio::Deployment;
use crate::seq2seq::{evaluate, load_model, save_model, train};

#[derive(Debug, Parser)]
#[command(name = "mobseq", version, about = "Mobility simulation and sequence prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Place base stations and write the deployment file.
    Generate(GenerateArgs),
    /// Simulate UEs (or synthesize beam traces) and write a trace CSV.
    Simulate(SimulateArgs),
    /// Train a model on a trace file.
    Train(TrainArgs),
    /// Score a saved model on a trace file.
    Eval(EvalArgs),
    /// Run a named experiment suite.
    Suite(SuiteArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Experiment config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Deployment file; generated from the config when omitted.
    #[arg(long)]
    pub deployment: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_ues: Option<usize>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Synthesize serving-beam traces instead of cell traces.
    #[arg(long)]
    pub beams: bool,
    /// With --beams, beam drift in degrees.
    #[arg(long)]
    pub drift: Option<f64>,
    /// With --beams, write a raw `timestamp,ue_id,beam_id` log.
    #[arg(long, requires = "beams")]
    pub raw_log: bool,
}

#[derive(Debug, Args)]
pub struct TaskOverrides {
    #[arg(long)]
    pub task: Option<TaskKind>,
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Cell trace CSV, beam trace CSV or raw beam log.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Loss-curve CSV; defaults to `<model>.loss.csv`.
    #[arg(long)]
    pub loss_curve: Option<PathBuf>,
    /// Dataset metadata file; defaults to `<model>.dataset.toml`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[command(flatten)]
    pub task: TaskOverrides,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Metrics CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Expected task; a model trained for another task is rejected.
    #[command(flatten)]
    pub task: TaskOverrides,
    /// Seed recorded in the metrics rows.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Suite name: cell_accuracy, convergence, dwell_mae, multivariate,
    /// beam_accuracy or drift.
    #[arg(long)]
    pub name: Option<String>,
    /// Output directory; `scenario.output_dir` when omitted.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Suppress per-grid-point progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

fn load_config(arg: &ConfigArg) -> Result<ExperimentConfig> {
    match &arg.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("missing required option --{flag}")))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Loads a cell trace CSV, a beam trace CSV or a raw beam log, chosen by the
/// header line. Ids are checked against the task vocabulary later, when
/// windows are built.
pub fn load_traces(path: &Path) -> Result<(TraceKind, Vec<MobilityTrace>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = bytes
        .lines()
        .map_while(std::io::Result::ok)
        .map(|l| l.trim().to_string())
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    let loaded = if header.as_deref() == Some(BEAM_LOG_HEADER) {
        BeamTraceFile::parse(bytes.as_slice(), u32::MAX as usize)
            .map(|file| (TraceKind::Beam, ingest_beam_trace(&file)))
    } else {
        read_traces(bytes.as_slice())
    };
    loaded.map_err(|e| e.with_file(path))
}

fn check_trace_kind(kind: TraceKind, task: TaskKind, path: &Path) -> Result<()> {
    let beam_task = task == TaskKind::BeamToBeam;
    if beam_task != (kind == TraceKind::Beam) {
        return Err(Error::TaskMismatch(format!(
            "task {task} cannot use {} traces from {}",
            if kind == TraceKind::Beam { "beam" } else { "cell" },
            path.display()
        )));
    }
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    let out = required(&args.out, "out")?;
    if let Some(seed) = args.seed {
        config.deployment.seed = seed;
    }
    if let Some(n) = args.stations {
        config.deployment.stations = n;
    }
    config.validate()?;
    let deployment = config.build_deployment()?;
    let text = format!(
        "# {}\n{}",
        provenance(&config, config.deployment.seed),
        deployment.to_toml()
    );
    write_file(out, &text)?;
    println!("wrote {} base stations to {}", deployment.len(), out.display());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    let out = required(&args.out, "out")?;
    if args.beams {
        let beam = &mut config.beam;
        if let Some(s) = args.seed {
            beam.seed = s;
        }
        if let Some(n) = args.n_ues {
            beam.n_ues = n;
        }
        if let Some(n) = args.n_steps {
            beam.n_steps = n;
        }
        if let Some(d) = args.drift {
            beam.drift = d;
        }
    } else {
        let sim = &mut config.simulation;
        if let Some(s) = args.seed {
            sim.seed = s;
        }
        if let Some(n) = args.n_ues {
            sim.n_ues = n;
        }
        if let Some(n) = args.n_steps {
            sim.n_steps = n;
        }
    }
    let (n_ues, n_steps) = if args.beams {
        (config.beam.n_ues, config.beam.n_steps)
    } else {
        (config.simulation.n_ues, config.simulation.n_steps)
    };
    if n_ues == 0 || n_steps == 0 {
        return Err(Error::Usage("n_ues and n_steps must be at least 1".into()));
    }
    config.validate()?;

    let mut buf = Vec::new();
    if args.beams {
        let traces = synth_beam_traces(&config.beam)?;
        let prov = vec![provenance(&config, config.beam.seed)];
        if args.raw_log {
            export_beam_log(&traces).write(&mut buf, &prov)
        } else {
            write_traces(&mut buf, &traces, TraceKind::Beam, &prov)
        }
        .expect("writing to memory");
    } else {
        let deployment = match &args.deployment {
            Some(path) => Deployment::load(path)?,
            None => config.build_deployment()?,
        };
        let sim = config.simulation;
        let traces = run_simulation(
            &deployment,
            sim.n_ues,
            sim.n_steps,
            &config.mobility,
            &config.a3,
            sim.seed,
        )?;
        let mut prov = provenance(&config, sim.seed);
        if args.deployment.is_some() {
            // the deployment file is an input the config hash does not see
            let digest = digest(deployment.to_toml().as_bytes());
            prov.push_str(&format!(" deployment_hash={digest}"));
        }
        write_traces(&mut buf, &traces, TraceKind::Cell, &[prov]).expect("writing to memory");
    }
    let text = String::from_utf8(buf).expect("traces are ASCII");
    write_file(out, &text)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn apply_task(config: &mut ExperimentConfig, t: &TaskOverrides) {
    if let Some(kind) = t.task {
        config.task.kind = kind;
    }
    if let Some(n) = t.history {
        config.task.history = n;
    }
    if let Some(k) = t.horizon {
        config.task.horizon = k;
    }
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    let traces_path = required(&args.traces, "traces")?;
    let model_path = required(&args.model, "model")?;
    apply_task(&mut config, &args.task);
    if let Some(e) = args.episodes {
        config.train.episodes = e;
    }
    if let Some(s) = args.seed {
        config.train.seed = s;
    }
    if let Some(lr) = args.lr {
        config.train.lr = lr;
    }
    config.validate()?;
    let t = config.task;
    let task = TaskSpec::new(t.kind, t.history, t.horizon, config.vocab_for(t.kind))?;
    let (kind, traces) = load_traces(traces_path)?;
    check_trace_kind(kind, task.kind, traces_path)?;
    let all = Dataset::from_traces(&traces, task).map_err(|e| e.with_file(traces_path))?;
    if all.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let seed = config.train.seed;
    let (tr, va) = all.split(t.train_fraction, seed)?;
    let outcome = train(&tr, &va, &config.train)?;
    save_model(&outcome.model, model_path)?;

    let prov = provenance(&config, seed);
    let mut curve = format!("# {prov}\n{LOSS_HEADER}\n");
    for (i, loss) in outcome.loss_curve().iter().enumerate() {
        curve.push_str(&format!("{},train,{loss}\n", i + 1));
    }
    let loss_path = args
        .loss_curve
        .clone()
        .unwrap_or_else(|| with_suffix(model_path, ".loss.csv"));
    write_file(&loss_path, &curve)?;
    let meta_path = args
        .meta
        .clone()
        .unwrap_or_else(|| with_suffix(model_path, ".dataset.toml"));
    write_file(&meta_path, &format!("# {prov}\n{}", DatasetMeta::new(&tr, &va).to_toml()))?;

    let m = outcome.final_metrics();
    match (m.accuracy(), m.mae()) {
        (Some(a), _) => println!("validation accuracy {a:.4} over {} windows", m.windows),
        (_, Some(e)) => println!("validation mae {e:.4} steps over {} windows", m.windows),
        _ => {}
    }
    Ok(())
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let model_path = required(&args.model, "model")?;
    let traces_path = required(&args.traces, "traces")?;
    let out = required(&args.out, "out")?;
    let model = load_model(model_path)?;
    let task = model.task;
    let t = &args.task;
    let wanted = (
        t.task.unwrap_or(task.kind),
        t.history.unwrap_or(task.history),
        t.horizon.unwrap_or(task.horizon),
    );
    if wanted != (task.kind, task.history, task.horizon) {
        return Err(Error::TaskMismatch(format!(
            "model {} is {} N={} K={}, requested {} N={} K={}",
            model_path.display(),
            task.kind,
            task.history,
            task.horizon,
            wanted.0,
            wanted.1,
            wanted.2
        )));
    }
    let (kind, traces) = load_traces(traces_path)?;
    check_trace_kind(kind, task.kind, traces_path)?;
    let data = Dataset::from_traces(&traces, task).map_err(|e| e.with_file(traces_path))?;
    let metrics = evaluate(&model, &data)?;
    let seed = args.seed.unwrap_or(config.train.seed);

    let (name, values) = if task.kind.predicts_dwell() {
        ("mae", &metrics.mae_per_step)
    } else {
        ("accuracy", &metrics.accuracy_per_step)
    };
    let mut csv = format!("# {}\n{METRICS_HEADER}\n", provenance(&config, seed));
    for (k, v) in values.iter().enumerate() {
        csv.push_str(&format!(
            "eval,{},{},{seed},{},{name},{v}\n",
            task.history,
            task.horizon,
            k + 1
        ));
    }
    write_file(out, &csv)?;
    for (k, v) in values.iter().enumerate() {
        println!("k={} {name} {v:.4}", k + 1);
    }
    Ok(())
}

fn suite_cmd(args: &SuiteArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    let name = required(&args.name, "name")?;
    if let Some(seeds) = &args.seeds {
        config.suite.seeds = seeds.clone();
    }
    if let Some(e) = args.episodes {
        config.train.episodes = e;
    }
    config.validate()?;
    let out_dir = args.out_dir.clone().unwrap_or_else(|| config.scenario.output_dir.clone());
    let quiet = args.quiet;
    let report = run_experiment_suite_with(&config, name, &mut |msg| {
        if !quiet {
            eprintln!("{msg}");
        }
    })?;
    let seeds: Vec<String> = config.suite.seeds.iter().map(u64::to_string).collect();
    let prov = provenance(&config, seeds.join(";"));
    let dir = out_dir.join(report.suite.name());
    write_file(&dir.join("metrics.csv"), &report.metrics_csv(&prov))?;
    for curve in &report.curves {
        let prov = provenance(&config, curve.seed);
        write_file(&dir.join(format!("loss_{}.csv", curve.label())), &curve.to_csv(&prov))?;
    }
    println!("wrote {} rows to {}", report.rows.len(), dir.join("metrics.csv").display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Suite(a) => suite_cmd(a),
    }
}

/// Single-line, machine-parsable error report.
pub fn error_line(err: &Error) -> String {
    let message = err.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error kind={} message=\"{message}\"", err.kind())
}
