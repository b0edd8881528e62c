//! Experiment suites: sweeps over history length, horizon and seed that end
//! in a flat table of metric rows.

use std::fmt::Write as _;
use std::str::FromStr;

use super::config::ExperimentConfig;
use crate::dataset::{synth_beam_traces, Dataset, Target, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::mobility::{run_simulation, MobilityTrace};
use crate::radio::Deployment;
use crate::seq2seq::{evaluate, train, TrainConfig, TrainOutcome};

pub const METRICS_HEADER: &str = "suite,N,K,seed,k_step,metric,value";
pub const LOSS_HEADER: &str = "episode,split,loss";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    CellAccuracy,
    Convergence,
    DwellMae,
    Multivariate,
    BeamAccuracy,
    Drift,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::CellAccuracy,
        Suite::Convergence,
        Suite::DwellMae,
        Suite::Multivariate,
        Suite::BeamAccuracy,
        Suite::Drift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::CellAccuracy => "cell_accuracy",
            Suite::Convergence => "convergence",
            Suite::DwellMae => "dwell_mae",
            Suite::Multivariate => "multivariate",
            Suite::BeamAccuracy => "beam_accuracy",
            Suite::Drift => "drift",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::Usage(format!("unknown suite `{s}`; expected one of {}", known.join(", ")))
            })
    }
}

/// One metrics table row. `k_step` is the 1-based prediction step, or 0 for
/// values that summarize all steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub suite: &'static str,
    pub history: usize,
    pub horizon: usize,
    pub seed: u64,
    pub k_step: usize,
    pub metric: String,
    pub value: f64,
}

/// Per-episode training loss of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub task: TaskKind,
    pub history: usize,
    pub horizon: usize,
    pub seed: u64,
    pub train_loss: Vec<f64>,
}

impl LossCurve {
    pub fn label(&self) -> String {
        format!("{}_N{}_K{}_seed{}", self.task, self.history, self.horizon, self.seed)
    }

    pub fn to_csv(&self, provenance: &str) -> String {
        let mut out = format!("# {provenance}\n{LOSS_HEADER}\n");
        for (i, loss) in self.train_loss.iter().enumerate() {
            writeln!(out, "{},train,{loss}", i + 1).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub suite: Suite,
    pub rows: Vec<MetricRow>,
    pub curves: Vec<LossCurve>,
}

impl ExperimentReport {
    pub fn metrics_csv(&self, provenance: &str) -> String {
        let mut out = format!("# {provenance}\n{METRICS_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.suite, r.history, r.horizon, r.seed, r.k_step, r.metric, r.value
            )
            .unwrap();
        }
        out
    }

    /// Values of `metric` at (`history`, `horizon`, `k_step`), one per seed in
    /// seed order.
    pub fn values(&self, metric: &str, history: usize, horizon: usize, k_step: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| {
                r.metric == metric && r.history == history && r.horizon == horizon && r.k_step == k_step
            })
            .map(|r| r.value)
            .collect()
    }

    /// Seed mean of [`values`](Self::values).
    pub fn mean(&self, metric: &str, history: usize, horizon: usize, k_step: usize) -> Option<f64> {
        let v = self.values(metric, history, horizon, k_step);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    suite: Suite,
    deployment: Deployment,
    rows: Vec<MetricRow>,
    curves: Vec<LossCurve>,
    progress: &'a mut dyn FnMut(&str),
}

impl Runner<'_> {
    fn row(&mut self, task: &TaskSpec, seed: u64, k_step: usize, metric: impl Into<String>, value: f64) {
        self.rows.push(MetricRow {
            suite: self.suite.name(),
            history: task.history,
            horizon: task.horizon,
            seed,
            k_step,
            metric: metric.into(),
            value,
        });
    }

    fn cell_traces(&self, seed: u64) -> Result<Vec<MobilityTrace>> {
        let sim = &self.config.simulation;
        run_simulation(
            &self.deployment,
            sim.n_ues,
            sim.n_steps,
            &self.config.mobility,
            &self.config.a3,
            seed,
        )
    }

    fn beam_traces(&self, seed: u64, drift: f64) -> Result<Vec<MobilityTrace>> {
        let mut beam = self.config.beam;
        beam.seed = seed;
        beam.drift = drift;
        synth_beam_traces(&beam)
    }

    fn task(&self, kind: TaskKind, history: usize, horizon: usize) -> Result<TaskSpec> {
        TaskSpec::new(kind, history, horizon, self.config.vocab_for(kind))
    }

    /// Splits, trains and records the loss curve plus window counts.
    fn fit(
        &mut self,
        traces: &[MobilityTrace],
        task: TaskSpec,
        seed: u64,
        episodes: Option<usize>,
    ) -> Result<(TrainOutcome, Dataset, Dataset)> {
        (self.progress)(&format!(
            "{} {} N={} K={} seed={seed}",
            self.suite.name(),
            task.kind,
            task.history,
            task.horizon
        ));
        let all = Dataset::from_traces(traces, task)?;
        let (tr, va) = all.split(self.config.task.train_fraction, seed)?;
        let cfg = TrainConfig {
            seed,
            episodes: episodes.unwrap_or(self.config.train.episodes),
            ..self.config.train
        };
        let outcome = train(&tr, &va, &cfg)?;
        self.curves.push(LossCurve {
            task: task.kind,
            history: task.history,
            horizon: task.horizon,
            seed,
            train_loss: outcome.loss_curve(),
        });
        self.row(&task, seed, 0, "train_windows", tr.len() as f64);
        self.row(&task, seed, 0, "validation_windows", va.len() as f64);
        Ok((outcome, tr, va))
    }

    fn accuracy_rows(&mut self, task: &TaskSpec, seed: u64, name: &str, per_step: &[f64]) {
        for (k, a) in per_step.iter().enumerate() {
            self.row(task, seed, k + 1, name, *a);
        }
        let mean = per_step.iter().sum::<f64>() / per_step.len() as f64;
        self.row(task, seed, 0, name, mean);
    }

    fn cell_accuracy(&mut self) -> Result<()> {
        let c = self.config;
        for &seed in &c.suite.seeds {
            let traces = self.cell_traces(seed)?;
            for &n in &c.suite.history_values {
                for &k in &c.suite.horizon_values {
                    let task = self.task(TaskKind::CellToCell, n, k)?;
                    let (out, _, _) = self.fit(&traces, task, seed, None)?;
                    let acc = out.final_metrics().accuracy_per_step.clone();
                    self.accuracy_rows(&task, seed, "accuracy", &acc);
                }
            }
        }
        Ok(())
    }

    fn convergence(&mut self) -> Result<()> {
        let c = self.config;
        let episodes = c.suite.convergence_episodes;
        for &seed in &c.suite.seeds {
            let traces = match c.task.kind {
                TaskKind::BeamToBeam => self.beam_traces(seed, c.beam.drift)?,
                _ => self.cell_traces(seed)?,
            };
            let task = self.task(c.task.kind, c.task.history, c.task.horizon)?;
            let (out, _, _) = self.fit(&traces, task, seed, Some(episodes))?;
            let curve = out.loss_curve();
            let last = *curve.last().expect("at least one episode");
            self.row(&task, seed, 0, "loss_first", curve[0]);
            if let Some(&l10) = curve.get(9) {
                self.row(&task, seed, 0, "loss_episode_10", l10);
                self.row(&task, seed, 0, "relative_gap_episode_10", (l10 - last).abs() / last);
            }
            self.row(&task, seed, 0, "loss_final", last);
            let m = out.final_metrics();
            if let Some(a) = m.accuracy() {
                self.row(&task, seed, 0, "accuracy", a);
            }
            if let Some(e) = m.mae() {
                self.row(&task, seed, 0, "mae", e);
            }
        }
        Ok(())
    }

    fn dwell_mae(&mut self) -> Result<()> {
        let c = self.config;
        for &seed in &c.suite.seeds {
            let traces = self.cell_traces(seed)?;
            for &n in &c.suite.history_values {
                let task = self.task(TaskKind::CellDwellToDwell, n, 1)?;
                let (out, tr, va) = self.fit(&traces, task, seed, None)?;
                let mae = out.final_metrics().mae_per_step.clone();
                self.accuracy_rows(&task, seed, "mae", &mae);
                // constant predictor at the training target mean
                let targets = |d: &Dataset| -> Vec<f64> {
                    d.windows
                        .iter()
                        .filter_map(|w| match &w.target {
                            Target::Dwells(v) => Some(v[0]),
                            Target::Ids(_) => None,
                        })
                        .collect()
                };
                let train_t = targets(&tr);
                let mean = train_t.iter().sum::<f64>() / train_t.len() as f64;
                let val_t = targets(&va);
                let baseline =
                    val_t.iter().map(|t| (t - mean).abs()).sum::<f64>() / val_t.len() as f64;
                self.row(&task, seed, 0, "mae_mean_predictor", baseline);
            }
        }
        Ok(())
    }

    fn multivariate(&mut self) -> Result<()> {
        let c = self.config;
        for &seed in &c.suite.seeds {
            let traces = self.cell_traces(seed)?;
            for &n in &c.suite.history_values {
                for &k in &c.suite.horizon_values {
                    let plain = self.task(TaskKind::CellToCell, n, k)?;
                    let (out, _, _) = self.fit(&traces, plain, seed, None)?;
                    let a_plain = out.final_metrics().accuracy_per_step.clone();
                    let multi = self.task(TaskKind::CellDwellToCell, n, k)?;
                    let (out, _, _) = self.fit(&traces, multi, seed, None)?;
                    let a_multi = out.final_metrics().accuracy_per_step.clone();
                    self.accuracy_rows(&plain, seed, "accuracy_cell", &a_plain);
                    self.accuracy_rows(&plain, seed, "accuracy_cell_dwell", &a_multi);
                    let margin = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                    self.row(&plain, seed, 0, "dwell_margin", margin(&a_multi) - margin(&a_plain));
                }
            }
        }
        Ok(())
    }

    fn beam_accuracy(&mut self) -> Result<()> {
        let c = self.config;
        for &seed in &c.suite.seeds {
            let traces = self.beam_traces(seed, c.beam.drift)?;
            for &n in &c.suite.beam_history_values {
                let task = self.task(TaskKind::BeamToBeam, n, 1)?;
                let (out, _, _) = self.fit(&traces, task, seed, None)?;
                let acc = out.final_metrics().accuracy_per_step.clone();
                self.accuracy_rows(&task, seed, "accuracy", &acc);
                self.row(&task, seed, 0, "chance", 1.0 / task.vocab as f64);
            }
        }
        Ok(())
    }

    /// Trains on drift-free beams, then scores fresh traces at each drift.
    fn drift(&mut self) -> Result<()> {
        let c = self.config;
        for &seed in &c.suite.seeds {
            let task = self.task(TaskKind::BeamToBeam, c.suite.drift_history, 1)?;
            let traces = self.beam_traces(seed, 0.0)?;
            let (out, _, _) = self.fit(&traces, task, seed, None)?;
            let eval_seed = seed.wrapping_add(EVAL_SEED_OFFSET);
            for &drift in &c.suite.drift_values {
                let data = Dataset::from_traces(&self.beam_traces(eval_seed, drift)?, task)?;
                let m = evaluate(&out.model, &data)?;
                let metric = format!("accuracy@drift={drift}");
                self.accuracy_rows(&task, seed, &metric, &m.accuracy_per_step);
            }
        }
        Ok(())
    }
}

/// Seed offset of the held-out traces the drift suite evaluates on.
pub const EVAL_SEED_OFFSET: u64 = 1_000_003;

pub fn run_experiment_suite(config: &ExperimentConfig, suite: &str) -> Result<ExperimentReport> {
    run_experiment_suite_with(config, suite, &mut |_| {})
}

/// As [`run_experiment_suite`], reporting each grid point to `progress`
/// before it trains.
pub fn run_experiment_suite_with(
    config: &ExperimentConfig,
    suite: &str,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentReport> {
    let suite: Suite = suite.parse()?;
    config.validate()?;
    let mut runner = Runner {
        config,
        suite,
        deployment: config.build_deployment()?,
        rows: Vec::new(),
        curves: Vec::new(),
        progress,
    };
    match suite {
        Suite::CellAccuracy => runner.cell_accuracy()?,
        Suite::Convergence => runner.convergence()?,
        Suite::DwellMae => runner.dwell_mae()?,
        Suite::Multivariate => runner.multivariate()?,
        Suite::BeamAccuracy => runner.beam_accuracy()?,
        Suite::Drift => runner.drift()?,
    }
    let Runner {
        mut rows, mut curves, ..
    } = runner;
    rows.sort_by(|a, b| {
        (a.history, a.horizon, &a.metric, a.k_step, a.seed)
            .cmp(&(b.history, b.horizon, &b.metric, b.k_step, b.seed))
    });
    curves.sort_by(|a, b| {
        (a.task, a.history, a.horizon, a.seed).cmp(&(b.task, b.history, b.horizon, b.seed))
    });
    Ok(ExperimentReport { suite, rows, curves })
}
