//! Supervised windows over mobility-history traces.
//!
//! A window pairs `history` consecutive trace entries with the `horizon`
//! entries that follow them. Windows keep raw ids and dwell counts; features
//! and normalized labels are produced on demand with the owning dataset's
//! dwell scale, so a train/validation split can refit the scale on the
//! training side only.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mobility::{MobilityTrace, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Cell-id history to future cell ids.
    CellToCell,
    /// Cell-id and dwell history to future dwell-times.
    CellDwellToDwell,
    /// Cell-id and dwell history to future cell ids.
    CellDwellToCell,
    /// Serving-beam history to future serving beams.
    BeamToBeam,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::CellToCell,
        TaskKind::CellDwellToDwell,
        TaskKind::CellDwellToCell,
        TaskKind::BeamToBeam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::CellToCell => "cell_to_cell",
            TaskKind::CellDwellToDwell => "cell_dwell_to_dwell",
            TaskKind::CellDwellToCell => "cell_dwell_to_cell",
            TaskKind::BeamToBeam => "beam_to_beam",
        }
    }

    pub fn has_dwell_features(self) -> bool {
        matches!(self, TaskKind::CellDwellToDwell | TaskKind::CellDwellToCell)
    }

    pub fn predicts_dwell(self) -> bool {
        self == TaskKind::CellDwellToDwell
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            TaskKind::CellToCell => 0,
            TaskKind::CellDwellToDwell => 1,
            TaskKind::CellDwellToCell => 2,
            TaskKind::BeamToBeam => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown task kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// History length `N`.
    pub history: usize,
    /// Prediction horizon `K`.
    pub horizon: usize,
    /// Vocabulary size `L`: number of cells, or of beams.
    pub vocab: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, history: usize, horizon: usize, vocab: usize) -> Result<Self> {
        let task = TaskSpec {
            kind,
            history,
            horizon,
            vocab,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.history < 1 || self.horizon < 1 || self.vocab < 2 {
            return Err(Error::InvalidConfig(format!(
                "task needs N >= 1, K >= 1, L >= 2 (got N={}, K={}, L={})",
                self.history, self.horizon, self.vocab
            )));
        }
        Ok(())
    }

    /// Feature columns: one-hot ids, plus one dwell column when present.
    pub fn feature_width(&self) -> usize {
        self.vocab + usize::from(self.kind.has_dwell_features())
    }

    /// Width of each output head.
    pub fn output_width(&self) -> usize {
        if self.kind.predicts_dwell() {
            1
        } else {
            self.vocab
        }
    }
}

/// Min-max range, in reporting steps, mapping dwell-times onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellScale {
    pub min: f64,
    pub max: f64,
}

impl DwellScale {
    /// Range spanned by `values`; a degenerate range is widened to one step.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut it = values.into_iter();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let max = if max > min { max } else { min + 1.0 };
        Some(DwellScale { min, max })
    }

    pub fn normalize(&self, dwell: f64) -> f64 {
        ((dwell - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        self.min + value * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Future ids, 1-based.
    Ids(Vec<u32>),
    /// Future dwell-times in reporting steps.
    Dwells(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Ids(v) => v.len(),
            Target::Dwells(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub ids: Vec<u32>,
    /// Present for dwell-bearing tasks.
    pub dwells: Option<Vec<f64>>,
    pub target: Target,
}

impl Window {
    fn dwell_values(&self) -> impl Iterator<Item = f64> + '_ {
        let history = self.dwells.iter().flatten().copied();
        let target = match &self.target {
            Target::Dwells(d) => d.as_slice(),
            Target::Ids(_) => &[],
        };
        history.chain(target.iter().copied())
    }
}

/// Normalized training labels for one window.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// Zero-based class index per head.
    Classes(Vec<usize>),
    /// Dwell-time per head, scaled to [0, 1].
    Values(Vec<f64>),
}

fn check_vocab(id: u32, vocab: usize) -> Result<()> {
    if id >= 1 && id as usize <= vocab {
        Ok(())
    } else {
        Err(Error::Vocabulary {
            id,
            vocab,
            context: String::new(),
        })
    }
}

/// Stride-1 sliding windows over a single trace segment.
pub fn build_windows(trace: &MobilityTrace, task: &TaskSpec) -> Result<Vec<Window>> {
    task.validate()?;
    for e in &trace.entries {
        check_vocab(e.id, task.vocab)?;
    }
    let (n, k) = (task.history, task.horizon);
    let entries = &trace.entries;
    let count = (entries.len() + 1).saturating_sub(n + k);
    let windows = (0..count)
        .map(|start| {
            let hist = &entries[start..start + n];
            let future = &entries[start + n..start + n + k];
            let dwells = task
                .kind
                .has_dwell_features()
                .then(|| hist.iter().map(|e| f64::from(e.dwell)).collect());
            let target = if task.kind.predicts_dwell() {
                Target::Dwells(future.iter().map(|e| f64::from(e.dwell)).collect())
            } else {
                Target::Ids(future.iter().map(|e| e.id).collect())
            };
            Window {
                ids: hist.iter().map(|e| e.id).collect(),
                dwells,
                target,
            }
        })
        .collect();
    Ok(windows)
}

/// One-hot encodes `ids` over `task.vocab` columns and, for dwell-bearing
/// tasks, appends the scaled dwell as a final column.
pub fn encode_features(
    ids: &[u32],
    dwells: Option<&[f64]>,
    task: &TaskSpec,
    scale: Option<&DwellScale>,
) -> Result<Matrix> {
    let with_dwell = task.kind.has_dwell_features();
    if with_dwell != dwells.is_some() {
        return Err(Error::Shape(format!(
            "task {} {} dwell values",
            task.kind,
            if with_dwell { "requires" } else { "does not take" }
        )));
    }
    if let Some(d) = dwells {
        if d.len() != ids.len() {
            return Err(Error::Shape(format!(
                "{} ids but {} dwell values",
                ids.len(),
                d.len()
            )));
        }
    }
    let width = task.feature_width();
    let mut m = Matrix::zeros(ids.len(), width);
    for (r, &id) in ids.iter().enumerate() {
        check_vocab(id, task.vocab)?;
        m[(r, id as usize - 1)] = 1.0;
    }
    if let Some(d) = dwells {
        let scale = scale.ok_or_else(|| Error::Shape("dwell features need a dwell scale".into()))?;
        for (r, &v) in d.iter().enumerate() {
            m[(r, task.vocab)] = scale.normalize(v);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskSpec,
    pub windows: Vec<Window>,
    pub dwell_scale: Option<DwellScale>,
}

impl Dataset {
    /// Wraps windows, fitting the dwell scale over them when the task
    /// carries dwell-times.
    pub fn new(task: TaskSpec, windows: Vec<Window>) -> Self {
        let dwell_scale = Self::fit_scale(&task, &windows);
        Dataset {
            task,
            windows,
            dwell_scale,
        }
    }

    fn fit_scale(task: &TaskSpec, windows: &[Window]) -> Option<DwellScale> {
        let uses_dwell = task.kind.has_dwell_features() || task.kind.predicts_dwell();
        if !uses_dwell {
            return None;
        }
        DwellScale::fit(windows.iter().flat_map(Window::dwell_values))
            .or(Some(DwellScale { min: 0.0, max: 1.0 }))
    }

    pub fn from_traces(traces: &[MobilityTrace], task: TaskSpec) -> Result<Self> {
        let mut windows = Vec::new();
        for trace in traces {
            windows.extend(build_windows(trace, &task)?);
        }
        Ok(Self::new(task, windows))
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn features(&self, window: &Window) -> Result<Matrix> {
        encode_features(
            &window.ids,
            window.dwells.as_deref(),
            &self.task,
            self.dwell_scale.as_ref(),
        )
    }

    pub fn labels(&self, window: &Window) -> Labels {
        match &window.target {
            Target::Ids(ids) => Labels::Classes(ids.iter().map(|&id| id as usize - 1).collect()),
            Target::Dwells(d) => {
                let scale = self.dwell_scale.expect("dwell task without dwell scale");
                Labels::Values(d.iter().map(|&v| scale.normalize(v)).collect())
            }
        }
    }

    /// Shuffles windows with `seed` and partitions them. The training side
    /// refits the dwell scale; validation reuses it.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction {train_fraction} not in (0, 1)"
            )));
        }
        let n = self.windows.len();
        if n < 2 {
            return Err(Error::Split(n));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        let pick = |idx: &[usize]| idx.iter().map(|&i| self.windows[i].clone()).collect::<Vec<_>>();
        let train = Dataset::new(self.task, pick(&order[..n_train]));
        let validation = Dataset {
            task: self.task,
            windows: pick(&order[n_train..]),
            dwell_scale: train.dwell_scale,
        };
        Ok((train, validation))
    }

    pub fn with_scale(mut self, scale: Option<DwellScale>) -> Self {
        if scale.is_some() {
            self.dwell_scale = scale;
        }
        self
    }
}

/// Plain-text summary of a dataset split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task_kind: TaskKind,
    pub history: usize,
    pub horizon: usize,
    pub vocab: usize,
    pub dwell_scale: Option<DwellScale>,
    pub train_windows: usize,
    pub validation_windows: usize,
}

impl DatasetMeta {
    pub fn new(train: &Dataset, validation: &Dataset) -> Self {
        DatasetMeta {
            task_kind: train.task.kind,
            history: train.task.history,
            horizon: train.task.horizon,
            vocab: train.task.vocab,
            dwell_scale: train.dwell_scale,
            train_windows: train.len(),
            validation_windows: validation.len(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("dataset metadata serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamRow {
    pub timestamp: f64,
    pub ue_id: u32,
    pub beam_id: u32,
}

/// Raw serving-beam log: `timestamp,ue_id,beam_id`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeamTraceFile {
    pub rows: Vec<BeamRow>,
}

pub const BEAM_LOG_HEADER: &str = "timestamp,ue_id,beam_id";

impl BeamTraceFile {
    /// Parses a beam log, rejecting beam ids outside `1..=beams`. Blank lines
    /// and `#` lines are skipped.
    pub fn parse<R: BufRead>(input: R, beams: usize) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (n, line) in input.lines().enumerate() {
            let line_no = n + 1;
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let line = line.map_err(|e| err(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if line != BEAM_LOG_HEADER {
                    return Err(err(format!("expected header `{BEAM_LOG_HEADER}`")));
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let timestamp: f64 = fields[0]
                .parse()
                .map_err(|e| err(format!("timestamp `{}`: {e}", fields[0])))?;
            if !timestamp.is_finite() {
                return Err(err("timestamp must be finite".into()));
            }
            let ue_id: u32 = fields[1]
                .parse()
                .map_err(|e| err(format!("ue_id `{}`: {e}", fields[1])))?;
            let beam_id: u32 = fields[2]
                .parse()
                .map_err(|e| err(format!("beam_id `{}`: {e}", fields[2])))?;
            if beam_id == 0 || beam_id as usize > beams {
                return Err(err(format!("beam_id {beam_id} outside 1..={beams}")));
            }
            rows.push(BeamRow {
                timestamp,
                ue_id,
                beam_id,
            });
        }
        Ok(BeamTraceFile { rows })
    }

    pub fn write<W: Write>(&self, out: &mut W, preamble: &[String]) -> std::io::Result<()> {
        for line in preamble {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{BEAM_LOG_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.timestamp, r.ue_id, r.beam_id)?;
        }
        Ok(())
    }
}

/// Groups a beam log per UE, orders it by time and merges consecutive
/// repeats into one entry whose dwell is the repeat count.
pub fn ingest_beam_trace(file: &BeamTraceFile) -> Vec<MobilityTrace> {
    let mut per_ue: BTreeMap<u32, Vec<&BeamRow>> = BTreeMap::new();
    for row in &file.rows {
        per_ue.entry(row.ue_id).or_default().push(row);
    }
    per_ue
        .into_iter()
        .map(|(ue_id, mut rows)| {
            rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
            let mut entries: Vec<TraceEntry> = Vec::new();
            for row in rows {
                match entries.last_mut() {
                    Some(last) if last.id == row.beam_id => last.dwell += 1,
                    _ => entries.push(TraceEntry {
                        id: row.beam_id,
                        dwell: 1,
                    }),
                }
            }
            MobilityTrace { ue_id, entries }
        })
        .collect()
}

/// Expands collapsed beam traces back into a per-step log. Each trace's
/// timestamps continue from the previous trace of the same UE.
pub fn export_beam_log(traces: &[MobilityTrace]) -> BeamTraceFile {
    let mut clock: BTreeMap<u32, u64> = BTreeMap::new();
    let mut rows = Vec::new();
    for trace in traces {
        let t = clock.entry(trace.ue_id).or_insert(0);
        for e in &trace.entries {
            for _ in 0..e.dwell {
                rows.push(BeamRow {
                    timestamp: *t as f64,
                    ue_id: trace.ue_id,
                    beam_id: e.id,
                });
                *t += 1;
            }
        }
    }
    BeamTraceFile { rows }
}

/// Synthetic serving-beam corridor.
///
/// All UEs sweep the same fixed permutation of the `beams` beams from start
/// to end, holding each beam for 1..=`max_dwell` reports. With probability
/// `noise` a transition ping-pongs back to the previous beam for one hold.
/// `drift` models a pointing shift in degrees: a forward transition
/// overshoots the next beam with probability `drift / (360 / beams)`.
/// Finishing the corridor ends a trace segment and restarts at its head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSynthConfig {
    pub n_ues: usize,
    pub n_steps: usize,
    pub beams: usize,
    pub drift: f64,
    pub noise: f64,
    pub max_dwell: u32,
    /// Seed of the corridor order, shared by every run.
    pub corridor_seed: u64,
    /// Seed of the per-UE hold, noise and drift draws.
    pub seed: u64,
}

impl Default for BeamSynthConfig {
    fn default() -> Self {
        BeamSynthConfig {
            n_ues: 5,
            n_steps: 2000,
            beams: 68,
            drift: 0.0,
            noise: 0.1,
            max_dwell: 4,
            corridor_seed: 1,
            seed: 1,
        }
    }
}

impl BeamSynthConfig {
    pub fn overshoot_probability(&self) -> f64 {
        (self.drift / (360.0 / self.beams as f64)).clamp(0.0, 1.0)
    }
}

/// Fixed beam order of the corridor for `seed`.
pub fn beam_corridor(beams: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path: Vec<u32> = (1..=beams as u32).collect();
    path.shuffle(&mut rng);
    path
}

pub fn synth_beam_traces(config: &BeamSynthConfig) -> Result<Vec<MobilityTrace>> {
    if config.beams < 2 {
        return Err(Error::InvalidConfig("beam corridor needs at least 2 beams".into()));
    }
    if !(0.0..=1.0).contains(&config.noise) || !(config.drift >= 0.0) || config.max_dwell == 0 {
        return Err(Error::InvalidConfig(
            "beam synthesis needs noise in [0, 1], drift >= 0, max_dwell >= 1".into(),
        ));
    }
    let path = beam_corridor(config.beams, config.corridor_seed);
    let overshoot = config.overshoot_probability();
    let mut traces = Vec::new();
    for ue in 1..=config.n_ues as u32 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(u64::from(ue));
        let mut entries: Vec<TraceEntry> = Vec::new();
        let mut pos = 0usize;
        let mut returning_to: Option<usize> = None;
        let mut steps = 0usize;
        while steps < config.n_steps {
            let hold = rng.gen_range(1..=config.max_dwell);
            let hold = hold.min((config.n_steps - steps) as u32);
            entries.push(TraceEntry {
                id: path[pos],
                dwell: hold,
            });
            steps += hold as usize;
            // same draws every transition so drift levels stay coupled
            let u_noise: f64 = rng.gen();
            let u_skip: f64 = rng.gen();
            if let Some(back) = returning_to.take() {
                pos = back;
                continue;
            }
            if pos > 0 && u_noise < config.noise {
                returning_to = Some(pos);
                pos -= 1;
                continue;
            }
            pos += if u_skip < overshoot { 2 } else { 1 };
            if pos >= path.len() {
                traces.push(MobilityTrace {
                    ue_id: ue,
                    entries: std::mem::take(&mut entries),
                });
                pos = 0;
            }
        }
        if !entries.is_empty() {
            traces.push(MobilityTrace { ue_id: ue, entries });
        }
    }
    Ok(traces)
}
