//! Straight-line UE mobility, the A3 handover state machine, and
//! mobility-history traces.
//!
//! Every reporting step attributes one unit of dwell to the cell serving the
//! UE at the end of that step. The spawn report is the first step. A UE that
//! leaves the area is relocated; relocation closes the current trace and
//! opens a new segment at the best cell of the new position.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{best_cell, cell_powers, AreaConfig, Deployment, Point};

/// Where a UE reappears after leaving the area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relocation {
    /// Uniform position and uniform heading.
    Uniform,
    /// One of a fixed set of straight-line routes, entered at the area
    /// boundary, with a small random lateral and heading jitter.
    Patterns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    /// Meters advanced per reporting step.
    pub speed: f64,
    pub relocation: Relocation,
    /// Number of routes for [`Relocation::Patterns`].
    pub patterns: usize,
    pub pattern_seed: u64,
    /// Half-width in meters of the uniform lateral offset applied to a route.
    pub lateral_jitter: f64,
    /// Half-width in degrees of the uniform heading offset applied to a route.
    pub heading_jitter: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            speed: 5.0,
            relocation: Relocation::Uniform,
            patterns: 16,
            pattern_seed: 0,
            lateral_jitter: 0.0,
            heading_jitter: 0.0,
        }
    }
}

impl MobilityConfig {
    pub fn with_speed(speed: f64) -> Self {
        MobilityConfig {
            speed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidConfig("mobility speed must be >= 0".into()));
        }
        if self.relocation == Relocation::Patterns && self.patterns == 0 {
            return Err(Error::InvalidConfig("patterns must be >= 1".into()));
        }
        if !(self.lateral_jitter >= 0.0) || !(self.heading_jitter >= 0.0) {
            return Err(Error::InvalidConfig("jitter must be >= 0".into()));
        }
        Ok(())
    }

    /// Position and heading for a spawn or relocation.
    pub fn placement<R: Rng + ?Sized>(&self, area: &AreaConfig, rng: &mut R) -> (Point, f64) {
        match self.relocation {
            Relocation::Uniform => {
                let p = area.sample(rng);
                (p, rng.gen_range(0.0..360.0))
            }
            Relocation::Patterns => {
                let routes = route_set(area, self.patterns, self.pattern_seed);
                let (anchor, heading) = routes[rng.gen_range(0..routes.len())];
                let offset = jitter(rng, self.lateral_jitter);
                let heading = (heading + jitter(rng, self.heading_jitter)).rem_euclid(360.0);
                let rad = heading.to_radians();
                let shifted = Point::new(anchor.x - offset * rad.sin(), anchor.y + offset * rad.cos());
                let anchor = if area.contains(shifted) { shifted } else { anchor };
                (entry_point(area, anchor, heading), heading)
            }
        }
    }
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    // always draw so the stream does not depend on the jitter setting
    let u: f64 = rng.gen_range(-1.0..1.0);
    u * half_width
}

/// Fixed routes: an anchor point inside the area and a heading.
pub fn route_set(area: &AreaConfig, count: usize, seed: u64) -> Vec<(Point, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = area.sample(&mut rng);
            (p, rng.gen_range(0.0..360.0))
        })
        .collect()
}

/// Where the line through `anchor` with `heading` enters the area.
pub fn entry_point(area: &AreaConfig, anchor: Point, heading: f64) -> Point {
    let rad = heading.to_radians();
    let (ux, uy) = (rad.cos(), rad.sin());
    // largest t with anchor - t * u still inside
    let limit = |p: f64, u: f64, hi: f64| {
        if u > 0.0 {
            p / u
        } else if u < 0.0 {
            (p - hi) / u
        } else {
            f64::INFINITY
        }
    };
    let t = limit(anchor.x, ux, area.width).min(limit(anchor.y, uy, area.height));
    Point::new(
        (anchor.x - t * ux).clamp(0.0, area.width),
        (anchor.y - t * uy).clamp(0.0, area.height),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct A3Config {
    /// Margin in dB a neighbor must exceed the serving cell by.
    pub hysteresis: f64,
    /// Reports the condition must already have held before a handover fires.
    pub time_to_trigger: u32,
}

impl A3Config {
    /// Degenerates to best-cell switching.
    pub const BEST_CELL: A3Config = A3Config {
        hysteresis: 0.0,
        time_to_trigger: 0,
    };

    /// A hysteresis no neighbor can ever overcome.
    pub const NEVER: A3Config = A3Config {
        hysteresis: f64::INFINITY,
        time_to_trigger: 0,
    };
}

impl Default for A3Config {
    fn default() -> Self {
        Self::BEST_CELL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeState {
    pub position: Point,
    /// Degrees counterclockwise from +x.
    pub heading: f64,
    pub serving_cell: u32,
    pub dwell_counter: u32,
    /// Consecutive qualifying reports per neighbor; absent means zero.
    pub a3_timers: BTreeMap<u32, u32>,
}

/// Result of advancing a UE by one reporting step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: UeState,
    pub relocated: bool,
}

/// Moves the UE `speed` meters along its heading. Leaving the area triggers a
/// relocation drawn from `rng` according to `config.relocation`.
pub fn step_ue<R: Rng + ?Sized>(
    ue: &UeState,
    config: &MobilityConfig,
    area: &AreaConfig,
    rng: &mut R,
) -> Step {
    let rad = ue.heading.to_radians();
    let next = Point::new(
        ue.position.x + config.speed * rad.cos(),
        ue.position.y + config.speed * rad.sin(),
    );
    let mut state = ue.clone();
    if area.contains(next) {
        state.position = next;
        Step {
            state,
            relocated: false,
        }
    } else {
        let (position, heading) = config.placement(area, rng);
        state.position = position;
        state.heading = heading;
        Step {
            state,
            relocated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct A3Outcome {
    pub timers: BTreeMap<u32, u32>,
    pub target: Option<u32>,
}

/// One A3 report. A neighbor qualifies while its power exceeds
/// `serving_rsrp + hysteresis`; its timer counts consecutive qualifying
/// reports and the handover fires once a timer exceeds `time_to_trigger`.
/// Among simultaneous triggers the strongest neighbor wins, then the lowest
/// id. All timers reset on handover.
pub fn evaluate_a3<I>(
    serving_rsrp: f64,
    neighbor_rsrps: I,
    timers: &BTreeMap<u32, u32>,
    a3: &A3Config,
) -> A3Outcome
where
    I: IntoIterator<Item = (u32, f64)>,
{
    let threshold = serving_rsrp + a3.hysteresis;
    let mut updated = BTreeMap::new();
    let mut target: Option<(u32, f64)> = None;
    for (cell, power) in neighbor_rsrps {
        if power > threshold {
            let count = timers.get(&cell).copied().unwrap_or(0) + 1;
            updated.insert(cell, count);
            if count > a3.time_to_trigger {
                let better = match target {
                    None => true,
                    Some((id, p)) => power > p || (power == p && cell < id),
                };
                if better {
                    target = Some((cell, power));
                }
            }
        }
    }
    match target {
        Some((cell, _)) => A3Outcome {
            timers: BTreeMap::new(),
            target: Some(cell),
        },
        None => A3Outcome {
            timers: updated,
            target: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Cell id or beam id, 1-based.
    pub id: u32,
    /// Reporting steps spent on `id`.
    pub dwell: u32,
}

/// Mobility history of one UE between two relocations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MobilityTrace {
    pub ue_id: u32,
    pub entries: Vec<TraceEntry>,
}

impl MobilityTrace {
    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn total_dwell(&self) -> u64 {
        self.entries.iter().map(|e| u64::from(e.dwell)).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-step observation, recorded only by [`run_simulation_logged`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub ue_id: u32,
    pub step: usize,
    pub position: Point,
    /// Spawn or relocation: the serving cell was reset to the best cell.
    pub reset: bool,
    pub serving_cell: u32,
    pub handover_from: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub traces: Vec<MobilityTrace>,
    pub steps: Vec<StepRecord>,
}

/// Simulates `n_ues` UEs for `n_steps` reports each and returns one trace per
/// UE segment, ordered by UE then time.
pub fn run_simulation(
    deployment: &Deployment,
    n_ues: usize,
    n_steps: usize,
    mobility: &MobilityConfig,
    a3: &A3Config,
    seed: u64,
) -> Result<Vec<MobilityTrace>> {
    simulate(deployment, n_ues, n_steps, mobility, a3, seed, None)
}

/// Same as [`run_simulation`] but also returns every per-step observation.
pub fn run_simulation_logged(
    deployment: &Deployment,
    n_ues: usize,
    n_steps: usize,
    mobility: &MobilityConfig,
    a3: &A3Config,
    seed: u64,
) -> Result<SimulationLog> {
    let mut steps = Vec::with_capacity(n_ues * n_steps);
    let traces = simulate(deployment, n_ues, n_steps, mobility, a3, seed, Some(&mut steps))?;
    Ok(SimulationLog { traces, steps })
}

fn spawn(deployment: &Deployment, position: Point, heading: f64) -> UeState {
    UeState {
        position,
        heading,
        serving_cell: best_cell(deployment, position).0,
        dwell_counter: 1,
        a3_timers: BTreeMap::new(),
    }
}

fn simulate(
    deployment: &Deployment,
    n_ues: usize,
    n_steps: usize,
    mobility: &MobilityConfig,
    a3: &A3Config,
    seed: u64,
    mut log: Option<&mut Vec<StepRecord>>,
) -> Result<Vec<MobilityTrace>> {
    if deployment.is_empty() {
        return Err(Error::EmptyDeployment);
    }
    if n_ues == 0 || n_steps == 0 {
        return Err(Error::Usage("n_ues and n_steps must both be >= 1".into()));
    }
    mobility.validate()?;
    if a3.hysteresis.is_nan() || a3.hysteresis < 0.0 {
        return Err(Error::InvalidConfig("A3 hysteresis must be >= 0".into()));
    }
    let area = &deployment.area;
    let mut traces = Vec::new();
    for ue_index in 0..n_ues {
        let ue_id = ue_index as u32 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(ue_id));
        let (start, heading) = mobility.placement(area, &mut rng);
        traces.extend(simulate_ue(
            deployment,
            ue_id,
            start,
            heading,
            n_steps,
            mobility,
            a3,
            &mut rng,
            log.as_deref_mut(),
        ));
    }
    Ok(traces)
}

/// Runs one UE from a given spawn point. Returns its trace segments.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ue<R: Rng + ?Sized>(
    deployment: &Deployment,
    ue_id: u32,
    start: Point,
    heading: f64,
    n_steps: usize,
    mobility: &MobilityConfig,
    a3: &A3Config,
    rng: &mut R,
    mut log: Option<&mut Vec<StepRecord>>,
) -> Vec<MobilityTrace> {
    let area = &deployment.area;
    let mut traces = Vec::new();
    let mut ue = spawn(deployment, start, heading);
    let mut entries = Vec::new();
    if let Some(log) = log.as_deref_mut() {
        log.push(StepRecord {
            ue_id,
            step: 0,
            position: ue.position,
            reset: true,
            serving_cell: ue.serving_cell,
            handover_from: None,
        });
    }

    for step in 1..n_steps {
        let moved = step_ue(&ue, mobility, area, rng);
        let mut handover_from = None;
        if moved.relocated {
            entries.push(TraceEntry {
                id: ue.serving_cell,
                dwell: ue.dwell_counter,
            });
            traces.push(MobilityTrace {
                ue_id,
                entries: std::mem::take(&mut entries),
            });
            ue = spawn(deployment, moved.state.position, moved.state.heading);
        } else {
            ue = moved.state;
            let powers = cell_powers(deployment, ue.position);
            let serving = ue.serving_cell;
            let serving_rsrp = powers[serving as usize - 1];
            let neighbors = powers
                .iter()
                .enumerate()
                .map(|(i, &p)| (i as u32 + 1, p))
                .filter(|&(id, _)| id != serving);
            let outcome = evaluate_a3(serving_rsrp, neighbors, &ue.a3_timers, a3);
            ue.a3_timers = outcome.timers;
            match outcome.target {
                Some(target) => {
                    entries.push(TraceEntry {
                        id: serving,
                        dwell: ue.dwell_counter,
                    });
                    handover_from = Some(serving);
                    ue.serving_cell = target;
                    ue.dwell_counter = 1;
                }
                None => ue.dwell_counter += 1,
            }
        }
        if let Some(log) = log.as_deref_mut() {
            log.push(StepRecord {
                ue_id,
                step,
                position: ue.position,
                reset: moved.relocated,
                serving_cell: ue.serving_cell,
                handover_from,
            });
        }
    }
    entries.push(TraceEntry {
        id: ue.serving_cell,
        dwell: ue.dwell_counter,
    });
    traces.push(MobilityTrace { ue_id, entries });
    traces
}

/// Which id column a trace CSV carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// `ue_id,seq_index,cell_id,dwell_steps`
    Cell,
    /// `ue_id,seq_index,beam_id`
    Beam,
}

impl TraceKind {
    pub fn header(self) -> &'static str {
        match self {
            TraceKind::Cell => "ue_id,seq_index,cell_id,dwell_steps",
            TraceKind::Beam => "ue_id,seq_index,beam_id",
        }
    }
}

/// Writes traces as CSV. `seq_index` restarts at 0 for every segment, which
/// is how readers recover segment boundaries. `preamble` lines are emitted
/// first, each prefixed with `# `.
pub fn write_traces<W: Write>(
    out: &mut W,
    traces: &[MobilityTrace],
    kind: TraceKind,
    preamble: &[String],
) -> std::io::Result<()> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{}", kind.header())?;
    for trace in traces {
        for (i, e) in trace.entries.iter().enumerate() {
            match kind {
                TraceKind::Cell => writeln!(out, "{},{},{},{}", trace.ue_id, i, e.id, e.dwell)?,
                TraceKind::Beam => writeln!(out, "{},{},{}", trace.ue_id, i, e.id)?,
            }
        }
    }
    Ok(())
}

/// Reads a trace CSV written by [`write_traces`]. Lines starting with `#` are
/// skipped. Beam traces get a dwell of 1 per entry.
pub fn read_traces<R: BufRead>(input: R) -> Result<(TraceKind, Vec<MobilityTrace>)> {
    let mut kind = None;
    let mut traces: Vec<MobilityTrace> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(k) = kind else {
            kind = Some(match line {
                l if l == TraceKind::Cell.header() => TraceKind::Cell,
                l if l == TraceKind::Beam.header() => TraceKind::Beam,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unrecognized trace header `{other}`"),
                    })
                }
            });
            continue;
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = match k {
            TraceKind::Cell => 4,
            TraceKind::Beam => 3,
        };
        if fields.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let num = |i: usize, what: &str| -> Result<u32> {
            fields[i].parse::<u32>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("{what} `{}`: {e}", fields[i]),
            })
        };
        let ue_id = num(0, "ue_id")?;
        let seq = num(1, "seq_index")? as usize;
        let id = num(2, "id")?;
        let dwell = match k {
            TraceKind::Cell => num(3, "dwell_steps")?,
            TraceKind::Beam => 1,
        };
        if id == 0 || dwell == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "ids and dwells are 1-based".into(),
            });
        }
        let entry = TraceEntry { id, dwell };
        if seq == 0 {
            traces.push(MobilityTrace {
                ue_id,
                entries: vec![entry],
            });
            continue;
        }
        match traces.last_mut() {
            Some(t) if t.ue_id == ue_id && t.entries.len() == seq => t.entries.push(entry),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("seq_index {seq} of ue {ue_id} does not continue a trace"),
                })
            }
        }
    }
    let kind = kind.ok_or(Error::Parse {
        line: 0,
        message: "missing trace header".into(),
    })?;
    Ok((kind, traces))
}
