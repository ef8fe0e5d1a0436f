//! Drives step-machine objects: deterministic replay of explicit
//! interleavings, a seeded schedule fuzzer, and a real-thread stress mode.
//! Replay advances one shared access per `step` entry, which is what lets a
//! schedule pin down exactly which register values an overlapping read sees.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::history::{
    format_real, parse_op, Arg, History, HistoryError, OpDesc, ProcessId, Recorder,
};
use crate::objects::{
    IvlCounter, IvlParameter, LockedCounter, NaiveAdder, ObjectError, OpRun, PcmSketch,
    StepObject, StepOutcome,
};
use crate::snapshot::{BcKind, BinarySnapshot};
use crate::spec::{CountMinSpec, SequentialSpec, SpecError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("step for {0}, which has no operation in flight")]
    StepIdle(ProcessId),
    #[error("invoke for {0} while an operation is still in flight")]
    InvokeBusy(ProcessId),
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

fn parse_fail(line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        line,
        msg: msg.into(),
    }
}

/// How a sketch config obtains its hash columns.
#[derive(Clone, Debug, PartialEq)]
pub enum HashConfig {
    Seeded(u64),
    /// One row per table row; entry `[r][x]` is item x's column in row r.
    Fixed(Vec<Vec<usize>>),
}

/// Everything needed to build one object and its sequential spec.
#[derive(Clone, Debug, PartialEq)]
pub enum ObjectConfig {
    Counter {
        n: usize,
    },
    /// Mutex-based counter; the always-linearizable control.
    Locked {
        n: usize,
    },
    NaiveAdder {
        n: usize,
    },
    Parameter {
        n: usize,
    },
    Pcm {
        n: usize,
        w: usize,
        d: usize,
        hash: HashConfig,
        init: Vec<Vec<u64>>,
    },
    Snapshot {
        n: usize,
        bc: BcKind,
    },
}

impl ObjectConfig {
    pub fn pcm_seeded(n: usize, w: usize, d: usize, seed: u64) -> Self {
        ObjectConfig::Pcm {
            n,
            w,
            d,
            hash: HashConfig::Seeded(seed),
            init: vec![vec![0; w]; d],
        }
    }

    /// Number of registered processes.
    pub fn processes(&self) -> usize {
        match self {
            ObjectConfig::Counter { n }
            | ObjectConfig::Locked { n }
            | ObjectConfig::NaiveAdder { n }
            | ObjectConfig::Parameter { n }
            | ObjectConfig::Pcm { n, .. }
            | ObjectConfig::Snapshot { n, .. } => *n,
        }
    }

    /// Object name used in recorded histories and schedule files.
    pub fn kind(&self) -> &'static str {
        match self {
            ObjectConfig::Counter { .. } => "counter",
            ObjectConfig::Locked { .. } => "locked-counter",
            ObjectConfig::NaiveAdder { .. } => "naive-adder",
            ObjectConfig::Parameter { .. } => "parameter",
            ObjectConfig::Pcm { .. } => "pcm",
            ObjectConfig::Snapshot { .. } => "snapshot",
        }
    }

    fn cm_spec(&self) -> Result<CountMinSpec, SpecError> {
        let ObjectConfig::Pcm {
            w, d, hash, init, ..
        } = self
        else {
            unreachable!("cm_spec is only called for sketch configs");
        };
        let spec = match hash {
            HashConfig::Seeded(seed) => CountMinSpec::seeded(*w, *d, *seed)?,
            HashConfig::Fixed(rows) => {
                if rows.len() != *d {
                    return Err(SpecError::BadDimensions);
                }
                CountMinSpec::fixed(rows.clone(), *w)?
            }
        };
        spec.with_init(init.clone())
    }

    /// The sequential specification instances of this config implement.
    pub fn spec(&self) -> Result<SequentialSpec, SpecError> {
        Ok(match self {
            ObjectConfig::Counter { .. }
            | ObjectConfig::Locked { .. }
            | ObjectConfig::NaiveAdder { .. } => SequentialSpec::Counter,
            ObjectConfig::Parameter { .. } => SequentialSpec::Parameter,
            ObjectConfig::Pcm { .. } => SequentialSpec::CountMin(self.cm_spec()?),
            ObjectConfig::Snapshot { n, .. } => SequentialSpec::BinarySnapshot { components: *n },
        })
    }

    pub fn build(&self) -> Result<Box<dyn StepObject>, SpecError> {
        Ok(match self {
            ObjectConfig::Counter { n } => Box::new(IvlCounter::new(*n)),
            ObjectConfig::Locked { n } => Box::new(LockedCounter::new(*n)),
            ObjectConfig::NaiveAdder { n } => Box::new(NaiveAdder::new(*n)),
            ObjectConfig::Parameter { n } => Box::new(IvlParameter::new(*n)),
            ObjectConfig::Pcm { n, .. } => Box::new(PcmSketch::new(*n, self.cm_spec()?)),
            ObjectConfig::Snapshot { n, bc } => Box::new(BinarySnapshot::new(*n, *bc)),
        })
    }
}

/// One schedule instruction. `Finish` runs the in-flight operation's
/// remaining steps; a `Step` advances exactly one shared access.
#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Invoke(ProcessId, OpDesc),
    Step(ProcessId),
    Finish(ProcessId),
}

/// A deterministic interleaving of operations on one object.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub object: ObjectConfig,
    /// Generator seed, when the schedule came from the fuzzer.
    pub seed: Option<u64>,
    pub entries: Vec<Entry>,
}

impl Schedule {
    /// The same entries replayed against a different object. The entries
    /// must stay valid for the new object's step counts; trailing `finish`
    /// entries absorb any difference in operation length.
    pub fn with_object(&self, object: ObjectConfig) -> Schedule {
        Schedule {
            object,
            seed: self.seed,
            entries: self.entries.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "object {}", self.object.kind());
        let _ = writeln!(out, "n {}", self.object.processes());
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed {seed}");
        }
        match &self.object {
            ObjectConfig::Pcm {
                w, d, hash, init, ..
            } => {
                let _ = writeln!(out, "dims {w} {d}");
                match hash {
                    HashConfig::Seeded(s) => {
                        let _ = writeln!(out, "hashseed {s}");
                    }
                    HashConfig::Fixed(rows) => {
                        for row in rows {
                            let cols: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                            let _ = writeln!(out, "hashrow {}", cols.join(" "));
                        }
                    }
                }
                for (r, row) in init.iter().enumerate() {
                    for (c, v) in row.iter().enumerate() {
                        if *v != 0 {
                            let _ = writeln!(out, "cell {r} {c} {v}");
                        }
                    }
                }
            }
            ObjectConfig::Snapshot { bc, .. } => {
                let kind = match bc {
                    BcKind::Locked => "locked",
                    BcKind::Ivl => "ivl",
                };
                let _ = writeln!(out, "bc {kind}");
            }
            _ => {}
        }
        for entry in &self.entries {
            match entry {
                Entry::Invoke(p, op) => {
                    let arg = match op {
                        OpDesc::Update(Arg::Int(v)) => format!(" {v}"),
                        OpDesc::Update(Arg::Real(v)) => format!(" {}", format_real(*v)),
                        OpDesc::Query(item) => format!(" {item}"),
                        OpDesc::Read | OpDesc::Scan => String::new(),
                    };
                    let _ = writeln!(out, "invoke {} {}{}", p.0, op.name(), arg);
                }
                Entry::Step(p) => {
                    let _ = writeln!(out, "step {}", p.0);
                }
                Entry::Finish(p) => {
                    let _ = writeln!(out, "finish {}", p.0);
                }
            }
        }
        out
    }

    /// Parse the schedule grammar: `object` first, then config lines, then
    /// entries. Keywords are case-insensitive; blank lines and `#` comments
    /// are skipped.
    pub fn parse(text: &str) -> Result<Schedule, HarnessError> {
        let mut kind: Option<String> = None;
        let mut n: Option<usize> = None;
        let mut seed: Option<u64> = None;
        let mut dims: Option<(usize, usize)> = None;
        let mut hashseed: Option<u64> = None;
        let mut hashrows: Vec<Vec<usize>> = Vec::new();
        let mut cells: Vec<(usize, usize, u64)> = Vec::new();
        let mut bc: Option<BcKind> = None;
        let mut entries: Vec<Entry> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let keyword = fields[0].to_ascii_lowercase();
            let is_entry = matches!(keyword.as_str(), "invoke" | "step" | "finish");
            if kind.is_none() && keyword != "object" {
                return Err(parse_fail(line, "schedules must declare 'object' first"));
            }
            if !is_entry && !entries.is_empty() {
                return Err(parse_fail(line, "configuration must precede entries"));
            }
            let sketch_only = |kind: &Option<String>| kind.as_deref() == Some("pcm");
            match keyword.as_str() {
                "object" => {
                    let name = *fields
                        .get(1)
                        .ok_or_else(|| parse_fail(line, "object needs a kind"))?;
                    if !matches!(
                        name,
                        "counter" | "locked-counter" | "naive-adder" | "parameter" | "pcm"
                            | "snapshot"
                    ) {
                        return Err(parse_fail(line, format!("unknown object '{name}'")));
                    }
                    kind = Some(name.to_string());
                }
                "n" => {
                    let v: usize = field(&fields, 1, line, "n")?;
                    if v == 0 {
                        return Err(parse_fail(line, "n must be at least 1"));
                    }
                    n = Some(v);
                }
                "seed" => seed = Some(field(&fields, 1, line, "seed")?),
                "dims" => {
                    if !sketch_only(&kind) {
                        return Err(parse_fail(line, "dims is only valid for pcm"));
                    }
                    dims = Some((field(&fields, 1, line, "w")?, field(&fields, 2, line, "d")?));
                }
                "hashseed" => {
                    if !sketch_only(&kind) {
                        return Err(parse_fail(line, "hashseed is only valid for pcm"));
                    }
                    hashseed = Some(field(&fields, 1, line, "hashseed")?);
                }
                "hashrow" => {
                    if !sketch_only(&kind) {
                        return Err(parse_fail(line, "hashrow is only valid for pcm"));
                    }
                    let row: Result<Vec<usize>, _> =
                        fields[1..].iter().map(|f| f.parse()).collect();
                    let row = row.map_err(|_| parse_fail(line, "hashrow takes column indices"))?;
                    if row.is_empty() {
                        return Err(parse_fail(line, "hashrow needs at least one column"));
                    }
                    hashrows.push(row);
                }
                "cell" => {
                    if !sketch_only(&kind) {
                        return Err(parse_fail(line, "cell is only valid for pcm"));
                    }
                    cells.push((
                        field(&fields, 1, line, "row")?,
                        field(&fields, 2, line, "column")?,
                        field(&fields, 3, line, "value")?,
                    ));
                }
                "bc" => {
                    if kind.as_deref() != Some("snapshot") {
                        return Err(parse_fail(line, "bc is only valid for snapshot"));
                    }
                    bc = Some(match fields.get(1).copied() {
                        Some("locked") => BcKind::Locked,
                        Some("ivl") => BcKind::Ivl,
                        _ => return Err(parse_fail(line, "bc takes 'locked' or 'ivl'")),
                    });
                }
                "invoke" => {
                    let p = ProcessId(field(&fields, 1, line, "process")?);
                    let op_name = *fields
                        .get(2)
                        .ok_or_else(|| parse_fail(line, "invoke needs an operation"))?;
                    let arg = fields.get(3).copied().unwrap_or("-");
                    if fields.len() > 4 {
                        return Err(parse_fail(line, "too many fields for invoke"));
                    }
                    let op = parse_op(line, op_name, arg).map_err(|e| match e {
                        HistoryError::Parse { line, msg } => parse_fail(line, msg),
                        other => parse_fail(line, other.to_string()),
                    })?;
                    entries.push(Entry::Invoke(p, op));
                }
                "step" => entries.push(Entry::Step(ProcessId(field(&fields, 1, line, "process")?))),
                "finish" => {
                    entries.push(Entry::Finish(ProcessId(field(&fields, 1, line, "process")?)))
                }
                other => return Err(parse_fail(line, format!("unknown keyword '{other}'"))),
            }
        }

        let kind = kind.ok_or_else(|| parse_fail(0, "missing 'object' line"))?;
        let n = n.ok_or_else(|| parse_fail(0, "missing 'n' line"))?;
        let object = match kind.as_str() {
            "counter" => ObjectConfig::Counter { n },
            "locked-counter" => ObjectConfig::Locked { n },
            "naive-adder" => ObjectConfig::NaiveAdder { n },
            "parameter" => ObjectConfig::Parameter { n },
            "snapshot" => ObjectConfig::Snapshot {
                n,
                bc: bc.unwrap_or(BcKind::Ivl),
            },
            "pcm" => {
                let (w, d) = dims.ok_or_else(|| parse_fail(0, "pcm needs a 'dims' line"))?;
                let hash = match (hashseed, hashrows.is_empty()) {
                    (Some(seed), true) => HashConfig::Seeded(seed),
                    (None, false) => HashConfig::Fixed(hashrows),
                    _ => {
                        return Err(parse_fail(
                            0,
                            "pcm needs exactly one of 'hashseed' or 'hashrow' lines",
                        ))
                    }
                };
                let mut init = vec![vec![0u64; w]; d];
                for (r, c, v) in cells {
                    if r >= d || c >= w {
                        return Err(parse_fail(0, format!("cell ({r},{c}) outside {w}x{d}")));
                    }
                    init[r][c] = v;
                }
                ObjectConfig::Pcm {
                    n,
                    w,
                    d,
                    hash,
                    init,
                }
            }
            _ => unreachable!("object kinds validated at the declaration line"),
        };
        Ok(Schedule {
            object,
            seed,
            entries,
        })
    }
}

fn field<T: std::str::FromStr>(
    fields: &[&str],
    idx: usize,
    line: usize,
    what: &str,
) -> Result<T, HarnessError> {
    fields
        .get(idx)
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| parse_fail(line, format!("bad or missing {what}")))
}

/// Play a schedule against a fresh instance of its object, one shared access
/// per step. Identical schedules produce byte-identical histories.
pub fn replay(schedule: &Schedule) -> Result<History, HarnessError> {
    let obj = schedule.object.build()?;
    let mut recorder = Recorder::new();
    let mut runs: BTreeMap<ProcessId, Box<dyn OpRun + '_>> = BTreeMap::new();
    for entry in &schedule.entries {
        match entry {
            Entry::Invoke(p, op) => {
                if runs.contains_key(p) {
                    return Err(HarnessError::InvokeBusy(*p));
                }
                let run = obj.begin(*p, op)?;
                recorder.invoke(*p, schedule.object.kind(), op.clone())?;
                runs.insert(*p, run);
            }
            Entry::Step(p) => {
                step_once(&mut runs, &mut recorder, *p)?;
            }
            Entry::Finish(p) => while !step_once(&mut runs, &mut recorder, *p)? {},
        }
    }
    drop(runs);
    Ok(recorder.finish())
}

fn step_once(
    runs: &mut BTreeMap<ProcessId, Box<dyn OpRun + '_>>,
    recorder: &mut Recorder,
    p: ProcessId,
) -> Result<bool, HarnessError> {
    let run = runs.get_mut(&p).ok_or(HarnessError::StepIdle(p))?;
    match run.step() {
        StepOutcome::More => Ok(false),
        StepOutcome::Done(ret) => {
            runs.remove(&p);
            recorder.respond(p, ret)?;
            Ok(true)
        }
    }
}

/// The checked-in schedules with documented outcomes.
pub mod golden {
    use super::{HarnessError, Schedule};

    pub const ADDER_IVL_FIG: &str = include_str!("../schedules/adder-ivl-fig.sched");
    pub const NEGATIVE_VALUES_FIG: &str = include_str!("../schedules/negative-values-fig.sched");
    pub const PCM_EXAMPLE: &str = include_str!("../schedules/pcm-example.sched");

    pub fn names() -> [&'static str; 3] {
        ["adder-ivl-fig", "negative-values-fig", "pcm-example"]
    }

    pub fn load(name: &str) -> Option<Result<Schedule, HarnessError>> {
        let text = match name {
            "adder-ivl-fig" => ADDER_IVL_FIG,
            "negative-values-fig" => NEGATIVE_VALUES_FIG,
            "pcm-example" => PCM_EXAMPLE,
            _ => return None,
        };
        Some(Schedule::parse(text))
    }
}

/// Knobs for the schedule fuzzer.
#[derive(Clone, Debug)]
pub struct FuzzParams {
    pub object: ObjectConfig,
    /// Operations to invoke in total.
    pub ops: usize,
    /// Let some operations stay in flight at the end of the schedule.
    pub allow_pending: bool,
}

/// Generate a valid schedule by actually executing random choices against a
/// scratch instance: an entry is only emitted once the object accepted it,
/// so step counts always line up on replay.
pub fn random_schedule(seed: u64, params: &FuzzParams) -> Result<Schedule, HarnessError> {
    let obj = params.object.build()?;
    let n = params.object.processes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut runs: BTreeMap<ProcessId, Box<dyn OpRun + '_>> = BTreeMap::new();
    let mut invoked = 0usize;
    while invoked < params.ops || !runs.is_empty() {
        let idle: Vec<u32> = (1..=n as u32)
            .filter(|p| !runs.contains_key(&ProcessId(*p)))
            .collect();
        let may_invoke = invoked < params.ops && !idle.is_empty();
        if may_invoke && (runs.is_empty() || rng.random_bool(0.5)) {
            let p = ProcessId(idle[rng.random_range(0..idle.len())]);
            let op = random_op(&mut rng, &params.object);
            let run = obj.begin(p, &op)?;
            entries.push(Entry::Invoke(p, op));
            runs.insert(p, run);
            invoked += 1;
        } else {
            let keys: Vec<ProcessId> = runs.keys().copied().collect();
            let p = keys[rng.random_range(0..keys.len())];
            if invoked == params.ops && params.allow_pending && rng.random_bool(0.25) {
                // Abandon: the invoke stays in the schedule, never stepped.
                runs.remove(&p);
                continue;
            }
            entries.push(Entry::Step(p));
            if let StepOutcome::Done(_) = runs.get_mut(&p).expect("key just drawn").step() {
                runs.remove(&p);
            }
        }
    }
    Ok(Schedule {
        object: params.object.clone(),
        seed: Some(seed),
        entries,
    })
}

/// 60% updates, 40% queries; small arguments keep envelopes informative.
fn random_op(rng: &mut ChaCha8Rng, config: &ObjectConfig) -> OpDesc {
    let update = rng.random_bool(0.6);
    match config {
        ObjectConfig::Counter { .. } | ObjectConfig::Locked { .. } => {
            if update {
                OpDesc::Update(Arg::Int(rng.random_range(1..=10)))
            } else {
                OpDesc::Read
            }
        }
        ObjectConfig::NaiveAdder { .. } => {
            if update {
                OpDesc::Update(Arg::Int(rng.random_range(-10..=10)))
            } else {
                OpDesc::Read
            }
        }
        ObjectConfig::Parameter { .. } => {
            if update {
                // Quarter-integer values stay exact in binary floating point.
                OpDesc::Update(Arg::Real(rng.random_range(-40..=40) as f64 / 4.0))
            } else {
                OpDesc::Read
            }
        }
        ObjectConfig::Pcm { hash, .. } => {
            let alphabet = match hash {
                HashConfig::Fixed(rows) => rows[0].len() as u64,
                HashConfig::Seeded(_) => 16,
            };
            let item = rng.random_range(0..alphabet);
            if update {
                OpDesc::Update(Arg::Int(item as i64))
            } else {
                OpDesc::Query(item)
            }
        }
        ObjectConfig::Snapshot { .. } => {
            if update {
                OpDesc::Update(Arg::Int(rng.random_range(0..=1)))
            } else {
                OpDesc::Scan
            }
        }
    }
}

/// Run real threads against one object, each bound to its own process
/// identity, recording invocations and responses through a shared sequencer.
/// Not deterministic; meant for invariant spot checks on larger histories.
pub fn stress_run(
    config: &ObjectConfig,
    threads: usize,
    ops_per_thread: usize,
    seed: u64,
) -> Result<History, HarnessError> {
    assert!(
        threads >= 1 && threads <= config.processes(),
        "threads must not exceed registered processes"
    );
    let obj = config.build()?;
    let recorder = Mutex::new(Recorder::new());
    std::thread::scope(|scope| {
        for t in 1..=threads {
            let obj = &*obj;
            let recorder = &recorder;
            scope.spawn(move || {
                let p = ProcessId(t as u32);
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                for _ in 0..ops_per_thread {
                    let op = random_op(&mut rng, config);
                    // begin touches no shared memory, so staging before
                    // taking the recorder lock cannot reorder effects.
                    let mut run = obj.begin(p, &op).expect("fuzzer draws valid operations");
                    recorder
                        .lock()
                        .unwrap()
                        .invoke(p, config.kind(), op)
                        .expect("each thread runs one operation at a time");
                    let ret = loop {
                        match run.step() {
                            StepOutcome::More => {
                                if rng.random_bool(0.25) {
                                    std::thread::yield_now();
                                }
                            }
                            StepOutcome::Done(ret) => break ret,
                        }
                    };
                    recorder
                        .lock()
                        .unwrap()
                        .respond(p, ret)
                        .expect("responding to the op invoked above");
                }
            });
        }
    });
    Ok(recorder.into_inner().unwrap().finish())
}
