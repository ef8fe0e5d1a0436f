//! Brute-force checking of small histories: linearizability, the
//! intermediate-value relaxation, per-query value envelopes, and the
//! per-object locality decomposition.
//!
//! The search walks the lattice of downward-closed operation sets (prefixes
//! of linear extensions). A query's return value depends only on which
//! updates are placed before it, so each (prefix, query) pair is evaluated
//! once and reachability is propagated per witness predicate instead of
//! materializing every linearization.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::history::{Event, EventKind, History, OpDesc, OpRec, Ret, SkeletonHistory, Value};
use crate::spec::{value_eq, value_ge, value_le, SequentialSpec, SpecError, SpecModel};

/// Hard ceiling for `Caps::max_ops`; prefixes are tracked as 32-bit masks
/// and 2^20 states is already generous for a brute-force oracle.
pub const MAX_CHECKABLE_OPS: usize = 20;

/// Size guards for the brute-force search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub max_ops: usize,
    pub max_pending: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_ops: 12,
            max_pending: 6,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CheckError {
    #[error("state-space too large: cap of {cap} operations exceeds the supported maximum {MAX_CHECKABLE_OPS}")]
    CapTooLarge { cap: usize },
    #[error("state-space too large: {ops} operations exceed the cap of {cap}")]
    TooManyOps { ops: usize, cap: usize },
    #[error("state-space too large: {pending} pending operations exceed the cap of {cap}")]
    TooManyPending { pending: usize, cap: usize },
    #[error("history still has pending operations; complete it first")]
    NotCompleted,
    #[error("no spec given for object '{0}'")]
    MissingSpec(String),
    #[error("operation {index} is not a returned query")]
    QueryNotFound { index: usize },
    #[error("operation {index} returns bit vectors, which have no value order")]
    QueryNotOrdered { index: usize },
    #[error("replay {index} disagrees with the first replay's skeleton")]
    SkeletonMismatch { index: usize },
    #[error("randomized check needs at least one replay")]
    NoReplays,
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Sequential specs for the objects appearing in a history.
#[derive(Clone, Debug)]
pub enum ObjectSpecs {
    Uniform(SequentialSpec),
    PerObject(BTreeMap<String, SequentialSpec>),
}

impl ObjectSpecs {
    pub fn uniform(spec: SequentialSpec) -> Self {
        ObjectSpecs::Uniform(spec)
    }

    pub fn for_object(&self, name: &str) -> Result<&SequentialSpec, CheckError> {
        match self {
            ObjectSpecs::Uniform(spec) => Ok(spec),
            ObjectSpecs::PerObject(map) => map
                .get(name)
                .ok_or_else(|| CheckError::MissingSpec(name.to_string())),
        }
    }
}

/// A total order on (a completion of) a history's operations, respecting the
/// real-time precedence order.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub ops: Vec<OpRec>,
}

impl Linearization {
    /// Operation ids (invocation-order indices in the source history).
    pub fn indices(&self) -> Vec<usize> {
        self.ops.iter().map(|op| op.index).collect()
    }
}

impl fmt::Display for Linearization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.ops.iter().map(|op| format!("#{}", op.index)).collect();
        write!(f, "{}", ids.join(" "))
    }
}

/// Value envelope of one returned query across every linearization.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryEnvelope {
    pub op_index: usize,
    pub observed: Value,
    pub min: Value,
    pub max: Value,
}

/// Everything the checker can say about one history.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub linearizable: bool,
    pub linearization: Option<Linearization>,
    pub ivl: bool,
    pub ivl_pair: Option<(Linearization, Linearization)>,
    pub envelopes: Vec<QueryEnvelope>,
}

/// All ways to settle pending operations: pending queries are dropped (they
/// observed nothing to bound), pending updates are either dropped or given a
/// response after every other event.
pub fn enumerate_completions(h: &History, caps: &Caps) -> Result<Vec<History>, CheckError> {
    let ops = h.operations();
    let pending: Vec<&OpRec> = ops.iter().filter(|op| op.is_pending()).collect();
    if pending.len() > caps.max_pending {
        return Err(CheckError::TooManyPending {
            pending: pending.len(),
            cap: caps.max_pending,
        });
    }
    let pending_updates: Vec<&OpRec> = pending
        .iter()
        .copied()
        .filter(|op| matches!(op.op, OpDesc::Update(_)))
        .collect();
    let always_dropped: Vec<u64> = pending
        .iter()
        .filter(|op| !matches!(op.op, OpDesc::Update(_)))
        .map(|op| op.invoked)
        .collect();

    let mut completions = Vec::with_capacity(1 << pending_updates.len());
    for keep_mask in 0u32..(1 << pending_updates.len()) {
        let mut dropped = always_dropped.clone();
        let mut kept: Vec<&OpRec> = Vec::new();
        for (i, op) in pending_updates.iter().enumerate() {
            if keep_mask >> i & 1 == 1 {
                kept.push(op);
            } else {
                dropped.push(op.invoked);
            }
        }
        let mut events: Vec<Event> = h
            .events()
            .iter()
            .filter(|ev| !dropped.contains(&ev.seq))
            .cloned()
            .collect();
        let next_seq = events.last().map_or(0, |ev| ev.seq + 1);
        events.extend(kept.into_iter().zip(next_seq..).map(|(op, seq)| Event {
            seq,
            process: op.process,
            object: op.object.clone(),
            op: op.op.clone(),
            kind: EventKind::Respond(Ret::Unit),
        }));
        completions.push(History::new(events).expect("completion preserves well-formedness"));
    }
    Ok(completions)
}

/// Lazily yields every linear extension of a completed skeleton's precedence
/// order, each exactly once.
pub fn enumerate_linearizations(
    s: &SkeletonHistory,
    caps: &Caps,
) -> Result<LinearizationIter, CheckError> {
    check_caps(caps)?;
    let ops = s.operations();
    if ops.iter().any(|op| op.is_pending()) {
        return Err(CheckError::NotCompleted);
    }
    if ops.len() > caps.max_ops {
        return Err(CheckError::TooManyOps {
            ops: ops.len(),
            cap: caps.max_ops,
        });
    }
    let preds = pred_masks(&ops);
    Ok(LinearizationIter {
        ops,
        preds,
        stack: vec![Frame {
            mask: 0,
            candidate: 0,
        }],
        chosen: Vec::new(),
    })
}

pub struct LinearizationIter {
    ops: Vec<OpRec>,
    preds: Vec<u32>,
    stack: Vec<Frame>,
    chosen: Vec<usize>,
}

struct Frame {
    mask: u32,
    candidate: usize,
}

impl Iterator for LinearizationIter {
    type Item = Linearization;

    fn next(&mut self) -> Option<Linearization> {
        let m = self.ops.len();
        loop {
            let depth = self.stack.len() - 1;
            let (mask, cand) = {
                let top = self.stack.last()?;
                (top.mask, top.candidate)
            };
            if depth == m {
                // Full extension assembled; emit it and backtrack.
                let lin = Linearization {
                    ops: self.chosen.iter().map(|&i| self.ops[i].clone()).collect(),
                };
                self.stack.pop();
                self.chosen.pop();
                return Some(lin);
            }
            let next = (cand..m).find(|&i| mask >> i & 1 == 0 && self.preds[i] & mask == self.preds[i]);
            match next {
                Some(i) => {
                    self.stack.last_mut().unwrap().candidate = i + 1;
                    self.stack.push(Frame {
                        mask: mask | 1 << i,
                        candidate: 0,
                    });
                    self.chosen.push(i);
                }
                None => {
                    self.stack.pop();
                    self.chosen.pop();
                    if self.stack.is_empty() {
                        return None;
                    }
                }
            }
        }
    }
}

fn check_caps(caps: &Caps) -> Result<(), CheckError> {
    if caps.max_ops > MAX_CHECKABLE_OPS {
        return Err(CheckError::CapTooLarge { cap: caps.max_ops });
    }
    Ok(())
}

fn pred_masks(ops: &[OpRec]) -> Vec<u32> {
    let mut preds = vec![0u32; ops.len()];
    for (i, a) in ops.iter().enumerate() {
        for (j, b) in ops.iter().enumerate() {
            if i != j && a.precedes(b) {
                preds[j] |= 1 << i;
            }
        }
    }
    preds
}

fn observed_value(op: &OpRec) -> Option<&Value> {
    match op.ret() {
        Some(Ret::Value(v)) => Some(v),
        _ => None,
    }
}

/// One run's worth of evaluation state: a model per object, rebuilt per
/// prefix. `objects` maps object names to model slots.
struct ModelBank<'a> {
    protos: Vec<Vec<SpecModel>>,
    ops: &'a [OpRec],
    obj_slot: Vec<usize>,
}

impl<'a> ModelBank<'a> {
    fn build(
        ops: &'a [OpRec],
        specs_per_run: &[&ObjectSpecs],
    ) -> Result<ModelBank<'a>, CheckError> {
        let mut objects: Vec<String> = Vec::new();
        for op in ops {
            if !objects.contains(&op.object) {
                objects.push(op.object.clone());
            }
        }
        let mut protos = Vec::with_capacity(specs_per_run.len());
        for specs in specs_per_run {
            let mut run = Vec::with_capacity(objects.len());
            for name in &objects {
                run.push(SpecModel::new(specs.for_object(name)?));
            }
            protos.push(run);
        }
        let obj_slot = ops
            .iter()
            .map(|op| objects.iter().position(|o| *o == op.object).unwrap())
            .collect();
        Ok(ModelBank {
            protos,
            ops,
            obj_slot,
        })
    }

    fn runs(&self) -> usize {
        self.protos.len()
    }

    /// Values each run's model assigns to query `l` placed after `mask`.
    fn eval(&self, mask: u32, l: usize) -> Result<Vec<Value>, CheckError> {
        let mut out = Vec::with_capacity(self.runs());
        for proto in &self.protos {
            let mut models: Vec<SpecModel> = proto.clone();
            for (i, op) in self.ops.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    if let OpDesc::Update(_) = op.op {
                        models[self.obj_slot[i]].apply(op.process, &op.op)?;
                    }
                }
            }
            let q = &self.ops[l];
            out.push(models[self.obj_slot[l]].eval(q.process, &q.op)?);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum WitnessMode {
    Exact,
    Lower,
    Upper,
}

fn value_ok(mode: WitnessMode, value: &Value, observed: &Value) -> bool {
    match mode {
        WitnessMode::Exact => value_eq(value, observed),
        WitnessMode::Lower => value_le(value, observed),
        WitnessMode::Upper => value_ge(value, observed),
    }
}

/// Search state for one completion: reachable prefixes, query values per
/// (prefix, op), and per-criterion reachability with witness back-pointers.
struct CompletionSearch {
    masks_by_level: Vec<Vec<u32>>,
    preds: Vec<u32>,
    values: BTreeMap<(u32, usize), Vec<Value>>,
    m: usize,
}

impl CompletionSearch {
    fn explore(ops: &[OpRec], bank: &ModelBank<'_>) -> Result<CompletionSearch, CheckError> {
        let m = ops.len();
        let preds = pred_masks(ops);
        let mut seen = vec![false; 1usize << m];
        seen[0] = true;
        let mut masks_by_level: Vec<Vec<u32>> = vec![vec![0]];
        let mut values = BTreeMap::new();
        for level in 0..m {
            let mut next: Vec<u32> = Vec::new();
            // Indexing is stable because levels are only appended.
            let current = masks_by_level[level].clone();
            for mask in current {
                for l in 0..m {
                    if mask >> l & 1 == 1 || preds[l] & mask != preds[l] {
                        continue;
                    }
                    if ops[l].op.returns_value() {
                        values.insert((mask, l), bank.eval(mask, l)?);
                    }
                    let child = mask | 1 << l;
                    if !seen[child as usize] {
                        seen[child as usize] = true;
                        next.push(child);
                    }
                }
            }
            masks_by_level.push(next);
        }
        Ok(CompletionSearch {
            masks_by_level,
            preds,
            values,
            m,
        })
    }

    /// Envelope contributions of every query placement, merged into `env`.
    /// Only queries whose returns carry a value order participate.
    fn collect_envelopes(
        &self,
        ops: &[OpRec],
        env: &mut Envelopes,
    ) {
        for ((_, l), vals) in &self.values {
            let v = &vals[0];
            if matches!(v, Value::Bits(_)) || observed_value(&ops[*l]).is_none() {
                continue;
            }
            let entry = env
                .entry(ops[*l].index)
                .or_insert_with(|| (v.clone(), v.clone()));
            if value_le(v, &entry.0) {
                entry.0 = v.clone();
            }
            if value_ge(v, &entry.1) {
                entry.1 = v.clone();
            }
        }
    }

    /// Does a full extension exist in which every evaluated query satisfies
    /// `mode` against its observation in every run? Returns the witness.
    fn search(
        &self,
        ops: &[OpRec],
        observed: &[Vec<Option<Value>>],
        mode: WitnessMode,
    ) -> Option<Linearization> {
        let full = ((1u64 << self.m) - 1) as u32;
        let mut reach = vec![false; 1usize << self.m];
        let mut parent: Vec<(u32, u8)> = vec![(0, u8::MAX); 1usize << self.m];
        reach[0] = true;
        for level in &self.masks_by_level {
            for &mask in level {
                if !reach[mask as usize] {
                    continue;
                }
                for l in 0..self.m {
                    if mask >> l & 1 == 1 || self.preds[l] & mask != self.preds[l] {
                        continue;
                    }
                    let ok = match self.values.get(&(mask, l)) {
                        None => true,
                        Some(vals) => vals.iter().zip(observed).all(|(v, obs)| {
                            obs[l].as_ref().is_none_or(|o| value_ok(mode, v, o))
                        }),
                    };
                    let child = (mask | 1 << l) as usize;
                    if ok && !reach[child] {
                        reach[child] = true;
                        parent[child] = (mask, l as u8);
                    }
                }
            }
        }
        if !reach[full as usize] {
            return None;
        }
        let mut order = Vec::with_capacity(self.m);
        let mut cur = full;
        while cur != 0 {
            let (prev, l) = parent[cur as usize];
            order.push(l as usize);
            cur = prev;
        }
        order.reverse();
        Some(Linearization {
            ops: order.into_iter().map(|l| ops[l].clone()).collect(),
        })
    }
}

/// The operation subsets that act as completions: pending queries removed,
/// every subset of pending updates kept (they respond after everything).
fn completion_op_sets(ops: &[OpRec], caps: &Caps) -> Result<Vec<Vec<OpRec>>, CheckError> {
    let pending: Vec<usize> = ops
        .iter()
        .filter(|op| op.is_pending())
        .map(|op| op.index)
        .collect();
    if pending.len() > caps.max_pending {
        return Err(CheckError::TooManyPending {
            pending: pending.len(),
            cap: caps.max_pending,
        });
    }
    let pending_updates: Vec<usize> = pending
        .iter()
        .copied()
        .filter(|&i| matches!(ops[i].op, OpDesc::Update(_)))
        .collect();
    let mut sets = Vec::with_capacity(1 << pending_updates.len());
    for keep in 0u32..(1 << pending_updates.len()) {
        let included: Vec<OpRec> = ops
            .iter()
            .filter(|op| {
                if !op.is_pending() {
                    return true;
                }
                pending_updates
                    .iter()
                    .position(|&i| i == op.index)
                    .is_some_and(|slot| keep >> slot & 1 == 1)
            })
            .cloned()
            .collect();
        sets.push(included);
    }
    Ok(sets)
}

/// Full analysis of one history against per-object specs: linearizability
/// with witness, the intermediate-value verdict with its witness pair, and
/// per-query envelopes.
pub fn analyze(h: &History, specs: &ObjectSpecs, caps: &Caps) -> Result<Verdict, CheckError> {
    let runs = [(h, specs)];
    let (verdicts, envelopes) = analyze_runs(&runs, caps, true)?;
    let (linearizable, linearization, lower, upper) = verdicts;
    let ops = h.operations();
    let envelopes: Vec<QueryEnvelope> = envelopes
        .into_iter()
        .map(|(index, (min, max))| QueryEnvelope {
            op_index: index,
            observed: observed_value(&ops[index]).cloned().expect("enveloped queries returned"),
            min,
            max,
        })
        .collect();

    // Prefilter (necessary condition): an observation outside its envelope
    // settles the verdict without the pair search; here it doubles as a
    // consistency check on the exact search.
    let within = envelopes
        .iter()
        .all(|e| value_ge(&e.observed, &e.min) && value_le(&e.observed, &e.max));
    let ivl = lower.is_some() && upper.is_some();
    debug_assert!(!ivl || within, "exact search accepted an out-of-envelope observation");
    debug_assert!(!linearizable || ivl, "a linearizable history must pass the pair search");
    Ok(Verdict {
        linearizable,
        linearization,
        ivl,
        ivl_pair: lower.zip(upper),
        envelopes,
    })
}

type RunVerdicts = (
    bool,
    Option<Linearization>,
    Option<Linearization>,
    Option<Linearization>,
);
type Envelopes = BTreeMap<usize, (Value, Value)>;

/// Shared engine: checks all runs (same skeleton) simultaneously and returns
/// (linearizable-of-first-run, lower/upper witnesses common to all runs).
fn analyze_runs(
    runs: &[(&History, &ObjectSpecs)],
    caps: &Caps,
    want_linearizable: bool,
) -> Result<(RunVerdicts, Envelopes), CheckError> {
    check_caps(caps)?;
    let (h0, _) = runs[0];
    let all_ops = h0.operations();
    if all_ops.len() > caps.max_ops {
        return Err(CheckError::TooManyOps {
            ops: all_ops.len(),
            cap: caps.max_ops,
        });
    }

    // Observations per run, indexed by original operation index.
    let observed_by_run: Vec<Vec<Option<Value>>> = runs
        .iter()
        .map(|(h, _)| {
            h.operations()
                .iter()
                .map(|op| observed_value(op).cloned())
                .collect()
        })
        .collect();

    let spec_refs: Vec<&ObjectSpecs> = runs.iter().map(|(_, s)| *s).collect();

    let mut linearizable = false;
    let mut linearization = None;
    let mut lower: Option<Linearization> = None;
    let mut upper: Option<Linearization> = None;
    let mut envelopes: Envelopes = BTreeMap::new();

    for ops in completion_op_sets(&all_ops, caps)? {
        let bank = ModelBank::build(&ops, &spec_refs)?;
        let search = CompletionSearch::explore(&ops, &bank)?;
        // Re-key observations by local position within this completion.
        let local_obs: Vec<Vec<Option<Value>>> = observed_by_run
            .iter()
            .map(|obs| ops.iter().map(|op| obs[op.index].clone()).collect())
            .collect();
        search.collect_envelopes(&ops, &mut envelopes);
        if lower.is_none() {
            lower = search.search(&ops, &local_obs, WitnessMode::Lower);
        }
        if upper.is_none() {
            upper = search.search(&ops, &local_obs, WitnessMode::Upper);
        }
        if want_linearizable && !linearizable {
            if let Some(lin) = search.search(&ops, &local_obs, WitnessMode::Exact) {
                linearizable = true;
                linearization = Some(lin);
            }
        }
    }
    Ok(((linearizable, linearization, lower, upper), envelopes))
}

/// Is there a completion plus linearization whose resolved returns equal the
/// observed ones exactly?
pub fn check_linearizable(
    h: &History,
    spec: &SequentialSpec,
    caps: &Caps,
) -> Result<(bool, Option<Linearization>), CheckError> {
    let verdict = analyze(h, &ObjectSpecs::uniform(spec.clone()), caps)?;
    Ok((verdict.linearizable, verdict.linearization))
}

/// Do two linearizations of the skeleton bound every returned query from
/// below and above simultaneously?
pub fn check_ivl(
    h: &History,
    spec: &SequentialSpec,
    caps: &Caps,
) -> Result<(bool, Option<(Linearization, Linearization)>), CheckError> {
    let verdict = analyze(h, &ObjectSpecs::uniform(spec.clone()), caps)?;
    Ok((verdict.ivl, verdict.ivl_pair))
}

/// Min and max return of one query over all linearizations of the skeleton.
pub fn value_envelope(
    h: &History,
    spec: &SequentialSpec,
    caps: &Caps,
    query_index: usize,
) -> Result<(Value, Value), CheckError> {
    let ops = h.operations();
    let op = ops
        .get(query_index)
        .filter(|op| op.op.returns_value() && observed_value(op).is_some())
        .ok_or(CheckError::QueryNotFound { index: query_index })?;
    if matches!(observed_value(op), Some(Value::Bits(_))) {
        return Err(CheckError::QueryNotOrdered { index: query_index });
    }
    let verdict = analyze(h, &ObjectSpecs::uniform(spec.clone()), caps)?;
    verdict
        .envelopes
        .into_iter()
        .find(|e| e.op_index == query_index)
        .map(|e| (e.min, e.max))
        .ok_or(CheckError::QueryNotFound { index: query_index })
}

/// One common witness pair must bound every query in every replay of the
/// same schedule under per-replay specs (e.g. differently seeded sketches).
/// Sampling seeds makes this a falsifier: it can prove a violation, never
/// the universal claim.
pub fn check_ivl_randomized(
    replays: &[History],
    specs: &[SequentialSpec],
    caps: &Caps,
) -> Result<(bool, Option<(Linearization, Linearization)>), CheckError> {
    if replays.is_empty() || replays.len() != specs.len() {
        return Err(CheckError::NoReplays);
    }
    let skeleton = replays[0].skeletonize();
    for (i, h) in replays.iter().enumerate().skip(1) {
        if h.skeletonize() != skeleton {
            return Err(CheckError::SkeletonMismatch { index: i });
        }
    }
    let holders: Vec<ObjectSpecs> = specs
        .iter()
        .map(|s| ObjectSpecs::uniform(s.clone()))
        .collect();
    let runs: Vec<(&History, &ObjectSpecs)> = replays.iter().zip(holders.iter()).collect();
    let ((_, _, lower, upper), _) = analyze_runs(&runs, caps, false)?;
    Ok((lower.is_some() && upper.is_some(), lower.zip(upper)))
}

/// Outcome of the per-object decomposition.
#[derive(Clone, Debug)]
pub struct LocalityReport {
    pub per_object: Vec<(String, bool)>,
    /// Conjunction of the per-object verdicts.
    pub combined: bool,
    /// Whole-history verdict, when verification mode is on.
    pub whole_history: Option<bool>,
}

/// Check each object's subhistory independently; the conjunction is the
/// whole history's verdict. With `verify`, also run the whole-history check
/// and assert both directions agree.
pub fn check_locality(
    h: &History,
    specs: &ObjectSpecs,
    caps: &Caps,
    verify: bool,
) -> Result<LocalityReport, CheckError> {
    let mut per_object = Vec::new();
    for name in h.objects() {
        let sub = h.project(&name);
        let spec = specs.for_object(&name)?;
        let (ivl, _) = check_ivl(&sub, spec, caps)?;
        per_object.push((name, ivl));
    }
    let combined = per_object.iter().all(|(_, ivl)| *ivl);
    let whole_history = if verify {
        let verdict = analyze(h, specs, caps)?;
        assert_eq!(
            verdict.ivl, combined,
            "whole-history verdict must equal the per-object conjunction"
        );
        Some(verdict.ivl)
    } else {
        None
    };
    Ok(LocalityReport {
        per_object,
        combined,
        whole_history,
    })
}

/// Re-validate a witness by replaying it through fresh models, without
/// trusting the search: apply updates in witness order, evaluate queries,
/// and compare against the history's observations under `mode`.
pub fn validate_witness(
    h: &History,
    specs: &ObjectSpecs,
    lin: &Linearization,
    mode: WitnessMode,
) -> Result<bool, CheckError> {
    let observed: Vec<Option<Value>> = h
        .operations()
        .iter()
        .map(|op| observed_value(op).cloned())
        .collect();
    let mut models: BTreeMap<&str, SpecModel> = BTreeMap::new();
    for op in &lin.ops {
        if !models.contains_key(op.object.as_str()) {
            models.insert(
                op.object.as_str(),
                SpecModel::new(specs.for_object(&op.object)?),
            );
        }
        let model = models.get_mut(op.object.as_str()).unwrap();
        if let OpDesc::Update(_) = op.op {
            model.apply(op.process, &op.op)?;
            continue;
        }
        let value = model.eval(op.process, &op.op)?;
        if let Some(Some(obs)) = observed.get(op.index) {
            if !value_ok(mode, &value, obs) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Arg, ProcessId};
    use crate::spec::CountMinSpec;

    fn ev(seq: u64, p: u32, object: &str, op: OpDesc, kind: EventKind) -> Event {
        Event {
            seq,
            process: ProcessId(p),
            object: object.to_string(),
            op,
            kind,
        }
    }

    fn upd(v: i64) -> OpDesc {
        OpDesc::Update(Arg::Int(v))
    }

    fn int(v: i64) -> EventKind {
        EventKind::Respond(Ret::Value(Value::Int(v)))
    }

    fn unit() -> EventKind {
        EventKind::Respond(Ret::Unit)
    }

    fn inv() -> EventKind {
        EventKind::Invoke
    }

    fn hist(events: Vec<Event>) -> History {
        History::new(events).unwrap()
    }

    fn counter_specs() -> ObjectSpecs {
        ObjectSpecs::uniform(SequentialSpec::Counter)
    }

    /// One increment racing one read that returns 0: ordering the read first
    /// explains the return exactly.
    #[test]
    fn concurrent_increment_and_read_is_linearizable() {
        let h = hist(vec![
            ev(0, 2, "c", OpDesc::Read, inv()),
            ev(1, 1, "c", upd(3), inv()),
            ev(2, 1, "c", upd(3), unit()),
            ev(3, 2, "c", OpDesc::Read, int(0)),
        ]);
        let v = analyze(&h, &counter_specs(), &Caps::default()).unwrap();
        assert!(v.linearizable);
        assert!(v.ivl);
        let lin = v.linearization.unwrap();
        assert_eq!(lin.indices(), vec![0, 1]);
        assert_eq!(v.envelopes.len(), 1);
        assert_eq!(v.envelopes[0].min, Value::Int(0));
        assert_eq!(v.envelopes[0].max, Value::Int(3));
    }

    /// Two concurrent unit increments around a read: the read's envelope is
    /// exactly {0, 1, 2}.
    #[test]
    fn two_increment_envelope() {
        let h = hist(vec![
            ev(0, 3, "c", OpDesc::Read, inv()),
            ev(1, 1, "c", upd(1), inv()),
            ev(2, 2, "c", upd(1), inv()),
            ev(3, 1, "c", upd(1), unit()),
            ev(4, 2, "c", upd(1), unit()),
            ev(5, 3, "c", OpDesc::Read, int(1)),
        ]);
        let v = analyze(&h, &counter_specs(), &Caps::default()).unwrap();
        assert!(v.linearizable && v.ivl);
        let env = &v.envelopes[0];
        assert_eq!((env.min.clone(), env.max.clone()), (Value::Int(0), Value::Int(2)));
    }

    /// A concurrent positive and negative increment around a read that
    /// returns -1: no interleaving of {+1, -1} passes through -1 when the
    /// read must see a prefix sum, and -1 even escapes the envelope [0, 1]
    /// no matter how the two updates interleave... the observed value is
    /// below every reachable intermediate state.
    #[test]
    fn negative_return_escapes_every_interleaving() {
        let h = hist(vec![
            ev(0, 3, "a", OpDesc::Read, inv()),
            ev(1, 1, "a", upd(1), inv()),
            ev(2, 1, "a", upd(1), unit()),
            ev(3, 2, "a", upd(-1), inv()),
            ev(4, 2, "a", upd(-1), unit()),
            ev(5, 3, "a", OpDesc::Read, int(-1)),
        ]);
        let v = analyze(&h, &counter_specs(), &Caps::default()).unwrap();
        assert!(!v.linearizable);
        assert!(!v.ivl);
        assert!(v.ivl_pair.is_none());
        let env = &v.envelopes[0];
        assert_eq!((env.min.clone(), env.max.clone()), (Value::Int(0), Value::Int(1)));
    }

    fn pcm_example_history() -> (History, SequentialSpec) {
        let spec = SequentialSpec::CountMin(
            CountMinSpec::fixed(vec![vec![0, 1], vec![0, 0]], 2)
                .unwrap()
                .with_init(vec![vec![1, 4], vec![2, 3]])
                .unwrap(),
        );
        let h = hist(vec![
            ev(0, 1, "m", upd(0), inv()),
            ev(1, 2, "m", OpDesc::Query(0), inv()),
            ev(2, 2, "m", OpDesc::Query(0), int(2)),
            ev(3, 2, "m", OpDesc::Query(1), inv()),
            ev(4, 2, "m", OpDesc::Query(1), int(2)),
            ev(5, 1, "m", upd(0), unit()),
        ]);
        (h, spec)
    }

    /// The two queries force contradictory placements of the update for an
    /// exact match, yet a bounding pair exists.
    #[test]
    fn sketch_queries_no_single_order_but_a_bounding_pair() {
        let (h, spec) = pcm_example_history();
        let v = analyze(&h, &ObjectSpecs::uniform(spec.clone()), &Caps::default()).unwrap();
        assert!(!v.linearizable);
        assert!(v.ivl);
        let (lo, hi) = v.ivl_pair.clone().unwrap();
        assert!(validate_witness(&h, &ObjectSpecs::uniform(spec.clone()), &lo, WitnessMode::Lower).unwrap());
        assert!(validate_witness(&h, &ObjectSpecs::uniform(spec.clone()), &hi, WitnessMode::Upper).unwrap());
        // Query on item 0: 1 before the update, 2 after. Item 1: 2 before, 3 after.
        let by_index: BTreeMap<usize, (Value, Value)> = v
            .envelopes
            .iter()
            .map(|e| (e.op_index, (e.min.clone(), e.max.clone())))
            .collect();
        assert_eq!(by_index[&1], (Value::Int(1), Value::Int(2)));
        assert_eq!(by_index[&2], (Value::Int(2), Value::Int(3)));
    }

    #[test]
    fn witnesses_respect_precedence_and_validation_catches_bad_pairs() {
        let (h, spec) = pcm_example_history();
        let specs = ObjectSpecs::uniform(spec);
        let (ivl, pair) = {
            let v = analyze(&h, &specs, &Caps::default()).unwrap();
            (v.ivl, v.ivl_pair)
        };
        assert!(ivl);
        let (lo, hi) = pair.unwrap();
        // The lower witness must place the update last, the upper first.
        assert_eq!(*lo.indices().last().unwrap(), 0);
        assert_eq!(lo.indices()[0], 1);
        assert_eq!(hi.indices()[0], 0);
        // Swapping the roles breaks validation: the upper witness
        // overestimates query 1, which the lower criterion rejects.
        assert!(!validate_witness(&h, &specs, &hi, WitnessMode::Lower).unwrap());
    }

    #[test]
    fn sequential_history_has_one_linearization() {
        let h = hist(vec![
            ev(0, 1, "c", upd(1), inv()),
            ev(1, 1, "c", upd(1), unit()),
            ev(2, 2, "c", OpDesc::Read, inv()),
            ev(3, 2, "c", OpDesc::Read, int(1)),
        ]);
        let lins: Vec<Linearization> =
            enumerate_linearizations(&h.skeletonize(), &Caps::default())
                .unwrap()
                .collect();
        assert_eq!(lins.len(), 1);
        assert_eq!(lins[0].indices(), vec![0, 1]);
    }

    #[test]
    fn pairwise_concurrent_ops_yield_all_permutations() {
        for m in [2usize, 3, 4] {
            let mut events = Vec::new();
            for i in 0..m {
                events.push(ev(i as u64, i as u32 + 1, "c", upd(1), inv()));
            }
            for i in 0..m {
                events.push(ev((m + i) as u64, i as u32 + 1, "c", upd(1), unit()));
            }
            let h = hist(events);
            let count = enumerate_linearizations(&h.skeletonize(), &Caps::default())
                .unwrap()
                .count();
            let factorial: usize = (1..=m).product();
            assert_eq!(count, factorial, "m = {m}");
        }
    }

    #[test]
    fn linearizations_require_completed_history() {
        let h = hist(vec![ev(0, 1, "c", upd(1), inv())]);
        let err = enumerate_linearizations(&h.skeletonize(), &Caps::default())
            .err()
            .expect("pending history must be rejected");
        assert_eq!(err, CheckError::NotCompleted);
    }

    #[test]
    fn completions_of_complete_history_is_identity() {
        let h = hist(vec![
            ev(0, 1, "c", upd(1), inv()),
            ev(1, 1, "c", upd(1), unit()),
        ]);
        let cs = enumerate_completions(&h, &Caps::default()).unwrap();
        assert_eq!(cs, vec![h]);
    }

    #[test]
    fn pending_updates_fork_completions_and_pending_queries_drop() {
        let h = hist(vec![
            ev(0, 1, "c", upd(1), inv()),
            ev(1, 2, "c", upd(2), inv()),
            ev(2, 3, "c", upd(4), inv()),
            ev(3, 4, "c", OpDesc::Read, inv()),
        ]);
        let cs = enumerate_completions(&h, &Caps::default()).unwrap();
        assert_eq!(cs.len(), 8);
        for c in &cs {
            assert!(c.is_complete());
            assert!(c.operations().iter().all(|op| matches!(op.op, OpDesc::Update(_))));
        }
        let sizes: Vec<usize> = cs.iter().map(|c| c.operations().len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 0).count(), 1);
        assert_eq!(sizes.iter().filter(|&&s| s == 3).count(), 1);
    }

    /// A pending update may or may not have taken effect, so a read
    /// concurrent with nothing else accepts both 0 and the update's value.
    #[test]
    fn pending_update_effect_is_optional() {
        for observed in [0, 5] {
            let h = hist(vec![
                ev(0, 1, "c", upd(5), inv()),
                ev(1, 2, "c", OpDesc::Read, inv()),
                ev(2, 2, "c", OpDesc::Read, int(observed)),
            ]);
            let (ok, _) = check_linearizable(&h, &SequentialSpec::Counter, &Caps::default()).unwrap();
            assert!(ok, "observed {observed}");
        }
        let h = hist(vec![
            ev(0, 1, "c", upd(5), inv()),
            ev(1, 2, "c", OpDesc::Read, inv()),
            ev(2, 2, "c", OpDesc::Read, int(3)),
        ]);
        let (ok, _) = check_linearizable(&h, &SequentialSpec::Counter, &Caps::default()).unwrap();
        assert!(!ok);
    }

    #[test]
    fn erased_returns_are_unconstrained() {
        let h = hist(vec![
            ev(0, 1, "c", upd(7), inv()),
            ev(1, 2, "c", OpDesc::Read, inv()),
            ev(2, 2, "c", OpDesc::Read, EventKind::Respond(Ret::Erased)),
            ev(3, 1, "c", upd(7), unit()),
        ]);
        let v = analyze(&h, &counter_specs(), &Caps::default()).unwrap();
        assert!(v.linearizable && v.ivl);
        assert!(v.envelopes.is_empty());
    }

    #[test]
    fn caps_are_enforced() {
        let mut events = Vec::new();
        for i in 0u64..13 {
            events.push(ev(2 * i, i as u32 + 1, "c", upd(1), inv()));
            events.push(ev(2 * i + 1, i as u32 + 1, "c", upd(1), unit()));
        }
        let h = hist(events);
        assert!(matches!(
            analyze(&h, &counter_specs(), &Caps::default()),
            Err(CheckError::TooManyOps { ops: 13, cap: 12 })
        ));

        let mut events = Vec::new();
        for i in 0u64..7 {
            events.push(ev(i, i as u32 + 1, "c", upd(1), inv()));
        }
        let h = hist(events);
        assert!(matches!(
            analyze(&h, &counter_specs(), &Caps::default()),
            Err(CheckError::TooManyPending { pending: 7, cap: 6 })
        ));

        let caps = Caps { max_ops: 21, max_pending: 6 };
        let h = hist(vec![ev(0, 1, "c", upd(1), inv()), ev(1, 1, "c", upd(1), unit())]);
        assert!(matches!(
            analyze(&h, &counter_specs(), &caps),
            Err(CheckError::CapTooLarge { cap: 21 })
        ));
    }

    #[test]
    fn value_envelope_picks_one_query() {
        let h = hist(vec![
            ev(0, 1, "c", upd(2), inv()),
            ev(1, 1, "c", upd(2), unit()),
            ev(2, 2, "c", OpDesc::Read, inv()),
            ev(3, 2, "c", OpDesc::Read, int(2)),
        ]);
        let (lo, hi) = value_envelope(&h, &SequentialSpec::Counter, &Caps::default(), 1).unwrap();
        assert_eq!((lo, hi), (Value::Int(2), Value::Int(2)));
        assert!(matches!(
            value_envelope(&h, &SequentialSpec::Counter, &Caps::default(), 0),
            Err(CheckError::QueryNotFound { index: 0 })
        ));
    }

    /// With a single replay the randomized check coincides with the
    /// deterministic one.
    #[test]
    fn randomized_check_with_one_replay_matches_plain_check() {
        let (h, spec) = pcm_example_history();
        let (plain, _) = check_ivl(&h, &spec, &Caps::default()).unwrap();
        let (rand, pair) =
            check_ivl_randomized(std::slice::from_ref(&h), std::slice::from_ref(&spec), &Caps::default()).unwrap();
        assert_eq!(plain, rand);
        assert!(pair.is_some());
    }

    /// Observations from different replays constrain one shared witness
    /// pair. An impossible observation in any replay sinks the verdict.
    #[test]
    fn randomized_check_requires_a_common_pair() {
        let skeleton = |observed: i64| {
            hist(vec![
                ev(0, 1, "c", upd(1), inv()),
                ev(1, 2, "c", OpDesc::Read, inv()),
                ev(2, 2, "c", OpDesc::Read, int(observed)),
                ev(3, 1, "c", upd(1), unit()),
            ])
        };
        let specs = vec![SequentialSpec::Counter, SequentialSpec::Counter];
        let replays = vec![skeleton(0), skeleton(1)];
        let (ok, _) = check_ivl_randomized(&replays, &specs, &Caps::default()).unwrap();
        assert!(ok);

        let replays = vec![skeleton(0), skeleton(2)];
        let (ok, _) = check_ivl_randomized(&replays, &specs, &Caps::default()).unwrap();
        assert!(!ok);
    }

    #[test]
    fn randomized_check_rejects_mismatched_skeletons() {
        let a = hist(vec![ev(0, 1, "c", upd(1), inv()), ev(1, 1, "c", upd(1), unit())]);
        let b = hist(vec![ev(0, 1, "c", upd(2), inv()), ev(1, 1, "c", upd(2), unit())]);
        let specs = vec![SequentialSpec::Counter, SequentialSpec::Counter];
        assert!(matches!(
            check_ivl_randomized(&[a, b], &specs, &Caps::default()),
            Err(CheckError::SkeletonMismatch { index: 1 })
        ));
    }

    /// Interleaved operations on two independent counters: each projection
    /// passes, so the whole history does too.
    #[test]
    fn locality_conjunction_matches_whole_history() {
        let h = hist(vec![
            ev(0, 1, "a", upd(1), inv()),
            ev(1, 2, "b", upd(2), inv()),
            ev(2, 1, "a", upd(1), unit()),
            ev(3, 3, "a", OpDesc::Read, inv()),
            ev(4, 3, "a", OpDesc::Read, int(1)),
            ev(5, 2, "b", upd(2), unit()),
            ev(6, 3, "b", OpDesc::Read, inv()),
            ev(7, 3, "b", OpDesc::Read, int(2)),
        ]);
        let report = check_locality(&h, &counter_specs(), &Caps::default(), true).unwrap();
        assert!(report.combined);
        assert_eq!(report.whole_history, Some(true));
        assert_eq!(report.per_object.len(), 2);
    }

    /// One bad object spoils the whole history, and the verification mode
    /// confirms both routes agree on that.
    #[test]
    fn locality_flags_the_offending_object() {
        let h = hist(vec![
            ev(0, 3, "a", OpDesc::Read, inv()),
            ev(1, 1, "a", upd(1), inv()),
            ev(2, 1, "a", upd(1), unit()),
            ev(3, 2, "a", upd(-1), inv()),
            ev(4, 2, "a", upd(-1), unit()),
            ev(5, 3, "a", OpDesc::Read, int(-1)),
            ev(6, 1, "b", upd(5), inv()),
            ev(7, 1, "b", upd(5), unit()),
        ]);
        let report = check_locality(&h, &counter_specs(), &Caps::default(), true).unwrap();
        assert!(!report.combined);
        assert_eq!(report.whole_history, Some(false));
        let bad: Vec<&str> = report
            .per_object
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| name.as_str())
            .collect();
        assert_eq!(bad, vec!["a"]);
    }

    #[test]
    fn missing_per_object_spec_is_reported() {
        let h = hist(vec![ev(0, 1, "z", upd(1), inv()), ev(1, 1, "z", upd(1), unit())]);
        let specs = ObjectSpecs::PerObject(BTreeMap::new());
        assert!(matches!(
            analyze(&h, &specs, &Caps::default()),
            Err(CheckError::MissingSpec(name)) if name == "z"
        ));
    }

    #[test]
    fn empty_history_is_trivially_fine() {
        let v = analyze(&History::empty(), &counter_specs(), &Caps::default()).unwrap();
        assert!(v.linearizable && v.ivl);
        assert!(v.envelopes.is_empty());
    }
}
