//! Deterministic sequential specifications: given a sequential skeleton
//! history, each spec fills in the unique legal return values. The checker
//! reuses the same models to evaluate candidate linearizations.

use thiserror::Error;

use crate::bounds::HashFamily;
use crate::history::{
    Arg, Event, EventKind, History, OpDesc, ProcessId, Ret, SkeletonHistory, Value,
};

/// Absolute tolerance for comparing real-valued returns. Sums of doubles are
/// order-dependent at the ulp level, so exact comparison would make verdicts
/// depend on summation order.
pub const REAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("history is not sequential")]
    NotSequential,
    #[error("history touches {0} objects; a sequential spec resolves one")]
    MultiObject(usize),
    #[error("{op} is not part of this object's specification")]
    UnsupportedOp { op: &'static str },
    #[error("this object's updates take integer arguments")]
    IntegerRequired,
    #[error("update argument must be a bit (0 or 1)")]
    BitRequired,
    #[error("item {0} is outside the fixed hash table")]
    UnknownItem(u64),
    #[error("sketch needs w >= 1, d >= 1 and matching table shapes")]
    BadDimensions,
    #[error("{process} maps to component {component}, but the snapshot has {components}")]
    UnknownComponent {
        process: ProcessId,
        component: usize,
        components: usize,
    },
    #[error("update items must be non-negative")]
    NegativeItem,
}

/// Per-row item-to-column maps for the sketch: either a seeded family or a
/// fixed table (row-major, indexed by item) for hand-built examples.
#[derive(Clone, Debug, PartialEq)]
pub enum CmHashes {
    Seeded(HashFamily),
    Fixed(Vec<Vec<usize>>),
}

impl CmHashes {
    pub fn column(&self, row: usize, item: u64) -> Result<usize, SpecError> {
        match self {
            CmHashes::Seeded(family) => Ok(family.column(row, item)),
            CmHashes::Fixed(rows) => rows[row]
                .get(item as usize)
                .copied()
                .ok_or(SpecError::UnknownItem(item)),
        }
    }
}

/// Count-min sketch parameters: dimensions, hashes, and an optional non-zero
/// starting matrix (row-major, d rows by w columns).
#[derive(Clone, Debug, PartialEq)]
pub struct CountMinSpec {
    pub w: usize,
    pub d: usize,
    pub hashes: CmHashes,
    pub init: Vec<Vec<u64>>,
}

impl CountMinSpec {
    pub fn seeded(w: usize, d: usize, seed: u64) -> Result<Self, SpecError> {
        if w < 1 || d < 1 {
            return Err(SpecError::BadDimensions);
        }
        Ok(CountMinSpec {
            w,
            d,
            hashes: CmHashes::Seeded(HashFamily::new(seed, w, d)),
            init: vec![vec![0; w]; d],
        })
    }

    pub fn fixed(hashes: Vec<Vec<usize>>, w: usize) -> Result<Self, SpecError> {
        let d = hashes.len();
        if w < 1 || d < 1 || hashes.iter().any(|row| row.iter().any(|&c| c >= w)) {
            return Err(SpecError::BadDimensions);
        }
        Ok(CountMinSpec {
            w,
            d,
            hashes: CmHashes::Fixed(hashes),
            init: vec![vec![0; w]; d],
        })
    }

    pub fn with_init(mut self, init: Vec<Vec<u64>>) -> Result<Self, SpecError> {
        if init.len() != self.d || init.iter().any(|row| row.len() != self.w) {
            return Err(SpecError::BadDimensions);
        }
        self.init = init;
        Ok(self)
    }
}

/// The deterministic sequential specifications this laboratory knows about.
#[derive(Clone, Debug, PartialEq)]
pub enum SequentialSpec {
    /// Read returns the sum of all preceding integer updates.
    Counter,
    /// Read returns the sum of all preceding real updates.
    Parameter,
    /// Query(a) returns the row-wise minimum of the counters a hashes to.
    CountMin(CountMinSpec),
    /// Scan returns one bit per component; update sets the caller's component.
    BinarySnapshot { components: usize },
}

impl SequentialSpec {
    /// Resolve a sequential skeleton into the unique history with return
    /// values filled in.
    pub fn resolve(&self, skeleton: &SkeletonHistory) -> Result<History, SpecError> {
        if !skeleton.is_sequential() {
            return Err(SpecError::NotSequential);
        }
        let objects = skeleton.history().objects();
        if objects.len() > 1 {
            return Err(SpecError::MultiObject(objects.len()));
        }
        let mut model = SpecModel::new(self);
        let mut events = Vec::with_capacity(skeleton.events().len());
        for ev in skeleton.events() {
            let kind = match &ev.kind {
                EventKind::Invoke => EventKind::Invoke,
                EventKind::Respond(_) => {
                    if ev.op.returns_value() {
                        EventKind::Respond(Ret::Value(model.eval(ev.process, &ev.op)?))
                    } else {
                        model.apply(ev.process, &ev.op)?;
                        EventKind::Respond(Ret::Unit)
                    }
                }
            };
            events.push(Event { kind, ..ev.clone() });
        }
        Ok(History::new(events).expect("skeleton order is preserved"))
    }
}

/// Mutable interpreter state for one object under one spec.
#[derive(Clone, Debug)]
pub enum SpecModel {
    Counter { sum: i64 },
    Parameter { sum: f64 },
    CountMin { spec: CountMinSpec, cells: Vec<Vec<u64>> },
    Snapshot { bits: Vec<bool> },
}

impl SpecModel {
    pub fn new(spec: &SequentialSpec) -> Self {
        match spec {
            SequentialSpec::Counter => SpecModel::Counter { sum: 0 },
            SequentialSpec::Parameter => SpecModel::Parameter { sum: 0.0 },
            SequentialSpec::CountMin(cm) => SpecModel::CountMin {
                spec: cm.clone(),
                cells: cm.init.clone(),
            },
            SequentialSpec::BinarySnapshot { components } => SpecModel::Snapshot {
                bits: vec![false; *components],
            },
        }
    }

    /// Apply an update's effect. Queries have no effect and are not accepted.
    pub fn apply(&mut self, process: ProcessId, op: &OpDesc) -> Result<(), SpecError> {
        let arg = match op {
            OpDesc::Update(arg) => arg,
            _ => return Err(SpecError::UnsupportedOp { op: "a query" }),
        };
        match self {
            SpecModel::Counter { sum } => {
                let v = int_arg(arg)?;
                *sum += v;
            }
            SpecModel::Parameter { sum } => {
                *sum += real_arg(arg);
            }
            SpecModel::CountMin { spec, cells } => {
                let item = item_arg(arg)?;
                for (row, cells) in cells.iter_mut().enumerate() {
                    let col = spec.hashes.column(row, item)?;
                    cells[col] += 1;
                }
            }
            SpecModel::Snapshot { bits } => {
                let bit = match int_arg(arg)? {
                    0 => false,
                    1 => true,
                    _ => return Err(SpecError::BitRequired),
                };
                let component = component_of(process, bits.len())?;
                bits[component] = bit;
            }
        }
        Ok(())
    }

    /// Return value a query would observe in the current state.
    pub fn eval(&self, process: ProcessId, op: &OpDesc) -> Result<Value, SpecError> {
        match (self, op) {
            (SpecModel::Counter { sum }, OpDesc::Read) => Ok(Value::Int(*sum)),
            (SpecModel::Parameter { sum }, OpDesc::Read) => Ok(Value::Real(*sum)),
            (SpecModel::CountMin { spec, cells }, OpDesc::Query(item)) => {
                let mut min = u64::MAX;
                for (row, cells) in cells.iter().enumerate() {
                    let col = spec.hashes.column(row, *item)?;
                    min = min.min(cells[col]);
                }
                Ok(Value::Int(min as i64))
            }
            (SpecModel::Snapshot { bits }, OpDesc::Scan) => {
                component_of(process, bits.len()).map(|_| ())?;
                Ok(Value::Bits(bits.clone()))
            }
            (_, op) => Err(SpecError::UnsupportedOp { op: op_name(op) }),
        }
    }
}

fn op_name(op: &OpDesc) -> &'static str {
    match op {
        OpDesc::Update(_) => "update",
        OpDesc::Read => "read",
        OpDesc::Query(_) => "query",
        OpDesc::Scan => "scan",
    }
}

fn int_arg(arg: &Arg) -> Result<i64, SpecError> {
    match arg {
        Arg::Int(v) => Ok(*v),
        Arg::Real(_) => Err(SpecError::IntegerRequired),
    }
}

fn real_arg(arg: &Arg) -> f64 {
    match arg {
        Arg::Int(v) => *v as f64,
        Arg::Real(v) => *v,
    }
}

fn item_arg(arg: &Arg) -> Result<u64, SpecError> {
    match int_arg(arg)? {
        v if v >= 0 => Ok(v as u64),
        _ => Err(SpecError::NegativeItem),
    }
}

/// Snapshot components are 0-based; process p owns component p − 1.
pub fn component_of(process: ProcessId, components: usize) -> Result<usize, SpecError> {
    let component = process.0.checked_sub(1).map(|c| c as usize);
    match component {
        Some(c) if c < components => Ok(c),
        _ => Err(SpecError::UnknownComponent {
            process,
            component: component.unwrap_or(usize::MAX),
            components,
        }),
    }
}

fn promote(a: &Value) -> Option<f64> {
    match a {
        Value::Int(v) => Some(*v as f64),
        Value::Real(v) => Some(*v),
        Value::Bits(_) => None,
    }
}

/// a ≤ b on return values. Numeric kinds compare with [`REAL_TOLERANCE`]
/// slack when a real is involved; bit vectors only compare equal.
pub fn value_le(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x <= y,
        (Value::Bits(x), Value::Bits(y)) => x == y,
        _ => match (promote(a), promote(b)) {
            (Some(x), Some(y)) => x <= y + REAL_TOLERANCE,
            _ => false,
        },
    }
}

pub fn value_ge(a: &Value, b: &Value) -> bool {
    value_le(b, a)
}

pub fn value_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Bits(x), Value::Bits(y)) => x == y,
        _ => match (promote(a), promote(b)) {
            (Some(x), Some(y)) => (x - y).abs() <= REAL_TOLERANCE,
            _ => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::Recorder;

    fn seq_skeleton(ops: &[(u32, OpDesc)]) -> SkeletonHistory {
        let mut rec = Recorder::new();
        for (p, op) in ops {
            let ret = if op.returns_value() {
                Ret::Erased
            } else {
                Ret::Unit
            };
            rec.invoke(ProcessId(*p), "x", op.clone()).unwrap();
            rec.respond(ProcessId(*p), ret).unwrap();
        }
        rec.finish().skeletonize()
    }

    fn returns(h: &History) -> Vec<Value> {
        h.operations()
            .into_iter()
            .filter_map(|op| match op.response {
                Some((_, Ret::Value(v))) => Some(v),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn counter_read_sums_preceding_updates() {
        let s = seq_skeleton(&[(1, OpDesc::Update(Arg::Int(3))), (2, OpDesc::Read)]);
        let h = SequentialSpec::Counter.resolve(&s).unwrap();
        assert_eq!(returns(&h), vec![Value::Int(3)]);
    }

    #[test]
    fn counter_read_on_fresh_object_is_zero() {
        let s = seq_skeleton(&[(1, OpDesc::Read)]);
        let h = SequentialSpec::Counter.resolve(&s).unwrap();
        assert_eq!(returns(&h), vec![Value::Int(0)]);
    }

    #[test]
    fn counter_sums_multiple_updates() {
        let s = seq_skeleton(&[
            (1, OpDesc::Update(Arg::Int(4))),
            (2, OpDesc::Update(Arg::Int(6))),
            (1, OpDesc::Read),
        ]);
        let h = SequentialSpec::Counter.resolve(&s).unwrap();
        assert_eq!(returns(&h), vec![Value::Int(10)]);
    }

    #[test]
    fn parameter_sums_signed_values() {
        let s = seq_skeleton(&[
            (1, OpDesc::Update(Arg::Int(1))),
            (2, OpDesc::Update(Arg::Int(-1))),
            (1, OpDesc::Read),
        ]);
        let h = SequentialSpec::Parameter.resolve(&s).unwrap();
        assert_eq!(returns(&h), vec![Value::Real(0.0)]);

        let empty = seq_skeleton(&[(1, OpDesc::Read)]);
        let h = SequentialSpec::Parameter.resolve(&empty).unwrap();
        assert_eq!(returns(&h), vec![Value::Real(0.0)]);
    }

    #[test]
    fn parameter_sums_reals() {
        let s = seq_skeleton(&[
            (1, OpDesc::Update(Arg::Real(2.5))),
            (2, OpDesc::Update(Arg::Real(-1.25))),
            (1, OpDesc::Read),
        ]);
        let h = SequentialSpec::Parameter.resolve(&s).unwrap();
        assert_eq!(returns(&h), vec![Value::Real(1.25)]);
    }

    /// Forced hashes and a non-zero start state: updating item 0 then
    /// querying it reads the incremented column in both rows.
    #[test]
    fn countmin_resolves_from_given_state() {
        let spec = CountMinSpec::fixed(vec![vec![0, 1], vec![0, 0]], 2)
            .unwrap()
            .with_init(vec![vec![1, 4], vec![2, 3]])
            .unwrap();
        let s = seq_skeleton(&[(1, OpDesc::Update(Arg::Int(0))), (2, OpDesc::Query(0))]);
        let h = SequentialSpec::CountMin(spec).resolve(&s).unwrap();
        assert_eq!(returns(&h), vec![Value::Int(2)]);
    }

    #[test]
    fn countmin_fresh_query_is_zero() {
        let spec = CountMinSpec::seeded(8, 3, 11).unwrap();
        let s = seq_skeleton(&[(1, OpDesc::Query(5))]);
        let h = SequentialSpec::CountMin(spec).resolve(&s).unwrap();
        assert_eq!(returns(&h), vec![Value::Int(0)]);
    }

    #[test]
    fn countmin_collision_free_counts_exactly() {
        // Identity table over a 4-item alphabet: no collisions, so the
        // estimate equals the true count.
        let spec = CountMinSpec::fixed(vec![(0..4).collect(), (0..4).collect()], 4).unwrap();
        let k = 5;
        let mut ops: Vec<(u32, OpDesc)> =
            (0..k).map(|_| (1, OpDesc::Update(Arg::Int(2)))).collect();
        ops.push((2, OpDesc::Query(2)));
        ops.push((2, OpDesc::Query(3)));
        let h = SequentialSpec::CountMin(spec)
            .resolve(&seq_skeleton(&ops))
            .unwrap();
        assert_eq!(returns(&h), vec![Value::Int(k), Value::Int(0)]);
    }

    #[test]
    fn countmin_never_undercounts() {
        // With any hashes, query(a) >= number of preceding update(a).
        let spec = CountMinSpec::seeded(2, 2, 3).unwrap();
        let ops: Vec<(u32, OpDesc)> = vec![
            (1, OpDesc::Update(Arg::Int(7))),
            (1, OpDesc::Update(Arg::Int(9))),
            (1, OpDesc::Update(Arg::Int(7))),
            (2, OpDesc::Query(7)),
        ];
        let h = SequentialSpec::CountMin(spec)
            .resolve(&seq_skeleton(&ops))
            .unwrap();
        match &returns(&h)[0] {
            Value::Int(v) => assert!(*v >= 2),
            other => panic!("unexpected return {other:?}"),
        }
    }

    #[test]
    fn countmin_resolve_is_deterministic() {
        let s = seq_skeleton(&[
            (1, OpDesc::Update(Arg::Int(3))),
            (2, OpDesc::Query(3)),
            (1, OpDesc::Query(4)),
        ]);
        let spec = SequentialSpec::CountMin(CountMinSpec::seeded(16, 4, 99).unwrap());
        let a = spec.resolve(&s).unwrap();
        let b = spec.resolve(&s).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn snapshot_scan_reflects_last_update_per_component() {
        let s = seq_skeleton(&[
            (1, OpDesc::Update(Arg::Int(1))),
            (3, OpDesc::Update(Arg::Int(1))),
            (3, OpDesc::Update(Arg::Int(0))),
            (2, OpDesc::Scan),
        ]);
        let h = SequentialSpec::BinarySnapshot { components: 3 }
            .resolve(&s)
            .unwrap();
        assert_eq!(returns(&h), vec![Value::Bits(vec![true, false, false])]);
    }

    #[test]
    fn rejects_non_sequential_input() {
        let mut rec = Recorder::new();
        rec.invoke(ProcessId(1), "x", OpDesc::Update(Arg::Int(1)))
            .unwrap();
        rec.invoke(ProcessId(2), "x", OpDesc::Read).unwrap();
        rec.respond(ProcessId(2), Ret::Erased).unwrap();
        rec.respond(ProcessId(1), Ret::Erased).unwrap();
        let s = rec.finish().skeletonize();
        assert_eq!(
            SequentialSpec::Counter.resolve(&s).unwrap_err(),
            SpecError::NotSequential
        );
    }

    #[test]
    fn rejects_foreign_operations() {
        let s = seq_skeleton(&[(1, OpDesc::Query(0))]);
        assert_eq!(
            SequentialSpec::Counter.resolve(&s).unwrap_err(),
            SpecError::UnsupportedOp { op: "query" }
        );
    }

    #[test]
    fn resolve_then_skeletonize_round_trips() {
        let s = seq_skeleton(&[
            (1, OpDesc::Update(Arg::Int(2))),
            (2, OpDesc::Read),
            (1, OpDesc::Read),
        ]);
        let h = SequentialSpec::Counter.resolve(&s).unwrap();
        assert_eq!(h.skeletonize(), s);
    }

    #[test]
    fn value_comparisons_promote_and_tolerate() {
        assert!(value_le(&Value::Int(3), &Value::Int(3)));
        assert!(value_le(&Value::Int(3), &Value::Real(3.0000000001)));
        assert!(value_le(&Value::Real(3.0000000001), &Value::Int(3)));
        assert!(!value_le(&Value::Real(3.1), &Value::Int(3)));
        assert!(value_eq(&Value::Real(0.1 + 0.2), &Value::Real(0.3)));
        assert!(value_ge(&Value::Int(4), &Value::Real(3.5)));
        let a = Value::Bits(vec![true, false]);
        let b = Value::Bits(vec![false, false]);
        assert!(value_le(&a, &a) && value_eq(&a, &a));
        assert!(!value_le(&a, &b) && !value_eq(&a, &b));
        assert!(!value_eq(&a, &Value::Int(2)));
    }
}
