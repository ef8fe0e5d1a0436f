//! Binary snapshot built from a batched counter. Component i's bit is worth
//! 2^i; setting a bit adds 2^i and clearing it adds 2^n − 2^i, so the counter
//! total is always c·2^n + Σ vᵢ·2^i and a single counter read recovers every
//! component from the low n bits.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::history::{Arg, OpDesc, ProcessId, Ret, Value};
use crate::objects::{
    check_process, op_name, IvlCounter, LockedCounter, ObjectError, OpRun, StepObject, StepOutcome,
};
use crate::spec::SequentialSpec;

/// Which batched counter backs the snapshot. The linearizability guarantee
/// needs a linearizable counter; the register-array counter is exposed as an
/// experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcKind {
    Locked,
    Ivl,
}

enum Bc {
    Locked(LockedCounter),
    Ivl(IvlCounter),
}

impl Bc {
    fn as_object(&self) -> &dyn StepObject {
        match self {
            Bc::Locked(c) => c,
            Bc::Ivl(c) => c,
        }
    }

    fn peek_total(&self) -> u64 {
        match self {
            Bc::Locked(c) => c.peek_total() as u64,
            Bc::Ivl(c) => c.peek_total(),
        }
    }
}

pub struct BinarySnapshot {
    n: usize,
    bits: Vec<AtomicU64>,
    bc: Bc,
}

impl BinarySnapshot {
    pub fn new(n: usize, kind: BcKind) -> Self {
        assert!(
            (1..=16).contains(&n),
            "component count must be in 1..=16 so counter sums cannot overflow"
        );
        let bc = match kind {
            BcKind::Locked => Bc::Locked(LockedCounter::new(n)),
            BcKind::Ivl => Bc::Ivl(IvlCounter::new(n)),
        };
        BinarySnapshot {
            n,
            bits: (0..n).map(|_| AtomicU64::new(0)).collect(),
            bc,
        }
    }

    /// Diagnostic view of the backing counter's total.
    pub fn counter_total(&self) -> u64 {
        self.bc.peek_total()
    }

    /// Diagnostic view of the per-process local bits.
    pub fn local_bits(&self) -> Vec<bool> {
        self.bits
            .iter()
            .map(|b| b.load(Ordering::Relaxed) != 0)
            .collect()
    }
}

impl StepObject for BinarySnapshot {
    fn processes(&self) -> usize {
        self.n
    }

    fn begin<'a>(
        &'a self,
        process: ProcessId,
        op: &OpDesc,
    ) -> Result<Box<dyn OpRun + 'a>, ObjectError> {
        let slot = check_process(process, self.n)?;
        match op {
            OpDesc::Update(Arg::Int(v @ (0 | 1))) => {
                let bit = *v as u64;
                let current = self.bits[slot].load(Ordering::Relaxed);
                // Unchanged bits still pay a counter update (of 0) so update
                // step counts stay uniform.
                let delta = if bit == current {
                    0
                } else if bit == 1 {
                    1 << slot
                } else {
                    (1 << self.n) - (1 << slot)
                };
                self.bits[slot].store(bit, Ordering::Relaxed);
                self.bc
                    .as_object()
                    .begin(process, &OpDesc::Update(Arg::Int(delta)))
            }
            OpDesc::Update(Arg::Int(_)) => Err(ObjectError::NonBit),
            OpDesc::Update(Arg::Real(_)) => Err(ObjectError::NonBit),
            OpDesc::Scan => Ok(Box::new(ScanRun {
                inner: self.bc.as_object().begin(process, &OpDesc::Read)?,
                components: self.n,
            })),
            other => Err(ObjectError::Unsupported {
                op: op_name(other),
            }),
        }
    }

    fn shared_accesses(&self) -> u64 {
        self.bc.as_object().shared_accesses()
    }

    fn spec(&self) -> SequentialSpec {
        SequentialSpec::BinarySnapshot { components: self.n }
    }
}

struct ScanRun<'a> {
    inner: Box<dyn OpRun + 'a>,
    components: usize,
}

impl OpRun for ScanRun<'_> {
    fn step(&mut self) -> StepOutcome {
        match self.inner.step() {
            StepOutcome::More => StepOutcome::More,
            StepOutcome::Done(Ret::Value(Value::Int(sum))) => {
                let sum = sum as u64;
                let bits = (0..self.components).map(|i| sum >> i & 1 == 1).collect();
                StepOutcome::Done(Ret::Value(Value::Bits(bits)))
            }
            StepOutcome::Done(other) => panic!("counter read returned {other:?}"),
        }
    }
}
