//! Batched counter over per-process registers: update adds to the caller's
//! own register in O(1), read scans all n registers.

use super::adder::{Adder, ScanRun, UpdateRun};
use super::{check_process, op_name, ObjectError, OpRun, StepObject, StepOutcome};
use crate::history::{Arg, OpDesc, ProcessId, Ret, Value};
use crate::spec::SequentialSpec;

pub struct IvlCounter {
    adder: Adder<u64>,
}

impl IvlCounter {
    pub fn new(n: usize) -> Self {
        IvlCounter {
            adder: Adder::new(n),
        }
    }

    /// Diagnostic total, not a shared access.
    pub fn peek_total(&self) -> u64 {
        self.adder.peek_sum()
    }

    /// Diagnostic view of one register.
    pub fn peek_register(&self, slot: usize) -> u64 {
        self.adder.regs.peek(slot)
    }
}

impl StepObject for IvlCounter {
    fn processes(&self) -> usize {
        self.adder.regs.len()
    }

    fn begin<'a>(
        &'a self,
        process: ProcessId,
        op: &OpDesc,
    ) -> Result<Box<dyn OpRun + 'a>, ObjectError> {
        let slot = check_process(process, self.processes())?;
        match op {
            OpDesc::Update(Arg::Int(v)) if *v >= 0 => Ok(Box::new(CounterUpdate {
                inner: self.adder.begin_update(process, slot, *v as u64),
            })),
            OpDesc::Update(Arg::Int(_)) => Err(ObjectError::NegativeUpdate),
            OpDesc::Update(Arg::Real(_)) => Err(ObjectError::NonInteger),
            OpDesc::Read => Ok(Box::new(CounterRead {
                inner: self.adder.begin_scan(),
            })),
            other => Err(ObjectError::Unsupported {
                op: op_name(other),
            }),
        }
    }

    fn shared_accesses(&self) -> u64 {
        self.adder.regs.accesses()
    }

    fn spec(&self) -> SequentialSpec {
        SequentialSpec::Counter
    }
}

struct CounterUpdate<'a> {
    inner: UpdateRun<'a, u64>,
}

impl OpRun for CounterUpdate<'_> {
    fn step(&mut self) -> StepOutcome {
        if self.inner.step() {
            StepOutcome::Done(Ret::Unit)
        } else {
            StepOutcome::More
        }
    }
}

struct CounterRead<'a> {
    inner: ScanRun<'a, u64>,
}

impl OpRun for CounterRead<'_> {
    fn step(&mut self) -> StepOutcome {
        match self.inner.step() {
            Some(sum) => StepOutcome::Done(Ret::Value(Value::Int(
                i64::try_from(sum).expect("counter total exceeds i64"),
            ))),
            None => StepOutcome::More,
        }
    }
}
