//! Mutex-protected batched counter: the linearizable baseline. Every
//! operation is a single critical section, counted as one shared access.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::{check_process, op_name, ObjectError, OpRun, StepObject, StepOutcome};
use crate::history::{Arg, OpDesc, ProcessId, Ret, Value};
use crate::spec::SequentialSpec;

pub struct LockedCounter {
    n: usize,
    value: Mutex<i64>,
    accesses: AtomicU64,
}

impl LockedCounter {
    pub fn new(n: usize) -> Self {
        LockedCounter {
            n,
            value: Mutex::new(0),
            accesses: AtomicU64::new(0),
        }
    }

    pub fn peek_total(&self) -> i64 {
        *self.value.lock().unwrap()
    }
}

impl StepObject for LockedCounter {
    fn processes(&self) -> usize {
        self.n
    }

    fn begin<'a>(
        &'a self,
        process: ProcessId,
        op: &OpDesc,
    ) -> Result<Box<dyn OpRun + 'a>, ObjectError> {
        check_process(process, self.n)?;
        match op {
            OpDesc::Update(Arg::Int(v)) if *v >= 0 => Ok(Box::new(LockedOp {
                object: self,
                add: Some(*v),
            })),
            OpDesc::Update(Arg::Int(_)) => Err(ObjectError::NegativeUpdate),
            OpDesc::Update(Arg::Real(_)) => Err(ObjectError::NonInteger),
            OpDesc::Read => Ok(Box::new(LockedOp {
                object: self,
                add: None,
            })),
            other => Err(ObjectError::Unsupported {
                op: op_name(other),
            }),
        }
    }

    fn shared_accesses(&self) -> u64 {
        self.accesses.load(Ordering::Relaxed)
    }

    fn spec(&self) -> SequentialSpec {
        SequentialSpec::Counter
    }
}

struct LockedOp<'a> {
    object: &'a LockedCounter,
    add: Option<i64>,
}

impl OpRun for LockedOp<'_> {
    fn step(&mut self) -> StepOutcome {
        self.object.accesses.fetch_add(1, Ordering::Relaxed);
        let mut value = self.object.value.lock().unwrap();
        match self.add {
            Some(v) => {
                *value = value.checked_add(v).expect("counter overflow");
                StepOutcome::Done(Ret::Unit)
            }
            None => StepOutcome::Done(Ret::Value(Value::Int(*value))),
        }
    }
}
