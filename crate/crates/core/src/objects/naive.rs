//! The counter algorithm run with signed values: per-process signed
//! registers, read scans and sums. Concurrent reads can observe values no
//! linearization allows, which is exactly what makes it a useful foil.

use super::adder::{Adder, ScanRun, UpdateRun};
use super::{check_process, op_name, ObjectError, OpRun, StepObject, StepOutcome};
use crate::history::{Arg, OpDesc, ProcessId, Ret, Value};
use crate::spec::SequentialSpec;

pub struct NaiveAdder {
    adder: Adder<i64>,
}

impl NaiveAdder {
    pub fn new(n: usize) -> Self {
        NaiveAdder {
            adder: Adder::new(n),
        }
    }

    pub fn peek_total(&self) -> i64 {
        self.adder.peek_sum()
    }
}

impl StepObject for NaiveAdder {
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
            OpDesc::Update(Arg::Int(v)) => Ok(Box::new(NaiveUpdate {
                inner: self.adder.begin_update(process, slot, *v),
            })),
            OpDesc::Update(Arg::Real(_)) => Err(ObjectError::NonInteger),
            OpDesc::Read => Ok(Box::new(NaiveRead {
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

struct NaiveUpdate<'a> {
    inner: UpdateRun<'a, i64>,
}

impl OpRun for NaiveUpdate<'_> {
    fn step(&mut self) -> StepOutcome {
        if self.inner.step() {
            StepOutcome::Done(Ret::Unit)
        } else {
            StepOutcome::More
        }
    }
}

struct NaiveRead<'a> {
    inner: ScanRun<'a, i64>,
}

impl OpRun for NaiveRead<'_> {
    fn step(&mut self) -> StepOutcome {
        match self.inner.step() {
            Some(sum) => StepOutcome::Done(Ret::Value(Value::Int(sum))),
            None => StepOutcome::More,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::run_to_completion;
    use crate::objects::testutil::assert_sequential_conformance;

    #[test]
    fn sums_signed_values_sequentially() {
        let a = NaiveAdder::new(2);
        run_to_completion(&a, ProcessId(1), &OpDesc::Update(Arg::Int(1))).unwrap();
        run_to_completion(&a, ProcessId(2), &OpDesc::Update(Arg::Int(-1))).unwrap();
        let ret = run_to_completion(&a, ProcessId(1), &OpDesc::Read).unwrap();
        assert_eq!(ret, Ret::Value(Value::Int(0)));
    }

    #[test]
    fn sequential_runs_match_the_counter_spec() {
        let a = NaiveAdder::new(3);
        assert_sequential_conformance(
            &a,
            &[
                (1, OpDesc::Update(Arg::Int(-5))),
                (2, OpDesc::Read),
                (3, OpDesc::Update(Arg::Int(9))),
                (1, OpDesc::Read),
            ],
        );
    }

    #[test]
    fn rejects_non_integer_and_foreign_ops() {
        let a = NaiveAdder::new(2);
        assert_eq!(
            a.begin(ProcessId(1), &OpDesc::Update(Arg::Real(0.5)))
                .err()
                .unwrap(),
            ObjectError::NonInteger
        );
        assert_eq!(
            a.begin(ProcessId(1), &OpDesc::Scan).err().unwrap(),
            ObjectError::Unsupported { op: "scan" }
        );
    }
}
