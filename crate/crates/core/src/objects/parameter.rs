//! Signed real-valued parameter object built from two non-negative adders,
//! one for positive and one for negative contributions. A read scans the
//! positive adder, the negative adder, then both again, and returns
//! max(pos₁, pos₂) − max(neg₁, neg₂).
//!
//! The two adders are scanned at different times, so a read can pair a stale
//! positive sum with a fresh negative one. When one process issues positive
//! then negative updates in sequence, that mismatch lets a concurrent read
//! return a value below everything a linearization of the history can
//! return, and the checker rejects such histories; see
//! `harness::tests::parameter_reads_can_escape_every_linearization` for a
//! four-operation schedule that exhibits this.

use super::adder::{Adder, ScanRun, UpdateRun};
use super::{check_process, op_name, ObjectError, OpRun, StepObject, StepOutcome};
use crate::history::{Arg, OpDesc, ProcessId, Ret, Value};
use crate::spec::SequentialSpec;

pub struct IvlParameter {
    pos: Adder<f64>,
    neg: Adder<f64>,
}

impl IvlParameter {
    pub fn new(n: usize) -> Self {
        IvlParameter {
            pos: Adder::new(n),
            neg: Adder::new(n),
        }
    }
}

impl StepObject for IvlParameter {
    fn processes(&self) -> usize {
        self.pos.regs.len()
    }

    fn begin<'a>(
        &'a self,
        process: ProcessId,
        op: &OpDesc,
    ) -> Result<Box<dyn OpRun + 'a>, ObjectError> {
        let slot = check_process(process, self.processes())?;
        match op {
            OpDesc::Update(arg) => {
                let v = match arg {
                    Arg::Int(v) => *v as f64,
                    Arg::Real(v) => *v,
                };
                let inner = if v >= 0.0 {
                    self.pos.begin_update(process, slot, v)
                } else {
                    self.neg.begin_update(process, slot, -v)
                };
                Ok(Box::new(ParameterUpdate { inner }))
            }
            OpDesc::Read => Ok(Box::new(ParameterRead {
                object: self,
                scan: self.pos.begin_scan(),
                phase: 0,
                sums: [0.0; 4],
            })),
            other => Err(ObjectError::Unsupported {
                op: op_name(other),
            }),
        }
    }

    fn shared_accesses(&self) -> u64 {
        self.pos.regs.accesses() + self.neg.regs.accesses()
    }

    fn spec(&self) -> SequentialSpec {
        SequentialSpec::Parameter
    }
}

struct ParameterUpdate<'a> {
    inner: UpdateRun<'a, f64>,
}

impl OpRun for ParameterUpdate<'_> {
    fn step(&mut self) -> StepOutcome {
        if self.inner.step() {
            StepOutcome::Done(Ret::Unit)
        } else {
            StepOutcome::More
        }
    }
}

struct ParameterRead<'a> {
    object: &'a IvlParameter,
    scan: ScanRun<'a, f64>,
    phase: usize,
    sums: [f64; 4],
}

impl OpRun for ParameterRead<'_> {
    fn step(&mut self) -> StepOutcome {
        if let Some(sum) = self.scan.step() {
            self.sums[self.phase] = sum;
            self.phase += 1;
            if self.phase == 4 {
                let pos = self.sums[0].max(self.sums[2]);
                let neg = self.sums[1].max(self.sums[3]);
                return StepOutcome::Done(Ret::Value(Value::Real(pos - neg)));
            }
            self.scan = if self.phase.is_multiple_of(2) {
                self.object.pos.begin_scan()
            } else {
                self.object.neg.begin_scan()
            };
        }
        StepOutcome::More
    }
}
