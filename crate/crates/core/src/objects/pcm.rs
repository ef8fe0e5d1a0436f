//! Parallel count-min sketch: the sequential sketch with each matrix counter
//! made an atomic fetch-and-add cell. Update increments one counter per row;
//! query reads one counter per row and returns the minimum.

use super::{check_process, op_name, AtomicMatrix, ObjectError, OpRun, StepObject, StepOutcome};
use crate::history::{Arg, OpDesc, ProcessId, Ret, Value};
use crate::spec::{CountMinSpec, SequentialSpec, SpecError};

pub struct PcmSketch {
    n: usize,
    spec: CountMinSpec,
    matrix: AtomicMatrix,
}

impl PcmSketch {
    pub fn new(n: usize, spec: CountMinSpec) -> Self {
        let matrix = AtomicMatrix::new(spec.d, spec.w);
        matrix.fill_from(&spec.init);
        PcmSketch { n, spec, matrix }
    }

    pub fn seeded(n: usize, w: usize, d: usize, seed: u64) -> Self {
        Self::new(n, CountMinSpec::seeded(w, d, seed).expect("w, d >= 1"))
    }

    pub fn peek_cell(&self, row: usize, col: usize) -> u64 {
        self.matrix.peek(row, col)
    }

    fn columns(&self, item: u64) -> Result<Vec<usize>, ObjectError> {
        (0..self.spec.d)
            .map(|row| {
                self.spec.hashes.column(row, item).map_err(|e| match e {
                    SpecError::UnknownItem(item) => ObjectError::UnknownItem(item),
                    _ => ObjectError::Unsupported { op: "query" },
                })
            })
            .collect()
    }
}

impl StepObject for PcmSketch {
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
            OpDesc::Update(Arg::Int(v)) if *v >= 0 => Ok(Box::new(PcmUpdate {
                matrix: &self.matrix,
                cols: self.columns(*v as u64)?,
                row: 0,
            })),
            OpDesc::Update(Arg::Int(_)) => Err(ObjectError::NegativeUpdate),
            OpDesc::Update(Arg::Real(_)) => Err(ObjectError::NonInteger),
            OpDesc::Query(item) => Ok(Box::new(PcmQuery {
                matrix: &self.matrix,
                cols: self.columns(*item)?,
                row: 0,
                min: u64::MAX,
            })),
            other => Err(ObjectError::Unsupported {
                op: op_name(other),
            }),
        }
    }

    fn shared_accesses(&self) -> u64 {
        self.matrix.accesses()
    }

    fn spec(&self) -> SequentialSpec {
        SequentialSpec::CountMin(self.spec.clone())
    }
}

struct PcmUpdate<'a> {
    matrix: &'a AtomicMatrix,
    cols: Vec<usize>,
    row: usize,
}

impl OpRun for PcmUpdate<'_> {
    fn step(&mut self) -> StepOutcome {
        self.matrix.increment(self.row, self.cols[self.row]);
        self.row += 1;
        if self.row == self.cols.len() {
            StepOutcome::Done(Ret::Unit)
        } else {
            StepOutcome::More
        }
    }
}

struct PcmQuery<'a> {
    matrix: &'a AtomicMatrix,
    cols: Vec<usize>,
    row: usize,
    min: u64,
}

impl OpRun for PcmQuery<'_> {
    fn step(&mut self) -> StepOutcome {
        self.min = self.min.min(self.matrix.read(self.row, self.cols[self.row]));
        self.row += 1;
        if self.row == self.cols.len() {
            StepOutcome::Done(Ret::Value(Value::Int(self.min as i64)))
        } else {
            StepOutcome::More
        }
    }
}
