//! Step-machine objects over shared memory. Every operation advances one
//! shared-memory access per `step()` call, so a scheduler can interleave
//! executions at exactly that granularity.

mod adder;
mod counter;
mod locked;
mod naive;
mod parameter;
mod pcm;

pub use counter::IvlCounter;
pub use locked::LockedCounter;
pub use naive::NaiveAdder;
pub use parameter::IvlParameter;
pub use pcm::PcmSketch;

use std::marker::PhantomData;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::history::{OpDesc, ProcessId, Ret};
use crate::spec::SequentialSpec;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectError {
    #[error("{0} is not registered with this object (it has {1} processes)")]
    UnknownProcess(ProcessId, usize),
    #[error("{op} is not supported by this object")]
    Unsupported { op: &'static str },
    #[error("update argument must be a non-negative integer")]
    NegativeUpdate,
    #[error("update argument must be an integer")]
    NonInteger,
    #[error("snapshot updates take a bit (0 or 1)")]
    NonBit,
    #[error("item {0} is outside the fixed hash table")]
    UnknownItem(u64),
}

/// Result of advancing an in-flight operation by one shared access.
#[derive(Debug, PartialEq)]
pub enum StepOutcome {
    More,
    Done(Ret),
}

/// An in-flight operation; each `step` performs exactly one shared access.
pub trait OpRun {
    fn step(&mut self) -> StepOutcome;
}

/// A concurrent object driven step by step. `begin` validates and stages an
/// operation without touching shared memory; all accesses happen in `step`.
pub trait StepObject: Sync {
    fn processes(&self) -> usize;
    fn begin<'a>(
        &'a self,
        process: ProcessId,
        op: &OpDesc,
    ) -> Result<Box<dyn OpRun + 'a>, ObjectError>;
    /// Total shared-memory accesses performed so far, for step-count audits.
    fn shared_accesses(&self) -> u64;
    /// The sequential specification this object claims to implement.
    fn spec(&self) -> SequentialSpec;
}

/// Run one operation to completion, stepping until it responds.
pub fn run_to_completion(
    obj: &dyn StepObject,
    process: ProcessId,
    op: &OpDesc,
) -> Result<Ret, ObjectError> {
    let mut run = obj.begin(process, op)?;
    loop {
        if let StepOutcome::Done(ret) = run.step() {
            return Ok(ret);
        }
    }
}

pub(crate) fn check_process(process: ProcessId, n: usize) -> Result<usize, ObjectError> {
    match process.0.checked_sub(1) {
        Some(slot) if (slot as usize) < n => Ok(slot as usize),
        _ => Err(ObjectError::UnknownProcess(process, n)),
    }
}

pub(crate) fn op_name(op: &OpDesc) -> &'static str {
    match op {
        OpDesc::Update(_) => "update",
        OpDesc::Read => "read",
        OpDesc::Query(_) => "query",
        OpDesc::Scan => "scan",
    }
}

/// Values storable in a 64-bit atomic cell.
pub trait Word: Copy + Send + Sync + 'static {
    fn to_bits(self) -> u64;
    fn from_bits(bits: u64) -> Self;
}

impl Word for u64 {
    fn to_bits(self) -> u64 {
        self
    }
    fn from_bits(bits: u64) -> Self {
        bits
    }
}

impl Word for i64 {
    fn to_bits(self) -> u64 {
        self as u64
    }
    fn from_bits(bits: u64) -> Self {
        bits as i64
    }
}

impl Word for f64 {
    fn to_bits(self) -> u64 {
        f64::to_bits(self)
    }
    fn from_bits(bits: u64) -> Self {
        f64::from_bits(bits)
    }
}

/// Array of single-writer multi-reader atomic registers. Register `i` is
/// owned by the process in slot `i`; writes assert ownership, reads are open
/// to all. Every read or write bumps the shared-access tally.
pub struct SwmrArray<T> {
    cells: Vec<AtomicU64>,
    accesses: AtomicU64,
    _values: PhantomData<T>,
}

impl<T: Word> SwmrArray<T> {
    pub fn new(n: usize, init: T) -> Self {
        SwmrArray {
            cells: (0..n).map(|_| AtomicU64::new(init.to_bits())).collect(),
            accesses: AtomicU64::new(0),
            _values: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn read(&self, i: usize) -> T {
        self.accesses.fetch_add(1, Ordering::Relaxed);
        T::from_bits(self.cells[i].load(Ordering::SeqCst))
    }

    pub fn write(&self, owner: ProcessId, i: usize, value: T) {
        assert_eq!(
            owner.0 as usize,
            i + 1,
            "register {i} is single-writer; {owner} is not its owner"
        );
        self.accesses.fetch_add(1, Ordering::Relaxed);
        self.cells[i].store(value.to_bits(), Ordering::SeqCst);
    }

    /// Diagnostic read that does not count as a shared access.
    pub fn peek(&self, i: usize) -> T {
        T::from_bits(self.cells[i].load(Ordering::SeqCst))
    }

    pub fn accesses(&self) -> u64 {
        self.accesses.load(Ordering::Relaxed)
    }
}

/// Matrix of shared fetch-and-add counters (multi-writer, unlike SwmrArray).
pub struct AtomicMatrix {
    cells: Vec<AtomicU64>,
    width: usize,
    accesses: AtomicU64,
}

impl AtomicMatrix {
    pub fn new(rows: usize, width: usize) -> Self {
        AtomicMatrix {
            cells: (0..rows * width).map(|_| AtomicU64::new(0)).collect(),
            width,
            accesses: AtomicU64::new(0),
        }
    }

    pub fn fill_from(&self, values: &[Vec<u64>]) {
        for (r, row) in values.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                self.cells[r * self.width + c].store(v, Ordering::SeqCst);
            }
        }
    }

    pub fn increment(&self, row: usize, col: usize) {
        self.accesses.fetch_add(1, Ordering::Relaxed);
        let prev = self.cells[row * self.width + col].fetch_add(1, Ordering::SeqCst);
        assert!(prev < u64::MAX / 2, "sketch counter overflow");
    }

    pub fn read(&self, row: usize, col: usize) -> u64 {
        self.accesses.fetch_add(1, Ordering::Relaxed);
        self.cells[row * self.width + col].load(Ordering::SeqCst)
    }

    pub fn peek(&self, row: usize, col: usize) -> u64 {
        self.cells[row * self.width + col].load(Ordering::SeqCst)
    }

    pub fn accesses(&self) -> u64 {
        self.accesses.load(Ordering::Relaxed)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registers_round_trip_all_word_kinds() {
        let ints = SwmrArray::<i64>::new(2, 0);
        ints.write(ProcessId(1), 0, -17);
        assert_eq!(ints.read(0), -17);

        let floats = SwmrArray::<f64>::new(2, 0.0);
        floats.write(ProcessId(2), 1, 2.5);
        assert_eq!(floats.read(1), 2.5);
        assert_eq!(floats.accesses(), 2);
    }

    #[test]
    #[should_panic(expected = "single-writer")]
    fn foreign_writes_are_rejected() {
        let regs = SwmrArray::<u64>::new(2, 0);
        regs.write(ProcessId(2), 0, 1);
    }

    #[test]
    fn matrix_counts_and_tallies() {
        let m = AtomicMatrix::new(2, 3);
        m.fill_from(&[vec![1, 4, 0], vec![2, 3, 0]]);
        m.increment(0, 0);
        assert_eq!(m.read(0, 0), 2);
        assert_eq!(m.peek(1, 1), 3);
        assert_eq!(m.accesses(), 2);
    }
}
