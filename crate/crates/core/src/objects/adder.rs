//! Shared scaffolding for register-array adders: update = read own register
//! then write it, read = scan the whole array.

use super::{SwmrArray, Word};
use crate::history::ProcessId;

pub(crate) trait Summable: Word + PartialOrd {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
}

impl Summable for u64 {
    fn zero() -> Self {
        0
    }
    fn add(self, other: Self) -> Self {
        self.checked_add(other).expect("counter overflow")
    }
}

impl Summable for i64 {
    fn zero() -> Self {
        0
    }
    fn add(self, other: Self) -> Self {
        self.checked_add(other).expect("adder overflow")
    }
}

impl Summable for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
}

pub(crate) struct Adder<T> {
    pub regs: SwmrArray<T>,
}

impl<T: Summable> Adder<T> {
    pub fn new(n: usize) -> Self {
        Adder {
            regs: SwmrArray::new(n, T::zero()),
        }
    }

    pub fn begin_update(&self, owner: ProcessId, slot: usize, delta: T) -> UpdateRun<'_, T> {
        UpdateRun {
            regs: &self.regs,
            owner,
            slot,
            delta,
            seen: None,
        }
    }

    pub fn begin_scan(&self) -> ScanRun<'_, T> {
        ScanRun {
            regs: &self.regs,
            next: 0,
            acc: T::zero(),
        }
    }

    /// Diagnostic sum over all registers, free of shared-access tallies.
    pub fn peek_sum(&self) -> T {
        let mut acc = T::zero();
        for i in 0..self.regs.len() {
            acc = acc.add(self.regs.peek(i));
        }
        acc
    }
}

pub(crate) struct UpdateRun<'a, T> {
    regs: &'a SwmrArray<T>,
    owner: ProcessId,
    slot: usize,
    delta: T,
    seen: Option<T>,
}

impl<T: Summable> UpdateRun<'_, T> {
    /// One shared access; true once the write has landed.
    pub fn step(&mut self) -> bool {
        match self.seen {
            None => {
                self.seen = Some(self.regs.read(self.slot));
                false
            }
            Some(cur) => {
                self.regs.write(self.owner, self.slot, cur.add(self.delta));
                true
            }
        }
    }
}

pub(crate) struct ScanRun<'a, T> {
    regs: &'a SwmrArray<T>,
    next: usize,
    acc: T,
}

impl<T: Summable> ScanRun<'_, T> {
    /// One shared access; yields the sum after the last register.
    pub fn step(&mut self) -> Option<T> {
        self.acc = self.acc.add(self.regs.read(self.next));
        self.next += 1;
        (self.next == self.regs.len()).then_some(self.acc)
    }
}
