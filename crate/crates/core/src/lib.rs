//! A laboratory for intermediate-value correctness of concurrent quantitative
//! objects: step-machine object implementations over atomic registers, a
//! deterministic replay/stress harness, a brute-force checker for
//! linearizability and its intermediate-value relaxation, and empirical
//! validation of sketch error bounds.

pub mod bounds;
pub mod checker;
pub mod harness;
pub mod history;
pub mod objects;
pub mod snapshot;
pub mod spec;
