//! Seeded pairwise-independent hash family for the sketch: one `(a, b)` pair
//! per row, h(x) = ((a·x + b) mod p) mod w over a Mersenne prime p.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODULUS: u64 = (1 << 61) - 1;

/// `d` hash functions mapping items to columns `0..w`, materialized
/// deterministically from a seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashFamily {
    rows: Vec<(u64, u64)>,
    width: usize,
}

impl HashFamily {
    pub fn new(seed: u64, width: usize, rows: usize) -> Self {
        assert!(width >= 1 && rows >= 1, "hash family needs w, d >= 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..rows)
            .map(|_| {
                (
                    rng.random_range(1..MODULUS),
                    rng.random_range(0..MODULUS),
                )
            })
            .collect();
        HashFamily { rows, width }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Column of `item` in `row`, in `0..width`.
    pub fn column(&self, row: usize, item: u64) -> usize {
        let (a, b) = self.rows[row];
        let x = (item % MODULUS) as u128;
        let h = (a as u128 * x + b as u128) % MODULUS as u128;
        (h % self.width as u128) as usize
    }
}
