//! Seeded pseudo-random generator shared by every stochastic step.
//!
//! The generator is xorshift64* (shifts 12, 25, 27; multiplier
//! `0x2545F4914F6CDD1D`). The 64-bit user seed is passed once through
//! splitmix64 to form the initial state; a zero state is replaced by
//! `0x9E3779B97F4A7C15`.
//!
//! Derived draws:
//! - `next_f64`: the top 53 bits of `next_u64` scaled by 2⁻⁵³, in `[0, 1)`.
//! - `below(n)`: the high 64 bits of the 128-bit product `next_u64 · n`.
//! - `shuffle`: Fisher–Yates from the last index down, swapping `i` with
//!   `below(i + 1)`.
//!
//! These definitions are fixed so that splits, weight initialisation and
//! batch order reproduce across platforms and implementations.

/// Default seed used by the CLI when `--seed` is omitted.
pub const DEFAULT_SEED: u64 = 20_240_607;

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = match splitmix64(seed) {
            0 => 0x9E37_79B9_7F4A_7C15,
            s => s,
        };
        XorShift64Star { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
