//! Occupation-number basis of the conserved sector.
//!
//! A state is `|n_a, n_b, n_1 .. n_K, n_1' .. n_K'>` with `n_a + n_b = N` and
//! exactly `N_m` singly occupied memory modes. Memory occupations are packed
//! into a `u64`: bit `j` for `j < K` is mode `j + 1` of the unprimed sector,
//! bit `K + j` is mode `j + 1` of the primed sector.
//!
//! Canonical order: `n_a` descending is the major key, the memory pattern's
//! colexicographic combination rank is the minor key. The initial state
//! `|N, 0, 1..1, 0..0>` therefore has rank 0.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest number of memory modes (2K) that fits the packed representation.
pub const MAX_MEMORY_MODES: u32 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockState {
    pub n_a: u32,
    pub n_b: u32,
    pub memory: u64,
}

impl FockState {
    pub fn new(n_a: u32, n_b: u32, memory: u64) -> Self {
        Self { n_a, n_b, memory }
    }

    /// Occupation (0 or 1) of memory mode `bit` (0-based packed position).
    #[inline]
    pub fn occupied(&self, bit: u32) -> bool {
        self.memory >> bit & 1 == 1
    }

    #[inline]
    pub fn memory_count(&self) -> u32 {
        self.memory.count_ones()
    }
}

/// Pascal triangle up to 64 choose 64; entries fit in `u64` for every size used.
#[derive(Debug, Clone)]
struct Binomials {
    table: Vec<[u64; 65]>,
}

impl Binomials {
    fn new() -> Self {
        let mut table = vec![[0u64; 65]; 65];
        for n in 0..=64 {
            table[n][0] = 1;
            for k in 1..=n {
                table[n][k] = table[n - 1][k - 1].saturating_add(table[n - 1][k]);
            }
        }
        Self { table }
    }

    #[inline]
    fn get(&self, n: u32, k: u32) -> u64 {
        if k > n {
            0
        } else {
            self.table[n as usize][k as usize]
        }
    }
}

/// Binomial coefficient `C(n, k)`, zero when `k > n`.
pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// The enumerated sector together with its arithmetic rank/unrank maps.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    n: u32,
    k: u32,
    n_m: u32,
    block: usize,
    states: Vec<FockState>,
    binom: Binomials,
}

impl SectorBasis {
    /// Enumerates every state with `n_a + n_b = n` and `n_m` of the `2k`
    /// memory modes occupied, in canonical order.
    pub fn enumerate(n: u32, k: u32, n_m: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "system size must be at least 2, got {n}"
            )));
        }
        if 2 * k > MAX_MEMORY_MODES {
            return Err(Error::InvalidParameter(format!(
                "2K = {} memory modes exceed the packed limit of {MAX_MEMORY_MODES}",
                2 * k
            )));
        }
        if n_m > 2 * k {
            return Err(Error::InvalidParameter(format!(
                "memory occupation {n_m} exceeds the {} available modes",
                2 * k
            )));
        }
        let binom = Binomials::new();
        let block = binom.get(2 * k, n_m) as usize;
        let mut patterns = Vec::with_capacity(block);
        let mut pattern = if n_m == 0 { 0 } else { (1u64 << n_m) - 1 };
        for _ in 0..block {
            patterns.push(pattern);
            pattern = next_combination(pattern);
        }
        let mut states = Vec::with_capacity(block * (n as usize + 1));
        for n_a in (0..=n).rev() {
            states.extend(patterns.iter().map(|&m| FockState::new(n_a, n - n_a, m)));
        }
        Ok(Self {
            n,
            k,
            n_m,
            block,
            states,
            binom,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Memory modes per sector.
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n_m(&self) -> u32 {
        self.n_m
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> FockState {
        self.states[index]
    }

    /// Position of `state` in the canonical order.
    pub fn rank(&self, state: &FockState) -> Result<usize> {
        if state.n_a + state.n_b != self.n {
            return Err(Error::NotInSector(format!(
                "n_a + n_b = {} but the sector has N = {}",
                state.n_a + state.n_b,
                self.n
            )));
        }
        if state.memory_count() != self.n_m || state.memory >> (2 * self.k) != 0 {
            return Err(Error::NotInSector(format!(
                "memory pattern {:#b} is not a {}-subset of {} modes",
                state.memory,
                self.n_m,
                2 * self.k
            )));
        }
        let major = (self.n - state.n_a) as usize;
        Ok(major * self.block + self.memory_rank(state.memory))
    }

    /// Inverse of [`rank`](Self::rank), computed arithmetically.
    pub fn unrank(&self, index: usize) -> Result<FockState> {
        if index >= self.states.len() {
            return Err(Error::InvalidParameter(format!(
                "index {index} out of range for a basis of {} states",
                self.states.len()
            )));
        }
        let n_a = self.n - (index / self.block) as u32;
        let memory = self.memory_unrank(index % self.block);
        Ok(FockState::new(n_a, self.n - n_a, memory))
    }

    /// The state `|N, 0, 1..1, 0..0>` with the first `N_m` unprimed modes filled.
    pub fn initial_state(&self) -> FockState {
        let memory = if self.n_m == 0 {
            0
        } else {
            (1u64 << self.n_m) - 1
        };
        FockState::new(self.n, 0, memory)
    }

    /// Colex rank of a combination: sum of C(c_i, i + 1) over set bits c_0 < c_1 < ...
    fn memory_rank(&self, mut memory: u64) -> usize {
        let mut rank = 0u64;
        let mut i = 1;
        while memory != 0 {
            let c = memory.trailing_zeros();
            rank += self.binom.get(c, i);
            memory &= memory - 1;
            i += 1;
        }
        rank as usize
    }

    fn memory_unrank(&self, rank: usize) -> u64 {
        let mut rank = rank as u64;
        let mut memory = 0u64;
        let mut top = 2 * self.k;
        for i in (1..=self.n_m).rev() {
            // largest c with C(c, i) <= rank
            let mut c = top;
            while self.binom.get(c, i) > rank {
                c -= 1;
            }
            rank -= self.binom.get(c, i);
            memory |= 1 << c;
            top = c;
        }
        memory
    }
}

/// Next larger integer with the same popcount (Gosper's hack); yields colex order.
fn next_combination(x: u64) -> u64 {
    if x == 0 {
        return 0;
    }
    let lowest = x & x.wrapping_neg();
    let ripple = x + lowest;
    let ones = ((x ^ ripple) >> 2) / lowest;
    ripple | ones
}
