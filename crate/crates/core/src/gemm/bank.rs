//! Shared-memory bank model: 32 banks of 4-byte words. A warp-wide load
//! step costs one conflict for every thread beyond the number of distinct
//! banks it touches.

use crate::prepack::WARP_SIZE;

pub const BANKS: u32 = 32;

#[inline]
pub fn bank_of(byte_addr: u32) -> u32 {
    (byte_addr / 4) % BANKS
}

/// Conflicts for one step of 32 per-thread byte addresses.
pub fn step_conflicts(addrs: &[u32; WARP_SIZE]) -> u32 {
    let mut seen = 0u32;
    for &a in addrs {
        seen |= 1 << bank_of(a);
    }
    WARP_SIZE as u32 - seen.count_ones()
}

/// Byte addresses of every warp-wide load, in issue order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankAccessTrace {
    pub steps: Vec<[u32; WARP_SIZE]>,
}

impl BankAccessTrace {
    pub fn push(&mut self, addrs: [u32; WARP_SIZE]) {
        self.steps.push(addrs);
    }

    pub fn extend(&mut self, other: BankAccessTrace) {
        self.steps.extend(other.steps);
    }

    pub fn conflicts(&self) -> Vec<u32> {
        self.steps.iter().map(step_conflicts).collect()
    }

    pub fn total_conflicts(&self) -> u64 {
        self.conflicts().iter().map(|&c| c as u64).sum()
    }
}

/// How a tile's per-thread words are laid out in shared memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadLayout {
    /// Word `j` of thread `t` at word offset `j * 32 + t` (the packed layout).
    Jagged,
    /// Each thread's words contiguous: word offset `t * n + j`.
    ThreadMajor,
}

impl LoadLayout {
    /// Word offset of thread `thread`'s `j`-th word in a segment region that
    /// holds `words_per_thread` words per thread.
    #[inline]
    pub fn word_offset(self, thread: usize, j: usize, words_per_thread: usize) -> usize {
        match self {
            LoadLayout::Jagged => j * WARP_SIZE + thread,
            LoadLayout::ThreadMajor => thread * words_per_thread + j,
        }
    }
}
