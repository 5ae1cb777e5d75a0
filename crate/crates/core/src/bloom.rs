//! Per-flow telemetry states kept in a Bloom-filter-style cell array.
//!
//! Each cell is two bits wide and stores a full [`TelemetryState`] rather than
//! a membership bit. Flows hashing to the same cell share (and overwrite) the
//! state, which is the source of DLINT's collision behaviour.

use thiserror::Error;
use xxhash_rust::xxh64::xxh64;

use crate::wire::FlowKey;

const CELLS_PER_WORD: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BloomError {
    #[error("invalid bloom filter size: {0}")]
    InvalidSize(String),
}

#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TelemetryState {
    AwaitingInit = 0,
    ReadyToInsert = 1,
    InsertedId = 2,
}

impl TelemetryState {
    fn from_code(code: u8) -> Self {
        match code {
            0 => TelemetryState::AwaitingInit,
            1 => TelemetryState::ReadyToInsert,
            2 => TelemetryState::InsertedId,
            other => unreachable!("state code {other} is never stored"),
        }
    }
}

/// Seeded 64-bit hash of a flow key, reduced into `[0, cells)`.
pub fn flow_index(key: &FlowKey, seed: u64, cells: usize) -> usize {
    (xxh64(&key.to_bytes(), seed) % cells as u64) as usize
}

#[derive(Debug, Clone)]
pub struct BloomStateStore {
    words: Vec<u64>,
    cells: usize,
    seeds: Vec<u64>,
}

impl BloomStateStore {
    /// `cells` is the filter size K; one hash function per seed.
    pub fn new(cells: usize, hash_count: usize, seeds: &[u64]) -> Result<Self, BloomError> {
        if cells == 0 {
            return Err(BloomError::InvalidSize("cell count must be at least 1".into()));
        }
        if hash_count == 0 {
            return Err(BloomError::InvalidSize("hash count must be at least 1".into()));
        }
        if seeds.len() != hash_count {
            return Err(BloomError::InvalidSize(format!(
                "{hash_count} hash functions need {hash_count} seeds, got {}",
                seeds.len()
            )));
        }
        Ok(BloomStateStore {
            words: vec![0; cells.div_ceil(CELLS_PER_WORD)],
            cells,
            seeds: seeds.to_vec(),
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn hash_count(&self) -> usize {
        self.seeds.len()
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn indices(&self, key: &FlowKey) -> Vec<usize> {
        self.seeds.iter().map(|&seed| flow_index(key, seed, self.cells)).collect()
    }

    fn cell(&self, index: usize) -> u8 {
        let shift = 2 * (index % CELLS_PER_WORD);
        ((self.words[index / CELLS_PER_WORD] >> shift) & 0b11) as u8
    }

    fn set_cell(&mut self, index: usize, code: u8) {
        let shift = 2 * (index % CELLS_PER_WORD);
        let word = &mut self.words[index / CELLS_PER_WORD];
        *word = (*word & !(0b11 << shift)) | (u64::from(code) << shift);
    }

    /// With several hash functions the cells may disagree; the lowest state wins.
    pub fn lookup(&self, key: &FlowKey) -> TelemetryState {
        let code = self
            .seeds
            .iter()
            .map(|&seed| self.cell(flow_index(key, seed, self.cells)))
            .min()
            .unwrap_or(0);
        TelemetryState::from_code(code)
    }

    pub fn update(&mut self, key: &FlowKey, state: TelemetryState) {
        for i in 0..self.seeds.len() {
            let index = flow_index(key, self.seeds[i], self.cells);
            self.set_cell(index, state as u8);
        }
    }

    /// Number of cells currently holding a non-initial state.
    pub fn occupied(&self) -> usize {
        (0..self.cells).filter(|&i| self.cell(i) != 0).count()
    }
}
