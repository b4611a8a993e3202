use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DEFAULT_MIN_WORDS;
use crate::TokenId;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BATCH_SIZE: usize = 256;
/// GPT-2 `<|endoftext|>`.
pub const GPT2_EOS_ID: TokenId = 50256;

/// The experiment grid: each MSL with its atom sizes (0.25x..4x MSL, no 4x at 128).
pub const TABLE1_GRID: [(usize, &[usize]); 3] = [
    (32, &[8, 16, 32, 64, 128]),
    (64, &[16, 32, 64, 128, 256]),
    (128, &[32, 64, 128, 256]),
];

/// Atom sizes of the experiment grid for `msl`, or `None` when `msl` is off-grid.
pub fn table1_atom_sizes(msl: usize) -> Option<&'static [usize]> {
    TABLE1_GRID
        .iter()
        .find(|(m, _)| *m == msl)
        .map(|(_, atoms)| *atoms)
}

/// All 28 (strategy, msl, atom_size) combinations of the experiment grid.
pub fn table1_combinations() -> Vec<(Strategy, usize, usize)> {
    let mut out = Vec::with_capacity(28);
    for strategy in [Strategy::Concat, Strategy::Padding] {
        for (msl, atoms) in TABLE1_GRID {
            for &atom in atoms {
                out.push((strategy, msl, atom));
            }
        }
    }
    out
}

/// Batch size used with each MSL in the reference experiments.
pub fn table1_batch_size(msl: usize) -> usize {
    if msl >= 128 {
        128
    } else {
        256
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Concat,
    Padding,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Concat => "concat",
            Strategy::Padding => "padding",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concat" => Ok(Strategy::Concat),
            "padding" => Ok(Strategy::Padding),
            other => Err(format!("unknown strategy {other:?} (expected concat or padding)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("msl must be at least 2 (got {0})")]
    MslTooSmall(usize),
    #[error("atom size must be at least 2 (got {0})")]
    AtomTooSmall(usize),
    #[error("atom size {atom_size} and msl {msl} are incompatible: one must divide the other")]
    IncompatibleSizes { msl: usize, atom_size: usize },
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("msl {0} does not fit the 32-bit header field")]
    MslTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackConfig {
    pub strategy: Strategy,
    pub msl: usize,
    pub atom_size: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub eos_id: TokenId,
    pub pad_id: TokenId,
    pub min_words: usize,
    pub drop_concat_remainder: bool,
}

impl PackConfig {
    /// Defaults: seed 42, batch 256, GPT-2 EOS doubling as pad, remainder dropped.
    pub fn new(strategy: Strategy, msl: usize, atom_size: usize) -> Self {
        Self {
            strategy,
            msl,
            atom_size,
            seed: DEFAULT_SEED,
            batch_size: DEFAULT_BATCH_SIZE,
            eos_id: GPT2_EOS_ID,
            pad_id: GPT2_EOS_ID,
            min_words: DEFAULT_MIN_WORDS,
            drop_concat_remainder: true,
        }
    }

    /// Sets EOS and makes it the pad token as well.
    pub fn with_eos(mut self, eos_id: TokenId) -> Self {
        self.eos_id = eos_id;
        self.pad_id = eos_id;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.msl < 2 {
            return Err(ConfigError::MslTooSmall(self.msl));
        }
        if u32::try_from(self.msl).is_err() {
            return Err(ConfigError::MslTooLarge(self.msl));
        }
        if self.atom_size < 2 {
            return Err(ConfigError::AtomTooSmall(self.atom_size));
        }
        if self.msl % self.atom_size != 0 && self.atom_size % self.msl != 0 {
            return Err(ConfigError::IncompatibleSizes {
                msl: self.msl,
                atom_size: self.atom_size,
            });
        }
        if self.batch_size == 0 {
            return Err(ConfigError::ZeroBatch);
        }
        Ok(())
    }
}
