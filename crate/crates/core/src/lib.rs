//! Deterministic token packing for language-model pretraining data.
//!
//! Two strategies are supported: `concat` (join documents with EOS, cut into
//! atoms) and `padding` (cut each document on its own, pad the tail). Atoms are
//! shuffled with a pinned generator and merged or split into rows of exactly
//! `msl` tokens. Around the packer sit token accounting, coherence
//! diagnostics and a training-log analyzer.

pub mod accounting;
pub mod analyzer;
pub mod corpus;
pub mod diagnostics;
pub mod packer;

/// Token id as stored on disk (32-bit unsigned).
pub type TokenId = u32;
