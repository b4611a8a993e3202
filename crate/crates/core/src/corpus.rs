//! Corpus ingestion: raw rows, the minimum-word filter, tokenization and
//! pre-tokenized loading.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::TokenId;

/// Rows with fewer words than this are dropped unless overridden.
pub const DEFAULT_MIN_WORDS: usize = 50;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {doc_id} (row {source_index}) contains reserved token id {token}")]
    ReservedTokenEmitted {
        doc_id: usize,
        source_index: usize,
        token: TokenId,
    },
    #[error("row {source_index} survived filtering but tokenized to zero tokens")]
    EmptyTokenization { source_index: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("tokenizer rejected row {source_index}: {message}")]
    Tokenizer { source_index: usize, message: String },
}

/// One line of the source corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub index: usize,
    pub text: String,
    pub word_count: usize,
}

impl RawRow {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = count_words(&text);
        Self {
            index,
            text,
            word_count,
        }
    }
}

/// Number of maximal runs of non-whitespace characters (Unicode whitespace).
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// A filtered, tokenized corpus row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: usize,
    pub tokens: Vec<TokenId>,
    pub source_index: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub rows_in: u64,
    pub rows_kept: u64,
    pub rows_dropped: u64,
    pub words_in: u64,
    pub words_kept: u64,
    pub row_drop_fraction: f64,
    pub word_drop_fraction: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Keeps rows with at least `min_words` words, in source order.
pub fn filter_rows(rows: Vec<RawRow>, min_words: usize) -> (Vec<RawRow>, FilterStats) {
    let rows_in = rows.len() as u64;
    let words_in: u64 = rows.iter().map(|r| r.word_count as u64).sum();
    let kept: Vec<RawRow> = rows
        .into_iter()
        .filter(|r| r.word_count >= min_words)
        .collect();
    let rows_kept = kept.len() as u64;
    let words_kept: u64 = kept.iter().map(|r| r.word_count as u64).sum();
    let stats = FilterStats {
        rows_in,
        rows_kept,
        rows_dropped: rows_in - rows_kept,
        words_in,
        words_kept,
        row_drop_fraction: ratio(rows_in - rows_kept, rows_in),
        word_drop_fraction: ratio(words_in - words_kept, words_in),
    };
    (kept, stats)
}

/// Token ids that may never appear inside a document body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReservedIds {
    pub eos_id: TokenId,
    pub pad_id: TokenId,
}

impl ReservedIds {
    pub fn new(eos_id: TokenId, pad_id: TokenId) -> Self {
        Self { eos_id, pad_id }
    }

    pub fn contains(&self, token: TokenId) -> bool {
        token == self.eos_id || token == self.pad_id
    }
}

/// Text to token ids. Implementations must be pure.
pub trait TokenizerPort: Sync {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, String>;
}

/// Maps every UTF-8 byte to its value; ids 0-255.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    /// First id above the byte range, the default EOS for byte-tokenized corpora.
    pub const FIRST_RESERVED: TokenId = 256;

    pub fn decode(tokens: &[TokenId]) -> Option<Vec<u8>> {
        tokens.iter().map(|&t| u8::try_from(t).ok()).collect()
    }
}

impl TokenizerPort for ByteTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, String> {
        Ok(text.bytes().map(TokenId::from).collect())
    }
}

/// Reads ids already present in the row text, either as a JSON array
/// (`[5, 6, 7]`), a record (`{"tokens": [5, 6, 7]}`) or whitespace-separated integers.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughTokenizer;

#[derive(Deserialize)]
struct TokensRecord {
    tokens: Vec<TokenId>,
}

impl TokenizerPort for PassThroughTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, String> {
        let trimmed = text.trim();
        if trimmed.starts_with('[') {
            serde_json::from_str(trimmed).map_err(|e| e.to_string())
        } else if trimmed.starts_with('{') {
            serde_json::from_str::<TokensRecord>(trimmed)
                .map(|r| r.tokens)
                .map_err(|e| e.to_string())
        } else {
            trimmed
                .split_whitespace()
                .map(|w| w.parse::<TokenId>().map_err(|e| format!("{w:?}: {e}")))
                .collect()
        }
    }
}

fn check_document(doc: &Document, reserved: ReservedIds) -> Result<(), CorpusError> {
    if doc.tokens.is_empty() {
        return Err(CorpusError::EmptyTokenization {
            source_index: doc.source_index,
        });
    }
    if let Some(&token) = doc.tokens.iter().find(|&&t| reserved.contains(t)) {
        return Err(CorpusError::ReservedTokenEmitted {
            doc_id: doc.doc_id,
            source_index: doc.source_index,
            token,
        });
    }
    Ok(())
}

/// Tokenizes rows in parallel; documents keep row order and get contiguous ids.
pub fn tokenize_rows(
    rows: &[RawRow],
    tokenizer: &dyn TokenizerPort,
    reserved: ReservedIds,
) -> Result<Vec<Document>, CorpusError> {
    rows.par_iter()
        .enumerate()
        .map(|(doc_id, row)| {
            let tokens = tokenizer
                .encode(&row.text)
                .map_err(|message| CorpusError::Tokenizer {
                    source_index: row.index,
                    message,
                })?;
            let doc = Document {
                doc_id,
                tokens,
                source_index: row.index,
            };
            check_document(&doc, reserved)?;
            Ok(doc)
        })
        .collect()
}

#[derive(Deserialize)]
struct TextRecord {
    text: String,
}

/// Reads raw rows: one document per line, or JSON records with a `text` field
/// when a line starts with `{`.
pub fn read_raw_rows(path: &Path) -> Result<Vec<RawRow>, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        let text = if line.trim_start().starts_with('{') {
            serde_json::from_str::<TextRecord>(&line)
                .map_err(|e| CorpusError::Parse {
                    path: display.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?
                .text
        } else {
            line
        };
        rows.push(RawRow::new(i, text));
    }
    Ok(rows)
}

/// Loads line-delimited token lists, either bare JSON arrays or records with
/// a `tokens` field. Blank lines are skipped.
pub fn load_pretokenized(path: &Path, reserved: ReservedIds) -> Result<Vec<Document>, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed = if trimmed.starts_with('[') {
            serde_json::from_str::<Vec<TokenId>>(trimmed)
        } else {
            serde_json::from_str::<TokensRecord>(trimmed).map(|r| r.tokens)
        };
        let tokens = parsed.map_err(|e| CorpusError::Parse {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let doc = Document {
            doc_id: docs.len(),
            tokens,
            source_index: i,
        };
        check_document(&doc, reserved).map_err(|e| match e {
            CorpusError::EmptyTokenization { .. } => CorpusError::Parse {
                path: display.clone(),
                line: i + 1,
                message: "empty token list".into(),
            },
            other => other,
        })?;
        docs.push(doc);
    }
    Ok(docs)
}
