//! On-disk dataset: `ATPK` binary file plus a JSON manifest next to it.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! "ATPK"            4 bytes
//! version           u8  (= 1)
//! msl               u32
//! sequence_count    u64
//! eos_id            u32
//! pad_id            u32
//! flags             u8  (bit 0: mask section, bit 1: provenance section)
//! tokens            sequence_count * msl * u32
//! mask              ceil(sequence_count * msl / 8) bytes, bit i of byte k = token 8k+i
//! provenance        per sequence: u32 run count, then runs of
//!                   {pos u32, len u32, kind u8, doc_id u32, start u32}
//! sha256            32 bytes over everything above
//! ```
//!
//! The manifest lives at `<dataset path>.manifest.json`.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::layout::{Run, RunKind};
use super::shuffle::GENERATOR_ID;
use super::{payload_sha256, PackConfig, PackedDataset, PackedSequence};
use crate::accounting::{stats_for, PackStats};
use crate::corpus::FilterStats;
use crate::TokenId;

pub const MAGIC: &[u8; 4] = b"ATPK";
pub const VERSION: u8 = 1;
pub const TOKEN_WIDTH_BYTES: u32 = 4;
pub const FLAG_MASK: u8 = 0b01;
pub const FLAG_PROVENANCE: u8 = 0b10;
const HEADER_LEN: usize = 4 + 1 + 4 + 8 + 4 + 4 + 1;
const RUN_LEN: usize = 17;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{0} already exists (pass overwrite to replace it)")]
    AlreadyExists(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: checksum mismatch (stored {stored}, computed {computed})")]
    ChecksumMismatch {
        path: String,
        stored: String,
        computed: String,
    },
    #[error("{path}: manifest disagrees with dataset: {message}")]
    ManifestMismatch { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub format_version: u8,
    pub tool: String,
    pub tool_version: String,
    pub generator: String,
    pub dataset_file: String,
    pub token_width_bytes: u32,
    pub msl: u64,
    pub sequence_count: u64,
    pub has_mask: bool,
    pub has_provenance: bool,
    pub config: PackConfig,
    pub pack_stats: PackStats,
    pub filter_stats: Option<FilterStats>,
    pub input_sha256: Option<String>,
    pub payload_sha256: String,
    pub file_sha256: String,
}

#[derive(Debug, Clone, Default)]
pub struct WriteOptions {
    pub overwrite: bool,
    pub filter_stats: Option<FilterStats>,
    pub input_sha256: Option<String>,
    /// Omit the provenance section (smaller files; stats and diagnostics
    /// then need the manifest or a re-pack).
    pub skip_provenance: bool,
}

pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn kind_code(kind: RunKind) -> (u8, u32, u32) {
    match kind {
        RunKind::Text { doc_id, start } => (0, doc_id, start),
        RunKind::Eos => (1, 0, 0),
        RunKind::ChunkEnd => (2, 0, 0),
        RunKind::TailPad => (3, 0, 0),
        RunKind::FillPad => (4, 0, 0),
    }
}

fn kind_from_code(code: u8, doc_id: u32, start: u32) -> Option<RunKind> {
    Some(match code {
        0 => RunKind::Text { doc_id, start },
        1 => RunKind::Eos,
        2 => RunKind::ChunkEnd,
        3 => RunKind::TailPad,
        4 => RunKind::FillPad,
        _ => return None,
    })
}

/// Serializes the dataset body (everything the trailing digest covers).
pub fn encode(ds: &PackedDataset, with_provenance: bool) -> Vec<u8> {
    let msl = ds.config.msl;
    let n = ds.sequences.len();
    let with_provenance = with_provenance && ds.sequences.iter().all(PackedSequence::has_provenance);
    let mut buf = Vec::with_capacity(HEADER_LEN + n * msl * 4 + (n * msl).div_ceil(8) + DIGEST_LEN);
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&(msl as u32).to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&ds.config.eos_id.to_le_bytes());
    buf.extend_from_slice(&ds.config.pad_id.to_le_bytes());
    buf.push(FLAG_MASK | if with_provenance { FLAG_PROVENANCE } else { 0 });
    for seq in &ds.sequences {
        for t in &seq.tokens {
            buf.extend_from_slice(&t.to_le_bytes());
        }
    }
    let mut mask = vec![0u8; (n * msl).div_ceil(8)];
    for (i, &m) in ds.sequences.iter().flat_map(|s| &s.loss_mask).enumerate() {
        if m {
            mask[i / 8] |= 1 << (i % 8);
        }
    }
    buf.extend_from_slice(&mask);
    if with_provenance {
        for seq in &ds.sequences {
            buf.extend_from_slice(&(seq.runs.len() as u32).to_le_bytes());
            for r in &seq.runs {
                let (code, doc_id, start) = kind_code(r.kind);
                buf.extend_from_slice(&r.pos.to_le_bytes());
                buf.extend_from_slice(&r.len.to_le_bytes());
                buf.push(code);
                buf.extend_from_slice(&doc_id.to_le_bytes());
                buf.extend_from_slice(&start.to_le_bytes());
            }
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path, overwrite: bool) -> Result<fs::File, FormatError> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if overwrite {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    opts.open(path).map_err(|source| {
        if source.kind() == io::ErrorKind::AlreadyExists {
            FormatError::AlreadyExists(path.display().to_string())
        } else {
            FormatError::Io {
                path: path.display().to_string(),
                source,
            }
        }
    })
}

/// Writes the dataset and its manifest; refuses to replace existing files
/// unless `opts.overwrite`.
pub fn write_dataset(ds: &PackedDataset, path: &Path, opts: &WriteOptions) -> Result<Manifest, FormatError> {
    let bytes = encode(ds, !opts.skip_provenance);
    let has_provenance = bytes[HEADER_LEN - 1] & FLAG_PROVENANCE != 0;
    let mpath = manifest_path(path);
    if !opts.overwrite {
        for p in [path, mpath.as_path()] {
            if p.exists() {
                return Err(FormatError::AlreadyExists(p.display().to_string()));
            }
        }
    }
    let manifest = Manifest {
        format: String::from_utf8_lossy(MAGIC).into_owned(),
        format_version: VERSION,
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        generator: GENERATOR_ID.to_string(),
        dataset_file: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        token_width_bytes: TOKEN_WIDTH_BYTES,
        msl: ds.config.msl as u64,
        sequence_count: ds.sequences.len() as u64,
        has_mask: true,
        has_provenance,
        config: ds.config,
        pack_stats: ds.stats,
        filter_stats: opts.filter_stats,
        input_sha256: opts.input_sha256.clone(),
        payload_sha256: ds.manifest_checksum.clone(),
        file_sha256: format!("{:x}", Sha256::digest(&bytes)),
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');

    let mut f = create(path, opts.overwrite)?;
    f.write_all(&bytes).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))?;
    let mut m = create(&mpath, opts.overwrite)?;
    m.write_all(json.as_bytes()).map_err(io_err(&mpath))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Format {
        path: path.display().to_string(),
        message: format!("invalid manifest: {e}"),
    })
}

/// Raw contents of a dataset file, before the manifest is consulted.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFile {
    pub msl: usize,
    pub eos_id: TokenId,
    pub pad_id: TokenId,
    pub flags: u8,
    pub sequences: Vec<PackedSequence>,
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        let out = self.buf.get(self.at..end)?;
        self.at = end;
        Some(out)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Parses and integrity-checks a dataset file image.
pub fn decode(bytes: &[u8], path: &Path) -> Result<DecodedFile, FormatError> {
    let fail = |message: &str| FormatError::Format {
        path: path.display().to_string(),
        message: message.to_string(),
    };
    let mut c = Cursor { buf: bytes, at: 0 };
    if c.take(4) != Some(MAGIC.as_slice()) {
        return Err(fail("bad magic (not an ATPK file)"));
    }
    match c.u8() {
        Some(VERSION) => {}
        Some(v) => return Err(fail(&format!("unsupported version {v}"))),
        None => return Err(fail("truncated header")),
    }
    let (msl, count, eos_id, pad_id, flags) = match (c.u32(), c.u64(), c.u32(), c.u32(), c.u8()) {
        (Some(a), Some(b), Some(d), Some(e), Some(f)) => (a as usize, b, d, e, f),
        _ => return Err(fail("truncated header")),
    };
    if flags & !(FLAG_MASK | FLAG_PROVENANCE) != 0 {
        return Err(fail(&format!("unknown flags {flags:#04x}")));
    }
    let total = usize::try_from(count)
        .ok()
        .and_then(|n| n.checked_mul(msl))
        .filter(|&t| t.checked_mul(4).is_some_and(|b| b <= bytes.len()))
        .ok_or_else(|| fail("truncated token payload"))?;
    let payload = c.take(total * 4).ok_or_else(|| fail("truncated token payload"))?;
    let tokens: Vec<TokenId> = payload
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mask: Vec<bool> = if flags & FLAG_MASK != 0 {
        let bits = c.take(total.div_ceil(8)).ok_or_else(|| fail("truncated mask section"))?;
        (0..total).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect()
    } else {
        vec![true; total]
    };
    let mut runs: Vec<Vec<Run>> = vec![Vec::new(); count as usize];
    if flags & FLAG_PROVENANCE != 0 {
        for seq_runs in &mut runs {
            let n = c.u32().ok_or_else(|| fail("truncated provenance section"))? as usize;
            if n > bytes.len() / RUN_LEN {
                return Err(fail("implausible provenance run count"));
            }
            for _ in 0..n {
                let (pos, len, code, doc_id, start) = match (c.u32(), c.u32(), c.u8(), c.u32(), c.u32()) {
                    (Some(a), Some(b), Some(k), Some(d), Some(s)) => (a, b, k, d, s),
                    _ => return Err(fail("truncated provenance section")),
                };
                let kind = kind_from_code(code, doc_id, start)
                    .ok_or_else(|| fail(&format!("unknown run kind {code}")))?;
                seq_runs.push(Run { pos, len, kind });
            }
        }
    }
    let body_len = c.at;
    let stored = c.take(DIGEST_LEN).ok_or_else(|| fail("truncated checksum"))?;
    if c.at != bytes.len() {
        return Err(fail("trailing bytes after checksum"));
    }
    let computed = Sha256::digest(&bytes[..body_len]);
    if computed.as_slice() != stored {
        return Err(FormatError::ChecksumMismatch {
            path: path.display().to_string(),
            stored: stored.iter().map(|b| format!("{b:02x}")).collect(),
            computed: format!("{computed:x}"),
        });
    }
    let sequences = runs
        .into_iter()
        .enumerate()
        .map(|(i, runs)| PackedSequence {
            tokens: tokens[i * msl..(i + 1) * msl].to_vec(),
            loss_mask: mask[i * msl..(i + 1) * msl].to_vec(),
            runs,
        })
        .collect();
    Ok(DecodedFile {
        msl,
        eos_id,
        pad_id,
        flags,
        sequences,
    })
}

/// Loads a dataset and its manifest, checking integrity and consistency.
pub fn read_dataset(path: &Path) -> Result<PackedDataset, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let decoded = decode(&bytes, path)?;
    let manifest = read_manifest(&manifest_path(path))?;
    let mismatch = |message: String| FormatError::ManifestMismatch {
        path: path.display().to_string(),
        message,
    };
    let cfg = manifest.config;
    if cfg.msl != decoded.msl || cfg.eos_id != decoded.eos_id || cfg.pad_id != decoded.pad_id {
        return Err(mismatch("header fields differ from manifest config".into()));
    }
    let checksum = payload_sha256(&decoded.sequences);
    if checksum != manifest.payload_sha256 {
        return Err(FormatError::ChecksumMismatch {
            path: path.display().to_string(),
            stored: manifest.payload_sha256,
            computed: checksum,
        });
    }
    let stats = if decoded.flags & FLAG_PROVENANCE != 0 {
        let stats = stats_for(&decoded.sequences, &cfg).map_err(|e| mismatch(e.to_string()))?;
        if stats != manifest.pack_stats {
            return Err(mismatch("recomputed stats differ from manifest".into()));
        }
        stats
    } else {
        manifest.pack_stats
    };
    let ds = PackedDataset {
        sequences: decoded.sequences,
        config: cfg,
        stats,
        manifest_checksum: checksum,
    };
    ds.validate(None).map_err(mismatch)?;
    Ok(ds)
}
