//! Brute-force reference packer. Works on flat per-token tags and shares no
//! code with the library: its own generator copy, its own segmentation and
//! reshaping loops.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Word { doc: usize, offset: usize },
    StreamEos,
    ChunkEos,
    Pad,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub tokens: Vec<u32>,
    pub tags: Vec<Tag>,
}

impl Row {
    pub fn loss_mask(&self) -> Vec<bool> {
        (0..self.tags.len())
            .map(|i| match self.tags[i] {
                Tag::Pad => i > 0 && matches!(self.tags[i - 1], Tag::Word { .. }),
                _ => true,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub padding: bool,
    pub msl: usize,
    pub atom: usize,
    pub seed: u64,
    pub eos: u32,
    pub pad: u32,
    pub drop_remainder: bool,
}

struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    // Lemire's multiply-shift with rejection of the biased low region.
    fn below(&mut self, n: u64) -> u64 {
        let threshold = (u64::MAX - n + 1) % n;
        loop {
            let product = (self.next() as u128) * (n as u128);
            if (product as u64) >= threshold {
                return (product >> 64) as u64;
            }
        }
    }
}

pub fn oracle_shuffle<T>(v: &mut Vec<T>, seed: u64) {
    let mut rng = Rng(seed);
    let mut i = v.len();
    while i > 1 {
        i -= 1;
        let j = rng.below(i as u64 + 1) as usize;
        v.swap(i, j);
    }
}

type Atom = Vec<(u32, Tag)>;

fn padding_atoms(docs: &[Vec<u32>], c: &OracleConfig) -> Vec<Atom> {
    let mut atoms = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        let mut i = 0;
        while doc.len() - i >= c.atom - 1 {
            let mut a: Atom = Vec::new();
            for k in 0..c.atom - 1 {
                a.push((doc[i + k], Tag::Word { doc: d, offset: i + k }));
            }
            a.push((c.eos, Tag::ChunkEos));
            atoms.push(a);
            i += c.atom - 1;
        }
        if i < doc.len() {
            let mut a: Atom = Vec::new();
            for k in i..doc.len() {
                a.push((doc[k], Tag::Word { doc: d, offset: k }));
            }
            let target = if c.atom <= c.msl {
                c.atom
            } else {
                let mut m = c.msl;
                while m < a.len() {
                    m += c.msl;
                }
                m
            };
            while a.len() < target {
                a.push((c.pad, Tag::Pad));
            }
            atoms.push(a);
        }
    }
    atoms
}

pub fn concat_stream(docs: &[Vec<u32>], eos: u32) -> Vec<(u32, Tag)> {
    let mut stream = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        for (k, &t) in doc.iter().enumerate() {
            stream.push((t, Tag::Word { doc: d, offset: k }));
        }
        stream.push((eos, Tag::StreamEos));
    }
    stream
}

fn concat_atoms(docs: &[Vec<u32>], c: &OracleConfig) -> Vec<Atom> {
    let stream = concat_stream(docs, c.eos);
    let mut atoms = Vec::new();
    let mut i = 0;
    while i + c.atom <= stream.len() {
        atoms.push(stream[i..i + c.atom].to_vec());
        i += c.atom;
    }
    if i < stream.len() && !c.drop_remainder {
        let mut a = stream[i..].to_vec();
        while a.len() < c.atom {
            a.push((c.pad, Tag::Pad));
        }
        atoms.push(a);
    }
    atoms
}

fn to_row(items: &[(u32, Tag)]) -> Row {
    Row {
        tokens: items.iter().map(|x| x.0).collect(),
        tags: items.iter().map(|x| x.1).collect(),
    }
}

pub fn reference_pack(docs: &[Vec<u32>], c: &OracleConfig) -> Vec<Row> {
    let mut atoms = if c.padding {
        padding_atoms(docs, c)
    } else {
        concat_atoms(docs, c)
    };
    oracle_shuffle(&mut atoms, c.seed);

    let mut rows = Vec::new();
    if c.atom < c.msl {
        let mut cur: Vec<(u32, Tag)> = Vec::new();
        for a in atoms {
            cur.extend(a);
            if cur.len() == c.msl {
                rows.push(to_row(&cur));
                cur.clear();
            }
        }
        if !cur.is_empty() {
            while cur.len() < c.msl {
                cur.push((c.pad, Tag::Pad));
            }
            rows.push(to_row(&cur));
        }
    } else {
        for a in atoms {
            let mut k = 0;
            while k < a.len() {
                rows.push(to_row(&a[k..k + c.msl]));
                k += c.msl;
            }
        }
    }
    rows
}

/// (cross-document pairs, eligible pairs): drop every non-word position, then
/// check each adjacent pair of what is left.
pub fn count_transitions(rows: &[Row]) -> (u64, u64) {
    let mut cross = 0;
    let mut eligible = 0;
    for r in rows {
        let docs: Vec<usize> = r
            .tags
            .iter()
            .filter_map(|t| match t {
                Tag::Word { doc, .. } => Some(*doc),
                _ => None,
            })
            .collect();
        for w in docs.windows(2) {
            eligible += 1;
            if w[0] != w[1] {
                cross += 1;
            }
        }
    }
    (cross, eligible)
}

pub fn row_docs(r: &Row) -> Vec<usize> {
    let mut d: Vec<usize> = r
        .tags
        .iter()
        .filter_map(|t| match t {
            Tag::Word { doc, .. } => Some(*doc),
            _ => None,
        })
        .collect();
    d.sort();
    d.dedup();
    d
}

/// (overlapping consecutive pairs, consecutive pairs).
pub fn count_overlaps(rows: &[Row]) -> (u64, u64) {
    let mut hits = 0;
    let mut pairs = 0;
    for w in rows.windows(2) {
        pairs += 1;
        let a = row_docs(&w[0]);
        let b = row_docs(&w[1]);
        if a.iter().any(|x| b.contains(x)) {
            hits += 1;
        }
    }
    (hits, pairs)
}

/// Counts per tag class: (word, stream eos, chunk eos, pad).
pub fn class_counts(rows: &[Row]) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for r in rows {
        for t in &r.tags {
            match t {
                Tag::Word { .. } => c.0 += 1,
                Tag::StreamEos => c.1 += 1,
                Tag::ChunkEos => c.2 += 1,
                Tag::Pad => c.3 += 1,
            }
        }
    }
    c
}
