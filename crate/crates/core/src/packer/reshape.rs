use rayon::prelude::*;

use super::layout::{extend_shifted, push_run, slice_runs, RunKind};
use super::{Atom, PackConfig, PackError, PackedSequence};

/// Merges (atom < msl) or splits (atom > msl) shuffled atoms into rows of
/// exactly `msl` tokens. Atom order is preserved; an incomplete final merge
/// group is padded with `pad_id`.
pub fn reshape_to_msl(atoms: Vec<Atom>, cfg: &PackConfig) -> Result<Vec<PackedSequence>, PackError> {
    cfg.validate()?;
    let msl = cfg.msl;
    let atom_size = cfg.atom_size;

    if atom_size < msl {
        if let Some((index, a)) = atoms.iter().enumerate().find(|(_, a)| a.len() != atom_size) {
            return Err(PackError::InvalidAtom {
                index,
                len: a.len(),
                expected: atom_size.to_string(),
            });
        }
        let group = msl / atom_size;
        Ok(atoms
            .par_chunks(group)
            .map(|chunk| {
                let mut tokens = Vec::with_capacity(msl);
                let mut runs = Vec::new();
                for a in chunk {
                    extend_shifted(&mut runs, &a.runs, tokens.len() as u32);
                    tokens.extend_from_slice(&a.tokens);
                }
                let fill = msl - tokens.len();
                tokens.resize(msl, cfg.pad_id);
                push_run(&mut runs, fill, RunKind::FillPad);
                PackedSequence::from_parts(tokens, runs)
            })
            .collect())
    } else {
        if let Some((index, a)) = atoms
            .iter()
            .enumerate()
            .find(|(_, a)| a.is_empty() || a.len() % msl != 0 || a.len() > atom_size)
        {
            return Err(PackError::InvalidAtom {
                index,
                len: a.len(),
                expected: format!("a positive multiple of {msl} up to {atom_size}"),
            });
        }
        Ok(atoms
            .into_par_iter()
            .flat_map_iter(|a| {
                (0..a.len() / msl)
                    .map(|k| {
                        let (lo, hi) = (k * msl, (k + 1) * msl);
                        PackedSequence::from_parts(
                            a.tokens[lo..hi].to_vec(),
                            slice_runs(&a.runs, lo as u32, hi as u32),
                        )
                    })
                    .collect::<Vec<_>>()
            })
            .collect())
    }
}
