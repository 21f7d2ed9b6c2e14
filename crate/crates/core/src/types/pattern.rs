use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest window length supported for 1D types.
pub const MAX_ORDER: usize = 8;
/// Largest number of cells in a 2D coverage stencil.
pub const MAX_STENCIL_CELLS: usize = 13;

/// Number of distinct patterns of `len` symbols over an alphabet of size `alphabet`.
pub fn pattern_count(alphabet: usize, len: usize) -> usize {
    alphabet.pow(len as u32)
}

/// Radix-`alphabet` value of a pattern, first symbol most significant.
pub fn pattern_index<I>(symbols: I, alphabet: usize) -> usize
where
    I: IntoIterator<Item = usize>,
{
    symbols.into_iter().fold(0, |acc, s| acc * alphabet + s)
}

/// Inverse of [`pattern_index`].
pub fn pattern_symbols(mut index: usize, alphabet: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % alphabet;
        index /= alphabet;
    }
    out
}

pub(crate) fn check_symbols(v: &[u8], alphabet: usize) -> Result<()> {
    match v.iter().position(|&s| s as usize >= alphabet) {
        Some(position) => Err(Error::SymbolOutOfRange {
            symbol: v[position] as usize,
            position,
            alphabet,
        }),
        None => Ok(()),
    }
}

/// How the patterns of a histogram were read off the underlying vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Length-c windows with wraparound; lower orders are exact marginals.
    #[default]
    Circular,
    /// Length-c windows without wraparound.
    Linear,
    /// Cells of a 2D coverage stencil on a torus.
    Stencil,
}

/// Offsets within Euclidean distance `radius` of a grid cell, in row-major order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stencil {
    radius: usize,
    offsets: Vec<(isize, isize)>,
}

impl Stencil {
    pub fn new(radius: usize) -> Result<Self> {
        let r = radius as isize;
        let mut offsets = Vec::new();
        for dr in -r..=r {
            for dc in -r..=r {
                if dr * dr + dc * dc <= r * r {
                    offsets.push((dr, dc));
                }
            }
        }
        if offsets.len() > MAX_STENCIL_CELLS {
            return Err(Error::OrderOutOfRange {
                order: offsets.len(),
                max: MAX_STENCIL_CELLS,
            });
        }
        Ok(Stencil { radius, offsets })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn cells(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    /// Row-major field positions covered by a sensor centred at `(row, col)` of a
    /// `side`×`side` torus.
    pub fn positions(&self, row: usize, col: usize, side: usize) -> Vec<usize> {
        let s = side as isize;
        self.offsets
            .iter()
            .map(|&(dr, dc)| {
                let r = (row as isize + dr).rem_euclid(s) as usize;
                let c = (col as isize + dc).rem_euclid(s) as usize;
                r * side + c
            })
            .collect()
    }
}
