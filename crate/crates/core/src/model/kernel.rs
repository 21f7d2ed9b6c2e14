use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::pattern_symbols;

const MAX_SEQUENCES: u64 = 1 << 22;

/// A pmf that is a polynomial in a base pmf: every length-`arity` sequence of
/// i.i.d. base symbols contributes `Π_u p[s_u]` to one output cell.
///
/// Sequences sharing a symbol multiset and an output cell have equal
/// products, so they are grouped and stored as `weight · Π_s p[s]^{n_s}`.
#[derive(Clone, Debug)]
pub(crate) struct ProductKernel {
    cells: usize,
    terms: Vec<Term>,
}

#[derive(Clone, Debug)]
struct Term {
    factors: Vec<(usize, i32)>,
    cell: usize,
    weight: f64,
}

impl ProductKernel {
    pub fn build<F>(symbols: usize, arity: usize, cells: usize, cell_of: F) -> Result<Self>
    where
        F: Fn(&[usize]) -> usize,
    {
        let total = (symbols as u64)
            .checked_pow(arity as u32)
            .filter(|&n| n <= MAX_SEQUENCES)
            .ok_or_else(|| {
                Error::InstanceTooLarge(format!(
                    "{symbols}^{arity} connection tuples in the product kernel"
                ))
            })?;
        let mut grouped: BTreeMap<(Vec<u8>, usize), f64> = BTreeMap::new();
        for code in 0..total as usize {
            let seq = pattern_symbols(code, symbols, arity);
            let mut counts = vec![0u8; symbols];
            for &s in &seq {
                counts[s] += 1;
            }
            *grouped.entry((counts, cell_of(&seq))).or_insert(0.0) += 1.0;
        }
        let terms = grouped
            .into_iter()
            .map(|((counts, cell), weight)| Term {
                factors: counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .map(|(s, &n)| (s, n as i32))
                    .collect(),
                cell,
                weight,
            })
            .collect();
        Ok(ProductKernel { cells, terms })
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cells];
        for t in &self.terms {
            let v = t
                .factors
                .iter()
                .fold(t.weight, |acc, &(s, n)| acc * p[s].powi(n));
            out[t.cell] += v;
        }
        out
    }
}
