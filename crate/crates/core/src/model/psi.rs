use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{pattern_count, pattern_index, pattern_symbols};

/// Sensor outputs closer than this are treated as the same symbol.
pub const MERGE_TOL: f64 = 1e-9;
const MAX_PATTERNS: usize = 1 << 20;

/// Serialized description of Ψ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiSpec {
    /// Count of sensed symbol values.
    Sum,
    /// `Σ_u w_u v_u`.
    WeightedSum { weights: Vec<f64> },
    /// Output value per pattern, indexed in radix order.
    Lookup { table: Vec<f64> },
}

/// Deterministic map from the `arity` sensed symbols to an output symbol.
///
/// Outputs are the distinct achievable values in increasing order; the
/// output symbol of a pattern is the index of its value in that list.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingFunction {
    spec: PsiSpec,
    arity: usize,
    alphabet: usize,
    outputs: Vec<f64>,
    map: Vec<usize>,
}

impl SensingFunction {
    pub fn new(spec: PsiSpec, arity: usize, alphabet: usize) -> Result<Self> {
        if arity == 0 {
            return Err(Error::model("psi", "arity must be positive"));
        }
        if alphabet < 2 {
            return Err(Error::model("alphabet", "must be at least 2"));
        }
        let patterns = (alphabet as u64)
            .checked_pow(arity as u32)
            .filter(|&n| n <= MAX_PATTERNS as u64)
            .ok_or_else(|| {
                Error::model("psi", format!("{alphabet}^{arity} patterns is too many"))
            })? as usize;
        let values: Vec<f64> = match &spec {
            PsiSpec::Sum => (0..patterns)
                .map(|i| pattern_symbols(i, alphabet, arity).iter().sum::<usize>() as f64)
                .collect(),
            PsiSpec::WeightedSum { weights } => {
                if weights.len() != arity {
                    return Err(Error::model(
                        "psi.weights",
                        format!("expected {arity} weights, got {}", weights.len()),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::model("psi.weights", "weights must be finite"));
                }
                (0..patterns)
                    .map(|i| {
                        pattern_symbols(i, alphabet, arity)
                            .iter()
                            .zip(weights)
                            .map(|(&s, w)| s as f64 * w)
                            .sum()
                    })
                    .collect()
            }
            PsiSpec::Lookup { table } => {
                if table.len() != patterns {
                    return Err(Error::model(
                        "psi.table",
                        format!("expected {patterns} entries, got {}", table.len()),
                    ));
                }
                if table.iter().any(|w| !w.is_finite()) {
                    return Err(Error::model("psi.table", "entries must be finite"));
                }
                table.clone()
            }
        };
        let (outputs, map) = merge_values(&values);
        Ok(SensingFunction {
            spec,
            arity,
            alphabet,
            outputs,
            map,
        })
    }

    pub fn sum(arity: usize, alphabet: usize) -> Result<Self> {
        Self::new(PsiSpec::Sum, arity, alphabet)
    }

    pub fn weighted_sum(weights: Vec<f64>, alphabet: usize) -> Result<Self> {
        let arity = weights.len();
        Self::new(PsiSpec::WeightedSum { weights }, arity, alphabet)
    }

    pub fn spec(&self) -> &PsiSpec {
        &self.spec
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Achievable output values in increasing order.
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    /// Output symbol for every pattern index.
    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn output_index(&self, pattern: usize) -> usize {
        self.map[pattern]
    }

    /// Output symbol of a sensed tuple.
    pub fn apply(&self, symbols: &[u8]) -> usize {
        debug_assert_eq!(symbols.len(), self.arity);
        self.map[pattern_index(symbols.iter().map(|&s| s as usize), self.alphabet)]
    }

    pub fn patterns(&self) -> usize {
        pattern_count(self.alphabet, self.arity)
    }
}

/// Sort values and merge runs whose spread is within [`MERGE_TOL`].
fn merge_values(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut outputs: Vec<f64> = Vec::new();
    let mut map = vec![0; values.len()];
    for idx in order {
        let v = values[idx];
        match outputs.last() {
            Some(&head) if v - head <= MERGE_TOL => {}
            _ => outputs.push(v),
        }
        map[idx] = outputs.len() - 1;
    }
    (outputs, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_outputs() {
        let f = SensingFunction::sum(2, 2).unwrap();
        assert_eq!(f.outputs(), &[0.0, 1.0, 2.0]);
        assert_eq!(f.map(), &[0, 1, 1, 2]);
        assert_eq!(f.apply(&[1, 1]), 2);
    }

    #[test]
    fn unit_weights_equal_sum() {
        let a = SensingFunction::sum(3, 3).unwrap();
        let b = SensingFunction::weighted_sum(vec![1.0; 3], 3).unwrap();
        assert_eq!(a.outputs(), b.outputs());
        assert_eq!(a.map(), b.map());
    }

    #[test]
    fn weighted_sum_is_injective_for_decaying_weights() {
        let f = SensingFunction::weighted_sum(vec![1.0, 0.5, 0.25, 0.1], 2).unwrap();
        assert_eq!(f.output_count(), 16);
    }

    #[test]
    fn near_values_merge() {
        let f = SensingFunction::weighted_sum(vec![1.0, 1.0 + 1e-12], 2).unwrap();
        assert_eq!(f.output_count(), 3);
    }

    #[test]
    fn lookup_validation() {
        let err = SensingFunction::new(
            PsiSpec::Lookup {
                table: vec![0.0; 3],
            },
            2,
            2,
        );
        assert!(matches!(err, Err(Error::InvalidModel { .. })));
        let xor = SensingFunction::new(
            PsiSpec::Lookup {
                table: vec![0.0, 1.0, 1.0, 0.0],
            },
            2,
            2,
        )
        .unwrap();
        assert_eq!(xor.map(), &[0, 1, 1, 0]);
    }
}
