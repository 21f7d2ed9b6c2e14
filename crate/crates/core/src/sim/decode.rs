use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::SensorNetwork;
use crate::error::{Error, Result};
use crate::types::{pattern_count, pattern_symbols};

/// Largest number of candidate vectors the exhaustive decoder scans.
pub const MAX_EXHAUSTIVE: usize = 1 << 24;
const CHUNK: usize = 1 << 14;

/// `log W(y_ℓ | x)` for every sensor and output symbol.
fn log_likelihoods(net: &SensorNetwork, y: &[usize]) -> Result<Vec<Vec<f64>>> {
    if y.len() != net.n() {
        return Err(Error::LengthMismatch { left: y.len(), right: net.n() });
    }
    (0..net.n())
        .map(|l| {
            let noise = net.class(l).noise();
            if y[l] >= noise.outputs() {
                return Err(Error::AlphabetViolation {
                    symbol: y[l],
                    position: l,
                });
            }
            Ok(noise.rows().iter().map(|row| row[y[l]].ln()).collect())
        })
        .collect()
}

fn log_prior(net: &SensorNetwork) -> Option<Vec<f64>> {
    net.model().prior().map(|p| p.iter().map(|v| v.ln()).collect())
}

struct Scorer<'a> {
    net: &'a SensorNetwork,
    ll: Vec<Vec<f64>>,
    prior: Option<Vec<f64>>,
    q: usize,
    k: usize,
}

impl<'a> Scorer<'a> {
    fn new(net: &'a SensorNetwork, y: &[usize]) -> Result<Self> {
        let k = net.positions();
        let q = net.model().alphabet();
        let total = (q as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
        if total > MAX_EXHAUSTIVE as u128 {
            return Err(Error::InstanceTooLarge(format!(
                "{q}^{k} candidate vectors exceed the {MAX_EXHAUSTIVE} limit"
            )));
        }
        Ok(Scorer {
            net,
            ll: log_likelihoods(net, y)?,
            prior: log_prior(net),
            q,
            k,
        })
    }

    fn candidates(&self) -> usize {
        pattern_count(self.q, self.k)
    }

    fn score(&self, v: &[u8], buf: &mut Vec<u8>) -> f64 {
        let mut s = match &self.prior {
            Some(lp) => v.iter().map(|&a| lp[a as usize]).sum(),
            None => 0.0,
        };
        for (l, conn) in self.net.connections().iter().enumerate() {
            buf.clear();
            buf.extend(conn.iter().map(|&p| v[p]));
            s += self.ll[l][self.net.class(l).psi().apply(buf)];
        }
        s
    }

    fn vector(&self, index: usize) -> Vec<u8> {
        pattern_symbols(index, self.q, self.k).into_iter().map(|s| s as u8).collect()
    }
}

/// Exhaustive maximum-likelihood (MAP with a prior) decoding. Ties go to
/// the lexicographically smallest vector.
pub fn decode_ml(net: &SensorNetwork, y: &[usize]) -> Result<Vec<u8>> {
    let sc = Scorer::new(net, y)?;
    let total = sc.candidates();
    let best = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut buf = Vec::new();
            let mut best: Option<(f64, usize)> = None;
            for idx in chunk * CHUNK..((chunk + 1) * CHUNK).min(total) {
                let s = sc.score(&sc.vector(idx), &mut buf);
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, idx));
                }
            }
            best
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (None, x) | (x, None) => x,
                (Some(a), Some(b)) => Some(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a }),
            },
        );
    let (score, idx) = best.expect("at least one candidate");
    if score == f64::NEG_INFINITY {
        return Err(Error::NumericalUnderflow(
            "every candidate has zero likelihood".into(),
        ));
    }
    Ok(sc.vector(idx))
}

/// Exact posterior marginals `P(v_p = s | y)` by exhaustive enumeration.
pub fn exact_marginals(net: &SensorNetwork, y: &[usize]) -> Result<Vec<Vec<f64>>> {
    let sc = Scorer::new(net, y)?;
    let total = sc.candidates();
    let scores: Vec<f64> = (0..total)
        .into_par_iter()
        .map_init(Vec::new, |buf, idx| sc.score(&sc.vector(idx), buf))
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NumericalUnderflow(
            "every candidate has zero likelihood".into(),
        ));
    }
    let mut marg = vec![vec![0.0; sc.q]; sc.k];
    for (idx, s) in scores.iter().enumerate() {
        let w = (s - max).exp();
        if w == 0.0 {
            continue;
        }
        for (p, a) in pattern_symbols(idx, sc.q, sc.k).into_iter().enumerate() {
            marg[p][a] += w;
        }
    }
    for m in &mut marg {
        let z: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= z);
    }
    Ok(marg)
}

/// Per-position argmax of marginals, ties toward the smaller symbol.
pub fn hard_decisions(marginals: &[Vec<f64>]) -> Vec<u8> {
    marginals
        .iter()
        .map(|m| {
            let mut best = 0;
            for (s, &p) in m.iter().enumerate() {
                if p > m[best] {
                    best = s;
                }
            }
            best as u8
        })
        .collect()
}

/// Decoder used by trial runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decoder {
    Ml,
    Bp { max_iters: usize, damping: f64 },
}

impl Default for Decoder {
    fn default() -> Self {
        Decoder::Bp {
            max_iters: 50,
            damping: 0.0,
        }
    }
}
