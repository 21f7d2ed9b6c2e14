use serde::{Deserialize, Serialize};

use super::decode::hard_decisions;
use super::network::SensorNetwork;
use crate::error::{Error, Result};
use crate::types::{pattern_count, pattern_symbols};

/// Largest message change (probability scale) treated as converged.
pub const BP_TOL: f64 = 1e-6;

/// One sensor factor over its distinct target positions.
#[derive(Clone, Debug)]
pub struct Factor {
    pub vars: Vec<usize>,
    /// `log W(y_ℓ | Ψ(·))` for every assignment of `vars`, radix order.
    pub table: Vec<f64>,
}

/// Bipartite graph of target positions and sensor factors for one
/// observation, with optional unary prior factors.
#[derive(Clone, Debug)]
pub struct FactorGraph {
    q: usize,
    k: usize,
    factors: Vec<Factor>,
    log_prior: Vec<f64>,
    /// `(factor, slot)` of every edge, grouped by variable.
    var_edges: Vec<Vec<(usize, usize)>>,
}

impl FactorGraph {
    pub fn new(net: &SensorNetwork, y: &[usize]) -> Result<Self> {
        if y.len() != net.n() {
            return Err(Error::LengthMismatch { left: y.len(), right: net.n() });
        }
        let q = net.model().alphabet();
        let k = net.positions();
        let mut factors = Vec::with_capacity(net.n());
        let mut var_edges = vec![Vec::new(); k];
        let mut buf = Vec::new();
        for (l, conn) in net.connections().iter().enumerate() {
            let class = net.class(l);
            let rows = class.noise().rows();
            if y[l] >= class.noise().outputs() {
                return Err(Error::AlphabetViolation {
                    symbol: y[l],
                    position: l,
                });
            }
            let mut vars: Vec<usize> = Vec::new();
            for &p in conn {
                if !vars.contains(&p) {
                    vars.push(p);
                }
            }
            let slots: Vec<usize> = conn.iter().map(|p| vars.iter().position(|v| v == p).unwrap()).collect();
            let table = (0..pattern_count(q, vars.len()))
                .map(|a| {
                    let syms = pattern_symbols(a, q, vars.len());
                    buf.clear();
                    buf.extend(slots.iter().map(|&s| syms[s] as u8));
                    rows[class.psi().apply(&buf)][y[l]].ln()
                })
                .collect();
            for (slot, &v) in vars.iter().enumerate() {
                var_edges[v].push((factors.len(), slot));
            }
            factors.push(Factor { vars, table });
        }
        let log_prior = match net.model().prior() {
            Some(p) => p.iter().map(|v| v.ln()).collect(),
            None => vec![0.0; q],
        };
        Ok(FactorGraph {
            q,
            k,
            factors,
            log_prior,
            var_edges,
        })
    }

    pub fn variables(&self) -> usize {
        self.k
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Whether the graph has no cycles (each connected component is a tree).
    pub fn is_tree(&self) -> bool {
        let nodes = self.k + self.factors.len();
        let edges: usize = self.factors.iter().map(|f| f.vars.len()).sum();
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut components = nodes;
        for (f, factor) in self.factors.iter().enumerate() {
            for &v in &factor.vars {
                let (a, b) = (root(&mut parent, v), root(&mut parent, self.k + f));
                if a != b {
                    parent[a] = b;
                    components -= 1;
                }
            }
        }
        edges == nodes - components
    }
}

/// Output of loopy belief propagation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpResult {
    pub decision: Vec<u8>,
    pub marginals: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn normalize_log(m: &mut [f64]) -> Result<()> {
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::NumericalUnderflow(
            "a belief-propagation message vanished".into(),
        ));
    }
    let z = max + m.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    m.iter_mut().for_each(|v| *v -= z);
    Ok(())
}

/// Sum-product belief propagation in the log domain with a synchronous
/// flooding schedule. Factor-to-variable messages are damped in the
/// probability domain: `m ← (1 − δ) m_new + δ m_old`.
pub fn decode_bp(graph: &FactorGraph, max_iters: usize, damping: f64) -> Result<BpResult> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::InvalidArgument(format!("damping {damping} is outside [0, 1)")));
    }
    let q = graph.q;
    let uniform = -(q as f64).ln();
    let mut to_var: Vec<Vec<Vec<f64>>> = graph
        .factors
        .iter()
        .map(|f| vec![vec![uniform; q]; f.vars.len()])
        .collect();
    let mut to_fac = to_var.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut totals = Vec::new();
    let max_arity = graph.factors.iter().map(|f| f.vars.len()).max().unwrap_or(0);
    let symbols: Vec<Vec<Vec<usize>>> = (0..=max_arity)
        .map(|d| (0..pattern_count(q, d)).map(|a| pattern_symbols(a, q, d)).collect())
        .collect();
    while iterations < max_iters {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for (f, factor) in graph.factors.iter().enumerate() {
            let d = factor.vars.len();
            for j in 0..d {
                let mut out = vec![f64::NEG_INFINITY; q];
                totals.clear();
                for (syms, &t) in symbols[d].iter().zip(&factor.table) {
                    let mut s = t;
                    for (jj, &sym) in syms.iter().enumerate() {
                        if jj != j {
                            s += to_fac[f][jj][sym];
                        }
                    }
                    totals.push((syms[j], s));
                }
                for &(sym, s) in &totals {
                    let o = &mut out[sym];
                    if s > *o {
                        *o = s + (1.0 + (*o - s).exp()).ln();
                    } else if s > f64::NEG_INFINITY {
                        *o += (1.0 + (s - *o).exp()).ln();
                    }
                }
                normalize_log(&mut out)?;
                let old = &mut to_var[f][j];
                for s in 0..q {
                    let (pn, po) = (out[s].exp(), old[s].exp());
                    let p = (1.0 - damping) * pn + damping * po;
                    delta = delta.max((p - po).abs());
                    old[s] = p.ln();
                }
            }
        }
        for edges in &graph.var_edges {
            let deg = edges.len();
            // prefix[i] = prior + Σ_{e<i}, suffix[i] = Σ_{e≥i}
            let mut prefix = vec![graph.log_prior.clone()];
            for &(f, j) in edges {
                let last = prefix.last().unwrap();
                prefix.push((0..q).map(|s| last[s] + to_var[f][j][s]).collect());
            }
            let mut suffix = vec![vec![0.0; q]; deg + 1];
            for i in (0..deg).rev() {
                let (f, j) = edges[i];
                suffix[i] = (0..q).map(|s| suffix[i + 1][s] + to_var[f][j][s]).collect();
            }
            for (i, &(f, j)) in edges.iter().enumerate() {
                let mut m: Vec<f64> = (0..q).map(|s| prefix[i][s] + suffix[i + 1][s]).collect();
                normalize_log(&mut m)?;
                to_fac[f][j] = m;
            }
        }
        if delta.is_nan() {
            return Err(Error::NumericalUnderflow("message update produced NaN".into()));
        }
        if delta < BP_TOL {
            converged = true;
            break;
        }
    }
    let mut marginals = Vec::with_capacity(graph.k);
    for edges in &graph.var_edges {
        let mut b = graph.log_prior.clone();
        for &(f, j) in edges {
            for s in 0..q {
                b[s] += to_var[f][j][s];
            }
        }
        normalize_log(&mut b)?;
        marginals.push(b.iter().map(|v| v.exp()).collect());
    }
    Ok(BpResult {
        decision: hard_decisions(&marginals),
        marginals,
        iterations,
        converged,
    })
}
