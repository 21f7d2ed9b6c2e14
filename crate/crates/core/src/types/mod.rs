//! Empirical types of target vectors.
//!
//! A [`TypeHistogram`] is the normalized frequency of every length-c window
//! (c = 1 gives the plain symbol histogram); a [`JointType`] is the frequency
//! of every pair of aligned windows of two vectors. Patterns are indexed by
//! their radix-|V| value read left to right, and a pattern pair `(a, b)` by
//! `index(a) * |V|^c + index(b)`. This ordering is also the serialized one.
//!
//! Circular windows wrap around the end of the vector, which makes every
//! lower-order type an exact marginal of the higher-order one.

mod count;
mod info;
mod pattern;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use count::{count_type_classes, enumerate_type_class, CountBound, Enumeration};
pub use info::{
    binary_entropy, conditional_entropy, entropy, kl, mutual_information, ConditionalEntropy,
};
pub use pattern::{
    pattern_count, pattern_index, pattern_symbols, Layout, Stencil, MAX_ORDER, MAX_STENCIL_CELLS,
};

use pattern::check_symbols;

const SUM_TOL: f64 = 1e-12;
const SHIFT_TOL: f64 = 1e-12;
const EXACT_TOL: f64 = 1e-9;

#[derive(Deserialize)]
struct RawType {
    order: usize,
    alphabet: usize,
    denominator: Option<u64>,
    probs: Vec<f64>,
}

/// Normalized pattern-frequency vector γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawType")]
pub struct TypeHistogram {
    order: usize,
    alphabet: usize,
    denominator: Option<u64>,
    probs: Vec<f64>,
    #[serde(skip)]
    layout: Layout,
}

impl TryFrom<RawType> for TypeHistogram {
    type Error = Error;

    fn try_from(raw: RawType) -> Result<Self> {
        let t = TypeHistogram {
            order: raw.order,
            alphabet: raw.alphabet,
            denominator: raw.denominator,
            probs: raw.probs,
            layout: Layout::Circular,
        };
        t.validate()?;
        Ok(t)
    }
}

fn check_shape(order: usize, alphabet: usize, max_order: usize) -> Result<()> {
    if alphabet < 2 {
        return Err(Error::InvalidType(format!(
            "alphabet size {alphabet} must be at least 2"
        )));
    }
    if order == 0 || order > max_order {
        return Err(Error::OrderOutOfRange {
            order,
            max: max_order,
        });
    }
    Ok(())
}

fn max_order_for(layout: Layout) -> usize {
    match layout {
        Layout::Stencil => MAX_STENCIL_CELLS,
        _ => MAX_ORDER,
    }
}

fn check_pmf(probs: &[f64], expected_len: usize) -> Result<()> {
    if probs.len() != expected_len {
        return Err(Error::InvalidType(format!(
            "expected {expected_len} entries, got {}",
            probs.len()
        )));
    }
    if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidType(format!(
            "entry {bad} is not a probability"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidType(format!("entries sum to {sum}")));
    }
    Ok(())
}

fn check_denominator(probs: &[f64], denominator: Option<u64>) -> Result<()> {
    if let Some(k) = denominator {
        if k == 0 {
            return Err(Error::InvalidType("denominator must be positive".into()));
        }
        for p in probs {
            let scaled = p * k as f64;
            if (scaled - scaled.round()).abs() > EXACT_TOL {
                return Err(Error::InvalidType(format!(
                    "entry {p} is not a multiple of 1/{k}"
                )));
            }
        }
    }
    Ok(())
}

fn rounded_counts(probs: &[f64], k: u64) -> Vec<u64> {
    probs
        .iter()
        .map(|p| (p * k as f64).round() as u64)
        .collect()
}

fn counts_to_probs(counts: &[u64]) -> Result<(Vec<f64>, u64)> {
    let k: u64 = counts.iter().sum();
    if k == 0 {
        return Err(Error::EmptyVector);
    }
    Ok((counts.iter().map(|&c| c as f64 / k as f64).collect(), k))
}

/// Sum out the last symbol of every pattern: order c → c−1.
fn sum_last_symbol(probs: &[f64], alphabet: usize) -> Vec<f64> {
    probs.chunks(alphabet).map(|c| c.iter().sum()).collect()
}

/// Sum out the first symbol of every pattern: order c → c−1.
fn sum_first_symbol(probs: &[f64], alphabet: usize) -> Vec<f64> {
    let tail = probs.len() / alphabet;
    let mut out = vec![0.0; tail];
    for (i, p) in probs.iter().enumerate() {
        out[i % tail] += p;
    }
    out
}

impl TypeHistogram {
    /// Relaxed (real-valued) type.
    pub fn new(order: usize, alphabet: usize, probs: Vec<f64>, layout: Layout) -> Result<Self> {
        let t = TypeHistogram {
            order,
            alphabet,
            denominator: None,
            probs,
            layout,
        };
        t.validate()?;
        Ok(t)
    }

    /// Exact type from window counts; the denominator is the window total.
    pub fn from_counts(
        order: usize,
        alphabet: usize,
        counts: &[u64],
        layout: Layout,
    ) -> Result<Self> {
        let (probs, k) = counts_to_probs(counts)?;
        let t = TypeHistogram {
            order,
            alphabet,
            denominator: Some(k),
            probs,
            layout,
        };
        t.validate()?;
        Ok(t)
    }

    /// Uniform circular type over all `alphabet^order` patterns.
    pub fn uniform(order: usize, alphabet: usize) -> Result<Self> {
        check_shape(order, alphabet, MAX_ORDER)?;
        let n = pattern_count(alphabet, order);
        TypeHistogram::new(order, alphabet, vec![1.0 / n as f64; n], Layout::Circular)
    }

    fn validate(&self) -> Result<()> {
        check_shape(self.order, self.alphabet, max_order_for(self.layout))?;
        check_pmf(&self.probs, pattern_count(self.alphabet, self.order))?;
        check_denominator(&self.probs, self.denominator)?;
        if self.layout == Layout::Circular && self.order > 1 {
            let left = sum_last_symbol(&self.probs, self.alphabet);
            let right = sum_first_symbol(&self.probs, self.alphabet);
            let worst = left
                .iter()
                .zip(&right)
                .map(|(l, r)| (l - r).abs())
                .fold(0.0, f64::max);
            if worst > SHIFT_TOL {
                return Err(Error::InvalidType(format!(
                    "circular type is not shift consistent (residual {worst:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn denominator(&self) -> Option<u64> {
        self.denominator
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn prob(&self, pattern: &[usize]) -> f64 {
        self.probs[pattern_index(pattern.iter().copied(), self.alphabet)]
    }

    /// Integer window counts, when the type is exact.
    pub fn counts(&self) -> Option<Vec<u64>> {
        self.denominator.map(|k| rounded_counts(&self.probs, k))
    }

    /// Rational equality of two exact types.
    pub fn exact_eq(&self, other: &TypeHistogram) -> bool {
        self.order == other.order
            && self.alphabet == other.alphabet
            && self.denominator.is_some()
            && self.denominator == other.denominator
            && self.counts() == other.counts()
    }

    /// The order c−1 type γ' obtained by summing out the last window symbol.
    /// `None` for order-1 and stencil types.
    pub fn reduced(&self) -> Option<TypeHistogram> {
        if self.order == 1 || self.layout == Layout::Stencil {
            return None;
        }
        Some(TypeHistogram {
            order: self.order - 1,
            alphabet: self.alphabet,
            denominator: self.denominator,
            probs: sum_last_symbol(&self.probs, self.alphabet),
            layout: self.layout,
        })
    }

    /// Per-symbol frequencies. Windows use the first symbol; stencil types
    /// average over cells.
    pub fn symbol_marginal(&self) -> Vec<f64> {
        let q = self.alphabet;
        let mut out = vec![0.0; q];
        match self.layout {
            Layout::Stencil => {
                let w = 1.0 / self.order as f64;
                for (idx, p) in self.probs.iter().enumerate() {
                    for s in pattern_symbols(idx, q, self.order) {
                        out[s] += w * p;
                    }
                }
            }
            _ => {
                let stride = pattern_count(q, self.order - 1);
                for (idx, p) in self.probs.iter().enumerate() {
                    out[idx / stride] += p;
                }
            }
        }
        out
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    /// `γ ⊗ μ`: the joint type of two independent vectors.
    pub fn product(&self, other: &TypeHistogram) -> Result<JointType> {
        if self.order != other.order || self.alphabet != other.alphabet {
            return Err(Error::OrderMismatch {
                expected: self.order,
                actual: other.order,
            });
        }
        let mut probs = Vec::with_capacity(self.probs.len() * other.probs.len());
        for a in &self.probs {
            for b in &other.probs {
                probs.push(a * b);
            }
        }
        let layout = if self.layout == other.layout {
            self.layout
        } else {
            Layout::Linear
        };
        JointType::new(self.order, self.alphabet, probs, layout)
    }
}

impl ConditionalEntropy for TypeHistogram {
    fn conditional_entropy(&self) -> f64 {
        match self.reduced() {
            Some(r) => self.entropy() - r.entropy(),
            None => self.entropy(),
        }
    }
}

/// Normalized joint pattern-frequency vector λ over pattern pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawType")]
pub struct JointType {
    order: usize,
    alphabet: usize,
    denominator: Option<u64>,
    probs: Vec<f64>,
    #[serde(skip)]
    layout: Layout,
}

impl TryFrom<RawType> for JointType {
    type Error = Error;

    fn try_from(raw: RawType) -> Result<Self> {
        let t = JointType {
            order: raw.order,
            alphabet: raw.alphabet,
            denominator: raw.denominator,
            probs: raw.probs,
            layout: Layout::Circular,
        };
        t.validate()?;
        Ok(t)
    }
}

/// All marginals of a joint type.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    /// γ_i, the type of the first vector.
    pub row: TypeHistogram,
    /// γ_j, the type of the second vector.
    pub col: TypeHistogram,
    /// λ', the order c−1 joint type; `None` at order 1 or for stencil types.
    pub reduced: Option<JointType>,
    /// λ_(a)(b), the per-position symbol-pair frequencies.
    pub symbol: JointType,
}

impl JointType {
    pub fn new(order: usize, alphabet: usize, probs: Vec<f64>, layout: Layout) -> Result<Self> {
        let t = JointType {
            order,
            alphabet,
            denominator: None,
            probs,
            layout,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_counts(
        order: usize,
        alphabet: usize,
        counts: &[u64],
        layout: Layout,
    ) -> Result<Self> {
        let (probs, k) = counts_to_probs(counts)?;
        let t = JointType {
            order,
            alphabet,
            denominator: Some(k),
            probs,
            layout,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        check_shape(self.order, self.alphabet, max_order_for(self.layout))?;
        let side = pattern_count(self.alphabet, self.order);
        check_pmf(&self.probs, side * side)?;
        check_denominator(&self.probs, self.denominator)?;
        if self.layout == Layout::Circular && self.order > 1 {
            let worst = self.shift_residual();
            if worst > SHIFT_TOL {
                return Err(Error::InvalidType(format!(
                    "circular joint type is not shift consistent (residual {worst:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn denominator(&self) -> Option<u64> {
        self.denominator
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Number of patterns on each side, `|V|^c`.
    pub fn side(&self) -> usize {
        pattern_count(self.alphabet, self.order)
    }

    /// λ_(a)(b) for pattern indices `a`, `b`.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.side() + b]
    }

    pub fn counts(&self) -> Option<Vec<u64>> {
        self.denominator.map(|k| rounded_counts(&self.probs, k))
    }

    pub fn exact_eq(&self, other: &JointType) -> bool {
        self.order == other.order
            && self.alphabet == other.alphabet
            && self.denominator.is_some()
            && self.denominator == other.denominator
            && self.counts() == other.counts()
    }

    /// Largest violation of joint shift consistency,
    /// `Σ_{a,b} λ_(a a')(b b') = Σ_{a,b} λ_(a' a)(b' b)`.
    pub fn shift_residual(&self) -> f64 {
        if self.order == 1 || self.layout == Layout::Stencil {
            return 0.0;
        }
        let prefix = reduce_pairs(&self.probs, self.alphabet, self.order, false);
        let suffix = reduce_pairs(&self.probs, self.alphabet, self.order, true);
        prefix
            .iter()
            .zip(&suffix)
            .map(|(l, r)| (l - r).abs())
            .fold(0.0, f64::max)
    }

    pub fn row_marginal(&self) -> TypeHistogram {
        let side = self.side();
        let probs = self.probs.chunks(side).map(|r| r.iter().sum()).collect();
        self.side_type(probs)
    }

    pub fn col_marginal(&self) -> TypeHistogram {
        let side = self.side();
        let mut probs = vec![0.0; side];
        for row in self.probs.chunks(side) {
            for (o, p) in probs.iter_mut().zip(row) {
                *o += p;
            }
        }
        self.side_type(probs)
    }

    fn side_type(&self, probs: Vec<f64>) -> TypeHistogram {
        TypeHistogram {
            order: self.order,
            alphabet: self.alphabet,
            denominator: self.denominator,
            probs,
            layout: self.layout,
        }
    }

    /// λ' of order c−1, summing out the last symbol of both windows.
    pub fn reduced(&self) -> Option<JointType> {
        if self.order == 1 || self.layout == Layout::Stencil {
            return None;
        }
        Some(JointType {
            order: self.order - 1,
            alphabet: self.alphabet,
            denominator: self.denominator,
            probs: reduce_pairs(&self.probs, self.alphabet, self.order, false),
            layout: self.layout,
        })
    }

    /// λ_(a)(b) over single symbols. Windows use the first position; stencil
    /// types average over cells.
    pub fn symbol_marginal(&self) -> JointType {
        let q = self.alphabet;
        let side = self.side();
        let mut out = vec![0.0; q * q];
        match self.layout {
            Layout::Stencil => {
                let w = 1.0 / self.order as f64;
                for (idx, p) in self.probs.iter().enumerate() {
                    if *p == 0.0 {
                        continue;
                    }
                    let a = pattern_symbols(idx / side, q, self.order);
                    let b = pattern_symbols(idx % side, q, self.order);
                    for (sa, sb) in a.into_iter().zip(b) {
                        out[sa * q + sb] += w * p;
                    }
                }
            }
            _ => {
                let stride = pattern_count(q, self.order - 1);
                for (idx, p) in self.probs.iter().enumerate() {
                    let a = (idx / side) / stride;
                    let b = (idx % side) / stride;
                    out[a * q + b] += p;
                }
            }
        }
        let denominator = match self.layout {
            Layout::Stencil => None,
            _ => self.denominator,
        };
        JointType {
            order: 1,
            alphabet: q,
            denominator,
            probs: out,
            layout: self.layout,
        }
    }

    /// Normalized Hamming distance implied by λ: `Σ_{a≠b} λ_(a)(b)`.
    pub fn distortion(&self) -> f64 {
        let q = self.alphabet;
        let sym = self.symbol_marginal();
        (0..q)
            .flat_map(|a| (0..q).map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| sym.probs[a * q + b])
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }
}

impl ConditionalEntropy for JointType {
    fn conditional_entropy(&self) -> f64 {
        match self.reduced() {
            Some(r) => self.entropy() - r.entropy(),
            None => self.entropy(),
        }
    }
}

/// Sum out one symbol position from both windows of every pattern pair.
/// `first = false` drops the last symbol, `first = true` drops the first.
fn reduce_pairs(probs: &[f64], q: usize, order: usize, first: bool) -> Vec<f64> {
    let side = pattern_count(q, order);
    let small = side / q;
    let mut out = vec![0.0; small * small];
    for (idx, p) in probs.iter().enumerate() {
        let (a, b) = (idx / side, idx % side);
        let (ra, rb) = if first {
            (a % small, b % small)
        } else {
            (a / q, b / q)
        };
        out[ra * small + rb] += p;
    }
    out
}

/// All marginals of λ at once.
pub fn marginalize(lambda: &JointType) -> Marginals {
    Marginals {
        row: lambda.row_marginal(),
        col: lambda.col_marginal(),
        reduced: lambda.reduced(),
        symbol: lambda.symbol_marginal(),
    }
}

fn window_indices(v: &[u8], alphabet: usize, order: usize, circular: bool) -> Vec<usize> {
    let k = v.len();
    let windows = if circular { k } else { k + 1 - order };
    (0..windows)
        .map(|start| pattern_index((0..order).map(|u| v[(start + u) % k] as usize), alphabet))
        .collect()
}

fn check_order(len: usize, order: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::EmptyVector);
    }
    if order == 0 || order > MAX_ORDER {
        return Err(Error::OrderOutOfRange {
            order,
            max: MAX_ORDER,
        });
    }
    if order > len {
        return Err(Error::OrderExceedsLength { order, len });
    }
    Ok(())
}

fn layout_for(circular: bool) -> Layout {
    if circular {
        Layout::Circular
    } else {
        Layout::Linear
    }
}

/// Exact c-order type of `v`: the frequency of each length-`order` window.
/// Circular input of length k has k windows; linear input has k−c+1.
pub fn compute_type(
    v: &[u8],
    alphabet: usize,
    order: usize,
    circular: bool,
) -> Result<TypeHistogram> {
    check_order(v.len(), order)?;
    check_symbols(v, alphabet)?;
    let mut counts = vec![0u64; pattern_count(alphabet, order)];
    for w in window_indices(v, alphabet, order, circular) {
        counts[w] += 1;
    }
    TypeHistogram::from_counts(order, alphabet, &counts, layout_for(circular))
}

/// Exact c-order joint type of two equal-length vectors.
pub fn compute_joint_type(
    vi: &[u8],
    vj: &[u8],
    alphabet: usize,
    order: usize,
    circular: bool,
) -> Result<JointType> {
    if vi.len() != vj.len() {
        return Err(Error::LengthMismatch {
            left: vi.len(),
            right: vj.len(),
        });
    }
    check_order(vi.len(), order)?;
    check_symbols(vi, alphabet)?;
    check_symbols(vj, alphabet)?;
    let side = pattern_count(alphabet, order);
    let mut counts = vec![0u64; side * side];
    let wi = window_indices(vi, alphabet, order, circular);
    let wj = window_indices(vj, alphabet, order, circular);
    for (a, b) in wi.into_iter().zip(wj) {
        counts[a * side + b] += 1;
    }
    JointType::from_counts(order, alphabet, &counts, layout_for(circular))
}

fn check_field(field: &[u8], side: usize) -> Result<()> {
    if field.is_empty() || side == 0 {
        return Err(Error::EmptyVector);
    }
    if field.len() != side * side {
        return Err(Error::LengthMismatch {
            left: field.len(),
            right: side * side,
        });
    }
    Ok(())
}

/// Stencil type of a `side`×`side` toroidal field stored row-major.
pub fn compute_type_2d(
    field: &[u8],
    side: usize,
    alphabet: usize,
    stencil: &Stencil,
) -> Result<TypeHistogram> {
    check_field(field, side)?;
    check_symbols(field, alphabet)?;
    let cells = stencil.cells();
    let mut counts = vec![0u64; pattern_count(alphabet, cells)];
    for r in 0..side {
        for c in 0..side {
            let pos = stencil.positions(r, c, side);
            counts[pattern_index(pos.iter().map(|&p| field[p] as usize), alphabet)] += 1;
        }
    }
    TypeHistogram::from_counts(cells, alphabet, &counts, Layout::Stencil)
}

/// Stencil joint type of two toroidal fields.
pub fn compute_joint_type_2d(
    fi: &[u8],
    fj: &[u8],
    side: usize,
    alphabet: usize,
    stencil: &Stencil,
) -> Result<JointType> {
    check_field(fi, side)?;
    check_field(fj, side)?;
    check_symbols(fi, alphabet)?;
    check_symbols(fj, alphabet)?;
    let cells = stencil.cells();
    let n = pattern_count(alphabet, cells);
    let mut counts = vec![0u64; n * n];
    for r in 0..side {
        for c in 0..side {
            let pos = stencil.positions(r, c, side);
            let a = pattern_index(pos.iter().map(|&p| fi[p] as usize), alphabet);
            let b = pattern_index(pos.iter().map(|&p| fj[p] as usize), alphabet);
            counts[a * n + b] += 1;
        }
    }
    JointType::from_counts(cells, alphabet, &counts, Layout::Stencil)
}

/// Parse a string of decimal digits such as `"0010110"` into symbols.
pub fn parse_symbols(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .enumerate()
        .map(|(i, ch)| {
            ch.to_digit(10).map(|d| d as u8).ok_or_else(|| {
                Error::InvalidArgument(format!("character {ch:?} at position {i} is not a digit"))
            })
        })
        .collect()
}
