//! Sensor models: sensing functions, noise channels and the output
//! distributions P^γ, P^λ, P_{XY} and Q_{XY} they induce.
//!
//! A model is ingested from JSON:
//!
//! ```json
//! {"discipline": "arbitrary", "c": 4, "alphabet": 2,
//!  "psi": {"kind": "sum"},
//!  "noise": {"kind": "exponential", "p": 0.1, "decay": 10},
//!  "prior": null, "mixture": null}
//! ```
//!
//! For `contiguous2d` the range `c` is the stencil radius. A `mixture` is a
//! list of `{"alpha", "c", "psi", "noise"}` classes and replaces the
//! top-level sensor fields.

mod kernel;
mod noise;
mod psi;

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{kl, pattern_count, JointType, Layout, Stencil, TypeHistogram};

use kernel::ProductKernel;
pub use noise::{make_exponential_noise, NoiseChannel, NoiseSpec, DEFAULT_DECAY};
pub use psi::{PsiSpec, SensingFunction, MERGE_TOL};

const WEIGHT_TOL: f64 = 1e-9;

/// How sensors pick the target positions they observe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    /// c positions drawn uniformly with replacement.
    Arbitrary,
    /// A circular window of c consecutive positions.
    #[serde(rename = "contiguous1d")]
    Contiguous1d,
    /// All cells within Euclidean distance c of a point on a torus.
    #[serde(rename = "contiguous2d")]
    Contiguous2d,
}

impl Discipline {
    pub fn name(self) -> &'static str {
        match self {
            Discipline::Arbitrary => "arbitrary",
            Discipline::Contiguous1d => "contiguous1d",
            Discipline::Contiguous2d => "contiguous2d",
        }
    }
}

/// One sensor class of a heterogeneous mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDoc {
    pub alpha: f64,
    pub c: usize,
    pub psi: PsiSpec,
    pub noise: NoiseSpec,
}

/// Serialized model document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub discipline: Discipline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
    #[serde(default)]
    pub mixture: Option<Vec<ClassDoc>>,
}

impl ModelDoc {
    /// Single-class model with an exponential channel.
    pub fn simple(discipline: Discipline, c: usize, psi: PsiSpec, p: f64, decay: f64) -> Self {
        ModelDoc {
            discipline,
            c: Some(c),
            alphabet: None,
            psi: Some(psi),
            noise: Some(NoiseSpec::Exponential { p, decay }),
            prior: None,
            mixture: None,
        }
    }
}

/// A sensor type: range, sensing function and channel, with its relative
/// frequency in the network.
#[derive(Clone, Debug)]
pub struct SensorClass {
    alpha: f64,
    range: usize,
    discipline: Discipline,
    psi: SensingFunction,
    noise: NoiseChannel,
    stencil: Option<Stencil>,
    single: OnceLock<std::result::Result<ProductKernel, Error>>,
    pair: OnceLock<std::result::Result<ProductKernel, Error>>,
}

impl SensorClass {
    fn build(
        discipline: Discipline,
        alphabet: usize,
        alpha: f64,
        range: usize,
        psi: &PsiSpec,
        noise: &NoiseSpec,
        prefix: &str,
    ) -> Result<Self> {
        if range == 0 && discipline != Discipline::Contiguous2d {
            return Err(Error::model(format!("{prefix}c"), "range must be positive"));
        }
        let stencil = match discipline {
            Discipline::Contiguous2d => Some(
                Stencil::new(range)
                    .map_err(|e| Error::model(format!("{prefix}c"), e.to_string()))?,
            ),
            _ => None,
        };
        let arity = stencil.as_ref().map_or(range, Stencil::cells);
        if discipline == Discipline::Contiguous1d && range > crate::types::MAX_ORDER {
            return Err(Error::model(
                format!("{prefix}c"),
                format!("range above {} is not supported", crate::types::MAX_ORDER),
            ));
        }
        let psi =
            SensingFunction::new(psi.clone(), arity, alphabet).map_err(|e| prefixed(e, prefix))?;
        let noise = match noise {
            NoiseSpec::Exponential { p, decay } => {
                make_exponential_noise(*p, psi.output_count(), *decay).map_err(|e| match e {
                    Error::InvalidProbability(p) => {
                        Error::model(format!("{prefix}noise.p"), format!("{p} is not in [0, 1)"))
                    }
                    other => prefixed(other, prefix),
                })?
            }
            NoiseSpec::Matrix { rows } => {
                let w = NoiseChannel::from_rows(rows.clone()).map_err(|e| prefixed(e, prefix))?;
                if w.inputs() != psi.output_count() {
                    return Err(Error::model(
                        format!("{prefix}noise.rows"),
                        format!(
                            "{} rows given but the sensing function has {} outputs",
                            w.inputs(),
                            psi.output_count()
                        ),
                    ));
                }
                w
            }
        };
        Ok(SensorClass {
            alpha,
            range,
            discipline,
            psi,
            noise,
            stencil,
            single: OnceLock::new(),
            pair: OnceLock::new(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Range c (stencil radius for 2D).
    pub fn range(&self) -> usize {
        self.range
    }

    /// Number of sensed positions: c, or the stencil size in 2D.
    pub fn arity(&self) -> usize {
        self.psi.arity()
    }

    pub fn psi(&self) -> &SensingFunction {
        &self.psi
    }

    pub fn noise(&self) -> &NoiseChannel {
        &self.noise
    }

    pub fn stencil(&self) -> Option<&Stencil> {
        self.stencil.as_ref()
    }

    fn single_kernel(&self) -> Result<&ProductKernel> {
        let alphabet = self.psi.alphabet();
        self.single
            .get_or_init(|| {
                ProductKernel::build(alphabet, self.arity(), self.psi.output_count(), |seq| {
                    self.psi.apply(&to_u8(seq))
                })
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn pair_kernel(&self) -> Result<&ProductKernel> {
        let q = self.psi.alphabet();
        let nx = self.psi.output_count();
        self.pair
            .get_or_init(|| {
                ProductKernel::build(q * q, self.arity(), nx * nx, |seq| {
                    let a: Vec<u8> = seq.iter().map(|s| (s / q) as u8).collect();
                    let b: Vec<u8> = seq.iter().map(|s| (s % q) as u8).collect();
                    self.psi.apply(&a) * nx + self.psi.apply(&b)
                })
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Output symbol of every pattern of a contiguous type of `order`
    /// (at least the class arity); longer windows use their prefix.
    pub fn pattern_outputs(&self, order: usize) -> Result<Vec<usize>> {
        let arity = self.arity();
        let strict = self.discipline == Discipline::Contiguous2d;
        if order < arity || (strict && order != arity) {
            return Err(Error::OrderMismatch {
                expected: arity,
                actual: order,
            });
        }
        let q = self.psi.alphabet();
        let stride = pattern_count(q, order - arity);
        Ok((0..pattern_count(q, order))
            .map(|p| self.psi.output_index(p / stride))
            .collect())
    }

    /// P^γ over the output alphabet.
    pub fn output_dist(&self, gamma: &TypeHistogram) -> Result<Vec<f64>> {
        match self.discipline {
            Discipline::Arbitrary => {
                expect_order(1, gamma.order())?;
                Ok(self.single_kernel()?.eval(gamma.probs()))
            }
            _ => {
                let out = self.pattern_outputs(gamma.order())?;
                let mut p = vec![0.0; self.psi.output_count()];
                for (&x, g) in out.iter().zip(gamma.probs()) {
                    p[x] += g;
                }
                Ok(p)
            }
        }
    }

    /// P^λ(x_i, x_j), row-major over `X × X`.
    pub fn joint_output_dist(&self, lambda: &JointType) -> Result<Vec<f64>> {
        let nx = self.psi.output_count();
        match self.discipline {
            Discipline::Arbitrary => {
                expect_order(1, lambda.order())?;
                Ok(self.pair_kernel()?.eval(lambda.probs()))
            }
            _ => {
                let out = self.pattern_outputs(lambda.order())?;
                let side = out.len();
                let mut p = vec![0.0; nx * nx];
                for (idx, l) in lambda.probs().iter().enumerate() {
                    p[out[idx / side] * nx + out[idx % side]] += l;
                }
                Ok(p)
            }
        }
    }

    /// P^γ for the arbitrary discipline from raw symbol frequencies.
    pub(crate) fn product_output(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        Ok(self.single_kernel()?.eval(gamma))
    }

    /// P^λ for the arbitrary discipline from a raw `|V|×|V|` joint pmf.
    pub(crate) fn product_joint_output(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(self.pair_kernel()?.eval(lambda))
    }

    /// `P^γ(x) W(y|x)`, row-major over `X × Y`.
    pub fn pxy(&self, gamma: &TypeHistogram) -> Result<Vec<f64>> {
        let px = self.output_dist(gamma)?;
        Ok(self.through_channel_diag(&px))
    }

    /// `Σ_a P^λ(x, a) W(y|a)`, row-major over `X × Y`.
    pub fn qxy(&self, lambda: &JointType) -> Result<Vec<f64>> {
        let pxx = self.joint_output_dist(lambda)?;
        Ok(self.through_channel(&pxx))
    }

    pub(crate) fn through_channel_diag(&self, px: &[f64]) -> Vec<f64> {
        let ny = self.noise.outputs();
        let mut out = vec![0.0; px.len() * ny];
        for (x, p) in px.iter().enumerate() {
            for (y, w) in self.noise.rows()[x].iter().enumerate() {
                out[x * ny + y] = p * w;
            }
        }
        out
    }

    pub(crate) fn through_channel(&self, pxx: &[f64]) -> Vec<f64> {
        let nx = self.psi.output_count();
        let ny = self.noise.outputs();
        let mut out = vec![0.0; nx * ny];
        for xi in 0..nx {
            for xj in 0..nx {
                let m = pxx[xi * nx + xj];
                if m == 0.0 {
                    continue;
                }
                for (y, w) in self.noise.rows()[xj].iter().enumerate() {
                    out[xi * ny + y] += m * w;
                }
            }
        }
        out
    }

    /// `D(P^γ_{XY} || Q^λ_{XY})` in bits.
    pub fn divergence(&self, gamma: &TypeHistogram, lambda: &JointType) -> Result<f64> {
        Ok(kl(&self.pxy(gamma)?, &self.qxy(lambda)?))
    }
}

fn to_u8(seq: &[usize]) -> Vec<u8> {
    seq.iter().map(|&s| s as u8).collect()
}

fn expect_order(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::OrderMismatch { expected, actual });
    }
    Ok(())
}

fn prefixed(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidModel { field, reason } if !prefix.is_empty() => Error::InvalidModel {
            field: format!("{prefix}{field}"),
            reason,
        },
        other => other,
    }
}

/// A validated sensor-network model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    doc: ModelDoc,
    alphabet: usize,
    classes: Vec<SensorClass>,
    type_order: usize,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDoc::deserialize(d)?;
        ModelSpec::from_doc(doc).map_err(serde::de::Error::custom)
    }
}

impl ModelSpec {
    pub fn from_doc(doc: ModelDoc) -> Result<Self> {
        let alphabet = doc.alphabet.unwrap_or(2);
        if !(2..=16).contains(&alphabet) {
            return Err(Error::model("alphabet", "must be between 2 and 16"));
        }
        if let Some(prior) = &doc.prior {
            if prior.len() != alphabet {
                return Err(Error::model(
                    "prior",
                    format!("expected {alphabet} entries, got {}", prior.len()),
                ));
            }
            if prior.iter().any(|p| !p.is_finite() || *p <= 0.0) {
                return Err(Error::model("prior", "entries must be positive"));
            }
            let s: f64 = prior.iter().sum();
            if (s - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::model("prior", format!("entries sum to {s}")));
            }
        }
        let classes = match &doc.mixture {
            Some(mix) => {
                if mix.is_empty() {
                    return Err(Error::model("mixture", "at least one class is required"));
                }
                let mut total = 0.0;
                let mut classes = Vec::with_capacity(mix.len());
                for (l, class) in mix.iter().enumerate() {
                    let prefix = format!("mixture[{l}].");
                    if !class.alpha.is_finite() || class.alpha <= 0.0 {
                        return Err(Error::model(format!("{prefix}alpha"), "must be positive"));
                    }
                    total += class.alpha;
                    classes.push(SensorClass::build(
                        doc.discipline,
                        alphabet,
                        class.alpha,
                        class.c,
                        &class.psi,
                        &class.noise,
                        &prefix,
                    )?);
                }
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::model(
                        "mixture",
                        format!("class weights sum to {total}"),
                    ));
                }
                classes
            }
            None => {
                let c = doc
                    .c
                    .ok_or_else(|| Error::model("c", "missing sensor range"))?;
                let psi = doc
                    .psi
                    .as_ref()
                    .ok_or_else(|| Error::model("psi", "missing sensing function"))?;
                let noise = doc
                    .noise
                    .as_ref()
                    .ok_or_else(|| Error::model("noise", "missing noise model"))?;
                vec![SensorClass::build(
                    doc.discipline,
                    alphabet,
                    1.0,
                    c,
                    psi,
                    noise,
                    "",
                )?]
            }
        };
        let type_order = match doc.discipline {
            Discipline::Arbitrary => 1,
            Discipline::Contiguous1d => classes.iter().map(SensorClass::arity).max().unwrap(),
            Discipline::Contiguous2d => {
                let r = classes[0].range;
                if classes.iter().any(|c| c.range != r) {
                    return Err(Error::model(
                        "mixture",
                        "2D classes must share one stencil radius",
                    ));
                }
                classes[0].arity()
            }
        };
        Ok(ModelSpec {
            doc,
            alphabet,
            classes,
            type_order,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::model("document", e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::model("path", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("model documents always serialize")
    }

    pub fn doc(&self) -> &ModelDoc {
        &self.doc
    }

    pub fn discipline(&self) -> Discipline {
        self.doc.discipline
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn prior(&self) -> Option<&[f64]> {
        self.doc.prior.as_deref()
    }

    pub fn classes(&self) -> &[SensorClass] {
        &self.classes
    }

    /// The first (for single-class models, the only) sensor class.
    pub fn primary(&self) -> &SensorClass {
        &self.classes[0]
    }

    pub fn is_mixture(&self) -> bool {
        self.doc.mixture.is_some()
    }

    /// Order of the types the bounds work with: 1 for arbitrary
    /// connections, the largest range for 1D windows, the stencil size in 2D.
    pub fn type_order(&self) -> usize {
        self.type_order
    }

    /// Layout of the types the bounds work with.
    pub fn layout(&self) -> Layout {
        match self.discipline() {
            Discipline::Contiguous2d => Layout::Stencil,
            _ => Layout::Circular,
        }
    }

    /// Same model with every exponential channel set to error probability `p`.
    pub fn with_noise_p(&self, p: f64) -> Result<Self> {
        let mut doc = self.doc.clone();
        let set = |spec: &mut NoiseSpec, field: &str| match spec {
            NoiseSpec::Exponential { p: old, .. } => {
                *old = p;
                Ok(())
            }
            NoiseSpec::Matrix { .. } => Err(Error::model(
                field,
                "changing p requires an exponential channel",
            )),
        };
        if let Some(mix) = doc.mixture.as_mut() {
            for (l, class) in mix.iter_mut().enumerate() {
                set(&mut class.noise, &format!("mixture[{l}].noise"))?;
            }
        } else if let Some(noise) = doc.noise.as_mut() {
            set(noise, "noise")?;
        }
        Self::from_doc(doc)
    }

    /// Same model with sensor range `c`.
    pub fn with_range(&self, c: usize) -> Result<Self> {
        if self.is_mixture() {
            return Err(Error::model(
                "mixture",
                "range sweeps need a single-class model",
            ));
        }
        let mut doc = self.doc.clone();
        doc.c = Some(c);
        Self::from_doc(doc)
    }

    fn check_gamma(&self, gamma: &TypeHistogram) -> Result<()> {
        expect_order(self.type_order, gamma.order())?;
        self.check_layout(gamma.layout())
    }

    fn check_lambda(&self, lambda: &JointType) -> Result<()> {
        expect_order(self.type_order, lambda.order())?;
        self.check_layout(lambda.layout())
    }

    fn check_layout(&self, layout: Layout) -> Result<()> {
        let stencil = layout == Layout::Stencil;
        let want = self.discipline() == Discipline::Contiguous2d;
        if stencil != want && self.discipline() != Discipline::Arbitrary {
            return Err(Error::InvalidArgument(format!(
                "{:?} types do not fit the {} discipline",
                layout,
                self.discipline().name()
            )));
        }
        Ok(())
    }

    pub fn output_dist(&self, gamma: &TypeHistogram) -> Result<Vec<f64>> {
        self.check_gamma(gamma)?;
        self.primary().output_dist(gamma)
    }

    pub fn joint_output_dist(&self, lambda: &JointType) -> Result<Vec<f64>> {
        self.check_lambda(lambda)?;
        self.primary().joint_output_dist(lambda)
    }

    pub fn pxy(&self, gamma: &TypeHistogram) -> Result<Vec<f64>> {
        self.check_gamma(gamma)?;
        self.primary().pxy(gamma)
    }

    pub fn qxy(&self, lambda: &JointType) -> Result<Vec<f64>> {
        self.check_lambda(lambda)?;
        self.primary().qxy(lambda)
    }

    /// `Σ_l α_l D(P^{γ,l}_{XY} || Q^{λ,l}_{XY})`; for a single class this is
    /// the plain divergence.
    pub fn divergence(&self, gamma: &TypeHistogram, lambda: &JointType) -> Result<f64> {
        self.check_gamma(gamma)?;
        self.check_lambda(lambda)?;
        let mut total = 0.0;
        for class in &self.classes {
            total += class.alpha * class.divergence(gamma, lambda)?;
        }
        Ok(total)
    }
}

/// α-weighted divergence of a heterogeneous model.
pub fn mixture_divergence(
    model: &ModelSpec,
    gamma: &TypeHistogram,
    lambda: &JointType,
) -> Result<f64> {
    if !model.is_mixture() {
        return Err(Error::NoMixture);
    }
    model.divergence(gamma, lambda)
}
