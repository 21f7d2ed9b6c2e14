//! Sensing-capacity lower bounds.
//!
//! Every bound is a minimum, over joint types λ in an adversarial set
//! `S_γ(D)`, of a divergence `D(P^γ_{XY} || Q^λ_{XY})` divided by an entropy
//! gap. Arbitrary-connection variants have a two-dimensional (binary) free
//! space and are solved by a refined grid; contiguous and 2D variants are
//! solved by bisection on the rate over a sequence of convex problems.

mod convex;
mod exponent;
mod grid;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Discipline, ModelSpec};
use crate::types::{entropy, kl, ConditionalEntropy, JointType, Layout, TypeHistogram};

pub use convex::{clb_bisect, InnerObjective};
pub use exponent::{error_exponent, random_coding_exponent, ExponentResult};
pub use grid::clb_grid;
pub use sweep::{
    crossings, replication_comparison, replication_noise, sweep, Axis, Replication, SweepRow, SweepTable,
    MONOTONE_TOL,
};

/// Denominators at or below this make the ratio +∞.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;
/// Distortion targets are clamped below `1 − DISTORTION_MARGIN` so the
/// adversarial set keeps an interior.
pub const DISTORTION_MARGIN: f64 = 1e-6;
const FEASIBILITY_TOL: f64 = 1e-8;

/// Which bound to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Binary targets, arbitrary connections, γ = (1/2, 1/2).
    Theorem1,
    /// Arbitrary connections over a general alphabet, γ uniform.
    Nonbinary,
    /// Arbitrary connections with an i.i.d. prior and MAP decoding.
    MapPrior,
    /// A mixture of sensor classes with relative frequencies α_l.
    Heterogeneous,
    /// Contiguous 1D windows with circular c-order types.
    Theorem2,
    /// Contiguous 2D stencils on a torus.
    Twod,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Theorem1 => "theorem1",
            Variant::Nonbinary => "nonbinary",
            Variant::MapPrior => "map_prior",
            Variant::Heterogeneous => "heterogeneous",
            Variant::Theorem2 => "theorem2",
            Variant::Twod => "twod",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "theorem1" => Variant::Theorem1,
            "nonbinary" => Variant::Nonbinary,
            "map_prior" => Variant::MapPrior,
            "heterogeneous" => Variant::Heterogeneous,
            "theorem2" => Variant::Theorem2,
            "twod" => Variant::Twod,
            other => return Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        })
    }

    /// The natural bound for a model.
    pub fn for_model(model: &ModelSpec) -> Self {
        match model.discipline() {
            Discipline::Contiguous1d => Variant::Theorem2,
            Discipline::Contiguous2d => Variant::Twod,
            Discipline::Arbitrary if model.is_mixture() => Variant::Heterogeneous,
            Discipline::Arbitrary if model.prior().is_some() => Variant::MapPrior,
            Discipline::Arbitrary if model.alphabet() == 2 => Variant::Theorem1,
            Discipline::Arbitrary => Variant::Nonbinary,
        }
    }

    /// Whether the bound is computed by the refined grid (ratio form).
    pub fn uses_grid(self) -> bool {
        matches!(
            self,
            Variant::Theorem1 | Variant::Nonbinary | Variant::MapPrior | Variant::Heterogeneous
        )
    }
}

/// Numerical settings shared by all solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Grid cells per free coordinate.
    pub grid: usize,
    /// Rounds of local refinement, each halving the cell size.
    pub refinements: usize,
    /// Largest number of grid points accepted.
    pub max_grid_points: f64,
    /// Width of the final rate bracket.
    pub bisection_tol: f64,
    /// Duality-gap target of the inner convex problems.
    pub inner_tol: f64,
    /// Newton steps per centering.
    pub max_newton: usize,
    /// Barrier-parameter increases per inner solve.
    pub max_outer: usize,
    /// Require joint shift consistency of contiguous λ.
    pub shift_consistency: bool,
    /// ρ grid points for the random-coding exponent.
    pub rho_points: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grid: 200,
            refinements: 3,
            max_grid_points: 1e7,
            bisection_tol: 1e-3,
            inner_tol: 1e-8,
            max_newton: 100,
            max_outer: 60,
            shift_consistency: true,
            rho_points: 64,
        }
    }
}

/// Summary of the constraints defining `S_γ(D)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    /// Fixed i-side symbol or pattern marginal.
    pub row_marginal: Vec<f64>,
    /// Lower bound on the off-diagonal symbol mass.
    pub min_distortion: f64,
    pub shift_consistent: bool,
}

/// A bound to evaluate: model, distortion, variant and solver settings.
#[derive(Clone, Debug)]
pub struct BoundProblem {
    pub model: ModelSpec,
    pub distortion: f64,
    pub variant: Variant,
    pub options: SolverOptions,
}

impl BoundProblem {
    /// Problem with the model's natural variant and default options.
    pub fn new(model: ModelSpec, distortion: f64) -> Result<Self> {
        let variant = Variant::for_model(&model);
        Self::with_variant(model, distortion, variant)
    }

    pub fn with_variant(model: ModelSpec, distortion: f64, variant: Variant) -> Result<Self> {
        if !(0.0..=1.0).contains(&distortion) {
            return Err(Error::InvalidArgument(format!(
                "distortion {distortion} is outside [0, 1]"
            )));
        }
        check_variant(&model, variant)?;
        Ok(BoundProblem {
            model,
            distortion,
            variant,
            options: SolverOptions::default(),
        })
    }

    pub fn options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    /// Distortion target actually used by the solvers.
    pub fn effective_distortion(&self) -> f64 {
        self.distortion.min(1.0 - DISTORTION_MARGIN)
    }

    /// The fixed i-side type γ_i.
    pub fn gamma(&self) -> TypeHistogram {
        let q = self.model.alphabet();
        let order = self.model.type_order();
        match self.variant {
            Variant::MapPrior | Variant::Heterogeneous => {
                let probs = self
                    .model
                    .prior()
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![1.0 / q as f64; q]);
                TypeHistogram::new(1, q, probs, Layout::Circular).expect("prior is validated")
            }
            Variant::Twod => {
                let n = q.pow(order as u32);
                TypeHistogram::new(order, q, vec![1.0 / n as f64; n], Layout::Stencil)
                    .expect("uniform stencil type")
            }
            _ => TypeHistogram::uniform(order, q).expect("uniform type"),
        }
    }

    pub fn feasible_set(&self) -> FeasibleSet {
        let row_marginal = match self.variant {
            Variant::Twod => vec![1.0 / self.model.alphabet() as f64; self.model.alphabet()],
            _ => self.gamma().probs().to_vec(),
        };
        FeasibleSet {
            row_marginal,
            min_distortion: self.effective_distortion(),
            shift_consistent: self.variant == Variant::Theorem2
                && self.options.shift_consistency
                && self.model.type_order() > 1,
        }
    }

    /// Evaluate the bound with the solver matching the variant.
    pub fn solve(&self) -> Result<BoundResult> {
        if self.variant.uses_grid() {
            clb_grid(self)
        } else {
            clb_bisect(self)
        }
    }
}

fn unsupported(variant: Variant, reason: impl Into<String>) -> Error {
    Error::UnsupportedVariant {
        variant: variant.name().into(),
        reason: reason.into(),
    }
}

fn check_variant(model: &ModelSpec, variant: Variant) -> Result<()> {
    let disc = model.discipline();
    let q = model.alphabet();
    let need = |want: Discipline| {
        if disc != want {
            Err(unsupported(
                variant,
                format!("needs a {} model, got {}", want.name(), disc.name()),
            ))
        } else {
            Ok(())
        }
    };
    match variant {
        Variant::Theorem1 | Variant::Nonbinary => {
            need(Discipline::Arbitrary)?;
            if variant == Variant::Theorem1 && q != 2 {
                return Err(unsupported(variant, "binary alphabets only; use nonbinary"));
            }
            if model.is_mixture() {
                return Err(unsupported(variant, "mixture models use heterogeneous"));
            }
            if model.prior().is_some() {
                return Err(unsupported(variant, "models with a prior use map_prior"));
            }
        }
        Variant::MapPrior => {
            need(Discipline::Arbitrary)?;
            if model.prior().is_none() {
                return Err(unsupported(variant, "the model has no prior"));
            }
        }
        Variant::Heterogeneous => {
            need(Discipline::Arbitrary)?;
            if !model.is_mixture() {
                return Err(Error::NoMixture);
            }
        }
        Variant::Theorem2 | Variant::Twod => {
            need(if variant == Variant::Theorem2 {
                Discipline::Contiguous1d
            } else {
                Discipline::Contiguous2d
            })?;
            if model.prior().is_some() {
                return Err(unsupported(variant, "priors are only supported with arbitrary connections"));
            }
        }
    }
    Ok(())
}

/// Value of the bound objective at one λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    /// `numerator / denominator`, or +∞ when the denominator vanishes.
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
}

impl Ratio {
    pub(crate) fn new(numerator: f64, denominator: f64) -> Self {
        let value = if denominator <= DENOMINATOR_FLOOR {
            f64::INFINITY
        } else {
            numerator / denominator
        };
        Ratio {
            value,
            numerator,
            denominator,
        }
    }
}

/// `H(λ) − H(γ_j) − D(γ_j || P_V)` for arbitrary-connection λ over `V×V`.
pub(crate) fn arbitrary_denominator(lambda: &[f64], q: usize, prior: Option<&[f64]>) -> f64 {
    let h = entropy(lambda);
    match prior {
        None => h - (q as f64).log2(),
        Some(pv) => {
            let mut col = vec![0.0; q];
            for (i, l) in lambda.iter().enumerate() {
                col[i % q] += l;
            }
            h - entropy(&col) - kl(&col, pv)
        }
    }
}

/// Entropy gap of the variant at λ.
fn denominator(problem: &BoundProblem, lambda: &JointType) -> f64 {
    let q = problem.model.alphabet();
    match problem.variant {
        Variant::Theorem1 | Variant::Nonbinary => arbitrary_denominator(lambda.probs(), q, None),
        Variant::MapPrior | Variant::Heterogeneous => {
            let gamma = problem.gamma();
            arbitrary_denominator(lambda.probs(), q, Some(gamma.probs()))
        }
        Variant::Theorem2 => {
            lambda.conditional_entropy() - lambda.row_marginal().conditional_entropy()
        }
        Variant::Twod => entropy(&lambda.col_marginal().symbol_marginal()),
    }
}

fn check_feasible(problem: &BoundProblem, lambda: &JointType) -> Result<()> {
    let set = problem.feasible_set();
    let row = match problem.variant {
        Variant::Twod => lambda.row_marginal().symbol_marginal(),
        _ => lambda.row_marginal().probs().to_vec(),
    };
    if row.len() != set.row_marginal.len() {
        return Err(Error::InfeasibleLambda(format!(
            "row marginal has {} entries, expected {}",
            row.len(),
            set.row_marginal.len()
        )));
    }
    let worst = row
        .iter()
        .zip(&set.row_marginal)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if worst > FEASIBILITY_TOL {
        return Err(Error::InfeasibleLambda(format!(
            "row marginal differs from γ by {worst:e}"
        )));
    }
    let d = lambda.distortion();
    if d < set.min_distortion - FEASIBILITY_TOL {
        return Err(Error::InfeasibleLambda(format!(
            "distortion {d} is below {}",
            set.min_distortion
        )));
    }
    if set.shift_consistent && lambda.shift_residual() > FEASIBILITY_TOL {
        return Err(Error::InfeasibleLambda(
            "λ is not joint shift consistent".into(),
        ));
    }
    Ok(())
}

/// Numerator, denominator and ratio of the variant's objective at λ.
pub fn objective_ratio(problem: &BoundProblem, lambda: &JointType) -> Result<Ratio> {
    check_feasible(problem, lambda)?;
    let numerator = match problem.variant {
        Variant::Twod => problem.model.divergence(&lambda.row_marginal(), lambda)?,
        _ => problem.model.divergence(&problem.gamma(), lambda)?,
    };
    Ok(Ratio::new(numerator, denominator(problem, lambda)))
}

/// How a bound was obtained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `grid` or `bisection`.
    pub method: String,
    /// Objective evaluations (grid) or Newton steps (bisection).
    pub iterations: usize,
    /// Final grid spacing in the free coordinates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_cell: Option<f64>,
    /// Largest objective change to a neighbouring grid point at the optimum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz_gap: Option<f64>,
    /// Final rate bracket `[achievable, not certified]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
    /// Barrier duality gap of the last inner solve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_gap: Option<f64>,
    /// Newton decrement of the last inner solve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton_decrement: Option<f64>,
    /// Number of bisection steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bisections: Option<usize>,
}

/// A computed lower bound with its certifying joint type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub clb: f64,
    #[serde(rename = "D")]
    pub distortion: f64,
    pub variant: Variant,
    pub lambda_star: JointType,
    pub numerator: f64,
    pub denominator: f64,
    pub diagnostics: Diagnostics,
}

impl BoundResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bound results serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDoc, PsiSpec};
    use crate::types::mutual_information;

    fn arbitrary(c: usize, p: f64) -> ModelSpec {
        ModelSpec::from_doc(ModelDoc::simple(Discipline::Arbitrary, c, PsiSpec::Sum, p, 10.0))
            .unwrap()
    }

    #[test]
    fn product_lambda_ratio() {
        let m = arbitrary(2, 0.1);
        let prob = BoundProblem::new(m.clone(), 0.1).unwrap();
        let g = prob.gamma();
        let l = g.product(&g).unwrap();
        let r = objective_ratio(&prob, &l).unwrap();
        let mi = mutual_information(&m.output_dist(&g).unwrap(), m.primary().noise().rows());
        assert!((r.numerator - mi).abs() < 1e-12);
        assert!((r.denominator - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_lambda_is_excluded() {
        let prob = BoundProblem::new(arbitrary(2, 0.1), 0.0).unwrap();
        let l = JointType::new(1, 2, vec![0.5, 0.0, 0.0, 0.5], Layout::Circular).unwrap();
        let r = objective_ratio(&prob, &l).unwrap();
        assert_eq!(r.numerator, 0.0);
        assert_eq!(r.denominator, 0.0);
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn infeasible_lambda_is_rejected() {
        let prob = BoundProblem::new(arbitrary(2, 0.1), 0.3).unwrap();
        let l = JointType::new(1, 2, vec![0.45, 0.05, 0.05, 0.45], Layout::Circular).unwrap();
        assert!(matches!(objective_ratio(&prob, &l), Err(Error::InfeasibleLambda(_))));
        let l = JointType::new(1, 2, vec![0.6, 0.0, 0.0, 0.4], Layout::Circular).unwrap();
        assert!(matches!(objective_ratio(&prob, &l), Err(Error::InfeasibleLambda(_))));
    }

    #[test]
    fn variant_checks() {
        let m = arbitrary(2, 0.1);
        assert!(matches!(
            BoundProblem::with_variant(m.clone(), 0.1, Variant::Theorem2),
            Err(Error::UnsupportedVariant { .. })
        ));
        assert!(matches!(
            BoundProblem::with_variant(m, 0.1, Variant::Heterogeneous),
            Err(Error::NoMixture)
        ));
    }
}
