use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::grid::{boundary_point, clb_grid, lambda_from, normalized, scan, ArbitraryObjective, Candidate};
use super::{unsupported, BoundProblem, Variant};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SensorClass};
use crate::types::{JointType, Layout, TypeHistogram};

const GOLDEN_STEPS: usize = 60;
const WINDOW: usize = 9;
const PROBE_RHO: [f64; 3] = [1.0, 0.5, 0.25];

/// The random-coding exponent at one rate with its minimizing pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentResult {
    pub rate: f64,
    /// Maximizing ρ at the minimizing λ.
    pub rho: f64,
    /// `E(ρ, λ)` at the reported pair.
    #[serde(rename = "E_value")]
    pub e_value: f64,
    /// `E_r(R, D)`.
    #[serde(rename = "Er_value")]
    pub er_value: f64,
    pub gamma: Vec<f64>,
    pub lambda: JointType,
}

impl ExponentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("exponent results serialize")
    }
}

/// `E(ρ,λ)` in bits for one class from its output laws.
fn class_exponent(px: &[f64], pxx: &[f64], rows: &[Vec<f64>], rho: f64) -> Result<f64> {
    let nx = px.len();
    let s = 1.0 / (1.0 + rho);
    let ws: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|w| if *w > 0.0 { w.powf(s) } else { 0.0 }).collect())
        .collect();
    let ny = rows[0].len();
    let mut total = 0.0;
    for a in 0..nx {
        if px[a] <= 0.0 {
            continue;
        }
        let row = &pxx[a * nx..(a + 1) * nx];
        let mass: f64 = row.iter().sum();
        if mass <= 0.0 {
            return Err(Error::ConditionalUndefined { output: a });
        }
        for b in 0..ny {
            if ws[a][b] == 0.0 {
                continue;
            }
            let inner: f64 = row
                .iter()
                .zip(&ws)
                .map(|(p, w)| p / mass * w[b])
                .sum();
            total += px[a] * ws[a][b] * inner.powf(rho);
        }
    }
    Ok(-total.log2())
}

/// `E(ρ,λ)` for a model, α-weighted over sensor classes.
pub fn error_exponent(model: &ModelSpec, rho: f64, gamma: &TypeHistogram, lambda: &JointType) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho {rho} is outside [0, 1]")));
    }
    let mut e = 0.0;
    for class in model.classes() {
        let px = class.output_dist(gamma)?;
        let pxx = class.joint_output_dist(lambda)?;
        e += class.alpha() * class_exponent(&px, &pxx, class.noise().rows(), rho)?;
    }
    Ok(e)
}

/// Maximize a concave function of ρ on [0, 1]: grid, then golden section
/// around the best grid point.
fn maximize_rho<F: Fn(f64) -> f64>(points: usize, f: F) -> (f64, f64) {
    let n = points.max(2);
    let step = 1.0 / (n - 1) as f64;
    let mut best = (0.0, f(0.0));
    for k in 1..n {
        let r = k as f64 * step;
        let v = f(r);
        if v > best.1 {
            best = (r, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(0.0), (best.0 + step).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_STEPS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    for (r, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (r, v);
        }
    }
    best
}

struct Laws<'a> {
    px: Vec<(f64, Vec<f64>, &'a SensorClass)>,
}

impl Laws<'_> {
    fn joint(&self, lambda: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.px.iter().map(|(_, _, class)| class.product_joint_output(lambda)).collect()
    }

    fn exponent_with(&self, pxxs: &[Vec<f64>], rho: f64) -> Result<f64> {
        let mut e = 0.0;
        for ((alpha, px, class), pxx) in self.px.iter().zip(pxxs) {
            e += alpha * class_exponent(px, pxx, class.noise().rows(), rho)?;
        }
        Ok(e)
    }

    fn exponent(&self, lambda: &[f64], rho: f64) -> Result<f64> {
        self.exponent_with(&self.joint(lambda)?, rho)
    }
}

/// Inverse of `lambda_from` for a λ on or above the distortion target.
fn off_diagonal_fractions(lambda: &[f64], gamma: &[f64]) -> Vec<f64> {
    let q = gamma.len();
    let mut t = Vec::with_capacity(q * (q - 1));
    for a in 0..q {
        for b in (0..q).filter(|&b| b != a) {
            t.push(if gamma[a] > 0.0 { lambda[a * q + b] / gamma[a] } else { 0.0 });
        }
    }
    t
}

/// `E_r(R,D) = min_λ max_ρ [E(ρ,λ) − ρ R (H(λ) − H(γ))]` over the same
/// feasible set as the grid bound.
pub fn random_coding_exponent(problem: &BoundProblem, rate: f64) -> Result<ExponentResult> {
    if !matches!(problem.variant, Variant::Theorem1 | Variant::Nonbinary) {
        return Err(unsupported(
            problem.variant,
            "the random-coding exponent is available for theorem1 and nonbinary",
        ));
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate {rate} must be nonnegative")));
    }
    let opts = &problem.options;
    let obj = ArbitraryObjective::new(problem)?;
    let laws = Laws {
        px: obj
            .classes
            .iter()
            .map(|(alpha, _, class)| Ok((*alpha, class.product_output(&obj.gamma)?, *class)))
            .collect::<Result<_>>()?,
    };
    let q = obj.q;
    let dims = q * (q - 1);
    let points = ((opts.grid + 1) as f64).powi(dims as i32);
    if opts.grid == 0 || points > opts.max_grid_points {
        return Err(Error::DimensionTooLarge {
            points,
            limit: opts.max_grid_points,
        });
    }
    let distortion = problem.effective_distortion();
    let inner = |lambda: &[f64]| -> Result<(f64, f64)> {
        let den = obj.denominator(lambda);
        let pxxs = laws.joint(lambda)?;
        // Validate the conditionals once; the closure below cannot fail after.
        laws.exponent_with(&pxxs, 0.5)?;
        Ok(maximize_rho(opts.rho_points, |rho| {
            // E(0, λ) = 0 exactly
            if rho == 0.0 {
                return 0.0;
            }
            laws.exponent_with(&pxxs, rho).unwrap_or(f64::NEG_INFINITY) - rho * rate * den
        }))
    };
    // The bound's minimizer is not always on the grid.
    let seed = clb_grid(problem)?;
    let star = seed.lambda_star.probs().to_vec();
    let mut best = inner(&star).ok().map(|(_, value)| Candidate {
        value,
        t: off_diagonal_fractions(&star, &obj.gamma),
        lambda: star,
    });
    // Smallest exponent found so far. A λ whose objective at any single ρ
    // already exceeds it cannot be the minimizer, so it is skipped; the
    // result does not depend on the order in which points are visited.
    let ceiling = AtomicU64::new(best.as_ref().map_or(f64::INFINITY, |c| c.value).to_bits());
    let lower = |v: f64| {
        let mut cur = ceiling.load(Ordering::Relaxed);
        while v < f64::from_bits(cur) {
            match ceiling.compare_exchange_weak(cur, v.to_bits(), Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => break,
                Err(now) => cur = now,
            }
        }
    };
    let eval = |t: &[f64]| {
        let (lambda, t) = lambda_from(t, &obj.gamma, distortion)?;
        let pxxs = laws.joint(&lambda).ok()?;
        let den = obj.denominator(&lambda);
        for rho in PROBE_RHO {
            let v = laws.exponent_with(&pxxs, rho).ok()? - rho * rate * den;
            if v > f64::from_bits(ceiling.load(Ordering::Relaxed)) {
                return None;
            }
        }
        let (_, value) = inner(&lambda).ok()?;
        lower(value);
        Some(Candidate { value, t, lambda })
    };
    let score = |t: &[f64]| {
        let projected = boundary_point(t, &obj.gamma, distortion).and_then(|b| eval(&b));
        super::grid::better(eval(t), projected)
    };
    let mut step = 1.0 / opts.grid as f64;
    // E_r is never negative, so a vanishing exponent at the seed is final.
    let settled = best.as_ref().is_some_and(|c| c.value == 0.0);
    let rounds = if settled { 0 } else { opts.refinements };
    if !settled {
        let (found, _) = scan(&vec![0.0; dims], step, opts.grid + 1, &score);
        best = super::grid::better(best, found);
    }
    for _ in 0..rounds {
        let Some(center) = best.clone() else { break };
        step /= 2.0;
        let half = (WINDOW / 2) as f64 * step;
        let lo: Vec<f64> = center.t.iter().map(|v| v - half).collect();
        let (found, _) = scan(&lo, step, WINDOW, &score);
        best = super::grid::better(best, found);
    }
    let best = best.ok_or_else(|| {
        Error::EmptyFeasibleSet(format!("no joint type reaches distortion {distortion}"))
    })?;
    let (rho, er) = inner(&best.lambda)?;
    let lambda = JointType::new(1, q, normalized(best.lambda.clone()), Layout::Circular)?;
    Ok(ExponentResult {
        rate,
        rho,
        e_value: laws.exponent(&best.lambda, rho)?,
        er_value: er,
        gamma: obj.gamma.clone(),
        lambda,
    })
}
