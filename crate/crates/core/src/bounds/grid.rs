use rayon::prelude::*;

use super::{arbitrary_denominator, objective_ratio, unsupported, BoundProblem, BoundResult, Diagnostics, Ratio, Variant};
use crate::error::{Error, Result};
use crate::model::SensorClass;
use crate::types::{kl, JointType, Layout};

/// Points per coordinate in each refinement window (±4 cells).
const WINDOW: usize = 9;
const ROW_SLACK: f64 = 1e-12;

/// Ratio objective of the arbitrary-connection variants on raw `|V|×|V|`
/// joint pmfs, with the fixed-γ pieces precomputed.
pub(crate) struct ArbitraryObjective<'a> {
    pub classes: Vec<(f64, Vec<f64>, &'a SensorClass)>,
    pub gamma: Vec<f64>,
    pub q: usize,
    prior: Option<Vec<f64>>,
}

impl<'a> ArbitraryObjective<'a> {
    pub fn new(problem: &'a BoundProblem) -> Result<Self> {
        let gamma = problem.gamma().probs().to_vec();
        let mut classes = Vec::new();
        for class in problem.model.classes() {
            let px = class.product_output(&gamma)?;
            classes.push((class.alpha(), class.through_channel_diag(&px), class));
        }
        let prior = match problem.variant {
            Variant::MapPrior | Variant::Heterogeneous => Some(gamma.clone()),
            _ => None,
        };
        Ok(ArbitraryObjective {
            classes,
            q: problem.model.alphabet(),
            gamma,
            prior,
        })
    }

    pub fn numerator(&self, lambda: &[f64]) -> f64 {
        self.classes
            .iter()
            .map(|(alpha, pxy, class)| {
                let pxx = class.product_joint_output(lambda).expect("kernel built in new");
                alpha * kl(pxy, &class.through_channel(&pxx))
            })
            .sum()
    }

    pub fn denominator(&self, lambda: &[f64]) -> f64 {
        arbitrary_denominator(lambda, self.q, self.prior.as_deref())
    }

    pub fn ratio(&self, lambda: &[f64]) -> Ratio {
        Ratio::new(self.numerator(lambda), self.denominator(lambda))
    }
}

/// Free coordinates: `t[a(q−1) + j]` is the fraction of row `a` sent to the
/// j-th off-diagonal column. Points below the distortion target are scaled
/// radially onto it; points that leave the simplex are dropped.
pub(crate) fn lambda_from(t: &[f64], gamma: &[f64], distortion: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let q = gamma.len();
    let mut t = t.to_vec();
    let row_off = |t: &[f64], a: usize| t[a * (q - 1)..(a + 1) * (q - 1)].iter().sum::<f64>();
    let d: f64 = (0..q).map(|a| gamma[a] * row_off(&t, a)).sum();
    if d < distortion {
        if d <= 0.0 {
            return None;
        }
        let scale = distortion / d;
        t.iter_mut().for_each(|v| *v *= scale);
    }
    let mut lambda = vec![0.0; q * q];
    for a in 0..q {
        let off = row_off(&t, a);
        if off > 1.0 + ROW_SLACK {
            return None;
        }
        let mut j = 0;
        for b in 0..q {
            if b == a {
                continue;
            }
            lambda[a * q + b] = gamma[a] * t[a * (q - 1) + j];
            j += 1;
        }
        lambda[a * q + a] = (gamma[a] * (1.0 - off)).max(0.0);
    }
    Some((lambda, t))
}

/// `t` scaled down onto the distortion target when it lies above it. Small
/// targets sit far below the grid spacing, so every grid direction is also
/// tried on the boundary.
pub(crate) fn boundary_point(t: &[f64], gamma: &[f64], distortion: f64) -> Option<Vec<f64>> {
    let q = gamma.len();
    let d: f64 = (0..q)
        .map(|a| gamma[a] * t[a * (q - 1)..(a + 1) * (q - 1)].iter().sum::<f64>())
        .sum();
    (d > distortion && distortion > 0.0).then(|| t.iter().map(|v| v * distortion / d).collect())
}

#[derive(Clone, Debug)]
pub(crate) struct Candidate {
    pub value: f64,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Smaller value first; ties go to the lexicographically smaller λ.
pub(crate) fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let ord = a.value.total_cmp(&b.value).then_with(|| {
                a.lambda
                    .iter()
                    .zip(&b.lambda)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            if ord.is_le() {
                Some(a)
            } else {
                Some(b)
            }
        }
    }
}

/// Minimize `score` over the box `lo + i·step`, `i ∈ 0..count` per coordinate,
/// clipped to the unit cube.
pub(crate) fn scan<F>(lo: &[f64], step: f64, count: usize, score: &F) -> (Option<Candidate>, usize)
where
    F: Fn(&[f64]) -> Option<Candidate> + Sync,
{
    let dims = lo.len();
    let total = (count as u64).pow(dims as u32);
    let best = (0..total)
        .into_par_iter()
        .map(|code| {
            let mut rest = code;
            let mut t = vec![0.0; dims];
            for (d, slot) in t.iter_mut().enumerate().rev() {
                let i = rest % count as u64;
                rest /= count as u64;
                *slot = lo[d] + i as f64 * step;
            }
            if t.iter().any(|&v| !(-1e-15..=1.0 + 1e-15).contains(&v)) {
                return None;
            }
            t.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            score(&t).filter(|c| c.value.is_finite())
        })
        .reduce(|| None, better);
    (best, total as usize)
}

/// Grid minimization of the ratio objective for arbitrary connections.
pub fn clb_grid(problem: &BoundProblem) -> Result<BoundResult> {
    if !problem.variant.uses_grid() {
        return Err(unsupported(problem.variant, "use clb_bisect for contiguous models"));
    }
    let opts = &problem.options;
    if opts.grid == 0 {
        return Err(Error::InvalidArgument("grid resolution must be positive".into()));
    }
    let obj = ArbitraryObjective::new(problem)?;
    let q = obj.q;
    let dims = q * (q - 1);
    let points = ((opts.grid + 1) as f64).powi(dims as i32);
    if points > opts.max_grid_points {
        return Err(Error::DimensionTooLarge {
            points,
            limit: opts.max_grid_points,
        });
    }
    let distortion = problem.effective_distortion();
    let eval = |t: &[f64]| {
        let (lambda, t) = lambda_from(t, &obj.gamma, distortion)?;
        let value = obj.ratio(&lambda).value;
        Some(Candidate { value, t, lambda }).filter(|c| c.value.is_finite())
    };
    let score = |t: &[f64]| {
        let projected = boundary_point(t, &obj.gamma, distortion).and_then(|b| eval(&b));
        better(eval(t), projected)
    };

    let mut step = 1.0 / opts.grid as f64;
    let (mut best, mut evals) = scan(&vec![0.0; dims], step, opts.grid + 1, &score);
    for _ in 0..opts.refinements {
        let Some(center) = best.clone() else { break };
        step /= 2.0;
        let half = (WINDOW / 2) as f64 * step;
        let lo: Vec<f64> = center.t.iter().map(|v| v - half).collect();
        let (found, n) = scan(&lo, step, WINDOW, &score);
        evals += n;
        best = better(best, found);
    }
    let best = best.ok_or_else(|| {
        Error::EmptyFeasibleSet(format!(
            "no grid point reaches distortion {distortion} with a positive entropy gap"
        ))
    })?;

    let mut gap: f64 = 0.0;
    for d in 0..dims {
        for sign in [-1.0, 1.0] {
            let mut t = best.t.clone();
            t[d] += sign * step;
            if !(0.0..=1.0).contains(&t[d]) {
                continue;
            }
            if let Some(c) = score(&t).filter(|c| c.value.is_finite()) {
                gap = gap.max((c.value - best.value).abs());
            }
            evals += 1;
        }
    }

    let lambda_star = JointType::new(1, q, normalized(best.lambda), Layout::Circular)?;
    let ratio = objective_ratio(problem, &lambda_star)?;
    Ok(BoundResult {
        clb: ratio.value,
        distortion: problem.distortion,
        variant: problem.variant,
        lambda_star,
        numerator: ratio.numerator,
        denominator: ratio.denominator,
        diagnostics: Diagnostics {
            method: "grid".into(),
            iterations: evals,
            grid_cell: Some(step),
            lipschitz_gap: Some(gap),
            ..Diagnostics::default()
        },
    })
}

pub(crate) fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Discipline, ModelDoc, ModelSpec, PsiSpec};

    fn problem(c: usize, p: f64, d: f64) -> BoundProblem {
        let m = ModelSpec::from_doc(ModelDoc::simple(Discipline::Arbitrary, c, PsiSpec::Sum, p, 10.0))
            .unwrap();
        BoundProblem::new(m, d).unwrap()
    }

    #[test]
    fn snapping_lands_on_boundary() {
        let (l, t) = lambda_from(&[0.01, 0.03], &[0.5, 0.5], 0.1).unwrap();
        assert!((l[1] + l[2] - 0.1).abs() < 1e-15);
        assert!((t[0] - 0.05).abs() < 1e-15);
        assert!(lambda_from(&[0.0, 0.0], &[0.5, 0.5], 0.1).is_none());
        let b = boundary_point(&[0.2, 0.6], &[0.5, 0.5], 0.1).unwrap();
        assert!((b[0] - 0.05).abs() < 1e-15 && (b[1] - 0.15).abs() < 1e-15);
        assert!(boundary_point(&[0.1, 0.1], &[0.5, 0.5], 0.1).is_none());
    }

    #[test]
    fn small_distortion_reaches_the_boundary() {
        let fine = problem(4, 0.01, 1e-5);
        let r = clb_grid(&fine).unwrap();
        let l = r.lambda_star.probs();
        assert!((l[1] + l[2] - 1e-5).abs() < 1e-9, "{l:?}");
        assert!(r.clb < 0.01, "{}", r.clb);
    }

    #[test]
    fn refinement_never_increases() {
        let mut p = problem(2, 0.1, 0.1);
        p.options.grid = 40;
        p.options.refinements = 0;
        let coarse = clb_grid(&p).unwrap();
        p.options.refinements = 3;
        let fine = clb_grid(&p).unwrap();
        assert!(fine.clb <= coarse.clb + 1e-15);
        assert!(coarse.clb - fine.clb <= coarse.diagnostics.lipschitz_gap.unwrap() + 1e-12);
    }

    #[test]
    fn ratio_matches_reported_lambda() {
        let r = clb_grid(&problem(3, 0.05, 0.05)).unwrap();
        assert!((r.clb - r.numerator / r.denominator).abs() < 1e-12);
        assert!(r.lambda_star.distortion() >= 0.05 - 1e-12);
    }

    #[test]
    fn too_many_points() {
        let m = ModelSpec::from_json(r#"{"discipline":"arbitrary","c":2,"alphabet":3,"psi":{"kind":"sum"},"noise":{"kind":"exponential","p":0.1}}"#).unwrap();
        let p = BoundProblem::new(m, 0.1).unwrap();
        assert!(matches!(clb_grid(&p), Err(Error::DimensionTooLarge { .. })));
    }
}
