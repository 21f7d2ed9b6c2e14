use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::grid::normalized;
use super::{unsupported, BoundProblem, BoundResult, Diagnostics, Variant};
use crate::error::{Error, Result};
use crate::model::Discipline;
use crate::types::{pattern_count, pattern_symbols, JointType, Layout};

const LN2: f64 = std::f64::consts::LN_2;
/// Largest number of λ coordinates handled by the convex solver.
const MAX_VARIABLES: usize = 1 << 14;
const BARRIER_GROWTH: f64 = 10.0;
const CENTERING_TOL: f64 = 1e-9;
const ORTHO_TOL: f64 = 1e-10;

/// One sensor class as linear maps from λ to `P_{XY}` and `Q_{XY}`.
struct LinearClass {
    alpha: f64,
    out_a: Vec<usize>,
    out_b: Vec<usize>,
    w: Vec<Vec<f64>>,
    nx: usize,
    ny: usize,
    /// `P^γ_{XY}` when γ is fixed; `None` when it is the row marginal of λ.
    fixed_p: Option<Vec<f64>>,
}

impl LinearClass {
    fn pq(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let cells = self.nx * self.ny;
        let mut q = vec![0.0; cells];
        let mut p = self.fixed_p.clone().unwrap_or_else(|| vec![0.0; cells]);
        let own = self.fixed_p.is_none();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let base = self.out_a[i] * self.ny;
            for (y, w) in self.w[self.out_b[i]].iter().enumerate() {
                q[base + y] += xi * w;
            }
            if own {
                for (y, w) in self.w[self.out_a[i]].iter().enumerate() {
                    p[base + y] += xi * w;
                }
            }
        }
        (p, q)
    }

    fn divergence(&self, x: &[f64]) -> f64 {
        let (p, q) = self.pq(x);
        let mut acc = 0.0;
        for (pj, qj) in p.iter().zip(&q) {
            if *pj > 0.0 {
                if *qj <= 0.0 {
                    return f64::INFINITY;
                }
                acc += pj * (pj / qj).log2();
            }
        }
        acc
    }

    /// Adds `α ∇KL` to `grad` and returns the Hessian factor columns
    /// (scaled by `√α`), one per cell with `P > 0`.
    fn derivatives(&self, x: &[f64], grad: &mut [f64]) -> Vec<Vec<f64>> {
        let (p, q) = self.pq(x);
        let ny = self.ny;
        let own = self.fixed_p.is_none();
        let gq: Vec<f64> = p
            .iter()
            .zip(&q)
            .map(|(pj, qj)| if *pj > 0.0 { -pj / (qj * LN2) } else { 0.0 })
            .collect();
        let gp: Vec<f64> = p
            .iter()
            .zip(&q)
            .map(|(pj, qj)| if *pj > 0.0 { (pj / qj).log2() + 1.0 / LN2 } else { 0.0 })
            .collect();
        let mut col_of = vec![usize::MAX; p.len()];
        let mut cols = 0;
        for (j, pj) in p.iter().enumerate() {
            if *pj > 0.0 {
                col_of[j] = cols;
                cols += 1;
            }
        }
        let scale = (self.alpha / LN2).sqrt();
        let mut v = vec![vec![0.0; x.len()]; cols];
        for i in 0..x.len() {
            let base = self.out_a[i] * ny;
            let wb = &self.w[self.out_b[i]];
            let wa = &self.w[self.out_a[i]];
            let mut gi = 0.0;
            for y in 0..ny {
                let j = base + y;
                gi += gq[j] * wb[y];
                if own {
                    gi += gp[j] * wa[y];
                }
                if col_of[j] != usize::MAX {
                    let sp = p[j].sqrt();
                    let mut e = -sp / q[j] * wb[y];
                    if own {
                        e += wa[y] / sp;
                    }
                    v[col_of[j]][i] = scale * e;
                }
            }
            grad[i] += self.alpha * gi;
        }
        v
    }
}

/// Entropy gap of the contiguous bounds as a function of λ.
enum Gap {
    /// `H(λ) − H(λ') − H(γ̃|γ')`, with `groups[i]` the λ' cell of coordinate i
    /// (absent for order 1).
    Conditional {
        groups: Option<Vec<Vec<usize>>>,
        offset: f64,
    },
    /// `H(m)` with `m_s = Σ_i σ_s(i) x_i` the j-side symbol marginal.
    Symbol { sigma: Vec<Vec<f64>> },
}

fn xlogx_sum(v: impl Iterator<Item = f64>) -> f64 {
    -v.filter(|&x| x > 0.0).map(|x| x * x.log2()).sum::<f64>()
}

impl Gap {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Gap::Conditional { groups, offset } => {
                let h = xlogx_sum(x.iter().copied());
                let hr = match groups {
                    Some(gs) => xlogx_sum(gs.iter().map(|g| g.iter().map(|&i| x[i]).sum())),
                    None => 0.0,
                };
                h - hr - offset
            }
            Gap::Symbol { sigma } => {
                xlogx_sum(sigma.iter().map(|s| s.iter().zip(x).map(|(a, b)| a * b).sum()))
            }
        }
    }
}

/// The inner objective `f_R(λ) = KL(λ) − R·gap(λ)` of the contiguous and 2D
/// bounds, over flattened λ with its constraint set.
pub struct InnerObjective {
    order: usize,
    alphabet: usize,
    layout: Layout,
    classes: Vec<LinearClass>,
    gap: Gap,
    distortion: Vec<f64>,
    min_distortion: f64,
    eq: DMatrix<f64>,
    eq_rhs: DVector<f64>,
    start: Vec<f64>,
    /// Coordinates coupled by the divergence Hessian when it is block
    /// diagonal (2D), with each coordinate's block and slot.
    blocks: Option<Vec<Vec<usize>>>,
    slot: Vec<(usize, usize)>,
}

/// Result of one inner solve at fixed rate.
pub(crate) struct InnerSolve {
    /// `min f_R > 0` (certified, or at the final gap).
    pub achievable: bool,
    pub x: Vec<f64>,
    pub gap: f64,
    pub decrement: f64,
    pub steps: usize,
}

struct Newton {
    grad: Vec<f64>,
    d: Vec<f64>,
    kappa: Vec<f64>,
    /// Factors of the dense diagonal blocks, when the objective has them.
    factors: Vec<Cholesky<f64, Dyn>>,
    v: DMatrix<f64>,
}

impl InnerObjective {
    pub fn new(problem: &BoundProblem) -> Result<Self> {
        let model = &problem.model;
        let q = model.alphabet();
        let order = model.type_order();
        let side = pattern_count(q, order);
        let n = side
            .checked_mul(side)
            .filter(|&n| n <= MAX_VARIABLES)
            .ok_or(Error::DimensionTooLarge {
                points: (side as f64).powi(2),
                limit: MAX_VARIABLES as f64,
            })?;
        let twod = match problem.variant {
            Variant::Theorem2 => false,
            Variant::Twod => true,
            v => return Err(unsupported(v, "use clb_grid for arbitrary connections")),
        };
        debug_assert_eq!(twod, model.discipline() == Discipline::Contiguous2d);
        let gamma = problem.gamma();
        let pats: Vec<Vec<usize>> = (0..side).map(|a| pattern_symbols(a, q, order)).collect();

        let mut classes = Vec::new();
        for class in model.classes() {
            let out = class.pattern_outputs(order)?;
            let nx = class.psi().output_count();
            let fixed_p = if twod { None } else { Some(class.pxy(&gamma)?) };
            classes.push(LinearClass {
                alpha: class.alpha(),
                out_a: (0..n).map(|i| out[i / side]).collect(),
                out_b: (0..n).map(|i| out[i % side]).collect(),
                w: class.noise().rows().to_vec(),
                nx,
                ny: class.noise().outputs(),
                fixed_p,
            });
        }

        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let distortion: Vec<f64>;
        let gap;
        if twod {
            let cells = order as f64;
            let count = |p: &[usize], s: usize| p.iter().filter(|&&v| v == s).count() as f64 / cells;
            rows.push(vec![1.0; n]);
            rhs.push(1.0);
            for s in 0..q {
                rows.push((0..n).map(|i| count(&pats[i / side], s)).collect());
                rhs.push(1.0 / q as f64);
            }
            distortion = (0..n)
                .map(|i| {
                    let (a, b) = (&pats[i / side], &pats[i % side]);
                    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / cells
                })
                .collect();
            gap = Gap::Symbol {
                sigma: (0..q)
                    .map(|s| (0..n).map(|i| count(&pats[i % side], s)).collect())
                    .collect(),
            };
        } else {
            for a in 0..side {
                let mut r = vec![0.0; n];
                r[a * side..(a + 1) * side].iter_mut().for_each(|v| *v = 1.0);
                rows.push(r);
                rhs.push(1.0 / side as f64);
            }
            let small = side / q;
            if order > 1 && problem.options.shift_consistency {
                for ap in 0..small {
                    for bp in 0..small {
                        let mut r = vec![0.0; n];
                        for s in 0..q {
                            for t in 0..q {
                                r[(s * small + ap) * side + t * small + bp] += 1.0;
                                r[(ap * q + s) * side + bp * q + t] -= 1.0;
                            }
                        }
                        rows.push(r);
                        rhs.push(0.0);
                    }
                }
            }
            distortion = (0..n)
                .map(|i| {
                    let (a, b) = (&pats[i / side], &pats[i % side]);
                    if a[0] != b[0] {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            let groups = (order > 1).then(|| {
                let mut gs = vec![Vec::with_capacity(q * q); small * small];
                for i in 0..n {
                    let (a, b) = (i / side, i % side);
                    gs[(a / q) * small + b / q].push(i);
                }
                gs
            });
            gap = Gap::Conditional {
                groups,
                offset: (q as f64).log2(),
            };
        }
        let (eq, eq_rhs) = orthonormalize(rows, rhs, n);
        let blocks = twod.then(|| output_blocks(&classes, n));
        let mut slot = vec![(0, 0); if twod { n } else { 0 }];
        for (b, members) in blocks.iter().flatten().enumerate() {
            for (k, &i) in members.iter().enumerate() {
                slot[i] = (b, k);
            }
        }

        // Mix of the independent coupling and the symbolwise shift coupling.
        let qf = q as f64;
        let d = problem.effective_distortion();
        let base = 1.0 - 1.0 / qf;
        let target = if d <= 0.9 * base { base } else { (1.0 + d) / 2.0 };
        let theta = ((target - base) * qf).clamp(0.0, 1.0);
        let mut start = vec![(1.0 - theta) / n as f64; n];
        for (a, pat) in pats.iter().enumerate() {
            let b = pats
                .iter()
                .position(|p| p.iter().zip(pat).all(|(x, y)| *x == (y + 1) % q))
                .unwrap();
            start[a * side + b] += theta / side as f64;
        }
        let layout = if twod {
            Layout::Stencil
        } else if order == 1 || problem.options.shift_consistency {
            Layout::Circular
        } else {
            Layout::Linear
        };
        Ok(InnerObjective {
            order,
            alphabet: q,
            layout,
            classes,
            gap,
            distortion,
            min_distortion: d,
            eq,
            eq_rhs,
            start,
            blocks,
            slot,
        })
    }

    /// Number of λ coordinates.
    pub fn dim(&self) -> usize {
        self.start.len()
    }

    /// Strictly feasible starting point.
    pub fn start(&self) -> &[f64] {
        &self.start
    }

    /// `Σ_l α_l D(P^l || Q^l)` at λ.
    pub fn divergence(&self, x: &[f64]) -> f64 {
        self.classes.iter().map(|c| c.alpha * c.divergence(x)).sum()
    }

    /// Entropy gap at λ.
    pub fn denominator(&self, x: &[f64]) -> f64 {
        self.gap.value(x)
    }

    pub fn value(&self, rate: f64, x: &[f64]) -> f64 {
        self.divergence(x) - rate * self.denominator(x)
    }

    pub fn distortion(&self, x: &[f64]) -> f64 {
        self.distortion.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest violation of the linear equalities.
    pub fn equality_residual(&self, x: &[f64]) -> f64 {
        let r = &self.eq * DVector::from_column_slice(x) - &self.eq_rhs;
        r.amax()
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.iter().all(|&v| v >= -tol)
            && self.distortion(x) >= self.min_distortion - tol
            && self.equality_residual(x) <= tol
    }

    /// Wrap a coordinate vector as a joint type.
    pub fn lambda(&self, x: &[f64]) -> Result<JointType> {
        let probs = normalized(x.iter().map(|v| v.max(0.0)).collect());
        JointType::new(self.order, self.alphabet, probs.clone(), self.layout)
            .or_else(|_| JointType::new(self.order, self.alphabet, probs, Layout::Linear))
    }

    fn barrier(&self, rate: f64, t: f64, x: &[f64]) -> f64 {
        let slack = self.distortion(x) - self.min_distortion;
        if slack <= 0.0 || x.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        let f = self.value(rate, x);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        t * f - x.iter().map(|v| v.ln()).sum::<f64>() - slack.ln()
    }

    fn newton_terms(&self, rate: f64, t: f64, x: &[f64]) -> Option<Newton> {
        let n = x.len();
        let mut kl_grad = vec![0.0; n];
        let mut kl_cols: Vec<Vec<f64>> = Vec::new();
        for class in &self.classes {
            kl_cols.extend(class.derivatives(x, &mut kl_grad));
        }
        let st = t.sqrt();
        kl_cols.iter_mut().flatten().for_each(|v| *v *= st);
        let mut cols = Vec::new();
        if self.blocks.is_none() {
            cols = kl_cols;
            kl_cols = Vec::new();
        }
        let slack = self.distortion(x) - self.min_distortion;
        let mut grad: Vec<f64> = (0..n)
            .map(|i| t * kl_grad[i] - 1.0 / x[i] - self.distortion[i] / slack)
            .collect();
        let mut d: Vec<f64> = x.iter().map(|v| 1.0 / (v * v)).collect();
        let mut kappa = Vec::new();
        match &self.gap {
            Gap::Conditional { groups, .. } => {
                let tr = t * rate;
                for i in 0..n {
                    // −R ∂H(λ)/∂x_i
                    grad[i] += tr * (x[i].log2() + 1.0 / LN2);
                    d[i] += tr / (LN2 * x[i]);
                }
                if let Some(gs) = groups {
                    for g in gs {
                        let y: f64 = g.iter().map(|&i| x[i]).sum();
                        for &i in g {
                            grad[i] -= tr * (y.log2() + 1.0 / LN2);
                        }
                        kappa.push(tr / (LN2 * y));
                    }
                }
            }
            Gap::Symbol { sigma } => {
                let tr = t * rate;
                for s in sigma {
                    let m: f64 = s.iter().zip(x).map(|(a, b)| a * b).sum();
                    let gm = m.log2() + 1.0 / LN2;
                    for i in 0..n {
                        grad[i] += tr * s[i] * gm;
                    }
                    let scale = (tr / (LN2 * m)).sqrt();
                    cols.push(s.iter().map(|v| v * scale).collect());
                }
            }
        }
        cols.push(self.distortion.iter().map(|c| c / slack).collect());
        let r = cols.len();
        let v = DMatrix::from_fn(n, r, |i, j| cols[j][i]);
        let mut factors = Vec::new();
        if let Some(blocks) = &self.blocks {
            let mut dense: Vec<DMatrix<f64>> = blocks
                .iter()
                .map(|b| DMatrix::from_diagonal(&DVector::from_iterator(b.len(), b.iter().map(|&i| d[i]))))
                .collect();
            for col in &kl_cols {
                let Some(first) = col.iter().position(|&v| v != 0.0) else {
                    continue;
                };
                let b = self.slot[first].0;
                let members = &blocks[b];
                let local = DVector::from_iterator(members.len(), members.iter().map(|&i| col[i]));
                dense[b].ger(1.0, &local, &local, 1.0);
            }
            for m in dense {
                factors.push(Cholesky::new(m)?);
            }
        }
        Some(Newton {
            grad,
            d,
            kappa,
            factors,
            v,
        })
    }

    /// Apply the inverse of `diag(d) − Σ_g κ_g 1_g 1_gᵀ` in place.
    fn block_solve(&self, sys: &Newton, u: &mut [f64]) {
        let (d, kappa) = (&sys.d, &sys.kappa);
        if let Some(blocks) = &self.blocks {
            for (members, f) in blocks.iter().zip(&sys.factors) {
                let local = DVector::from_iterator(members.len(), members.iter().map(|&i| u[i]));
                let sol = f.solve(&local);
                for (&i, v) in members.iter().zip(sol.iter()) {
                    u[i] = *v;
                }
            }
            return;
        }
        match &self.gap {
            Gap::Conditional {
                groups: Some(gs), ..
            } => {
                for (g, &k) in gs.iter().zip(kappa) {
                    let sd: f64 = g.iter().map(|&i| 1.0 / d[i]).sum();
                    let su: f64 = g.iter().map(|&i| u[i] / d[i]).sum();
                    let coef = k * su / (1.0 - k * sd);
                    for &i in g {
                        u[i] = (u[i] + coef) / d[i];
                    }
                }
            }
            _ => u.iter_mut().zip(d).for_each(|(ui, di)| *ui /= di),
        }
    }

    /// Equality-constrained Newton direction for the barrier problem.
    fn direction(&self, sys: &Newton) -> Option<(Vec<f64>, f64)> {
        let n = sys.d.len();
        let r = sys.v.ncols();
        let mut z = sys.v.clone();
        for j in 0..r {
            let mut col: Vec<f64> = z.column(j).iter().copied().collect();
            self.block_solve(sys, &mut col);
            z.set_column(j, &DVector::from_vec(col));
        }
        let k = DMatrix::identity(r, r) + sys.v.transpose() * &z;
        let kc = Cholesky::new(k)?;
        let solve = |rhs: DMatrix<f64>| -> DMatrix<f64> {
            let mut b = rhs;
            for j in 0..b.ncols() {
                let mut col: Vec<f64> = b.column(j).iter().copied().collect();
                self.block_solve(sys, &mut col);
                b.set_column(j, &DVector::from_vec(col));
            }
            let corr = kc.solve(&(sys.v.transpose() * &b));
            b - &z * corr
        };
        let m = self.eq.nrows();
        let mut rhs = DMatrix::zeros(n, m + 1);
        rhs.set_column(0, &DVector::from_column_slice(&sys.grad));
        for i in 0..m {
            rhs.set_column(i + 1, &self.eq.row(i).transpose());
        }
        let sol = solve(rhs);
        let hg = sol.column(0).into_owned();
        let ha = sol.columns(1, m).into_owned();
        let s = &self.eq * &ha;
        let w = if m == 0 {
            DVector::zeros(0)
        } else {
            let sc = Cholesky::<f64, Dyn>::new(s.clone()).or_else(|| {
                let ridge = 1e-14 * s.diagonal().amax().max(1e-300);
                Cholesky::new(s + DMatrix::identity(m, m) * ridge)
            })?;
            -sc.solve(&(&self.eq * &hg))
        };
        let delta = -(hg + ha * w);
        if delta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dec2 = -delta.dot(&DVector::from_column_slice(&sys.grad));
        Some((delta.iter().copied().collect(), dec2.max(0.0)))
    }

    fn project(&self, x: &mut [f64]) {
        let xv = DVector::from_column_slice(x);
        let r = &self.eq * &xv - &self.eq_rhs;
        let fixed = xv - self.eq.transpose() * r;
        if fixed.iter().all(|&v| v > 0.0) {
            x.copy_from_slice(fixed.as_slice());
        }
    }

    /// Decide whether `min f_R > 0` over the feasible set. With `early`
    /// the solve stops as soon as the sign is certain; otherwise it runs to
    /// the target gap.
    pub(crate) fn decide(
        &self,
        rate: f64,
        early: bool,
        tol: f64,
        max_newton: usize,
        max_outer: usize,
    ) -> Result<InnerSolve> {
        let n = self.dim();
        let m_ineq = (n + 1) as f64;
        let mut x = self.start.clone();
        let f0 = self.value(rate, &x);
        if !f0.is_finite() {
            return Err(Error::InnerSolverDiverged(format!(
                "objective is not finite at the start point ({f0})"
            )));
        }
        let mut t = m_ineq / f0.abs().max(0.1);
        let mut steps = 0;
        let mut decrement = f64::INFINITY;
        for _ in 0..max_outer {
            for _ in 0..max_newton {
                let Some((sys, (delta, dec2))) = self
                    .newton_terms(rate, t, &x)
                    .and_then(|sys| self.direction(&sys).map(|dir| (sys, dir)))
                else {
                    return Err(Error::InnerSolverDiverged(format!(
                        "singular Newton system at t = {t:e}, rate {rate}"
                    )));
                };
                decrement = dec2.sqrt();
                if dec2 / 2.0 <= CENTERING_TOL {
                    break;
                }
                let psi = self.barrier(rate, t, &x);
                let slope: f64 = sys.grad.iter().zip(&delta).map(|(a, b)| a * b).sum();
                let mut s = 1.0;
                let mut moved = false;
                while s > 1e-20 {
                    let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + s * b).collect();
                    let val = self.barrier(rate, t, &trial);
                    if val.is_finite() && val <= psi + 0.25 * s * slope {
                        x = trial;
                        moved = true;
                        break;
                    }
                    s *= 0.5;
                }
                steps += 1;
                if !moved {
                    break;
                }
                if early && self.value(rate, &x) <= 0.0 {
                    self.project(&mut x);
                    return Ok(InnerSolve {
                        achievable: false,
                        x,
                        gap: m_ineq / t,
                        decrement,
                        steps,
                    });
                }
            }
            self.project(&mut x);
            let f = self.value(rate, &x);
            if !f.is_finite() {
                return Err(Error::InnerSolverDiverged(format!(
                    "objective became {f} at t = {t:e}"
                )));
            }
            let gap = m_ineq / t;
            if gap <= tol || (early && (f <= 0.0 || f - gap > 0.0)) {
                return Ok(InnerSolve {
                    achievable: f > 0.0,
                    x,
                    gap,
                    decrement,
                    steps,
                });
            }
            t *= BARRIER_GROWTH;
        }
        Err(Error::InnerSolverDiverged(format!(
            "no decision after {max_outer} barrier updates at rate {rate} (decrement {decrement:e})"
        )))
    }
}

/// Coordinates that share an i-side output in some class, grouped.
fn output_blocks(classes: &[LinearClass], n: usize) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for class in classes {
        let mut first = vec![usize::MAX; class.nx];
        for i in 0..n {
            let a = class.out_a[i];
            if first[a] == usize::MAX {
                first[a] = i;
            } else {
                let (r1, r2) = (root(&mut parent, first[a]), root(&mut parent, i));
                parent[r1.max(r2)] = r1.min(r2);
            }
        }
    }
    let mut index = vec![usize::MAX; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        if index[r] == usize::MAX {
            index[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[index[r]].push(i);
    }
    blocks
}

/// Gram-Schmidt (applied twice) on the equality rows, dropping dependent ones.
fn orthonormalize(rows: Vec<Vec<f64>>, rhs: Vec<f64>, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    for (mut r, mut b) in rows.into_iter().zip(rhs) {
        let norm0 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..2 {
            for (u, bu) in &basis {
                let c: f64 = r.iter().zip(u).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
                b -= c * bu;
            }
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > ORTHO_TOL * norm0.max(1.0) {
            r.iter_mut().for_each(|v| *v /= norm);
            basis.push((r, b / norm));
        }
    }
    let m = basis.len();
    let eq = DMatrix::from_fn(m, n, |i, j| basis[i].0[j]);
    let rhs = DVector::from_iterator(m, basis.iter().map(|(_, b)| *b));
    (eq, rhs)
}

/// Bisection on the rate: the bound is the largest R with `min f_R > 0`.
pub fn clb_bisect(problem: &BoundProblem) -> Result<BoundResult> {
    if problem.variant.uses_grid() {
        return Err(unsupported(problem.variant, "use clb_grid for arbitrary connections"));
    }
    let opts = &problem.options;
    let obj = InnerObjective::new(problem)?;
    let q = problem.model.alphabet() as f64;
    let arity = problem
        .model
        .classes()
        .iter()
        .map(|c| c.arity())
        .max()
        .unwrap_or(1) as f64;
    let mut lo = 0.0;
    let mut hi = arity * q.log2();
    let solve = |r: f64| obj.decide(r, true, opts.inner_tol, opts.max_newton, opts.max_outer);

    let mut steps = 0;
    let mut bisections = 0;
    let top = solve(hi)?;
    steps += top.steps;
    let mut certified = false;
    if top.achievable {
        lo = hi;
        certified = true;
    } else {
        while hi - lo > opts.bisection_tol {
            let mid = 0.5 * (lo + hi);
            let s = solve(mid)?;
            steps += s.steps;
            bisections += 1;
            if s.achievable {
                lo = mid;
                certified = true;
            } else {
                hi = mid;
            }
        }
    }
    let clb = if !certified {
        0.0
    } else if lo == hi {
        lo
    } else {
        0.5 * (lo + hi)
    };
    // λ* is the minimizer of f at the reported rate, solved to full accuracy.
    let last = obj.decide(clb, false, opts.inner_tol, opts.max_newton, opts.max_outer)?;
    steps += last.steps;
    let x = last.x;
    let lambda_star = obj.lambda(&x)?;
    Ok(BoundResult {
        clb,
        distortion: problem.distortion,
        variant: problem.variant,
        lambda_star,
        numerator: obj.divergence(&x),
        denominator: obj.denominator(&x),
        diagnostics: Diagnostics {
            method: "bisection".into(),
            iterations: steps,
            bracket: Some([lo, hi]),
            inner_gap: Some(last.gap),
            newton_decrement: Some(last.decrement),
            bisections: Some(bisections),
            ..Diagnostics::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDoc, ModelSpec, PsiSpec};

    fn contiguous(c: usize, p: f64, d: f64) -> BoundProblem {
        let m = ModelSpec::from_doc(ModelDoc::simple(Discipline::Contiguous1d, c, PsiSpec::Sum, p, 10.0))
            .unwrap();
        BoundProblem::new(m, d).unwrap()
    }

    #[test]
    fn start_point_is_strictly_feasible() {
        for d in [0.0, 0.1, 0.5, 0.9] {
            let obj = InnerObjective::new(&contiguous(3, 0.1, d)).unwrap();
            assert!(obj.is_feasible(obj.start(), 1e-12));
            assert!(obj.distortion(obj.start()) > d);
            assert!(obj.start().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = contiguous(2, 0.1, 0.1);
        let obj = InnerObjective::new(&p).unwrap();
        let x: Vec<f64> = obj
            .start()
            .iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 + 0.1 * ((i * 7 % 5) as f64 - 2.0) / 2.0))
            .collect();
        let (rate, t) = (0.7, 3.0);
        let sys = obj.newton_terms(rate, t, &x).unwrap();
        for i in 0..x.len() {
            let h = 1e-7 * x[i];
            let mut up = x.clone();
            up[i] += h;
            let mut dn = x.clone();
            dn[i] -= h;
            let fd = (obj.barrier(rate, t, &up) - obj.barrier(rate, t, &dn)) / (2.0 * h);
            assert!((fd - sys.grad[i]).abs() < 1e-4 * (1.0 + fd.abs()), "{i}: {fd} vs {}", sys.grad[i]);
        }
    }

    #[test]
    fn reported_lambda_attains_the_bound() {
        let p = contiguous(2, 0.1, 0.1);
        let r = clb_bisect(&p).unwrap();
        let ratio = super::super::objective_ratio(&p, &r.lambda_star).unwrap();
        assert!((ratio.value - r.clb).abs() < 2e-3, "{} vs {}", ratio.value, r.clb);
        assert!(r.lambda_star.shift_residual() < 1e-8);
        let [lo, hi] = r.diagnostics.bracket.unwrap();
        assert!(hi - lo <= 1e-3 && lo <= r.clb && r.clb <= hi);
    }

    #[test]
    fn twod_injective_sensor_is_positive() {
        // Radius 0 sees one cell, so the bound matches the single-position case.
        let m = ModelSpec::from_doc(ModelDoc::simple(Discipline::Contiguous2d, 0, PsiSpec::Sum, 0.1, 10.0))
            .unwrap();
        let p = BoundProblem::new(m, 0.2).unwrap();
        let r = clb_bisect(&p).unwrap();
        assert!(r.clb > 0.05, "{}", r.clb);
    }

    #[test]
    fn useless_sensor_has_zero_bound() {
        let m = ModelSpec::from_json(
            r#"{"discipline":"contiguous1d","c":2,"psi":{"kind":"sum"},"noise":{"kind":"matrix","rows":[[0.2,0.3,0.5],[0.2,0.3,0.5],[0.2,0.3,0.5]]}}"#,
        )
        .unwrap();
        let r = clb_bisect(&BoundProblem::new(m, 0.1).unwrap()).unwrap();
        assert_eq!(r.clb, 0.0);
    }
}
