use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{random_coding_exponent, BoundProblem, BoundResult};
use crate::error::{Error, Result};
use crate::model::NoiseSpec;

/// Slack allowed when checking sweep monotonicity.
pub const MONOTONE_TOL: f64 = 1e-3;

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Distortion.
    #[serde(rename = "D")]
    Distortion,
    /// Error probability of the exponential channel.
    #[serde(rename = "noise_p")]
    NoiseP,
    /// Sensor range.
    #[serde(rename = "c")]
    Range,
    /// Rate, reporting the random-coding exponent.
    #[serde(rename = "rate")]
    Rate,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Distortion => "D",
            Axis::NoiseP => "noise_p",
            Axis::Range => "c",
            Axis::Rate => "rate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "D" | "d" | "distortion" => Axis::Distortion,
            "noise_p" | "p" => Axis::NoiseP,
            "c" | "range" => Axis::Range,
            "rate" | "R" => Axis::Rate,
            other => return Err(Error::InvalidArgument(format!("unknown sweep axis `{other}`"))),
        })
    }
}

/// One sweep point. On the rate axis `clb` holds `E_r(R, D)`, `numerator`
/// holds `E(ρ*, λ*)` and `denominator` holds ρ*.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub clb: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub iters: usize,
}

impl From<(f64, &BoundResult)> for SweepRow {
    fn from((value, r): (f64, &BoundResult)) -> Self {
        SweepRow {
            value,
            clb: r.clb,
            numerator: r.numerator,
            denominator: r.denominator,
            iters: r.diagnostics.iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
    /// Full results, one per row (empty on the rate axis).
    pub results: Vec<BoundResult>,
}

impl SweepTable {
    pub const HEADER: &'static str = "axis,value,clb,numerator,denominator,iters";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&self.csv_line(r));
        }
        out
    }

    pub fn csv_line(&self, r: &SweepRow) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{},{},{},{},{},{}",
            self.axis.name(),
            r.value,
            r.clb,
            r.numerator,
            r.denominator,
            r.iters
        )
        .unwrap();
        s
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn clbs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.clb).collect()
    }

    /// clb never drops by more than [`MONOTONE_TOL`] along the sweep.
    pub fn nondecreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].clb >= w[0].clb - MONOTONE_TOL)
    }

    pub fn nonincreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].clb <= w[0].clb + MONOTONE_TOL)
    }

    /// The monotonicity expected on this axis, if any: nondecreasing in D,
    /// nonincreasing in the noise level.
    pub fn monotone(&self) -> Option<bool> {
        match self.axis {
            Axis::Distortion => Some(self.nondecreasing()),
            Axis::NoiseP => Some(self.nonincreasing()),
            _ => None,
        }
    }
}

/// Evaluate the bound (or, on the rate axis, the exponent) at every value.
/// Points run in parallel; the table keeps the input order.
pub fn sweep(problem: &BoundProblem, axis: Axis, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let point = |&v: &f64| -> Result<(SweepRow, Option<BoundResult>)> {
        let at = |model, d| {
            BoundProblem::with_variant(model, d, problem.variant)
                .map(|p| p.options(problem.options.clone()))
        };
        let solved = match axis {
            Axis::Distortion => at(problem.model.clone(), v)?.solve()?,
            Axis::NoiseP => at(problem.model.with_noise_p(v)?, problem.distortion)?.solve()?,
            Axis::Range => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!("range {v} is not a positive integer")));
                }
                at(problem.model.with_range(v as usize)?, problem.distortion)?.solve()?
            }
            Axis::Rate => {
                let e = random_coding_exponent(problem, v)?;
                let row = SweepRow {
                    value: v,
                    clb: e.er_value,
                    numerator: e.e_value,
                    denominator: e.rho,
                    iters: 0,
                };
                return Ok((row, None));
            }
        };
        Ok(((v, &solved).into(), Some(solved)))
    };
    let points: Vec<Result<_>> = values.par_iter().map(point).collect();
    let mut rows = Vec::with_capacity(values.len());
    let mut results = Vec::new();
    for p in points {
        let (row, res) = p?;
        rows.push(row);
        results.extend(res);
    }
    Ok(SweepTable { axis, rows, results })
}

/// Points where two curves sampled on the same grid cross, by linear
/// interpolation of their difference.
pub fn crossings(x: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
    let mut out = Vec::new();
    for i in 1..d.len().min(x.len()) {
        let (d0, d1) = (d[i - 1], d[i]);
        if d0 == 0.0 && i == 1 {
            out.push(x[0]);
        }
        if d1 == 0.0 {
            out.push(x[i]);
        } else if d0 * d1 < 0.0 {
            out.push(x[i - 1] + (x[i] - x[i - 1]) * d0 / (d0 - d1));
        }
    }
    out
}

/// Majority-vote error probability of `m` independent copies with error `p`.
pub fn replication_noise(p: f64, m: usize) -> Result<f64> {
    if m.is_multiple_of(2) {
        return Err(Error::EvenReplication(m));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..=m {
        if j > 0 {
            binom = binom * (m - j + 1) as f64 / j as f64;
        }
        if 2 * j > m {
            total += binom * p.powi(j as i32) * (1.0 - p).powi((m - j) as i32);
        }
    }
    Ok(total)
}

/// Direct versus replicated-with-majority-vote sensing rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub m: usize,
    pub p: f64,
    pub p_eff: f64,
    pub rate_direct: f64,
    pub rate_replicated: f64,
    pub direct: BoundResult,
    pub replicated: BoundResult,
}

/// Compare the bound at noise `p` with `clb(p_eff) / m`.
pub fn replication_comparison(problem: &BoundProblem, m: usize) -> Result<Replication> {
    let doc = problem.model.doc();
    let p = match (&doc.mixture, &doc.noise) {
        (None, Some(NoiseSpec::Exponential { p, .. })) => *p,
        _ => {
            return Err(Error::model(
                "noise",
                "replication needs a single exponential channel",
            ))
        }
    };
    let p_eff = replication_noise(p, m)?;
    let direct = problem.solve()?;
    let replicated = BoundProblem::with_variant(problem.model.with_noise_p(p_eff)?, problem.distortion, problem.variant)?
        .options(problem.options.clone())
        .solve()?;
    Ok(Replication {
        m,
        p,
        p_eff,
        rate_direct: direct.clb,
        rate_replicated: replicated.clb / m as f64,
        direct,
        replicated,
    })
}
