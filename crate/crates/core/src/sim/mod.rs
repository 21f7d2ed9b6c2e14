//! Monte Carlo validation: random networks from the connection ensembles,
//! noisy observations, and exhaustive-ML or loopy-BP decoding.
//!
//! Every trial derives its own seed from the master seed and its index, so
//! results do not depend on how trials are scheduled across threads.

mod bp;
mod decode;
mod network;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Discipline, ModelSpec};

pub use bp::{decode_bp, BpResult, Factor, FactorGraph, BP_TOL};
pub use decode::{decode_ml, exact_marginals, hard_decisions, Decoder, MAX_EXHAUSTIVE};
pub use network::{draw_targets, encode, generate_network, observe, NetworkRecord, SensorNetwork};

/// z-score of a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Everything about one simulated detection attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub v: Vec<u8>,
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub v_hat: Vec<u8>,
    pub distortion: f64,
    pub error: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

/// Parameters of a batch of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub k: usize,
    pub n: usize,
    #[serde(rename = "D")]
    pub distortion: f64,
    pub trials: usize,
    pub seed: u64,
    pub decoder: Decoder,
}

/// Error-rate estimate with its records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialBatch {
    pub config: TrialConfig,
    pub errors: usize,
    pub error_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub records: Vec<TrialRecord>,
}

impl TrialBatch {
    /// One JSON object per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Wilson score interval for `errors` out of `trials` at 95%.
pub fn wilson_interval(errors: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the endpoints are exact at the extremes; avoid rounding residue there
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Run one trial: fresh network, targets and noise from `seed`.
pub fn run_trial(model: &ModelSpec, config: &TrialConfig, trial: usize, seed: u64) -> Result<TrialRecord> {
    let net = generate_network(model, config.k, config.n, derive_seed(seed, 0))?;
    let v = draw_targets(model, net.positions(), derive_seed(seed, 1));
    let x = encode(&net, &v)?;
    let y = observe(&net, &x, derive_seed(seed, 2))?;
    let (v_hat, iterations, converged) = match config.decoder {
        Decoder::Ml => (decode_ml(&net, &y)?, None, None),
        Decoder::Bp { max_iters, damping } => {
            let r = decode_bp(&FactorGraph::new(&net, &y)?, max_iters, damping)?;
            (r.decision, Some(r.iterations), Some(r.converged))
        }
    };
    let wrong = v.iter().zip(&v_hat).filter(|(a, b)| a != b).count();
    let distortion = wrong as f64 / v.len() as f64;
    Ok(TrialRecord {
        trial,
        seed,
        v,
        x,
        y,
        v_hat,
        distortion,
        error: distortion >= config.distortion,
        iterations,
        converged,
    })
}

/// Independent trials on fresh networks; error ⇔ distortion ≥ D.
pub fn run_trials(model: &ModelSpec, config: &TrialConfig) -> Result<TrialBatch> {
    if config.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.distortion) {
        return Err(Error::InvalidArgument(format!(
            "distortion {} is outside [0, 1]",
            config.distortion
        )));
    }
    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(model, config, t, derive_seed(config.seed, t as u64)))
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let errors = records.iter().filter(|r| r.error).count();
    let (ci_low, ci_high) = wilson_interval(errors, config.trials);
    Ok(TrialBatch {
        config: config.clone(),
        errors,
        error_rate: errors as f64 / config.trials as f64,
        ci_low,
        ci_high,
        records,
    })
}

/// One point of an error-versus-rate curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub n: usize,
    pub rate: f64,
    pub error_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
}

impl CurvePoint {
    pub const HEADER: &'static str = "k,n,rate,error_rate,ci_low,ci_high,trials";

    pub fn csv_line(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            self.k, self.n, self.rate, self.error_rate, self.ci_low, self.ci_high, self.trials
        )
        .unwrap();
        s
    }
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from(CurvePoint::HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&p.csv_line());
    }
    out
}

/// Sensor count giving approximately `rate` targets per sensor.
pub fn sensors_for_rate(model: &ModelSpec, k: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate {rate} must be positive")));
    }
    Ok(((positions(model, k) as f64 / rate).round() as usize).max(1))
}

fn positions(model: &ModelSpec, k: usize) -> usize {
    match model.discipline() {
        Discipline::Contiguous2d => k * k,
        _ => k,
    }
}

/// Master seed of the sweep point at (k index, rate index).
pub fn point_seed(master: u64, k_index: usize, rate_index: usize) -> u64 {
    derive_seed(master, ((k_index as u64) << 32) | rate_index as u64)
}

/// Run one point of an error-versus-rate curve.
pub fn curve_point(
    model: &ModelSpec,
    k: usize,
    rate: f64,
    distortion: f64,
    trials: usize,
    seed: u64,
    decoder: Decoder,
) -> Result<(CurvePoint, TrialBatch)> {
    let n = sensors_for_rate(model, k, rate)?;
    let config = TrialConfig {
        k,
        n,
        distortion,
        trials,
        seed,
        decoder,
    };
    let batch = run_trials(model, &config)?;
    let point = CurvePoint {
        k,
        n,
        rate: positions(model, k) as f64 / n as f64,
        error_rate: batch.error_rate,
        ci_low: batch.ci_low,
        ci_high: batch.ci_high,
        trials,
    };
    Ok((point, batch))
}

/// Error rate over a grid of target sizes and rates. Every point gets its
/// own seed stream; the curve is ordered by k, then by the rate grid.
pub fn sweep_rate(
    model: &ModelSpec,
    ks: &[usize],
    rates: &[f64],
    distortion: f64,
    trials: usize,
    seed: u64,
    decoder: Decoder,
) -> Result<Vec<CurvePoint>> {
    let mut points = Vec::with_capacity(ks.len() * rates.len());
    for (ki, &k) in ks.iter().enumerate() {
        for (ri, &rate) in rates.iter().enumerate() {
            let s = point_seed(seed, ki, ri);
            points.push(curve_point(model, k, rate, distortion, trials, s, decoder)?.0);
        }
    }
    Ok(points)
}

/// Least-squares nondecreasing fit (pool adjacent violators).
pub fn isotonic_fit(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let m = (a * na as f64 + b * nb as f64) / (na + nb) as f64;
            *blocks.last_mut().unwrap() = (m, na + nb);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

/// Largest distance between a curve and its nondecreasing fit.
pub fn isotonic_residual(values: &[f64]) -> f64 {
    isotonic_fit(values)
        .iter()
        .zip(values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Rate span between 20% and 80% error on the isotonic fit of one curve
/// (points sorted by rate internally). `None` if the curve never crosses
/// both levels.
pub fn transition_width(points: &[CurvePoint]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.rate, p.error_rate)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rates: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let fit = isotonic_fit(&pts.iter().map(|p| p.1).collect::<Vec<_>>());
    let cross = |level: f64| -> Option<f64> {
        if fit.first()? >= &level {
            return None;
        }
        let i = fit.iter().position(|&e| e >= level)?;
        let (r0, r1, e0, e1) = (rates[i - 1], rates[i], fit[i - 1], fit[i]);
        Some(r0 + (r1 - r0) * (level - e0) / (e1 - e0))
    };
    Some(cross(0.8)? - cross(0.2)?)
}
