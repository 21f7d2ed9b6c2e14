#![allow(dead_code)]

use rand::Rng;
use senscap_core::model::{Discipline, ModelDoc, ModelSpec, PsiSpec};

pub const DECAYING_WEIGHTS: [f64; 4] = [1.0, 0.5, 0.25, 0.1];

pub fn model(discipline: Discipline, c: usize, psi: PsiSpec, p: f64) -> ModelSpec {
    ModelSpec::from_doc(ModelDoc::simple(discipline, c, psi, p, 10.0)).unwrap()
}

pub fn sum(discipline: Discipline, c: usize, p: f64) -> ModelSpec {
    model(discipline, c, PsiSpec::Sum, p)
}

pub fn weighted(discipline: Discipline, p: f64) -> ModelSpec {
    model(
        discipline,
        4,
        PsiSpec::WeightedSum {
            weights: DECAYING_WEIGHTS.to_vec(),
        },
        p,
    )
}

/// Uniform draw from the probability simplex.
pub fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn random_vector(rng: &mut impl Rng, k: usize, q: usize) -> Vec<u8> {
    (0..k).map(|_| rng.random_range(0..q) as u8).collect()
}

/// Symbols of pattern `index` (first symbol most significant).
pub fn digits(index: usize, q: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    let mut x = index;
    for slot in out.iter_mut().rev() {
        *slot = x % q;
        x /= q;
    }
    out
}

/// Mutual information from an explicit joint pmf over `nx × ny`.
pub fn mutual_information_of_joint(joint: &[f64], nx: usize, ny: usize) -> f64 {
    let px: Vec<f64> = (0..nx).map(|x| (0..ny).map(|y| joint[x * ny + y]).sum()).collect();
    let py: Vec<f64> = (0..ny).map(|y| (0..nx).map(|x| joint[x * ny + y]).sum()).collect();
    let mut mi = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let j = joint[x * ny + y];
            if j > 0.0 {
                mi += j * (j / (px[x] * py[y])).log2();
            }
        }
    }
    mi
}
