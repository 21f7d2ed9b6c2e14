mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_vector, simplex};
use senscap_core::types::{compute_joint_type, compute_type, kl, marginalize};

#[test]
fn joint_marginals_are_the_types() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for c in 1..=3 {
        for circular in [true, false] {
            let vi = random_vector(&mut rng, 30, 2);
            let vj = random_vector(&mut rng, 30, 2);
            let l = compute_joint_type(&vi, &vj, 2, c, circular).unwrap();
            let m = marginalize(&l);
            assert!(m.row.exact_eq(&compute_type(&vi, 2, c, circular).unwrap()));
            assert!(m.col.exact_eq(&compute_type(&vj, 2, c, circular).unwrap()));
        }
    }
}

#[test]
fn circular_joint_types_are_shift_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for c in 2..=4 {
        let vi = random_vector(&mut rng, 25, 2);
        let vj = random_vector(&mut rng, 25, 2);
        let l = compute_joint_type(&vi, &vj, 2, c, true).unwrap();
        assert!(l.shift_residual() < 1e-15, "c={c}: {}", l.shift_residual());
    }
}

#[test]
fn linear_and_circular_types_are_close() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (k, c) in [(10, 2), (20, 3), (40, 4)] {
        let v = random_vector(&mut rng, k, 2);
        let a = compute_type(&v, 2, c, true).unwrap();
        let b = compute_type(&v, 2, c, false).unwrap();
        let tv: f64 = a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
        assert!(tv <= (c - 1) as f64 / k as f64 + 1e-12, "k={k} c={c}: {tv}");
    }
}

#[test]
fn distortion_is_the_hamming_fraction() {
    let l = compute_joint_type(&[0, 1, 1, 0, 1, 0, 0, 0], &[0, 1, 0, 0, 0, 1, 1, 1], 2, 2, true).unwrap();
    assert!((l.distortion() - 5.0 / 8.0).abs() < 1e-15);
}

#[test]
fn relabeling_permutes_the_joint_type() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let vi = random_vector(&mut rng, 16, 3);
    let vj = random_vector(&mut rng, 16, 3);
    let perm = [2u8, 0, 1];
    let relabel = |v: &[u8]| -> Vec<u8> { v.iter().map(|&s| perm[s as usize]).collect() };
    let a = compute_joint_type(&vi, &vj, 3, 1, true).unwrap();
    let b = compute_joint_type(&relabel(&vi), &relabel(&vj), 3, 1, true).unwrap();
    for x in 0..3 {
        for y in 0..3 {
            assert_eq!(a.get(x, y), b.get(perm[x] as usize, perm[y] as usize));
        }
    }
}

proptest! {
    #[test]
    fn divergence_is_nonnegative(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = simplex(&mut rng, n);
        let q = simplex(&mut rng, n);
        prop_assert!(kl(&p, &q) >= -1e-12);
        prop_assert!(kl(&p, &p).abs() < 1e-12);
    }
}
