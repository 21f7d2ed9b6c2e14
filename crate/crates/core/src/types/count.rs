//! Sizes of conditional type classes `T_{λ|γ}`: the number of vectors that
//! have joint type λ with a fixed reference vector of type γ.

use serde::{Deserialize, Serialize};

use super::info::ConditionalEntropy;
use super::{pattern_count, Layout};
use super::{window_indices, JointType};
use crate::error::{Error, Result};

/// Exhaustive enumeration is capped at `|V|^k <= 2^24` candidates.
const MAX_ENUMERATION: u64 = 1 << 24;

/// Upper bound on `|T_{λ|γ}|` in bits, optionally with an exact count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountBound {
    /// Exponential part, `k (H(λ̃|λ') − H(γ̃|γ'))`.
    pub log2_count_upper: f64,
    /// `log2 C(k)`; zero for order-1 types, where the bound needs no slack.
    pub polynomial_factor_log2: f64,
    pub exact_count: Option<u128>,
}

impl CountBound {
    pub fn with_exact(mut self, count: u128) -> Self {
        self.exact_count = Some(count);
        self
    }

    /// Whether the exact count (if known) respects the bound.
    pub fn holds(&self) -> bool {
        match self.exact_count {
            Some(0) => true,
            Some(n) => {
                (n as f64).log2() <= self.log2_count_upper + self.polynomial_factor_log2 + 1e-9
            }
            None => true,
        }
    }
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// `n! / Π parts!` as a product of binomials.
fn multinomial(parts: &[u64]) -> Option<u128> {
    let mut remaining: u64 = parts.iter().sum();
    let mut acc: u128 = 1;
    for &p in parts {
        acc = acc.checked_mul(binomial(remaining, p)?)?;
        remaining -= p;
    }
    Some(acc)
}

/// `log2 C(k)` with `C(k) = A² k^A (k+1)^{A²}` for `A = |V|^{c−1}`; for
/// binary alphabets this is `2^{2(c−1)} k^{2^{c−1}} (k+1)^{2^{2(c−1)}}`.
fn polynomial_factor_log2(k: u64, order: usize, alphabet: usize) -> f64 {
    if order == 1 {
        return 0.0;
    }
    let a = pattern_count(alphabet, order - 1) as f64;
    let k = k as f64;
    2.0 * a.log2() + a * k.log2() + a * a * (k + 1.0).log2()
}

/// Bound the size of the conditional type class of an exact joint type.
///
/// For order 1 the class size is the multinomial
/// `Π_a (kγ_a)! / Π_b (kλ_ab)!` (two binomials for binary alphabets), which
/// is filled in as the exact count; for higher orders the exact count is left
/// to [`enumerate_type_class`].
pub fn count_type_classes(lambda: &JointType) -> Result<CountBound> {
    let k = lambda.denominator().ok_or(Error::NonExactType)?;
    let gamma = lambda.row_marginal();
    let gap = lambda.conditional_entropy() - gamma.conditional_entropy();
    let mut bound = CountBound {
        log2_count_upper: k as f64 * gap,
        polynomial_factor_log2: polynomial_factor_log2(k, lambda.order(), lambda.alphabet()),
        exact_count: None,
    };
    if lambda.order() == 1 {
        let counts = lambda.counts().expect("exact type has counts");
        let q = lambda.alphabet();
        let exact = counts
            .chunks(q)
            .try_fold(1u128, |acc, row| acc.checked_mul(multinomial(row)?));
        bound.exact_count = exact;
    }
    Ok(bound)
}

/// Result of an exhaustive scan over partner vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enumeration {
    pub count: u64,
    pub members: Option<Vec<Vec<u8>>>,
}

/// Count every vector `v_j` whose joint type with `reference` equals λ.
///
/// The window convention (circular or linear) is taken from λ's layout.
pub fn enumerate_type_class(
    reference: &[u8],
    lambda: &JointType,
    collect: bool,
) -> Result<Enumeration> {
    let k = reference.len();
    if k == 0 {
        return Err(Error::EmptyVector);
    }
    let q = lambda.alphabet();
    let order = lambda.order();
    let candidates = (q as u64)
        .checked_pow(k as u32)
        .filter(|&n| n <= MAX_ENUMERATION && k <= 24)
        .ok_or_else(|| {
            Error::InstanceTooLarge(format!("{q}^{k} candidates exceed the 2^24 scan limit"))
        })?;
    let circular = match lambda.layout() {
        Layout::Circular => true,
        Layout::Linear => false,
        Layout::Stencil => {
            return Err(Error::InvalidArgument(
                "stencil joint types cannot be enumerated over 1D vectors".into(),
            ))
        }
    };
    super::check_order(k, order)?;
    super::check_symbols(reference, q)?;
    let windows = if circular { k } else { k + 1 - order };
    let target = match lambda.denominator() {
        Some(d) if d as usize == windows => lambda.counts().unwrap(),
        _ => {
            let scaled: Vec<f64> = lambda.probs().iter().map(|p| p * windows as f64).collect();
            if scaled.iter().any(|s| (s - s.round()).abs() > 1e-9) {
                // No vector of this length can realize λ.
                return Ok(Enumeration {
                    count: 0,
                    members: collect.then(Vec::new),
                });
            }
            scaled.iter().map(|s| s.round() as u64).collect()
        }
    };
    let side = pattern_count(q, order);
    let ref_windows = window_indices(reference, q, order, circular);

    let mut count = 0u64;
    let mut members = collect.then(Vec::new);
    let mut candidate = vec![0u8; k];
    let mut hist = vec![0u64; side * side];
    for code in 0..candidates {
        let mut rest = code;
        for slot in candidate.iter_mut().rev() {
            *slot = (rest % q as u64) as u8;
            rest /= q as u64;
        }
        hist.iter_mut().for_each(|h| *h = 0);
        let mut ok = true;
        for (start, &a) in ref_windows.iter().enumerate() {
            let b = (0..order).fold(0, |acc, u| acc * q + candidate[(start + u) % k] as usize);
            let cell = &mut hist[a * side + b];
            *cell += 1;
            if *cell > target[a * side + b] {
                ok = false;
                break;
            }
        }
        if ok {
            count += 1;
            if let Some(m) = members.as_mut() {
                m.push(candidate.clone());
            }
        }
    }
    Ok(Enumeration { count, members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{compute_joint_type, parse_symbols};

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 4), Some(1));
        assert_eq!(binomial(3, 2), Some(3));
        assert_eq!(binomial(10, 3), Some(120));
        assert_eq!(binomial(2, 3), Some(0));
        assert_eq!(multinomial(&[2, 1, 1]), Some(12));
    }

    #[test]
    fn order_one_count_matches_binomial_product() {
        let vi = parse_symbols("0010110").unwrap();
        let vj = parse_symbols("0000110").unwrap();
        let l = compute_joint_type(&vi, &vj, 2, 1, true).unwrap();
        let b = count_type_classes(&l).unwrap();
        // C(4,4) * C(3,2)
        assert_eq!(b.exact_count, Some(3));
        assert!(b.holds());
        let e = enumerate_type_class(&vi, &l, true).unwrap();
        assert_eq!(e.count, 3);
        assert!(e.members.unwrap().contains(&vj));
    }

    #[test]
    fn self_joint_class_is_singleton() {
        let vi = parse_symbols("0010110").unwrap();
        let l = compute_joint_type(&vi, &vi, 2, 1, true).unwrap();
        let b = count_type_classes(&l).unwrap();
        assert_eq!(b.exact_count, Some(1));
        assert!(b.log2_count_upper >= -1e-12);
        assert_eq!(enumerate_type_class(&vi, &l, false).unwrap().count, 1);
    }

    #[test]
    fn relaxed_type_is_rejected() {
        let l = JointType::new(1, 2, vec![0.25; 4], Layout::Circular).unwrap();
        assert_eq!(count_type_classes(&l), Err(Error::NonExactType));
    }

    #[test]
    fn enumeration_guard() {
        let r = vec![0u8; 25];
        let l = compute_joint_type(&r, &r, 2, 1, true).unwrap();
        assert!(matches!(
            enumerate_type_class(&r, &l, false),
            Err(Error::InstanceTooLarge(_))
        ));
    }
}
