//! Entropy and divergence in bits, with the `0 log 0 = 0` convention.

/// Shannon entropy of a pmf, in bits.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Entropy of a Bernoulli(`u`) variable, in bits.
pub fn binary_entropy(u: f64) -> f64 {
    entropy(&[u, 1.0 - u])
}

/// Kullback-Leibler divergence `D(p||q)` in bits.
///
/// Returns `f64::INFINITY` when `p` puts mass where `q` has none; bound
/// minimization probes such boundary points and needs a value, not an error.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "kl: mismatched supports");
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return f64::INFINITY;
        }
        acc += pi * (pi / qi).log2();
    }
    // Rounding can push a zero divergence slightly negative.
    acc.max(0.0)
}

/// Mutual information `I(X;Y)` for input pmf `input` through a row-stochastic
/// channel `rows[x][y]`.
pub fn mutual_information(input: &[f64], rows: &[Vec<f64>]) -> f64 {
    let ny = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; ny];
    for (px, row) in input.iter().zip(rows) {
        for (o, w) in out.iter_mut().zip(row) {
            *o += px * w;
        }
    }
    let mut mi = 0.0;
    for (px, row) in input.iter().zip(rows) {
        for (w, py) in row.iter().zip(&out) {
            let joint = px * w;
            if joint > 0.0 {
                mi += joint * (w / py).log2();
            }
        }
    }
    mi
}

/// Conditional entropy of the last symbol of a window given the preceding
/// ones, `H(γ̃|γ') = H(γ) − H(γ')`. For order-1 inputs this is plain entropy.
pub trait ConditionalEntropy {
    fn conditional_entropy(&self) -> f64;
}

pub fn conditional_entropy<T: ConditionalEntropy + ?Sized>(t: &T) -> f64 {
    t.conditional_entropy()
}
