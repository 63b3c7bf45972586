//! Small deterministic numeric helpers shared by every module.
//!
//! All reductions here use a fixed pairwise summation order so that results do
//! not depend on chunking or worker counts.

/// Pairwise (tree) summation. Deterministic and more accurate than a left fold.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Arithmetic mean with pairwise summation. Panics on empty input.
pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "mean of empty slice");
    pairwise_sum(xs) / xs.len() as f64
}

/// Numerically stable log(sum_i exp(x_i)) with the max subtracted first.
///
/// Returns `-inf` on an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let shifted: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    m + pairwise_sum(&shifted).ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let prods: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x * y).collect();
    pairwise_sum(&prods)
}

pub fn norm(xs: &[f64]) -> f64 {
    dot(xs, xs).sqrt()
}

/// Squared Euclidean distance between two equal-length slices.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sq: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).collect();
    pairwise_sum(&sq)
}

/// `out = a + s * b`, elementwise.
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

pub fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}
