use std::f64::consts::TAU;

use rand::Rng;

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Draw an index with probability proportional to `exp(log_weights[i])`.
pub(crate) fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // rounding left u marginally above the running sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Orientation bin of a 2D vector: angle in `[0, 2π)` split into `bins`
/// equal sectors starting at the positive x axis.
pub(crate) fn orientation_bin(dx: f64, dy: f64, bins: usize) -> usize {
    let mut angle = dy.atan2(dx);
    if angle < 0.0 {
        angle += TAU;
    }
    let b = (angle / (TAU / bins as f64)).floor() as usize;
    // angle can round up to exactly TAU
    b.min(bins - 1)
}

/// Index of the maximum, first index wins ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
