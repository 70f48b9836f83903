//! Log-space arithmetic helpers.

/// `ln(Σ exp(x_i))`, stable for large magnitudes. Empty or all `-inf` input
/// gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Index of the largest value; lowest index wins ties. `None` if empty.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if !(x > b) => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Natural log of each entry of a probability vector.
pub fn ln_vec(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&x| x.ln()).collect()
}

/// Normalizes a vector of log-weights so that it exponentiates to sum 1.
/// Returns the log normalizer.
pub fn normalize_in_place(xs: &mut [f64]) -> f64 {
    let z = log_sum_exp(xs);
    if z.is_finite() {
        for x in xs.iter_mut() {
            *x -= z;
        }
    }
    z
}

/// Add-κ smoothed log relative frequencies of a count row.
pub fn smoothed_log_row(counts: &[f64], kappa: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + kappa * counts.len() as f64;
    counts.iter().map(|&c| ((c + kappa) / total).ln()).collect()
}
