//! Helpers for flat `f64` state vectors.

/// Plain dot product.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Weighted inner product x' diag(w) y.
pub fn dot_weighted(x: &[f64], w: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), w.len());
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(w).zip(y).map(|((a, wi), b)| a * wi * b).sum()
}

/// Weighted norm sqrt(x' diag(w) x); w must be non-negative.
pub fn norm_weighted(x: &[f64], w: &[f64]) -> f64 {
    dot_weighted(x, w, x).max(0.0).sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// y += alpha * x.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn add_assign(x: &mut [f64], y: &[f64]) {
    axpy(1.0, y, x);
}

pub fn sub_assign(x: &mut [f64], y: &[f64]) {
    axpy(-1.0, y, x);
}

/// Elementwise product, in place on the first argument.
pub fn hadamard_assign(x: &mut [f64], y: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (xi, yi) in x.iter_mut().zip(y) {
        *xi *= yi;
    }
}

/// Mean weighted by w: (w . x) / sum(w).
pub fn weighted_mean(x: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    debug_assert!(total > 0.0);
    dot(x, w) / total
}
