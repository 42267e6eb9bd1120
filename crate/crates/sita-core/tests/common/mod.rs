//! Shared oracles for the integration suites. Everything here recomputes
//! quantities from first principles, independent of the library internals it
//! checks.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sita_core::math::Embedding;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Central finite differences of a scalar function at `point`.
pub fn finite_diff<F>(mut f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grads = Vec::with_capacity(point.len());
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + h;
        let plus = f(&x);
        x[i] = point[i] - h;
        let minus = f(&x);
        x[i] = point[i];
        grads.push((plus - minus) / (2.0 * h));
    }
    grads
}

/// Relative error between an analytic and a numeric gradient entry. The
/// denominator floor matches the noise floor of central differences at
/// h = 1e-5: entries below it are numerically zero on both sides.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

pub fn assert_grad_close(analytic: &[f64], numeric: &[f64], context: &str) {
    assert_eq!(analytic.len(), numeric.len(), "{context}: length mismatch");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let err = rel_err(a, n);
        assert!(
            err < FD_TOLERANCE,
            "{context}[{i}]: analytic {a} vs numeric {n} (rel err {err:.2e})"
        );
    }
}

pub fn random_unit_embedding(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    loop {
        let values: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(e) = Embedding::new_normalized(values) {
            return e;
        }
    }
}

/// Random logits with one row per frame.
pub fn random_logits(rng: &mut ChaCha8Rng, frames: usize, width: usize) -> Vec<Vec<f64>> {
    (0..frames)
        .map(|_| (0..width).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

/// Row-wise log-softmax, the oracle-side counterpart of the model path.
pub fn log_softmax_rows(logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter().map(|v| v - lse).collect()
        })
        .collect()
}
