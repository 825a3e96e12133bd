#![allow(dead_code)]

use erg_core::model::{ConstraintRow, ConstraintSet, DelaySystem, PrimaryGain};
use erg_core::sim::ClosedLoop;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const A: f64 = -0.82;
pub const B: f64 = 0.7279;
pub const TAU: f64 = 0.8;
pub const BOUND: f64 = 26.6;

pub fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

pub fn m1(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

pub fn flow_loop(k: f64) -> ClosedLoop<f64> {
    ClosedLoop::new(DelaySystem::scalar(A, B, TAU).unwrap(), PrimaryGain::scalar(k)).unwrap()
}

/// `x ≤ 26.6`.
pub fn flow_constraints() -> ConstraintSet<f64> {
    ConstraintSet::new(vec![ConstraintRow::new(v1(-1.0), v1(0.0), BOUND).unwrap()], 1, 1).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Symmetric positive definite with eigenvalues roughly in `[0.1, 1 + scale²·n]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let l = random_matrix(rng, n, n, 1.0);
    &l * l.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Smooth random history `x̄ + Σ a_j sin(ω_j θ + φ_j)` sampled on `[−span, 0]`.
pub fn wavy_history(rng: &mut ChaCha8Rng, center: &DVector<f64>, amplitude: f64, dt: f64, span: f64) -> Vec<DVector<f64>> {
    let n = center.len();
    let modes: Vec<(DVector<f64>, f64, f64)> = (0..3)
        .map(|_| (random_vector(rng, n, amplitude), rng.gen_range(0.2..4.0), rng.gen_range(0.0..6.3)))
        .collect();
    let steps = (span / dt).round() as i64;
    (-steps..=0)
        .map(|i| {
            let th = i as f64 * dt;
            let mut x = center.clone();
            for (a, w, phi) in &modes {
                x += a * (w * th + phi).sin();
            }
            x
        })
        .collect()
}
