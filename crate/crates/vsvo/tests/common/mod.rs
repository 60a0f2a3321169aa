//! Helpers shared by the integration-test suites.
#![allow(dead_code)] // each test binary uses a different subset

use nalgebra::dvector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vsvo::{ProblemDefinition, State, TimeHistory};

/// A randomized smooth nonlinear two-dimensional system with analytic
/// Jacobian: linear part plus bounded sinusoidal coupling and forcing.
pub fn random_smooth_problem(rng: &mut ChaCha8Rng) -> ProblemDefinition {
    let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.5..0.5));
    let b: [f64; 2] = std::array::from_fn(|_| rng.gen_range(-0.4..0.4));
    let omega = rng.gen_range(0.5..2.0);
    ProblemDefinition::new("random_smooth", 2, move |t, y, out| {
        out[0] = a[0] * y[0] + a[1] * y[1] + b[0] * y[1].sin() + (omega * t).cos();
        out[1] = a[2] * y[0] + a[3] * y[1] + b[1] * y[0].sin() + (omega * t).sin();
    })
    .with_jacobian(move |_t, y, out| {
        out[(0, 0)] = a[0];
        out[(0, 1)] = a[1] + b[0] * y[1].cos();
        out[(1, 0)] = a[2] + b[1] * y[0].cos();
        out[(1, 1)] = a[3];
    })
}

/// A history window with random step ratios in [0.5, 2] and smooth bounded
/// values.
pub fn random_history(rng: &mut ChaCha8Rng, points: usize) -> (TimeHistory, f64) {
    let mut k: f64 = rng.gen_range(0.02..0.1);
    let mut t: f64 = rng.gen_range(-1.0..1.0);
    let mut history = TimeHistory::new(points);
    let phase: f64 = rng.gen_range(0.0..1.0);
    for _ in 0..points {
        let y = dvector![(0.7 * t + phase).sin(), (0.4 * t - phase).cos()];
        history.push(t, y).unwrap();
        k *= rng.gen_range(0.5..2.0);
        t += k;
    }
    let t_new = t;
    (history, t_new)
}

/// Euclidean relative difference against a reference state.
pub fn relative_error(y: &State, reference: &State) -> f64 {
    (y - reference).norm() / reference.norm()
}
