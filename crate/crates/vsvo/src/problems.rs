//! Built-in test problems with analytic Jacobians and, where available,
//! exact solutions for startup and error measurement.

use nalgebra::dvector;

use crate::{ProblemDefinition, State};

/// A problem plus the metadata experiments need: exact solution (when one
/// exists), default integration span and initial state.
pub struct ProblemSpec {
    pub definition: ProblemDefinition,
    exact: Option<Box<dyn Fn(f64) -> State + Send + Sync>>,
    pub default_span: (f64, f64),
    pub default_y0: State,
    pub stiffness_note: &'static str,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.definition.name())
            .field("has_exact", &self.exact.is_some())
            .field("default_span", &self.default_span)
            .finish()
    }
}

impl ProblemSpec {
    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact_at(&self, t: f64) -> Option<State> {
        self.exact.as_ref().map(|f| f(t))
    }

    /// The exact-solution callback, for exact-history startup.
    pub fn exact_fn(&self) -> Option<&(dyn Fn(f64) -> State + Send + Sync)> {
        self.exact.as_deref()
    }
}

/// The Van der Pol oscillator `y1' = y2`, `y2' = mu_bar (1 - y1^2) y2 - y1`.
///
/// The standard stiff benchmark configuration starts at `y0 = (2, 0)` and
/// runs to `t = 3000` with `mu_bar = 1000`. No closed-form solution exists;
/// errors are measured against [`VAN_DER_POL_REFERENCE_T3000`].
pub fn van_der_pol(mu_bar: f64) -> ProblemSpec {
    assert!(mu_bar > 0.0);
    let definition = ProblemDefinition::new("vanderpol", 2, move |_t, y, out| {
        out[0] = y[1];
        out[1] = mu_bar * (1.0 - y[0] * y[0]) * y[1] - y[0];
    })
    .with_jacobian(move |_t, y, out| {
        out[(0, 0)] = 0.0;
        out[(0, 1)] = 1.0;
        out[(1, 0)] = -2.0 * mu_bar * y[0] * y[1] - 1.0;
        out[(1, 1)] = mu_bar * (1.0 - y[0] * y[0]);
    });
    ProblemSpec {
        definition,
        exact: None,
        default_span: (0.0, 3000.0),
        default_y0: dvector![2.0, 0.0],
        stiffness_note: "strongly stiff away from the relaxation jumps for large mu_bar",
    }
}

/// The scalar test equation `y' = lambda y` with exact solution `e^(lambda t)`.
pub fn dahlquist(lambda: f64) -> ProblemSpec {
    let definition = ProblemDefinition::new("dahlquist", 1, move |_t, y, out| {
        out[0] = lambda * y[0];
    })
    .with_jacobian(move |_t, _y, out| out[(0, 0)] = lambda);
    ProblemSpec {
        definition,
        exact: Some(Box::new(move |t| dvector![(lambda * t).exp()])),
        default_span: (0.0, 1.0),
        default_y0: dvector![1.0],
        stiffness_note: "stiffness set by lambda",
    }
}

/// A smooth nonstiff problem with known solution `y = sin t`:
/// `y' = -y + sin t + cos t`, `y(0) = 0`. The substrate for convergence-order
/// measurements.
pub fn manufactured_smooth() -> ProblemSpec {
    let definition = ProblemDefinition::new("manufactured_smooth", 1, |t, y, out| {
        out[0] = -y[0] + t.sin() + t.cos();
    })
    .with_jacobian(|_t, _y, out| out[(0, 0)] = -1.0);
    // Span ends at 3: at t = 5 the leading global error term of the
    // order-4 method happens to cancel, corrupting slope measurements.
    ProblemSpec {
        definition,
        exact: Some(Box::new(|t| dvector![t.sin()])),
        default_span: (0.0, 3.0),
        default_y0: dvector![0.0],
        stiffness_note: "nonstiff",
    }
}

/// Names accepted by [`by_name`].
pub const REGISTRY: &[&str] = &["vanderpol", "dahlquist", "manufactured_smooth"];

/// Looks up a problem by registry name with its default parameters
/// (`mu_bar = 1000`, `lambda = -1`).
pub fn by_name(name: &str) -> Option<ProblemSpec> {
    match name {
        "vanderpol" => Some(van_der_pol(1000.0)),
        "dahlquist" => Some(dahlquist(-1.0)),
        "manufactured_smooth" => Some(manufactured_smooth()),
        _ => None,
    }
}

/// Reference state of the Van der Pol oscillator (`mu_bar = 1000`,
/// `y0 = (2, 0)`) at `t = 3000`.
///
/// Generated in-repo by the fixed-stepsize order-4 filtered method at
/// `k = 1e-5` (3e8 steps) with Newton tolerances of `1e-13`; see
/// `examples/make_reference.rs`. Step-halving against `k = 2e-5` puts the
/// two levels within 4.2e-7 relative of each other, bounding this value's
/// error near 3e-8: error growth through the relaxation jumps keeps plain
/// f64 stepping from doing much better at any stepsize over this span.
pub const VAN_DER_POL_REFERENCE_T3000: [f64; 2] = [-1.510606903812284, 1.1783800664974492e-3];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn van_der_pol_rhs_and_jacobian_at_start() {
        let p = van_der_pol(1000.0);
        let f = p.definition.rhs(0.0, &p.default_y0);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], -2.0);
        let mut jac = nalgebra::DMatrix::zeros(2, 2);
        p.definition.jacobian_into(0.0, &p.default_y0, &f, &mut jac);
        assert_eq!(jac[(0, 0)], 0.0);
        assert_eq!(jac[(0, 1)], 1.0);
        assert_eq!(jac[(1, 0)], -1.0);
        assert_eq!(jac[(1, 1)], -3000.0);
    }

    #[test]
    fn dahlquist_exact_solution() {
        let p = dahlquist(-1.0);
        assert_relative_eq!(
            p.exact_at(1.0).unwrap()[0],
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn registry_lookup() {
        for name in REGISTRY {
            assert!(by_name(name).is_some(), "missing problem {name}");
        }
        assert!(by_name("unknown").is_none());
    }

    /// Central-difference check that each stored exact solution actually
    /// satisfies its ODE.
    #[test]
    fn exact_solutions_satisfy_their_odes() {
        for name in REGISTRY {
            let p = by_name(name).unwrap();
            let Some(exact) = p.exact_fn() else { continue };
            let (t0, t1) = p.default_span;
            let h = 5e-6;
            for i in 0..100 {
                let t = t0 + (i as f64 + 0.5) / 100.0 * (t1 - t0);
                let y = exact(t);
                let f = p.definition.rhs(t, &y);
                let dy = (exact(t + h) - exact(t - h)) / (2.0 * h);
                let err = (dy - &f).norm();
                assert!(
                    err <= 1e-6 * (1.0 + f.norm()),
                    "{name}: residual {err} at t = {t}"
                );
            }
        }
    }
}
