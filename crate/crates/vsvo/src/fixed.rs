//! Constant-stepsize drivers for convergence studies and reference-solution
//! generation.

use crate::coeffs::bdf_and_filter_coefficients;
use crate::stepper::{bdf_step, fbdf_step, DEFAULT_STAB_MU};
use crate::{Error, NewtonConfig, ProblemDefinition, Result, State, TimeHistory};

/// A fixed-order method runnable at constant stepsize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedMethod {
    /// BDFp stage plus the order-raising filter; consistency order `p + 1`.
    Fbdf(usize),
    /// Plain BDFp.
    Bdf(usize),
    /// BDF3 stage plus the stabilizing filter; order 2.
    Bdf3Stab,
}

impl FixedMethod {
    /// Consistency order of the produced values.
    pub fn order(&self) -> usize {
        match self {
            FixedMethod::Fbdf(p) => p + 1,
            FixedMethod::Bdf(p) => *p,
            FixedMethod::Bdf3Stab => 2,
        }
    }

    /// Past points needed in the window (excluding the new slot).
    pub fn past_points(&self) -> usize {
        match self {
            FixedMethod::Fbdf(p) => p + 1,
            FixedMethod::Bdf(p) => *p,
            FixedMethod::Bdf3Stab => 3,
        }
    }

    pub fn label(&self) -> String {
        match self {
            FixedMethod::Fbdf(p) => format!("FBDF{}", p + 1),
            FixedMethod::Bdf(p) => format!("BDF{p}"),
            FixedMethod::Bdf3Stab => "BDF3-Stab".to_string(),
        }
    }

    /// Parses labels as produced by [`Self::label`].
    pub fn parse(s: &str) -> Option<FixedMethod> {
        match s {
            "BDF3-Stab" => Some(FixedMethod::Bdf3Stab),
            _ => {
                let (kind, digit) = s.split_at(s.len().saturating_sub(1));
                let p: usize = digit.parse().ok()?;
                match kind {
                    "FBDF" if (2..=6).contains(&p) => Some(FixedMethod::Fbdf(p - 1)),
                    "BDF" if (1..=5).contains(&p) => Some(FixedMethod::Bdf(p)),
                    _ => None,
                }
            }
        }
    }
}

/// The four methods compared in convergence studies.
pub const CONVERGENCE_METHODS: [FixedMethod; 4] = [
    FixedMethod::Fbdf(1),
    FixedMethod::Bdf(3),
    FixedMethod::Bdf3Stab,
    FixedMethod::Fbdf(3),
];

/// Samples an exact solution at `n` points spaced `k` starting at `t0`.
pub fn exact_history(
    exact: &(dyn Fn(f64) -> State + Sync),
    t0: f64,
    k: f64,
    n: usize,
) -> Result<TimeHistory> {
    TimeHistory::from_pairs(
        n,
        (0..n).map(|i| {
            let t = t0 + i as f64 * k;
            (t, exact(t))
        }),
    )
}

/// Outcome of a fixed-step integration.
#[derive(Debug, Clone)]
pub struct FixedRun {
    pub t: f64,
    pub y: State,
    pub steps: usize,
    pub rhs_evals: usize,
}

/// Integrates from the given window to `t_end` at constant stepsize `k`
/// (the final step is shortened to land exactly on `t_end`).
///
/// `mu` is the stabilizing filter weight, used only by
/// [`FixedMethod::Bdf3Stab`].
pub fn integrate_fixed(
    problem: &ProblemDefinition,
    history: TimeHistory,
    t_end: f64,
    k: f64,
    method: FixedMethod,
    mu: Option<f64>,
    newton: &NewtonConfig,
) -> Result<FixedRun> {
    if !(k > 0.0) {
        return Err(Error::InvalidConfig("stepsize must be positive".into()));
    }
    let need = method.past_points();
    if history.len() < need {
        return Err(Error::WindowTooShort {
            need,
            got: history.len(),
        });
    }
    if history.last_time().unwrap() >= t_end {
        return Err(Error::InvalidConfig(
            "starting window already reaches t_end; decrease k".into(),
        ));
    }
    let mut history = history;
    let mut steps = 0usize;
    let mut rhs_evals = 0usize;
    let mu = mu.unwrap_or(DEFAULT_STAB_MU);
    // Step on the exact grid t_start + i*k to keep times free of
    // accumulated rounding; the final step lands on t_end and absorbs up to
    // a quarter step of slack, so it is never microscopic.
    let t_start = history.last_time().unwrap();
    let mut i: u64 = 0;
    loop {
        let t_last = history.last_time().unwrap();
        let remaining = t_end - t_last;
        if remaining <= t_end.abs().max(1.0) * f64::EPSILON * 4.0 {
            break;
        }
        i += 1;
        let on_grid = t_start + i as f64 * k;
        let t_new = if on_grid >= t_end - 0.25 * k {
            t_end
        } else {
            on_grid
        };
        let (y, diag) = match method {
            FixedMethod::Fbdf(p) => {
                let r = fbdf_step(problem, &history, t_new, p, newton)?;
                (r.y_high, r.newton)
            }
            FixedMethod::Bdf(p) => bdf_step(problem, &history, t_new, p, newton)?,
            FixedMethod::Bdf3Stab => {
                let (y3, diag) = bdf_step(problem, &history, t_new, 3, newton)?;
                let times = history.window_times_with(t_new);
                let coeffs = bdf_and_filter_coefficients(&times, 3)?;
                // delta^3 touches only the last three past values; the row's
                // leading zeros handle longer windows.
                let d3 = coeffs.table().apply_with_top(3, history.values(), &y3);
                let y2 = &y3 + &d3 * coeffs.stab_scale(mu)?;
                (y2, diag)
            }
        };
        rhs_evals += diag.rhs_evals;
        if !diag.converged {
            return Err(Error::Integration {
                t: t_new,
                reason: format!("{} stage solve failed", method.label()),
                trace: Box::default(),
            });
        }
        history.push(t_new, y)?;
        steps += 1;
    }
    Ok(FixedRun {
        t: history.last_time().unwrap(),
        y: history.last_value().unwrap().clone(),
        steps,
        rhs_evals,
    })
}

/// Least-squares slope of `ln(err)` against `ln(k)`.
pub fn log_log_slope(ks: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(k, e)| (k.ln(), e.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Fixed-step relative error at `t_end` against the exact solution, starting
/// from exact history.
pub fn fixed_step_error(
    spec: &crate::problems::ProblemSpec,
    method: FixedMethod,
    k: f64,
    t_span: (f64, f64),
    newton: &NewtonConfig,
) -> Result<f64> {
    let exact = spec
        .exact_fn()
        .ok_or_else(|| Error::NoExactSolution(spec.definition.name().to_string()))?;
    let history = exact_history(exact, t_span.0, k, method.past_points())?;
    let run = integrate_fixed(&spec.definition, history, t_span.1, k, method, None, newton)?;
    let reference = exact(t_span.1);
    Ok((run.y - &reference).norm() / reference.norm().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;

    #[test]
    fn labels_round_trip() {
        for m in [
            FixedMethod::Fbdf(1),
            FixedMethod::Fbdf(3),
            FixedMethod::Bdf(3),
            FixedMethod::Bdf3Stab,
        ] {
            assert_eq!(FixedMethod::parse(&m.label()), Some(m));
        }
        assert_eq!(FixedMethod::parse("FBDF7"), None);
    }

    #[test]
    fn observed_orders_on_the_smooth_problem() {
        let spec = problems::manufactured_smooth();
        let newton = NewtonConfig::default();
        let ks: Vec<f64> = (0..5).map(|i| 0.1 / f64::powi(2.0, i)).collect();
        for (method, expected) in [
            (FixedMethod::Fbdf(1), 2.0),
            (FixedMethod::Bdf(3), 3.0),
            (FixedMethod::Bdf3Stab, 2.0),
            (FixedMethod::Fbdf(3), 4.0),
        ] {
            let errs: Vec<f64> = ks
                .iter()
                .map(|&k| fixed_step_error(&spec, method, k, spec.default_span, &newton).unwrap())
                .collect();
            let slope = log_log_slope(&ks, &errs);
            assert!(
                (slope - expected).abs() <= 0.2,
                "{}: slope {slope}, expected {expected}; errors {errs:?}",
                method.label()
            );
        }
    }

    #[test]
    fn bdf3_is_third_order_on_the_decay_problem() {
        let spec = problems::dahlquist(-1.0);
        let newton = NewtonConfig::default();
        let ks: Vec<f64> = (0..5).map(|i| 0.05 / f64::powi(2.0, i)).collect();
        let errs: Vec<f64> = ks
            .iter()
            .map(|&k| fixed_step_error(&spec, FixedMethod::Bdf(3), k, (0.0, 1.0), &newton).unwrap())
            .collect();
        let slope = log_log_slope(&ks, &errs);
        assert!((slope - 3.0).abs() <= 0.2, "slope {slope}");
    }
}
