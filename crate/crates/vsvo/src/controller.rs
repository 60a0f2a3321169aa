//! The adaptive order/stepsize loop: order selection among the embedded
//! candidates, stepsize selection from the chosen estimate, rejection and
//! retry, startup, and exact landing on the final time.

use std::time::Instant;

use crate::stepper::{
    bdf_step, embedded_step, fbdf_step, EmbeddedConfig, ErrorNorm, Est4Mode, EstNorms, OrderSet,
    StabFilterConfig,
};
use crate::{Error, NewtonConfig, ProblemDefinition, Result, State, TimeHistory};

/// Estimates this small are floored before entering the power law so the
/// ratio cap binds instead of the exponent overflowing.
const EST_FLOOR: f64 = 1e-300;

/// Tuning of the adaptive loop.
#[derive(Debug, Clone, Copy)]
pub struct ControllerConfig {
    /// Local error tolerance; accepted candidates satisfy `|Est_j| < epsilon`.
    pub epsilon: f64,
    /// Safety factor on the stepsize growth law.
    pub gamma: f64,
    /// Safety factor applied when recomputing a rejected step.
    pub gamma_tilde: f64,
    /// Stepsize may grow by at most this factor per step.
    pub ratio_max: f64,
    /// Stepsize may shrink by at most this factor per attempt.
    pub ratio_min: f64,
    /// Candidate orders the controller may select.
    pub orders: OrderSet,
    pub k_init: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Consecutive rejections before the integration is abandoned.
    pub max_rejections: usize,
    pub stab: StabFilterConfig,
    pub newton: NewtonConfig,
    pub est4_mode: Est4Mode,
    pub norm: ErrorNorm,
}

impl ControllerConfig {
    pub fn new(epsilon: f64) -> Self {
        ControllerConfig {
            epsilon,
            gamma: 0.9,
            gamma_tilde: 0.7,
            ratio_max: 2.0,
            ratio_min: 0.5,
            orders: OrderSet::all(),
            k_init: 1e-3,
            k_min: 1e-12,
            k_max: f64::INFINITY,
            max_rejections: 20,
            stab: StabFilterConfig::default(),
            newton: NewtonConfig::default(),
            est4_mode: Est4Mode::Difference,
            norm: ErrorNorm::Euclidean,
        }
    }

    pub fn with_orders(mut self, orders: OrderSet) -> Self {
        self.orders = orders;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(0.0 < self.gamma_tilde && self.gamma_tilde <= self.gamma && self.gamma <= 1.0) {
            return bad("need 0 < gamma_tilde <= gamma <= 1");
        }
        if !(self.ratio_min < 1.0 && 1.0 < self.ratio_max) {
            return bad("ratio bounds must bracket 1");
        }
        if self.orders.is_empty() {
            return bad("at least one order must be enabled");
        }
        if !(self.k_init > 0.0 && self.k_min > 0.0 && self.k_max >= self.k_min) {
            return bad("stepsize bounds must be positive with k_min <= k_max");
        }
        Ok(())
    }

    fn embedded(&self) -> EmbeddedConfig {
        EmbeddedConfig {
            orders: self.orders,
            stab: self.stab,
            newton: self.newton,
            est4_mode: self.est4_mode,
            norm: self.norm,
        }
    }
}

/// How the four-point starting window is produced.
pub enum StartupMode<'a> {
    /// Sample a known solution at spacings of `k_init`.
    Exact(&'a (dyn Fn(f64) -> State + Sync)),
    /// Self-start: one backward Euler step at `k_init / 8`, a filtered
    /// second-order step at `k_init / 4`, then a BDF3 step at `k_init / 2`.
    Ramp,
}

/// One attempted step, accepted or not.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StepRecord {
    /// Trial time of the attempt.
    pub t: f64,
    /// Stepsize of the attempt.
    pub k: f64,
    /// Chosen order; `None` for rejections.
    pub order: Option<u8>,
    pub est2: Option<f64>,
    pub est3: Option<f64>,
    pub est4: Option<f64>,
    pub accepted: bool,
    pub newton_iterations: usize,
    pub newton_converged: bool,
}

/// Work counters for one integration.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct WorkTotals {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Implicit solves in the stepping loop; one per attempt.
    pub stage_solves: usize,
    /// Implicit solves spent building the starting window.
    pub startup_solves: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
}

/// Per-step records plus totals.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct IntegrationTrace {
    pub records: Vec<StepRecord>,
    pub totals: WorkTotals,
    /// Wall time of the stepping loop only (startup excluded). Not
    /// deterministic; everything else in the trace is.
    pub stepping_seconds: f64,
}

/// Final state and the full trace of an integration.
#[derive(Debug, Clone)]
pub struct Integration {
    pub t: f64,
    pub y: State,
    pub trace: IntegrationTrace,
}

/// Picks the order allowing the largest next step among candidates that meet
/// the tolerance: `argmax_j (epsilon / |Est_j|)^(1/(j+1))`. Ties go to the
/// higher order. Returns `None` when no enabled candidate qualifies.
pub fn select_order(est: &EstNorms, epsilon: f64, orders: OrderSet) -> Option<u8> {
    let mut best: Option<(u8, f64)> = None;
    for j in orders.iter() {
        let Some(e) = est.get(j) else { continue };
        if !e.is_finite() || e >= epsilon {
            continue;
        }
        let factor = (epsilon / e.max(EST_FLOOR)).powf(1.0 / (j as f64 + 1.0));
        match best {
            Some((_, f)) if factor < f => {}
            _ => best = Some((j, factor)),
        }
    }
    best.map(|(j, _)| j)
}

/// Stepsize growth law `k_next = gamma * k * (epsilon / |Est_j|)^(1/(j+1))`,
/// clamped to the per-step ratio bounds and then to the absolute bounds.
pub fn next_stepsize(k: f64, est_j: f64, j: u8, config: &ControllerConfig) -> f64 {
    let factor = (config.epsilon / est_j.max(EST_FLOOR)).powf(1.0 / (j as f64 + 1.0));
    let raw = config.gamma * k * factor;
    raw.clamp(config.ratio_min * k, config.ratio_max * k)
        .clamp(config.k_min, config.k_max)
}

/// Retry stepsize after a rejected step: the most optimistic of the enabled
/// estimates under the rejection safety factor, never shrinking below
/// `ratio_min * k`.
pub fn reject_and_retry(k: f64, est: &EstNorms, config: &ControllerConfig) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for j in config.orders.iter() {
        let Some(e) = est.get(j) else { continue };
        if !e.is_finite() {
            continue;
        }
        let factor = (config.epsilon / e.max(EST_FLOOR)).powf(1.0 / (j as f64 + 1.0));
        best = best.max(config.gamma_tilde * k * factor);
    }
    if !best.is_finite() {
        // No estimate available (e.g. the stage solve failed): halve.
        best = config.ratio_min * k;
    }
    best.max(config.ratio_min * k).min(k)
}

/// Builds the four-point starting window at `t0`.
pub fn startup(
    problem: &ProblemDefinition,
    t0: f64,
    y0: &State,
    mode: StartupMode,
    config: &ControllerConfig,
) -> Result<(TimeHistory, WorkTotals)> {
    config.validate()?;
    let mut totals = WorkTotals::default();
    let mut history = TimeHistory::new(4);
    match mode {
        StartupMode::Exact(exact) => {
            for i in 0..4 {
                let t = t0 + i as f64 * config.k_init;
                history.push(t, exact(t))?;
            }
        }
        StartupMode::Ramp => {
            history.push(t0, y0.clone())?;
            // One backward Euler step, one filtered second-order step, one
            // BDF3 step; ratios along the ramp are exactly two.
            for (frac, p, filtered) in [(0.125, 1usize, false), (0.25, 1, true), (0.5, 3, false)] {
                let t_new = history.last_time().unwrap() + frac * config.k_init;
                let (y, diag) = if filtered {
                    let r = fbdf_step(problem, &history, t_new, p, &config.newton)?;
                    (r.y_high, r.newton)
                } else {
                    bdf_step(problem, &history, t_new, p, &config.newton)?
                };
                totals.startup_solves += 1;
                totals.rhs_evals += diag.rhs_evals;
                totals.jacobian_evals += diag.jacobian_evals;
                if !diag.converged {
                    return Err(Error::Integration {
                        t: t_new,
                        reason: "stage solve failed during self-starting ramp".into(),
                        trace: Box::default(),
                    });
                }
                history.push(t_new, y)?;
            }
        }
    }
    Ok((history, totals))
}

/// Integrates from a prebuilt four-point window to `t_end`.
pub fn integrate_from_history(
    problem: &ProblemDefinition,
    history: TimeHistory,
    t_end: f64,
    config: &ControllerConfig,
) -> Result<Integration> {
    config.validate()?;
    let mut history = history;
    if history.len() != 4 {
        return Err(Error::WindowTooShort {
            need: 4,
            got: history.len(),
        });
    }
    let mut trace = IntegrationTrace::default();
    let mut k = config.k_init.clamp(config.k_min, config.k_max);
    let mut consecutive_rejections = 0usize;
    // Reference for the accepted-pair ratio bound; retries early in a
    // rejection chain are floored against it so consecutive accepted steps
    // keep 0.5 <= k_{i+1}/k_i <= 2.
    let mut k_accepted = history.stepsizes().last().copied().unwrap_or(k);
    let embedded_config = config.embedded();

    let fail = |t: f64, reason: &str, trace: IntegrationTrace| Error::Integration {
        t,
        reason: reason.into(),
        trace: Box::new(trace),
    };

    let clock = Instant::now();
    loop {
        let t_last = history.last_time().unwrap();
        let remaining = t_end - t_last;
        if remaining <= t_end.abs().max(1.0) * f64::EPSILON * 4.0 {
            break;
        }
        // Land exactly on t_end; the landing step is exempt from the ratio
        // bounds but its estimates are still enforced. The small slack folds
        // rounding dust into the landing step instead of taking a
        // microscopic extra step.
        let landing = remaining <= k * (1.0 + 1e-6);
        let k_step = if landing { remaining } else { k };
        let t_new = t_last + k_step;

        let result = embedded_step(problem, &history, t_new, &embedded_config)?;
        trace.totals.stage_solves += 1;
        trace.totals.rhs_evals += result.newton.rhs_evals + result.extra_rhs_evals;
        trace.totals.jacobian_evals += result.newton.jacobian_evals;

        let solver_ok = result.newton.converged && result.y3.iter().all(|v| v.is_finite());
        let chosen = if solver_ok {
            select_order(&result.est_norms, config.epsilon, config.orders)
        } else {
            None
        };

        trace.records.push(StepRecord {
            t: t_new,
            k: k_step,
            order: chosen,
            est2: result.est_norms.est2,
            est3: result.est_norms.est3,
            est4: result.est_norms.est4,
            accepted: chosen.is_some(),
            newton_iterations: result.newton.iterations,
            newton_converged: result.newton.converged,
        });

        match chosen {
            Some(j) => {
                consecutive_rejections = 0;
                let y = result
                    .candidate(j)
                    .expect("selected candidate exists")
                    .clone();
                history.push(t_new, y)?;
                trace.totals.accepted_steps += 1;
                k_accepted = k_step;
                let est_j = result.est_norms.get(j).unwrap();
                k = next_stepsize(k_step, est_j, j, config);
            }
            None => {
                trace.totals.rejected_steps += 1;
                consecutive_rejections += 1;
                if consecutive_rejections > config.max_rejections {
                    trace.stepping_seconds = clock.elapsed().as_secs_f64();
                    return Err(fail(
                        t_new,
                        &format!("{} consecutive rejections", consecutive_rejections),
                        trace,
                    ));
                }
                let base_retry = if solver_ok {
                    reject_and_retry(k_step, &result.est_norms, config)
                } else {
                    config.ratio_min * k_step
                };
                // Short rejection chains keep the next accepted step within
                // the ratio bound of the last accepted one; long chains drop
                // that floor so the stepsize can keep shrinking.
                let mut k_retry = base_retry;
                if consecutive_rejections < 3 {
                    k_retry = k_retry.max(config.ratio_min * k_accepted);
                    if k_retry >= k_step {
                        k_retry = base_retry; // never repeat an attempt
                    }
                }
                if k_retry < config.k_min {
                    trace.stepping_seconds = clock.elapsed().as_secs_f64();
                    let reason = if solver_ok {
                        "stepsize underflow below k_min"
                    } else {
                        "nonlinear solver failure at minimum stepsize"
                    };
                    return Err(fail(t_new, reason, trace));
                }
                k = k_retry;
            }
        }
    }
    trace.stepping_seconds = clock.elapsed().as_secs_f64();

    Ok(Integration {
        t: history.last_time().unwrap(),
        y: history.last_value().unwrap().clone(),
        trace,
    })
}

/// Full integration: startup then the adaptive loop over `t_span`.
pub fn integrate(
    problem: &ProblemDefinition,
    y0: &State,
    t_span: (f64, f64),
    mode: StartupMode,
    config: &ControllerConfig,
) -> Result<Integration> {
    let (t0, t_end) = t_span;
    if !(t_end > t0) {
        return Err(Error::InvalidConfig("t_span must have t_end > t0".into()));
    }
    let (history, startup_totals) = startup(problem, t0, y0, mode, config)?;
    if history.last_time().unwrap() >= t_end {
        return Err(Error::InvalidConfig(
            "startup window already reaches past t_end; decrease k_init".into(),
        ));
    }
    let mut integration =
        integrate_from_history(problem, history, t_end, config).map_err(|e| match e {
            Error::Integration {
                t,
                reason,
                mut trace,
            } => {
                trace.totals.startup_solves = startup_totals.startup_solves;
                trace.totals.rhs_evals += startup_totals.rhs_evals;
                trace.totals.jacobian_evals += startup_totals.jacobian_evals;
                Error::Integration { t, reason, trace }
            }
            other => other,
        })?;
    integration.trace.totals.startup_solves = startup_totals.startup_solves;
    integration.trace.totals.rhs_evals += startup_totals.rhs_evals;
    integration.trace.totals.jacobian_evals += startup_totals.jacobian_evals;
    Ok(integration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;
    use approx::assert_relative_eq;

    #[test]
    fn order_selection_prefers_the_largest_growth_factor() {
        let est = EstNorms {
            est2: Some(1e-3),
            est3: Some(5e-6),
            est4: Some(2e-5),
        };
        // factors: order 3 -> 20^(1/4) ~ 2.115, order 4 -> 5^(1/5) ~ 1.380.
        assert_eq!(select_order(&est, 1e-4, OrderSet::all()), Some(3));
    }

    #[test]
    fn order_selection_rejects_when_nothing_qualifies() {
        let est = EstNorms {
            est2: Some(1.0),
            est3: Some(2.0),
            est4: Some(3.0),
        };
        assert_eq!(select_order(&est, 1e-4, OrderSet::all()), None);
    }

    #[test]
    fn order_selection_respects_the_enabled_subset() {
        let est = EstNorms {
            est2: Some(1e-9),
            est3: Some(1e-6),
            est4: None,
        };
        assert_eq!(select_order(&est, 1e-4, OrderSet::single(3)), Some(3));
    }

    #[test]
    fn order_selection_breaks_ties_upward() {
        // Estimates tuned so both factors equal 2 exactly.
        let est = EstNorms {
            est2: None,
            est3: Some(1.0 / 16.0),
            est4: Some(1.0 / 32.0),
        };
        assert_eq!(select_order(&est, 1.0, OrderSet::all()), Some(4));
    }

    #[test]
    fn stepsize_growth_law() {
        let cfg = ControllerConfig::new(1.0);
        // (eps/est)^(1/4) = 2 -> raw 0.9 * 0.1 * 2 = 0.18, under the cap.
        assert_relative_eq!(next_stepsize(0.1, 1.0 / 16.0, 3, &cfg), 0.18);
        // Tiny estimate: the factor-of-two cap binds.
        assert_relative_eq!(next_stepsize(0.1, 1e-305, 3, &cfg), 0.2);
        // Estimate exactly at tolerance: pure safety factor.
        assert_relative_eq!(next_stepsize(0.1, 1.0, 3, &cfg), 0.09);
    }

    #[test]
    fn rejection_shrinks_geometrically_with_floor() {
        let mut cfg = ControllerConfig::new(1.0);
        cfg.orders = OrderSet::single(3);
        let est = EstNorms {
            est2: None,
            est3: Some(16.0),
            est4: None,
        };
        // 0.7 * (1/16)^(1/4) = 0.35 -> floored at ratio_min = 0.5.
        assert_relative_eq!(reject_and_retry(1.0, &est, &cfg), 0.5);
        let est_eq = EstNorms {
            est2: None,
            est3: Some(1.0),
            est4: None,
        };
        assert_relative_eq!(reject_and_retry(1.0, &est_eq, &cfg), 0.7);
    }

    #[test]
    fn exact_startup_samples_the_solution() {
        let spec = problems::dahlquist(-1.0);
        let cfg = ControllerConfig::new(1e-6);
        let (h, totals) = startup(
            &spec.definition,
            0.0,
            &spec.default_y0,
            StartupMode::Exact(spec.exact_fn().unwrap()),
            &cfg,
        )
        .unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(totals.startup_solves, 0);
        for (t, y) in h.times().iter().zip(h.values()) {
            assert_relative_eq!(y[0], (-t).exp(), max_relative = 1e-15);
        }
    }

    #[test]
    fn ramp_startup_is_exact_on_linear_solutions() {
        // y' = 2 with y = 2t: every ramp stage reproduces the line exactly.
        let p = ProblemDefinition::new("line", 1, |_t, _y, out| out[0] = 2.0);
        let cfg = ControllerConfig::new(1e-6);
        let (h, totals) =
            startup(&p, 0.0, &nalgebra::dvector![0.0], StartupMode::Ramp, &cfg).unwrap();
        assert_eq!(totals.startup_solves, 3);
        for (t, y) in h.times().iter().zip(h.values()) {
            assert_relative_eq!(y[0], 2.0 * t, epsilon = 1e-13);
        }
    }

    #[test]
    fn ramp_startup_error_on_quadratics_is_the_euler_stage_error() {
        // y' = 2t with y = t^2. The later stages are exact on quadratics, so
        // the window error stays at the scale of the first-stage local error
        // (k_init/8)^2.
        let p = ProblemDefinition::new("quad", 1, |t, _y, out| out[0] = 2.0 * t);
        let cfg = ControllerConfig::new(1e-6);
        let (h, _) = startup(&p, 0.0, &nalgebra::dvector![0.0], StartupMode::Ramp, &cfg).unwrap();
        let euler_scale = (cfg.k_init / 8.0).powi(2);
        for (t, y) in h.times().iter().zip(h.values()) {
            assert!((y[0] - t * t).abs() <= 4.0 * euler_scale);
        }
    }

    #[test]
    fn ramp_startup_survives_van_der_pol() {
        let spec = problems::van_der_pol(1000.0);
        let cfg = ControllerConfig::new(1e-4);
        let (h, _) = startup(
            &spec.definition,
            0.0,
            &spec.default_y0,
            StartupMode::Ramp,
            &cfg,
        )
        .unwrap();
        assert_eq!(h.len(), 4);
        assert!(h.values().iter().all(|y| y.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn decay_integration_meets_tolerance_scaled_error() {
        let spec = problems::dahlquist(-1.0);
        let mut cfg = ControllerConfig::new(1e-8);
        cfg.k_init = 1e-3;
        let run = integrate(
            &spec.definition,
            &spec.default_y0,
            (0.0, 1.0),
            StartupMode::Exact(spec.exact_fn().unwrap()),
            &cfg,
        )
        .unwrap();
        assert_relative_eq!(run.t, 1.0, max_relative = 1e-14);
        let err = (run.y[0] - (-1.0f64).exp()).abs();
        assert!(err <= 100.0 * cfg.epsilon, "error {err}");
        assert_eq!(
            run.trace.totals.stage_solves,
            run.trace.totals.accepted_steps + run.trace.totals.rejected_steps
        );
    }

    #[test]
    fn accepted_records_have_monotone_times_and_bounded_ratios() {
        let spec = problems::manufactured_smooth();
        let cfg = ControllerConfig::new(1e-7);
        let run = integrate(
            &spec.definition,
            &spec.default_y0,
            (0.0, 5.0),
            StartupMode::Exact(spec.exact_fn().unwrap()),
            &cfg,
        )
        .unwrap();
        let accepted: Vec<&StepRecord> = run.trace.records.iter().filter(|r| r.accepted).collect();
        assert!(!accepted.is_empty());
        for w in accepted.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        // Ratio bounds hold for consecutive accepted steps (landing exempt).
        for w in accepted.windows(2) {
            if w[1].t < run.t {
                let ratio = w[1].k / w[0].k;
                assert!(
                    (0.5 - 1e-12..=2.0 + 1e-12).contains(&ratio),
                    "ratio {ratio} out of bounds"
                );
            }
        }
        // Every accepted step satisfied its tolerance.
        for r in accepted {
            let j = r.order.unwrap();
            let est = match j {
                2 => r.est2,
                3 => r.est3,
                _ => r.est4,
            }
            .unwrap();
            assert!(est < cfg.epsilon);
        }
    }

    #[test]
    fn adversarial_problem_shrinks_until_failure() {
        // rhs is NaN everywhere: every stage solve fails, k halves until
        // it underflows k_min.
        let p = ProblemDefinition::new("nan", 1, |_t, _y, out| out[0] = f64::NAN);
        let h = TimeHistory::from_pairs(
            4,
            (0..4).map(|i| (i as f64 * 1e-3, nalgebra::dvector![1.0])),
        )
        .unwrap();
        let mut cfg = ControllerConfig::new(1e-4);
        cfg.k_min = 1e-9;
        let err = integrate_from_history(&p, h, 1.0, &cfg).unwrap_err();
        match err {
            Error::Integration { reason, trace, .. } => {
                assert!(reason.contains("minimum stepsize"), "reason: {reason}");
                assert!(trace.totals.rejected_steps > 0);
                assert_eq!(trace.totals.accepted_steps, 0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn every_rejection_shrinks_the_next_attempt_geometrically() {
        // Large oscillatory rhs forces long rejection streaks.
        let p = ProblemDefinition::new("rough", 1, |t, _y, out| {
            out[0] = 1e6 * (1e3 * t).sin();
        });
        let h =
            TimeHistory::from_pairs(4, (0..4).map(|i| (i as f64 * 0.1, nalgebra::dvector![0.0])))
                .unwrap();
        let mut cfg = ControllerConfig::new(1e-12);
        cfg.k_init = 0.1;
        let records = match integrate_from_history(&p, h, 10.0, &cfg) {
            Ok(run) => run.trace.records,
            Err(Error::Integration { trace, .. }) => trace.records,
            Err(other) => panic!("unexpected error {other:?}"),
        };
        let mut rejections = 0;
        for w in records.windows(2) {
            if !w[0].accepted && w[0].newton_converged {
                rejections += 1;
                let ratio = w[1].k / w[0].k;
                // Retries strictly shrink, by at most the ratio bound.
                assert!(
                    (0.5 - 1e-12..1.0).contains(&ratio),
                    "retry ratio {ratio} outside [ratio_min, 1)"
                );
            }
        }
        assert!(
            rejections >= 10,
            "test produced only {rejections} rejections"
        );
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = ControllerConfig::new(0.0);
        assert!(cfg.validate().is_err());
        cfg.epsilon = 1e-4;
        cfg.gamma_tilde = 0.95;
        assert!(cfg.validate().is_err());
        cfg.gamma_tilde = 0.7;
        cfg.validate().unwrap();
    }
}
