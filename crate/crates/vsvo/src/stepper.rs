//! One embedded step: a single implicit BDF3 solve followed by time filters
//! that produce second- and fourth-order candidates, plus the three local
//! error estimates that drive order and stepsize selection.
//!
//! Also provides standalone filtered BDF stepping of any order `p <= 5` and
//! the equivalent one-leg formulation used as a verification path.

use crate::coeffs::{bdf_and_filter_coefficients, StepCoefficients};
use crate::newton::{solve_affine_stage, solve_stage, NewtonConfig, NewtonDiagnostics};
use crate::{Error, ProblemDefinition, Result, State, TimeHistory};

/// Interval of the filter parameter for which the stabilized second-order
/// candidate is G-stable (and hence A-stable).
pub const G_STABLE_MU_MIN: f64 = 0.07143215;
pub const G_STABLE_MU_MAX: f64 = 0.14285528;

/// Default stabilizing filter weight, inside the G-stable interval.
pub const DEFAULT_STAB_MU: f64 = 9.0 / 125.0;

/// Parameter of the stabilizing filter.
#[derive(Debug, Clone, Copy)]
pub struct StabFilterConfig {
    pub mu: f64,
}

impl Default for StabFilterConfig {
    fn default() -> Self {
        StabFilterConfig {
            mu: DEFAULT_STAB_MU,
        }
    }
}

/// Which form of the fourth-order error estimate to evaluate.
///
/// The difference-only form costs one extra rhs evaluation and is the
/// default; the Jacobian form adds a Jacobian-vector product with the
/// embedded third-order estimate and tends to predict smaller errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Est4Mode {
    #[default]
    Difference,
    WithJacobian,
}

/// Norm used to reduce estimate vectors to scalars.
#[derive(Debug, Clone, Copy, Default)]
pub enum ErrorNorm {
    /// Plain Euclidean norm of the raw estimate (default).
    #[default]
    Euclidean,
    /// Root-mean-square of componentwise weighted errors,
    /// `|v_i| / (atol + rtol * |y_i|)` against the stage solution.
    WeightedRms { atol: f64, rtol: f64 },
}

impl ErrorNorm {
    pub fn measure(&self, v: &State, y_ref: &State) -> f64 {
        match self {
            ErrorNorm::Euclidean => v.norm(),
            ErrorNorm::WeightedRms { atol, rtol } => {
                let n = v.len() as f64;
                let sum: f64 = v
                    .iter()
                    .zip(y_ref.iter())
                    .map(|(e, y)| {
                        let w = atol + rtol * y.abs();
                        (e / w).powi(2)
                    })
                    .sum();
                (sum / n).sqrt()
            }
        }
    }
}

/// A subset of the embedded orders {2, 3, 4}; defaults to the full set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderSet(u8);

impl Default for OrderSet {
    fn default() -> Self {
        OrderSet::all()
    }
}

impl OrderSet {
    pub fn all() -> Self {
        OrderSet(0b111)
    }

    pub fn empty() -> Self {
        OrderSet(0)
    }

    pub fn single(order: u8) -> Self {
        let mut s = OrderSet(0);
        s.insert(order);
        s
    }

    pub fn insert(&mut self, order: u8) {
        assert!((2..=4).contains(&order), "embedded orders are 2, 3, 4");
        self.0 |= 1 << (order - 2);
    }

    pub fn contains(&self, order: u8) -> bool {
        (2..=4).contains(&order) && self.0 & (1 << (order - 2)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (2..=4).filter(|&o| self.contains(o))
    }

    /// Parses digit strings like `"234"` or `"3"`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut set = OrderSet::empty();
        for ch in s.chars() {
            match ch {
                '2' => set.insert(2),
                '3' => set.insert(3),
                '4' => set.insert(4),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "order set `{s}` may only contain digits 2, 3, 4"
                    )))
                }
            }
        }
        if set.is_empty() {
            return Err(Error::InvalidConfig("order set is empty".into()));
        }
        Ok(set)
    }
}

impl std::fmt::Display for OrderSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for o in self.iter() {
            write!(f, "{o}")?;
        }
        Ok(())
    }
}

/// Everything an embedded step needs beyond the problem and history.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmbeddedConfig {
    /// Candidate orders to produce; estimators for disabled orders are
    /// skipped entirely.
    pub orders: OrderSet,
    pub stab: StabFilterConfig,
    pub newton: NewtonConfig,
    pub est4_mode: Est4Mode,
    pub norm: ErrorNorm,
}

/// Scalar estimate magnitudes; absent entries were not evaluated.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct EstNorms {
    pub est2: Option<f64>,
    pub est3: Option<f64>,
    pub est4: Option<f64>,
}

impl EstNorms {
    pub fn get(&self, order: u8) -> Option<f64> {
        match order {
            2 => self.est2,
            3 => self.est3,
            4 => self.est4,
            _ => None,
        }
    }
}

/// Candidates and estimates produced by one embedded step.
///
/// `est2 = y3 - y2` and `est3 = y4 - y3` hold exactly by construction.
#[derive(Debug, Clone)]
pub struct EmbeddedStepResult {
    pub y2: Option<State>,
    pub y3: State,
    pub y4: Option<State>,
    pub est2: Option<State>,
    pub est3: Option<State>,
    pub est4: Option<State>,
    pub est_norms: EstNorms,
    pub newton: NewtonDiagnostics,
    /// Rhs evaluations beyond the stage solve (the order-4 estimator).
    pub extra_rhs_evals: usize,
}

impl EmbeddedStepResult {
    pub fn candidate(&self, order: u8) -> Option<&State> {
        match order {
            2 => self.y2.as_ref(),
            3 => Some(&self.y3),
            4 => self.y4.as_ref(),
            _ => None,
        }
    }
}

/// Evaluates the interpolating polynomial through the stored window at
/// `t_new` (barycentric form); the standard initial guess for the stage.
pub fn extrapolate(history: &TimeHistory, t_new: f64) -> State {
    let times = history.times();
    let values = history.values();
    let n = times.len();
    if n == 1 {
        return values[0].clone();
    }
    let mut weights = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                weights[i] /= times[i] - times[j];
            }
        }
    }
    let mut num = State::zeros(values[0].len());
    let mut den = 0.0;
    for i in 0..n {
        let w = weights[i] / (t_new - times[i]);
        num.axpy(w, &values[i], 1.0);
        den += w;
    }
    num / den
}

fn stage_solve(
    problem: &ProblemDefinition,
    history: &TimeHistory,
    t_new: f64,
    coeffs: &StepCoefficients,
    newton: &NewtonConfig,
) -> Result<(State, NewtonDiagnostics)> {
    let guess = extrapolate(history, t_new);
    let hist = coeffs.history_term(history.values());
    solve_stage(problem, t_new, coeffs.leading(), &hist, &guess, newton)
}

/// One embedded step over a four-point window: solve the BDF3 stage once,
/// then filter to the second- and fourth-order candidates and evaluate the
/// requested error estimates.
pub fn embedded_step(
    problem: &ProblemDefinition,
    history: &TimeHistory,
    t_new: f64,
    config: &EmbeddedConfig,
) -> Result<EmbeddedStepResult> {
    if history.len() != 4 {
        return Err(Error::WindowTooShort {
            need: 4,
            got: history.len(),
        });
    }
    let last = history.last_time().unwrap();
    if !(t_new > last) {
        return Err(Error::NonIncreasingTimes);
    }
    let orders = config.orders;
    let times = history.window_times_with(t_new);
    let coeffs = bdf_and_filter_coefficients(&times, 3)?;
    let (y3, newton) = stage_solve(problem, history, t_new, &coeffs, &config.newton)?;

    let mut result = EmbeddedStepResult {
        y2: None,
        y3,
        y4: None,
        est2: None,
        est3: None,
        est4: None,
        est_norms: EstNorms::default(),
        newton,
        extra_rhs_evals: 0,
    };
    if !newton.converged {
        return Ok(result);
    }
    let table = coeffs.table();
    let past = history.values();

    if orders.contains(2) {
        // Stabilizing filter: y2 = y3 + (mu / c3_m) * delta^3 y3.
        let d3 = table.apply_with_top(3, past, &result.y3);
        let y2 = &result.y3 + &d3 * coeffs.stab_scale(config.stab.mu)?;
        let est2 = &result.y3 - &y2;
        result.est_norms.est2 = Some(config.norm.measure(&est2, &result.y3));
        result.y2 = Some(y2);
        result.est2 = Some(est2);
    }
    if orders.contains(3) || orders.contains(4) {
        // Order-raising filter: y4 = y3 - eta^(4) * delta^4 y3.
        let d4 = table.apply_with_top(4, past, &result.y3);
        let eta = coeffs.eta().expect("window of 5 points carries eta^(4)");
        let y4 = &result.y3 - &d4 * eta;
        let est3 = &y4 - &result.y3;
        if orders.contains(3) {
            result.est_norms.est3 = Some(config.norm.measure(&est3, &result.y3));
        }
        if orders.contains(4) {
            let (est4, evals) = match config.est4_mode {
                Est4Mode::Difference => est4_estimate(problem, history, t_new, &y4)?,
                Est4Mode::WithJacobian => est4_with_jacobian(problem, history, t_new, &y4, &est3)?,
            };
            result.extra_rhs_evals += evals;
            result.est_norms.est4 = Some(config.norm.measure(&est4, &result.y3));
            result.est4 = Some(est4);
        }
        result.y4 = Some(y4);
        result.est3 = Some(est3);
    }
    Ok(result)
}

fn bdf4_residual(
    problem: &ProblemDefinition,
    history: &TimeHistory,
    t_new: f64,
    y4: &State,
) -> Result<(State, f64)> {
    let times = history.window_times_with(t_new);
    let coeffs = bdf_and_filter_coefficients(&times, 4)?;
    let mut r = coeffs.history_term(history.values());
    r.axpy(coeffs.leading(), y4, 1.0);
    let f = problem.rhs(t_new, y4);
    r -= f;
    Ok((r, coeffs.leading()))
}

/// Difference-only estimate of the order-4 local error: the BDF4 residual of
/// the filtered value divided by the leading BDF4 weight. One extra rhs
/// evaluation, no linear solve.
pub fn est4_estimate(
    problem: &ProblemDefinition,
    history: &TimeHistory,
    t_new: f64,
    y4: &State,
) -> Result<(State, usize)> {
    let (r, lead) = bdf4_residual(problem, history, t_new, y4)?;
    Ok((r / lead, 1))
}

/// Jacobian-including estimate: adds `df/dy * est3` to the BDF4 residual
/// before scaling. Requires a Jacobian (analytic or finite-difference).
pub fn est4_with_jacobian(
    problem: &ProblemDefinition,
    history: &TimeHistory,
    t_new: f64,
    y4: &State,
    est3: &State,
) -> Result<(State, usize)> {
    let (mut r, lead) = bdf4_residual(problem, history, t_new, y4)?;
    let n = problem.dimension();
    let f = problem.rhs(t_new, y4);
    let mut jac = nalgebra::DMatrix::zeros(n, n);
    let fd_evals = problem.jacobian_into(t_new, y4, &f, &mut jac);
    r += jac * est3;
    Ok((r / lead, 2 + fd_evals))
}

/// One plain BDFp step (stage solve only, no filter). The history must hold
/// at least `p` points.
pub fn bdf_step(
    problem: &ProblemDefinition,
    history: &TimeHistory,
    t_new: f64,
    p: usize,
    newton: &NewtonConfig,
) -> Result<(State, NewtonDiagnostics)> {
    if history.len() < p {
        return Err(Error::WindowTooShort {
            need: p,
            got: history.len(),
        });
    }
    let times = history.window_times_with(t_new);
    let coeffs = bdf_and_filter_coefficients(&times, p)?;
    stage_solve(problem, history, t_new, &coeffs, newton)
}

/// Result of one filtered BDF step of order `p`: the stage solution of order
/// `p` and the filtered value of order `p + 1`.
#[derive(Debug, Clone)]
pub struct FbdfStepResult {
    pub y_low: State,
    pub y_high: State,
    pub newton: NewtonDiagnostics,
}

/// One step of BDFp followed by the order-raising filter
/// `y_high = y_low - eta^(p+1) * delta^(p+1) y_low`.
///
/// The history (without the new slot) must hold at least `p + 1` points.
pub fn fbdf_step(
    problem: &ProblemDefinition,
    history: &TimeHistory,
    t_new: f64,
    p: usize,
    newton: &NewtonConfig,
) -> Result<FbdfStepResult> {
    if history.len() < p + 1 {
        return Err(Error::WindowTooShort {
            need: p + 1,
            got: history.len(),
        });
    }
    let times = history.window_times_with(t_new);
    let coeffs = bdf_and_filter_coefficients(&times, p)?;
    let (y_low, diag) = stage_solve(problem, history, t_new, &coeffs, newton)?;
    if !diag.converged {
        return Ok(FbdfStepResult {
            y_high: y_low.clone(),
            y_low,
            newton: diag,
        });
    }
    let eta = coeffs.eta().expect("window length was checked above");
    let d = coeffs
        .table()
        .apply_with_top(p + 1, history.values(), &y_low);
    let y_high = &y_low - &d * eta;
    Ok(FbdfStepResult {
        y_low,
        y_high,
        newton: diag,
    })
}

/// The one-leg formulation equivalent to [`fbdf_step`]: a single implicit
/// solve of the BDFp+1 left-hand side with `f` evaluated at
/// `y + eta/(1 - eta c^(p+1)_m) * delta^(p+1) y`.
///
/// Returns the order `p + 1` value directly; it must agree with
/// `fbdf_step(..).y_high` up to solver tolerances.
pub fn olm_step(
    problem: &ProblemDefinition,
    history: &TimeHistory,
    t_new: f64,
    p: usize,
    newton: &NewtonConfig,
) -> Result<(State, NewtonDiagnostics)> {
    if history.len() < p + 1 {
        return Err(Error::WindowTooShort {
            need: p + 1,
            got: history.len(),
        });
    }
    let times = history.window_times_with(t_new);
    let low = bdf_and_filter_coefficients(&times, p)?;
    let high = bdf_and_filter_coefficients(&times, p + 1)?;
    let table = low.table();
    let m = table.order();
    let eta = low.eta().expect("window length was checked above");
    let w = eta / (1.0 - eta * table.leading(p + 1));

    // f argument: (1 + w c_m) y + w * sum_{i<m} c_i y_i.
    let arg_scale = 1.0 + w * table.leading(p + 1);
    let mut arg_offset = State::zeros(problem.dimension());
    for (i, y) in history.values().iter().enumerate() {
        let c = table.coeff(p + 1, i);
        if c != 0.0 {
            arg_offset.axpy(w * c, y, 1.0);
        }
    }
    let hist = high.history_term(history.values());
    let guess = extrapolate(history, t_new);
    debug_assert_eq!(m, history.len());
    solve_affine_stage(
        problem,
        t_new,
        high.leading(),
        &hist,
        arg_scale,
        Some(&arg_offset),
        &guess,
        newton,
    )
}
