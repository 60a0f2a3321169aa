//! The implicit stage solver: damped Newton iteration with dense LU.
//!
//! Each step of the embedded family requires exactly one solve of
//! `lead * y + history - f(t, y) = 0`. The one-leg verification path needs
//! the slightly more general residual where `f` is evaluated at an affine
//! map of `y`; both are handled by [`solve_affine_stage`].

use nalgebra::{DMatrix, LU};

use crate::{Result, State};

type RhsFn = Box<dyn Fn(f64, &State, &mut State) + Send + Sync>;
type JacobianFn = Box<dyn Fn(f64, &State, &mut DMatrix<f64>) + Send + Sync>;

/// An ODE system `y' = f(t, y)` with an optional analytic Jacobian.
///
/// When no Jacobian is supplied, a forward-difference approximation with
/// increment `sqrt(eps) * max(|y_i|, 1)` is substituted.
pub struct ProblemDefinition {
    name: String,
    dimension: usize,
    rhs: RhsFn,
    jacobian: Option<JacobianFn>,
}

impl std::fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl ProblemDefinition {
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        rhs: impl Fn(f64, &State, &mut State) + Send + Sync + 'static,
    ) -> Self {
        ProblemDefinition {
            name: name.into(),
            dimension,
            rhs: Box::new(rhs),
            jacobian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(f64, &State, &mut DMatrix<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Box::new(jacobian));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Evaluates `f(t, y)` into `out`.
    pub fn rhs_into(&self, t: f64, y: &State, out: &mut State) {
        (self.rhs)(t, y, out);
    }

    /// Allocating convenience wrapper around [`Self::rhs_into`].
    pub fn rhs(&self, t: f64, y: &State) -> State {
        let mut out = State::zeros(self.dimension);
        self.rhs_into(t, y, &mut out);
        out
    }

    /// Fills `out` with `df/dy` at `(t, y)`. `f_at_y` must hold `f(t, y)`
    /// when the forward-difference fallback is used. Returns the number of
    /// extra rhs evaluations spent.
    pub fn jacobian_into(
        &self,
        t: f64,
        y: &State,
        f_at_y: &State,
        out: &mut DMatrix<f64>,
    ) -> usize {
        if let Some(jac) = &self.jacobian {
            jac(t, y, out);
            return 0;
        }
        let n = self.dimension;
        let mut yp = y.clone();
        let mut fp = State::zeros(n);
        let sqrt_eps = f64::EPSILON.sqrt();
        for i in 0..n {
            let h = sqrt_eps * y[i].abs().max(1.0);
            let saved = yp[i];
            yp[i] = saved + h;
            self.rhs_into(t, &yp, &mut fp);
            yp[i] = saved;
            for r in 0..n {
                out[(r, i)] = (fp[r] - f_at_y[r]) / h;
            }
        }
        n
    }
}

/// Stopping and Jacobian-handling parameters for the stage solver.
#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub max_iterations: usize,
    /// Absolute residual target, scaled by `1 + ||f||`.
    pub residual_tolerance: f64,
    /// Newton update target, scaled by `1 + ||y||`.
    pub step_tolerance: f64,
    /// Reuse the factored Jacobian across iterations, refreshing on stall.
    pub jacobian_reuse: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iterations: 25,
            residual_tolerance: 1e-12,
            step_tolerance: 1e-12,
            jacobian_reuse: true,
        }
    }
}

/// What one stage solve did and whether it converged.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct NewtonDiagnostics {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
}

/// Solves `lead * y + history - f(t, y) = 0` for `y`.
///
/// Non-convergence (stall, iteration cap, singular matrix, non-finite
/// values) is reported through `diagnostics.converged`, not an error; the
/// adaptive controller turns it into a step rejection.
pub fn solve_stage(
    problem: &ProblemDefinition,
    t_new: f64,
    leading_weight: f64,
    history_term: &State,
    guess: &State,
    config: &NewtonConfig,
) -> Result<(State, NewtonDiagnostics)> {
    solve_affine_stage(
        problem,
        t_new,
        leading_weight,
        history_term,
        1.0,
        None,
        guess,
        config,
    )
}

/// Solves `lead * y + history - f(t, arg_scale * y + arg_offset) = 0`.
///
/// With `arg_scale = 1` and no offset this is the plain BDF stage; the
/// one-leg form evaluates `f` at a filtered argument.
#[allow(clippy::too_many_arguments)]
pub fn solve_affine_stage(
    problem: &ProblemDefinition,
    t_new: f64,
    leading_weight: f64,
    history_term: &State,
    arg_scale: f64,
    arg_offset: Option<&State>,
    guess: &State,
    config: &NewtonConfig,
) -> Result<(State, NewtonDiagnostics)> {
    let n = problem.dimension();
    let mut diag = NewtonDiagnostics::default();
    let mut y = guess.clone();
    let mut arg = State::zeros(n);
    let mut fval = State::zeros(n);
    let mut residual = State::zeros(n);

    let eval_residual = |y: &State, arg: &mut State, fval: &mut State, residual: &mut State| {
        arg.copy_from(y);
        *arg *= arg_scale;
        if let Some(off) = arg_offset {
            *arg += off;
        }
        (problem.rhs)(t_new, arg, fval);
        residual.copy_from(y);
        *residual *= leading_weight;
        *residual += history_term;
        *residual -= &*fval;
    };

    eval_residual(&y, &mut arg, &mut fval, &mut residual);
    diag.rhs_evals += 1;
    let mut res_norm = residual.norm();
    // Roundoff floor: the residual is a sum of terms of this magnitude, so
    // demanding less than a few ulps of it is unachievable.
    let hist_norm = history_term.norm();
    let floor = |ynorm: f64, fnorm: f64| {
        32.0 * f64::EPSILON * (leading_weight.abs() * ynorm + hist_norm + fnorm)
    };
    let tol = |ynorm: f64, fnorm: f64| {
        (config.residual_tolerance * (1.0 + fnorm)).max(floor(ynorm, fnorm))
    };
    if res_norm <= tol(y.norm(), fval.norm()) {
        diag.converged = true;
        diag.residual_norm = res_norm;
        return Ok((y, diag));
    }

    let mut lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> = None;
    let mut jac = DMatrix::zeros(n, n);
    let mut refresh = true;

    for _ in 0..config.max_iterations {
        if refresh || lu.is_none() {
            // Newton matrix: lead * I - arg_scale * df/dy at the current argument.
            diag.rhs_evals += problem.jacobian_into(t_new, &arg, &fval, &mut jac);
            diag.jacobian_evals += 1;
            jac *= -arg_scale;
            for i in 0..n {
                jac[(i, i)] += leading_weight;
            }
            let fac = LU::new(jac.clone());
            if fac.determinant() == 0.0 {
                diag.residual_norm = res_norm;
                return Ok((y, diag)); // singular Newton matrix: fail the stage
            }
            lu = Some(fac);
            refresh = false;
        }

        let Some(mut delta) = lu.as_ref().unwrap().solve(&(-&residual)) else {
            diag.residual_norm = res_norm;
            return Ok((y, diag));
        };

        // Damping: halve the update (at most 5 times) while the residual grows.
        let mut accepted = false;
        let mut y_try = State::zeros(n);
        let mut best = (y.clone(), fval.clone(), residual.clone(), res_norm);
        for _ in 0..=5 {
            y_try.copy_from(&y);
            y_try += &delta;
            eval_residual(&y_try, &mut arg, &mut fval, &mut residual);
            diag.rhs_evals += 1;
            let r = residual.norm();
            if !r.is_finite() {
                delta *= 0.5;
                continue;
            }
            if r <= res_norm || r <= tol(y_try.norm(), fval.norm()) {
                best = (y_try.clone(), fval.clone(), residual.clone(), r);
                accepted = true;
                break;
            }
            if r < best.3 {
                best = (y_try.clone(), fval.clone(), residual.clone(), r);
            }
            delta *= 0.5;
        }
        let step_norm = delta.norm();
        let prev_norm = res_norm;
        (y, fval, residual, res_norm) = best;
        diag.iterations += 1;
        // Keep `arg` paired with the accepted iterate for Jacobian refreshes.
        arg.copy_from(&y);
        arg *= arg_scale;
        if let Some(off) = arg_offset {
            arg += off;
        }

        if !res_norm.is_finite() || !y.iter().all(|v| v.is_finite()) {
            diag.residual_norm = res_norm;
            return Ok((y, diag));
        }
        if res_norm <= tol(y.norm(), fval.norm()) {
            diag.converged = true;
            break;
        }
        if accepted && step_norm <= config.step_tolerance * (1.0 + y.norm()) {
            // Stagnation at the precision floor; accept what we have.
            diag.converged =
                res_norm <= tol(y.norm(), fval.norm()).max(1e-10 * (1.0 + fval.norm()));
            break;
        }
        // Slow residual reduction: refresh the Jacobian next iteration.
        if !config.jacobian_reuse || !accepted || res_norm > 0.5 * prev_norm {
            refresh = true;
        }
    }

    diag.residual_norm = res_norm;
    Ok((y, diag))
}
