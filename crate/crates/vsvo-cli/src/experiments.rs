//! The four experiment modes behind the subcommands.

use vsvo::controller::{integrate, ControllerConfig, Integration, StartupMode};
use vsvo::fixed::{fixed_step_error, log_log_slope, FixedMethod, CONVERGENCE_METHODS};
use vsvo::problems::{ProblemSpec, VAN_DER_POL_REFERENCE_T3000};
use vsvo::stepper::OrderSet;
use vsvo::{exec, Error, State};

use crate::config::{MuSpec, OutputFormat, Settings, StartupKind};
use crate::output::{emit, num, Table};
use crate::CliError;

fn controller_config(settings: &Settings, eps: f64, orders: OrderSet) -> ControllerConfig {
    let mut cfg = ControllerConfig::new(eps);
    cfg.orders = orders;
    if let Some(k) = settings.k {
        cfg.k_init = k;
    }
    cfg
}

/// Resolves the starting-window policy: the flag if given, otherwise exact
/// history when the problem has an exact solution.
fn startup_mode<'a>(
    settings: &Settings,
    spec: &'a ProblemSpec,
) -> Result<StartupMode<'a>, CliError> {
    match settings.startup {
        Some(StartupKind::Ramp) => Ok(StartupMode::Ramp),
        Some(StartupKind::Exact) => match spec.exact_fn() {
            Some(exact) => Ok(StartupMode::Exact(exact)),
            None => Err(CliError::Config(format!(
                "problem `{}` has no exact solution; use --startup ramp",
                spec.definition.name()
            ))),
        },
        None => Ok(match spec.exact_fn() {
            Some(exact) => StartupMode::Exact(exact),
            None => StartupMode::Ramp,
        }),
    }
}

fn single_order_set(settings: &Settings) -> Result<OrderSet, CliError> {
    match &settings.orders {
        None => Ok(OrderSet::all()),
        Some(sets) if sets.len() == 1 => Ok(sets[0]),
        Some(_) => Err(CliError::Config(
            "this mode takes a single order subset, e.g. --orders 234".into(),
        )),
    }
}

/// One adaptive integration; trace dumped per-step.
pub fn run_solve(settings: &Settings) -> Result<(), CliError> {
    let spec = settings.require_problem()?;
    let eps = settings.eps.unwrap_or(1e-6);
    let orders = single_order_set(settings)?;
    let cfg = controller_config(settings, eps, orders);
    let mode = startup_mode(settings, &spec)?;
    let run = integrate(
        &spec.definition,
        &spec.default_y0,
        spec.default_span,
        mode,
        &cfg,
    )
    .map_err(|e| match e {
        Error::Integration { .. } => CliError::Integration(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;

    let content = match settings.format {
        OutputFormat::Csv => {
            let mut table = Table {
                schema: "vsvo.solve.v1",
                columns: vec![
                    "t",
                    "k",
                    "order",
                    "est2",
                    "est3",
                    "est4",
                    "accepted",
                    "newton_iterations",
                ],
                rows: Vec::new(),
            };
            for r in &run.trace.records {
                table.rows.push(vec![
                    num(r.t),
                    num(r.k),
                    r.order.map_or("-".into(), |o| o.to_string()),
                    r.est2.map_or("-".into(), num),
                    r.est3.map_or("-".into(), num),
                    r.est4.map_or("-".into(), num),
                    r.accepted.to_string(),
                    r.newton_iterations.to_string(),
                ]);
            }
            let mut csv = table.to_csv();
            csv.push_str(&format!(
                "# final_t: {}\n# final_y: {}\n",
                num(run.t),
                run.y.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
            ));
            csv
        }
        OutputFormat::Json => solve_json(&spec, eps, orders, &run),
    };
    emit(settings.out.as_deref(), &content)
}

fn solve_json(spec: &ProblemSpec, eps: f64, orders: OrderSet, run: &Integration) -> String {
    let doc = serde_json::json!({
        "schema": "vsvo.solve.v1",
        "problem": spec.definition.name(),
        "epsilon": eps,
        "orders": orders.to_string(),
        "final_t": run.t,
        "final_y": run.y.iter().copied().collect::<Vec<f64>>(),
        "totals": run.trace.totals,
        "stepping_seconds": run.trace.stepping_seconds,
        "steps": run.trace.records,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("trace serialization");
    s.push('\n');
    s
}

/// Fixed-stepsize convergence study over halved stepsizes.
pub fn run_convergence(settings: &Settings) -> Result<(), CliError> {
    let spec = settings.require_problem()?;
    if !spec.has_exact() {
        return Err(CliError::Config(format!(
            "convergence mode needs an exact solution; `{}` has none",
            spec.definition.name()
        )));
    }
    let k0 = settings.k.unwrap_or(0.1);
    let levels = settings.k_levels.unwrap_or(5);
    if !(k0 > 0.0) || levels == 0 {
        return Err(CliError::Config("need k > 0 and k-levels >= 1".into()));
    }
    let ks: Vec<f64> = (0..levels).map(|i| k0 / f64::powi(2.0, i as i32)).collect();

    let jobs: Vec<(FixedMethod, f64)> = CONVERGENCE_METHODS
        .iter()
        .flat_map(|m| ks.iter().map(move |k| (*m, *k)))
        .collect();
    let errors = exec::map(jobs.clone(), |(method, k)| {
        fixed_step_error(&spec, method, k, spec.default_span, &Default::default())
    });

    let mut table = Table {
        schema: "vsvo.convergence.v1",
        columns: vec!["k", "method", "error", "slope"],
        rows: Vec::new(),
    };
    for (mi, method) in CONVERGENCE_METHODS.iter().enumerate() {
        let errs: Vec<f64> = errors[mi * ks.len()..(mi + 1) * ks.len()]
            .iter()
            .map(|r| r.as_ref().copied().unwrap_or(f64::NAN))
            .collect();
        let fit: Vec<(f64, f64)> = ks
            .iter()
            .zip(&errs)
            .filter(|(_, e)| e.is_finite())
            .map(|(k, e)| (*k, *e))
            .collect();
        let slope = if fit.len() >= 2 {
            log_log_slope(
                &fit.iter().map(|p| p.0).collect::<Vec<_>>(),
                &fit.iter().map(|p| p.1).collect::<Vec<_>>(),
            )
        } else {
            f64::NAN
        };
        for (k, err) in ks.iter().zip(&errs) {
            table
                .rows
                .push(vec![num(*k), method.label(), num(*err), num(slope)]);
        }
    }
    let content = match settings.format {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Json => table.to_json(),
    };
    emit(settings.out.as_deref(), &content)
}

/// Reference state at the end of the default span, for error measurement.
fn reference_state(spec: &ProblemSpec) -> Result<State, CliError> {
    if let Some(y) = spec.exact_at(spec.default_span.1) {
        return Ok(y);
    }
    if spec.definition.name() == "vanderpol" {
        return Ok(State::from_column_slice(&VAN_DER_POL_REFERENCE_T3000));
    }
    Err(CliError::Config(format!(
        "no reference solution available for `{}`",
        spec.definition.name()
    )))
}

/// Work-precision sweep: error versus work counters over a tolerance grid
/// and order subsets. Runs are independent and execute concurrently; rows
/// are merge-sorted by tolerance before writing.
pub fn run_work_precision(settings: &Settings) -> Result<(), CliError> {
    let spec = settings.require_problem()?;
    let reference = reference_state(&spec)?;
    let grid = settings
        .eps_grid
        .clone()
        .unwrap_or_else(|| (1..=8).map(|i| 10f64.powi(-i)).collect());
    let subsets = settings.orders.clone().unwrap_or_else(|| {
        ["2", "23", "234", "3", "34", "4"]
            .iter()
            .map(|s| OrderSet::parse(s).unwrap())
            .collect()
    });
    // Resolve the startup policy once so every run uses the same window.
    let mode_probe = startup_mode(settings, &spec)?;
    let use_exact = matches!(mode_probe, StartupMode::Exact(_));

    let jobs: Vec<(f64, OrderSet)> = grid
        .iter()
        .flat_map(|eps| subsets.iter().map(move |s| (*eps, *s)))
        .collect();
    let spec_ref = &spec;
    let reference_ref = &reference;
    let settings_ref = &settings;
    type WpOutcome = Result<(f64, Integration), String>;
    let mut results: Vec<(f64, OrderSet, WpOutcome)> = exec::map(jobs, move |(eps, orders)| {
        let cfg = controller_config(settings_ref, eps, orders);
        let mode = if use_exact {
            StartupMode::Exact(spec_ref.exact_fn().expect("checked above"))
        } else {
            StartupMode::Ramp
        };
        let outcome = integrate(
            &spec_ref.definition,
            &spec_ref.default_y0,
            spec_ref.default_span,
            mode,
            &cfg,
        )
        .map(|run| {
            let err = (&run.y - reference_ref).norm() / reference_ref.norm();
            (err, run)
        })
        .map_err(|e| e.to_string());
        (eps, orders, outcome)
    });
    results.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut table = Table {
        schema: "vsvo.wp.v1",
        columns: vec![
            "epsilon",
            "orders",
            "error",
            "steps",
            "rejections",
            "stage_solves",
            "wall_time",
            "status",
        ],
        rows: Vec::new(),
    };
    for (eps, orders, outcome) in results {
        match outcome {
            Ok((err, run)) => table.rows.push(vec![
                num(eps),
                orders.to_string(),
                num(err),
                run.trace.totals.accepted_steps.to_string(),
                run.trace.totals.rejected_steps.to_string(),
                run.trace.totals.stage_solves.to_string(),
                num(run.trace.stepping_seconds),
                "ok".into(),
            ]),
            Err(reason) => table.rows.push(vec![
                num(eps),
                orders.to_string(),
                "NaN".into(),
                "0".into(),
                "0".into(),
                "0".into(),
                "NaN".into(),
                format!("failed: {}", reason.replace(',', ";")),
            ]),
        }
    }
    let content = match settings.format {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Json => table.to_json(),
    };
    emit(settings.out.as_deref(), &content)
}

/// Stability-certificate scan over the filter weight.
pub fn run_gstab_scan(settings: &Settings) -> Result<(), CliError> {
    let mus: Vec<f64> = match settings.mu.clone().unwrap_or(MuSpec::Grid {
        lo: 0.05,
        hi: 0.2,
        step: 1e-3,
    }) {
        MuSpec::Single(mu) => vec![mu],
        MuSpec::Grid { lo, hi, step } => {
            let n = ((hi - lo) / step).round() as usize;
            (0..=n).map(|i| lo + i as f64 * step).collect()
        }
    };
    let certs = exec::map(mus, vsvo::gstab::g_matrix);
    let mut table = Table {
        schema: "vsvo.gstab.v1",
        columns: vec!["mu", "G1", "G2", "G3", "residual", "is_g_stable"],
        rows: Vec::new(),
    };
    for c in certs {
        table.rows.push(vec![
            num(c.mu),
            num(c.minors[0]),
            num(c.minors[1]),
            num(c.minors[2]),
            num(c.residual),
            c.is_g_stable.to_string(),
        ]);
    }
    let content = match settings.format {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Json => table.to_json(),
    };
    emit(settings.out.as_deref(), &content)
}
