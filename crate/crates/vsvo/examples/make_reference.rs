//! Regenerates the Van der Pol reference state stored in
//! `problems::VAN_DER_POL_REFERENCE_T3000`.
//!
//! Runs the fixed-stepsize order-4 filtered method over (0, 3000) at
//! k = 2e-5 and k = 1e-5 with tight Newton tolerances and prints both final
//! states; the difference between the two levels is the self-consistency
//! check (the k = 1e-5 state is the stored reference). Expect a runtime of
//! minutes in release mode:
//!
//!     cargo run --release --example make_reference

use vsvo::controller::{startup, ControllerConfig, StartupMode};
use vsvo::fixed::{integrate_fixed, FixedMethod};
use vsvo::problems::van_der_pol;

fn run(k: f64) -> vsvo::State {
    let spec = van_der_pol(1000.0);
    let mut cfg = ControllerConfig::new(1e-8);
    cfg.k_init = k;
    cfg.newton.residual_tolerance = 1e-13;
    cfg.newton.step_tolerance = 1e-13;
    let (history, _) = startup(
        &spec.definition,
        0.0,
        &spec.default_y0,
        StartupMode::Ramp,
        &cfg,
    )
    .expect("startup");
    let run = integrate_fixed(
        &spec.definition,
        history,
        3000.0,
        k,
        FixedMethod::Fbdf(3),
        None,
        &cfg.newton,
    )
    .expect("fixed integration");
    println!(
        "k = {k:e}: t = {}, y = [{:.17e}, {:.17e}], steps = {}",
        run.t, run.y[0], run.y[1], run.steps
    );
    run.y
}

fn main() {
    let coarse = run(2e-5);
    let fine = run(1e-5);
    let diff = (&coarse - &fine).norm() / fine.norm();
    println!("relative difference between levels: {diff:.3e}");
    println!("store: [{:.17e}, {:.17e}]", fine[0], fine[1]);
}
