//! Compares data-parallel and sequential execution of the embarrassingly
//! parallel workloads: the stability-certificate scan over the filter
//! weight, characteristic-root scans over the left half-plane, and an
//! order-subset sweep of adaptive integrations.
//!
//! Run with `cargo bench` (parallel path) and
//! `cargo bench --no-default-features` (sequential fallback of `exec::map`).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

use vsvo::controller::{integrate, ControllerConfig, StartupMode};
use vsvo::gstab::{g_matrix, left_half_plane_grid, max_root_magnitude};
use vsvo::stepper::OrderSet;
use vsvo::{exec, problems};

fn mu_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.0715 + (0.1428 - 0.0715) * i as f64 / (n - 1) as f64)
        .collect()
}

fn bench_certificate_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("certificate_scan");
    for n in [128usize, 1024] {
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| exec::map_sequential(mu_grid(n), g_matrix));
        });
        group.bench_with_input(BenchmarkId::new("exec_map", n), &n, |b, &n| {
            b.iter(|| exec::map(mu_grid(n), g_matrix));
        });
    }
    group.finish();
}

fn bench_root_scan(c: &mut Criterion) {
    let grid = left_half_plane_grid(20, 25, 1e-3, 1e6);
    let mu = 9.0 / 125.0;
    let mut group = c.benchmark_group("root_scan_500");
    group.bench_function("sequential", |b| {
        b.iter(|| {
            exec::map_sequential(grid.clone(), |z: Complex64| {
                max_root_magnitude(mu, z).unwrap()
            })
        });
    });
    group.bench_function("exec_map", |b| {
        b.iter(|| {
            exec::map(grid.clone(), |z: Complex64| {
                max_root_magnitude(mu, z).unwrap()
            })
        });
    });
    group.finish();
}

fn bench_order_subset_sweep(c: &mut Criterion) {
    let subsets: Vec<OrderSet> = ["2", "23", "234", "3", "34", "4"]
        .iter()
        .map(|s| OrderSet::parse(s).unwrap())
        .collect();
    let run = |orders: OrderSet| {
        let spec = problems::van_der_pol(1000.0);
        let cfg = ControllerConfig::new(1e-5).with_orders(orders);
        integrate(
            &spec.definition,
            &spec.default_y0,
            spec.default_span,
            StartupMode::Ramp,
            &cfg,
        )
        .unwrap()
        .trace
        .totals
        .accepted_steps
    };
    let mut group = c.benchmark_group("order_subset_sweep");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| exec::map_sequential(subsets.clone(), run));
    });
    group.bench_function("exec_map", |b| {
        b.iter(|| exec::map(subsets.clone(), run));
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_certificate_scan,
    bench_root_scan,
    bench_order_subset_sweep
);
criterion_main!(benches);
