use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gclt_bench::{convex, plane};
use gclt_core::dp::{dp_solve_with, dp_step, terminal_slice, DpOptions};
use gclt_core::{pde_solve, simulate, PdeConfig, SimConfig, SpatialGrid, Strategy};

fn dp_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("dp_step");
    for (name, spec, n) in [("convex-1d", convex(), 128), ("plane-2d", plane(), 16)] {
        let grid = SpatialGrid::default_with_half_width(&spec.uncertainty, n, spec.payoff.domain_half_width()).unwrap();
        let v = terminal_slice(&spec, &grid);
        group.bench_with_input(BenchmarkId::new(name, grid.len()), &v, |b, v| {
            b.iter(|| dp_step(black_box(v), &spec.uncertainty, &spec.noise, n, &grid).unwrap())
        });
    }
    group.finish();
}

fn dp_full(c: &mut Criterion) {
    let spec = convex();
    let mut group = c.benchmark_group("dp_solve_convex");
    group.sample_size(10);
    for n in [32, 128] {
        let grid = SpatialGrid::default_for(&spec.uncertainty, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| dp_solve_with(&spec, n, &grid, DpOptions::value_only()).unwrap().summary.value_at_origin)
        });
    }
    group.finish();
}

fn pde(c: &mut Criterion) {
    let spec = convex();
    let mut group = c.benchmark_group("pde_solve_convex");
    group.sample_size(10);
    for h in [0.1, 0.05] {
        let cfg = PdeConfig::new(SpatialGrid::with_spacing(1, 12.0, h).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(h), &cfg, |b, cfg| {
            b.iter(|| pde_solve(&spec, cfg).unwrap().summary.value_at_origin)
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let spec = convex();
    let n = 64;
    let grid = SpatialGrid::default_for(&spec.uncertainty, n).unwrap();
    let policy = dp_solve_with(&spec, n, &grid, DpOptions { keep_slices: false, keep_policy: true })
        .unwrap()
        .policy
        .unwrap();
    let sim = SimConfig {
        paths: 10_000,
        seed: 1,
        n,
        strategy: Strategy::Feedback(policy),
    };
    c.bench_function("simulate_feedback_10k_paths", |b| b.iter(|| simulate(&spec, &sim).unwrap().mean));
}

criterion_group!(benches, dp_steps, dp_full, pde, monte_carlo);
criterion_main!(benches);
