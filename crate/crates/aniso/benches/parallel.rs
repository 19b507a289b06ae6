//! Parallel vs sequential batch throughput.
//!
//! Every batch API takes a runtime `parallel` switch, so the same binary
//! exercises both paths: rayon fan-out (default feature) against the
//! order-identical sequential loop. Run with
//! `cargo bench --bench parallel` and compare the `/parallel` and
//! `/sequential` rows.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use aniso::energy::verify_coercivity;
use aniso::gallery;
use aniso::solver::{multistart, sweep, MultistartOptions, SweepReport};
use aniso::{ExponentMap, NonlinearityFamily, ProblemInstance};

fn oscillating_instance() -> ProblemInstance {
    let f = |t: f64| {
        if t > 0.0 {
            t * (2.0 + t.ln().sin() + 0.5 * t.ln().cos())
        } else {
            0.0
        }
    };
    let big_f = |t: f64| {
        if t > 0.0 {
            t * t * (1.0 + 0.5 * t.ln().sin())
        } else {
            0.0
        }
    };
    ProblemInstance::new(
        2,
        0.5,
        ExponentMap::from_constant(2.0, 2).unwrap(),
        NonlinearityFamily::from_closures("oscillating_log", f, big_f),
    )
    .unwrap()
}

fn bench_multistart(c: &mut Criterion) {
    let instance = oscillating_instance();
    let opts = MultistartOptions {
        starts: 48,
        ..Default::default()
    };
    let mut group = c.benchmark_group("multistart");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &par| {
            b.iter(|| multistart(&instance, &opts, 7, par).unwrap())
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let instance = oscillating_instance();
    let opts = MultistartOptions {
        starts: 12,
        ..Default::default()
    };
    let lambdas: Vec<f64> = (1..=8).map(|i| 0.1 * i as f64).collect();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &par| {
            b.iter(|| -> SweepReport { sweep(&instance, &lambdas, &opts, 11, par).unwrap() })
        });
    }
    group.finish();
}

fn bench_coercivity(c: &mut Criterion) {
    let instance = gallery::example_instance(3.0, 2, 1.0).unwrap();
    let mut group = c.benchmark_group("coercivity");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &par| {
            b.iter(|| verify_coercivity(&instance, 4.0, 256, 3, par).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_multistart, bench_sweep, bench_coercivity);
criterion_main!(benches);
