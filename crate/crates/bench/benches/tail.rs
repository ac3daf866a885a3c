use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;
use tailrate_bench::{bench_params, exceedances};
use tailrate_core::confidence::{param_cis, CiConfig};
use tailrate_core::{fit_gpd_mle, gpd, t_critical};

fn likelihood(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_likelihood");
    let params = bench_params();
    for n in [1_000, 100_000] {
        let set = exceedances(n, 1);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &set.values, |b, v| {
            b.iter(|| gpd::log_likelihood(black_box(v), &params).unwrap())
        });
    }
    group.finish();
}

fn fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_gpd_mle");
    group.sample_size(20);
    for n in [1_000, 100_000] {
        let set = exceedances(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &set, |b, s| b.iter(|| fit_gpd_mle(black_box(s)).unwrap()));
    }
    group.finish();
}

fn intervals(c: &mut Criterion) {
    let set = exceedances(10_000, 3);
    let mut group = c.benchmark_group("param_cis");
    group.sample_size(10);
    group.bench_function("M30_n10000", |b| {
        b.iter(|| param_cis(black_box(&set), &CiConfig::new(30, 4), &[0.01, 0.5]).unwrap())
    });
    group.finish();
}

fn critical(c: &mut Criterion) {
    c.bench_function("t_critical", |b| b.iter(|| t_critical(black_box(0.05), black_box(29)).unwrap()));
}

criterion_group!(benches, likelihood, fit, intervals, critical);
criterion_main!(benches);
