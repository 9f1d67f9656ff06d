use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ebaloha::sim::{run_first_success_experiment, run_queued, run_saturated, SimConfig};
use ebaloha::{BackoffLaw, SystemState};

fn saturated(c: &mut Criterion) {
    let mut g = c.benchmark_group("saturated");
    let horizon = 1_000_000;
    g.throughput(Throughput::Elements(horizon));
    for (n, i0) in [(2, 2.0), (2, 0.0), (10, 1.5), (100, 1.5)] {
        let law = BackoffLaw::exponential(2.0, i0).unwrap();
        let cfg = SimConfig::saturated(law, SystemState::zeros(n).unwrap(), horizon, 1);
        g.bench_with_input(BenchmarkId::new(format!("n{n}"), i0), &cfg, |b, cfg| b.iter(|| run_saturated(cfg).unwrap()));
    }
    g.finish();
}

fn queued(c: &mut Criterion) {
    let law = BackoffLaw::exponential(2.0, 1.5).unwrap();
    let mut cfg = SimConfig::queued(law, SystemState::zeros(2).unwrap(), 100_000, 1, 0.3);
    cfg.sample_stride = 100;
    c.bench_function("queued/n2", |b| b.iter(|| run_queued(&cfg).unwrap()));
}

fn first_success(c: &mut Criterion) {
    let law = BackoffLaw::exponential(2.0, 2.0).unwrap();
    c.bench_function("first_success/1000", |b| {
        b.iter(|| run_first_success_experiment(2, law, 0, 1_000_000, 1000, 1).unwrap())
    });
}

criterion_group!(benches, saturated, queued, first_success);
criterion_main!(benches);
