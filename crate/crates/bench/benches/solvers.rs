use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ebaloha::oracle::{build_truncated_chain, exact_stationary, Solver, DEFAULT_BUDGET};
use ebaloha::queueing::{compute_zeta, stationary_or_diverge, ChainKind, Mg1Solve, ServiceDist};
use ebaloha::BackoffLaw;

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    let cases: [(usize, u32, f64, &[Solver]); 3] = [
        (2, 40, 2.0, &[Solver::Direct]),
        (3, 8, 2.0, &[Solver::Direct]),
        (3, 5, 1.5, &[Solver::Direct, Solver::Power]),
    ];
    for (n, m, i0, solvers) in cases {
        let law = BackoffLaw::exponential(2.0, i0).unwrap();
        let label = format!("n{n}m{m}i{i0}");
        g.bench_with_input(BenchmarkId::new("build", &label), &(n, m), |b, &(n, m)| {
            b.iter(|| build_truncated_chain(n, m, law, DEFAULT_BUDGET).unwrap())
        });
        let chain = build_truncated_chain(n, m, law, DEFAULT_BUDGET).unwrap();
        for &solver in solvers {
            let id = BenchmarkId::new(format!("{solver:?}").to_lowercase(), &label);
            g.bench_with_input(id, &chain, |b, chain| b.iter(|| exact_stationary(chain, solver, 1e-12).unwrap()));
        }
    }
    g.finish();
}

fn mg1(c: &mut Criterion) {
    let svc = ServiceDist::parse("geom:2").unwrap();
    let zeta = compute_zeta(&svc, 0.45).unwrap();
    let mut g = c.benchmark_group("mg1");
    for kind in [ChainKind::Standard, ChainKind::Modified] {
        g.bench_function(kind.to_string(), |b| b.iter(|| stationary_or_diverge(kind, &zeta, &Mg1Solve::default()).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, oracle, mg1);
criterion_main!(benches);
