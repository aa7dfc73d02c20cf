use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ratdeconv::baselines::{iht_solve, l1_solve, IhtConfig, L1Config};
use ratdeconv::datagen::{generate_instance, GenConfig};
use ratdeconv::problem::{build_split_terms, ModelSpec, Regime, SignalInstance};
use ratdeconv::relaxation::{assemble_sparse, build_cliques, solve_relaxation, RelaxationMode};
use ratdeconv::sdp::SolverConfig;

fn instance(t: usize, regime: Regime) -> (ModelSpec, SignalInstance) {
    let cfg = GenConfig { t, regime, rng_seed: 7, ..Default::default() };
    generate_instance(&cfg, 0).unwrap()
}

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assemble_sparse");
    for t in [50, 200] {
        let (spec, s) = instance(t, Regime::Nonnegative);
        let terms = build_split_terms(&spec, &s.d).unwrap();
        let cs = build_cliques(&spec);
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, _| {
            b.iter(|| assemble_sparse(black_box(&terms), &cs, 3, &spec).unwrap())
        });
    }
    g.finish();
}

fn relaxation(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_relaxation");
    g.sample_size(10);
    for (t, k) in [(20, 2), (20, 3), (50, 3)] {
        let (spec, s) = instance(t, Regime::Nonnegative);
        let cfg = SolverConfig::default();
        g.bench_function(format!("T{t}_k{k}"), |b| {
            b.iter(|| solve_relaxation(&spec, black_box(&s.d), k, RelaxationMode::Sparse, &cfg, None).unwrap())
        });
    }
    g.finish();
}

fn baselines(c: &mut Criterion) {
    let (spec, s) = instance(200, Regime::RealValued);
    let zero = vec![0.0; spec.t];
    c.bench_function("iht_T200", |b| b.iter(|| iht_solve(black_box(&zero), &spec, &s.d, &IhtConfig::default()).unwrap()));
    c.bench_function("l1_T200", |b| b.iter(|| l1_solve(&spec, black_box(&s.d), &L1Config::default()).unwrap()));
}

criterion_group!(benches, assembly, relaxation, baselines);
criterion_main!(benches);
