use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mcgls::simulate::{generate_comparison, oracle_constrained_gls, random_instance, InstanceParams};
use mcgls::{build_design, embed_constraint, solve, CChoice, GlsOperator, Method};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(max_records: usize) -> mcgls::simulate::SimulatedComparison {
    let params = InstanceParams { participants: (10, 10), artefacts: (6, 6), max_records, ..InstanceParams::default() };
    let cfg = random_instance(&mut ChaCha8Rng::seed_from_u64(1), &params);
    generate_comparison(&cfg).unwrap()
}

fn routes(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for m in [20, 60] {
        let sim = instance(m);
        let dm = build_design(&sim.data).unwrap();
        for method in Method::ALL {
            group.bench_with_input(BenchmarkId::new(method.as_str(), m), &dm, |b, dm| {
                b.iter(|| solve(method, black_box(dm), &sim.cov, &sim.cons, CChoice::Auto).unwrap())
            });
        }
        let w = embed_constraint(&sim.cons, &dm).unwrap();
        group.bench_with_input(BenchmarkId::new("kkt-oracle", m), &dm, |b, dm| {
            b.iter(|| oracle_constrained_gls(&dm.x, &sim.cov.v0, &w, sim.cons.d, black_box(&dm.y)).unwrap())
        });
    }
    group.finish();
}

fn prepared_operator(c: &mut Criterion) {
    let sim = instance(60);
    let dm = build_design(&sim.data).unwrap();
    let op = GlsOperator::augmented(&dm, &sim.cov, &sim.cons, CChoice::Auto).unwrap();
    c.bench_function("operator-estimate/60", |b| b.iter(|| op.estimate(black_box(&dm.y))));
}

criterion_group!(benches, routes, prepared_operator);
criterion_main!(benches);
