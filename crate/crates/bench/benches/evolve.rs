use criterion::{criterion_group, criterion_main, Criterion};
use retimer::*;

fn one_generation(c: &mut Criterion) {
    let p = GeneratorParams {
        topology: Topology::Cross,
        nodes: 100,
        trains: 200,
        window: 4 * 3600,
        max_len: 16,
        seed: 1,
        ..Default::default()
    };
    let inst = apply_perturbation(&generate_instance(&p).unwrap());
    let cfg = EAConfig {
        mu: 10,
        lambda: 70,
        generations: 1,
        ..Default::default()
    };
    let mut group = c.benchmark_group("evolve");
    group.sample_size(10);
    group.bench_function("cross_200_trains_one_generation", |b| {
        b.iter(|| run_ea(&inst, &cfg, None).unwrap())
    });
    group.finish();
}

criterion_group!(benches, one_generation);
criterion_main!(benches);
