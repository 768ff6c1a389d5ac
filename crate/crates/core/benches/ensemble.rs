use criterion::{criterion_group, criterion_main, Criterion};
use edg_core::par::{map_replicas, map_replicas_seq};
use edg_core::rng::{rng_from_seed, split_seed};
use edg_core::{CountState, Kernel};

fn run_replica(kernel: &Kernel, index: usize) -> u64 {
    let seed = split_seed(42, index as u64);
    let mut state = CountState::init_iid(kernel.clone(), 200, 200, seed).unwrap();
    let mut rng = rng_from_seed(split_seed(seed, 1));
    state.run_until(2.0, &[0.0, 2.0], &mut rng).unwrap().events
}

fn ensemble(c: &mut Criterion) {
    let kernel = Kernel::product(1.0).unwrap();
    let replicas = 32;
    let mut group = c.benchmark_group("ensemble_L200_t2");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| map_replicas_seq(replicas, |i| run_replica(&kernel, i)))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| map_replicas(replicas, None, |i| run_replica(&kernel, i)))
    });
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
