//! Compares the data-parallel execution path (rayon, `parallel` feature)
//! against the sequential fallback on the two workloads that dominate build
//! and evaluation time: batch network realization and chunked Monte Carlo
//! accumulation. Both paths are deterministic, so the benchmark also guards
//! against accidental divergence between them.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relu_approx::assembler::{build, BuildRequest};
use relu_approx::exec;
use relu_approx::measures::Measure;
use relu_approx::network::Network;
use relu_approx::taylor::builtin_target;

fn test_network(eps: f64) -> Network {
    let f = builtin_target("sinprod", 1, 2.0, 10.0).unwrap();
    let req = BuildRequest::new(f, eps, 2.0, Measure::uniform(1).unwrap());
    build(&req).unwrap().network
}

fn sample_points(n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect())
        .collect()
}

fn bench_batch_realization(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_realization");
    for &eps_exp in &[4i32, 6] {
        let net = test_network(2f64.powi(-eps_exp));
        let points = sample_points(512, 1);

        let seq = exec::map_indexed_seq(points.len(), |i| net.realize(&points[i]).unwrap());
        let par = exec::map_indexed(points.len(), |i| net.realize(&points[i]).unwrap());
        assert_eq!(seq, par, "parallel and sequential realizations must agree");

        group.bench_with_input(
            BenchmarkId::new("parallel", format!("eps=2^-{eps_exp}")),
            &net,
            |b, net| {
                b.iter(|| exec::map_indexed(points.len(), |i| net.realize(&points[i]).unwrap()))
            },
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", format!("eps=2^-{eps_exp}")),
            &net,
            |b, net| {
                b.iter(|| exec::map_indexed_seq(points.len(), |i| net.realize(&points[i]).unwrap()))
            },
        );
    }
    group.finish();
}

fn bench_monte_carlo_accumulation(c: &mut Criterion) {
    // The mc_sum chunk kernel: sample, evaluate, accumulate. Running the
    // same per-chunk work through both map flavors isolates the scheduling
    // overhead from the arithmetic.
    let mu = Measure::uniform(2).unwrap();
    let f = builtin_target("gauss(0.3)", 2, 2.0, 12.0).unwrap();
    const CHUNK: usize = 1024;
    let chunks = 64usize;
    let kernel = |chunk: usize| -> f64 {
        let mut rng = exec::chunk_rng(exec::derive_seed(3, 0), chunk as u64);
        let mut acc = 0.0;
        for _ in 0..CHUNK {
            let x = mu.sample(&mut rng);
            let v = f.eval(&x);
            acc += v * v;
        }
        acc
    };

    let mut group = c.benchmark_group("monte_carlo_accumulation");
    group.bench_function("parallel", |b| {
        b.iter(|| exec::map_indexed(chunks, kernel).iter().sum::<f64>())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| exec::map_indexed_seq(chunks, kernel).iter().sum::<f64>())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_batch_realization,
    bench_monte_carlo_accumulation
);
criterion_main!(benches);
