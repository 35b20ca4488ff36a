//! Compares the data-parallel kernels against a single-thread baseline.
//!
//! With the `parallel` feature (default) the same code runs in a
//! one-thread rayon pool and in a pool sized to the machine; without it
//! the sequential fallback is measured once.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use regcal::numerics::{cholesky, seeded_rng, SymmetricMatrix};
use std::hint::black_box;

fn random_spd(n: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = seeded_rng(seed);
    let points: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut m = SymmetricMatrix::from_lower_fn(n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            let d = points[i] - points[j];
            *v = (-0.5 * d * d).exp();
        }
    });
    m.add_diagonal(1e-2);
    m
}

fn factor_and_solve(m: &SymmetricMatrix, rhs_flat: &[f64]) -> f64 {
    let f = cholesky(m, 0.0).unwrap();
    let mut rows = rhs_flat.to_vec();
    f.solve_lower_rows(&mut rows);
    rows.iter().sum()
}

#[cfg(feature = "parallel")]
fn run_in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn bench_cholesky(c: &mut Criterion) {
    let n = 640;
    let m = random_spd(n, 11);
    let mut rhs = vec![0.0; 64 * n];
    for (i, v) in rhs.iter_mut().enumerate() {
        *v = 1.0 / (1 + i / n) as f64;
    }

    let mut group = c.benchmark_group("cholesky_multirhs");
    #[cfg(feature = "parallel")]
    {
        for threads in [1usize, 0] {
            let label = if threads == 1 { "single" } else { "pool" };
            group.bench_with_input(BenchmarkId::new(label, n), &m, |b, m| {
                b.iter(|| {
                    let threads = if threads == 0 {
                        std::thread::available_parallelism().map_or(4, |p| p.get())
                    } else {
                        threads
                    };
                    run_in_pool(threads, || black_box(factor_and_solve(m, &rhs)))
                })
            });
        }
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_with_input(BenchmarkId::new("sequential", n), &m, |b, m| {
        b.iter(|| black_box(factor_and_solve(m, &rhs)))
    });
    group.finish();
}

criterion_group!(benches, bench_cholesky);
criterion_main!(benches);
