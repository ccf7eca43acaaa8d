//! One worker against the automatic pool on the hot paths.
//!
//! Build with `--no-default-features` to time the sequential backend itself;
//! there both variants run on the calling thread.

use std::hint::black_box;

use alcore::par::with_threads;
use alcore::selection::select_representative;
use alcore::similarity::{FeatureVector, SimilarityMatrix};
use alcore::simulation::{simulate, PhantomParams, SimulationConfig};
use alcore::uncertainty::{dropout_topfraction_score, DEFAULT_TOP_FRACTION};
use alcore::volume::{Dims, ProbabilityMap, VoxelGrid};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const THREADS: [(&str, usize); 2] = [("one", 1), ("auto", 0)];

fn vectors(count: usize, len: usize) -> Vec<FeatureVector> {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    (0..count)
        .map(|i| FeatureVector::new(format!("v{i:04}"), (0..len).map(|_| r.random::<f64>() + 1e-3).collect()).unwrap())
        .collect()
}

fn scoring(c: &mut Criterion) {
    let dims = Dims::cube(32).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let maps: Vec<ProbabilityMap> = (0..5)
        .map(|_| ProbabilityMap::new(VoxelGrid::new(dims, (0..dims.len()).map(|_| r.random::<f32>()).collect()).unwrap()).unwrap())
        .collect();
    let mut g = c.benchmark_group("dropout_score_32cubed_n5");
    for (name, t) in THREADS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_threads(t, || dropout_topfraction_score("x", black_box(&maps), DEFAULT_TOP_FRACTION).unwrap()))
        });
    }
    g.finish();
}

fn similarity(c: &mut Criterion) {
    let v = vectors(200, 512);
    let refs: Vec<&FeatureVector> = v.iter().collect();
    let mut g = c.benchmark_group("similarity_200x512");
    for (name, t) in THREADS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_threads(t, || SimilarityMatrix::square(black_box(&refs)).unwrap()))
        });
    }
    g.finish();
}

fn greedy(c: &mut Criterion) {
    let v = vectors(100, 512);
    let mut g = c.benchmark_group("representative_k100_m50");
    for (name, t) in THREADS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| with_threads(t, || select_representative(black_box(&v), 50, 3).unwrap()))
        });
    }
    g.finish();
}

fn loop_run(c: &mut Criterion) {
    let cfg = SimulationConfig {
        pool_size: 40,
        grid: [16, 16, 16],
        initial_n: 8,
        batch_m: 4,
        shortlist_k: 8,
        iterations: 3,
        n_predictions: 3,
        phantom: PhantomParams { lesion_radius_min: 1.5, lesion_radius_max: 3.5, ..Default::default() },
        ..SimulationConfig::default()
    };
    let mut g = c.benchmark_group("simulate_pool40_16cubed");
    g.sample_size(10);
    for (name, t) in THREADS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| with_threads(t, || simulate(black_box(&cfg)).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, scoring, similarity, greedy, loop_run);
criterion_main!(benches);
