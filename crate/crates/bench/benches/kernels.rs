use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

use evidiag::bls::{BlsClassifier, BlsConfig};
use evidiag::dataio::{one_hot, synth_multimode, SynthConfig};
use evidiag::er_fusion::{fuse, BeliefDistribution, EvidenceWeights};
use evidiag::numkernel::{matmul, pinv, Matrix};
use evidiag::online::{default_c_tol, greville_append_in_place, online_step, OnlineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn bench_pinv(c: &mut Criterion) {
    let mut g = c.benchmark_group("pinv");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (rows, cols) in [(100, 40), (350, 200), (200, 350)] {
        let a = random(&mut rng, rows, cols);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{rows}x{cols}")),
            &a,
            |b, a| b.iter(|| pinv(black_box(a), 1e-8).unwrap()),
        );
    }
    g.finish();
}

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&mut rng, 350, 200);
    let b = random(&mut rng, 200, 7);
    c.bench_function("matmul 350x200 * 200x7", |bench| {
        bench.iter(|| matmul(black_box(&a), black_box(&b)).unwrap())
    });
}

fn bench_greville(c: &mut Criterion) {
    let mut g = c.benchmark_group("greville_append");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (rows, cols) in [(350, 200), (100, 200)] {
        let a = random(&mut rng, rows, cols);
        let p = pinv(&a, 1e-10).unwrap();
        let row = random(&mut rng, 1, cols).data().to_vec();
        g.bench_function(format!("{rows}x{cols}"), |b| {
            b.iter_batched(
                || (a.clone(), p.clone()),
                |(mut a, mut p)| {
                    greville_append_in_place(&mut a, &mut p, &row, default_c_tol(&row)).unwrap()
                },
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

fn bench_fuse(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let evidence: Vec<_> = (0..3)
        .map(|_| {
            let raw: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let b = BeliefDistribution::new(raw.iter().map(|v| v / s).collect()).unwrap();
            let w =
                EvidenceWeights::new((0..7).map(|_| rng.random_range(0.1..1.0)).collect()).unwrap();
            (b, w)
        })
        .collect();
    c.bench_function("fuse 3 sources x 7 classes", |b| {
        b.iter(|| fuse(black_box(&evidence)).unwrap())
    });
}

fn bench_online_step(c: &mut Criterion) {
    let d = synth_multimode(&SynthConfig::default(), 4).unwrap();
    let rows: Vec<usize> = (0..700).collect();
    let train = d.select(&rows);
    let y = one_hot(&train.fault_labels, 7).unwrap();
    let classifiers: Vec<BlsClassifier> = (0..3)
        .map(|k| {
            let mut c = BlsClassifier::init(
                BlsConfig {
                    seed: k,
                    ..BlsConfig::default()
                },
                20,
                7,
            )
            .unwrap();
            c.fit(&train.features, &y).unwrap();
            c
        })
        .collect();
    let weights = vec![EvidenceWeights::uniform(7, 1.0).unwrap(); 3];
    let x = d.features.row(800).to_vec();
    let cfg = OnlineConfig::default();
    c.bench_function("online_step 3 classifiers, 700 rows", |b| {
        b.iter_batched(
            || classifiers.clone(),
            |mut cs| online_step(&mut cs, &weights, &x, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(
    benches,
    bench_pinv,
    bench_matmul,
    bench_greville,
    bench_fuse,
    bench_online_step
);
criterion_main!(benches);
