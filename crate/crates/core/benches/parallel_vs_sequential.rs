use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use vlrb::fusion::FusionMethod;
use vlrb::log_store::{ingest, make_split, BenchStore, EmbeddingTable, SplitAssignment};
use vlrb::par::Exec;
use vlrb::pipeline::{sweep, RouterSpec, Workbench};
use vlrb::routers::{RouterKind, TrainConfig};
use vlrb::soft_label::Lambda;
use vlrb::synth::{generate, SynthConfig};
use vlrb::verify;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn fixture(n: usize) -> (BenchStore, EmbeddingTable, SplitAssignment) {
    let b = generate(&SynthConfig { n_samples: n, ..SynthConfig::default() }).unwrap();
    let store = ingest(b.records, &b.prices).unwrap();
    let split = make_split(&store, 0).unwrap();
    (store, b.embeddings, split)
}

fn knn_predict(c: &mut Criterion) {
    let (store, emb, split) = fixture(5000);
    let wb = Workbench { store: &store, embeddings: &emb, split: &split };
    let spec = RouterSpec { k: 25, ..RouterSpec::new(RouterKind::Knn, FusionMethod::Concat, Lambda::ZERO, TrainConfig::default()) };
    let (model, _) = wb.train(&spec).unwrap();
    let test = split.test();
    let mut group = c.benchmark_group("knn_predict");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| model.decide_with(exec, &emb, &test).unwrap()));
    }
    group.finish();
}

fn optimality_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("soft_label_optimality");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| verify::soft_label_optimality(20, 1e-3, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn gradient_checks(c: &mut Criterion) {
    let mut group = c.benchmark_group("gradient_checks");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| verify::gradient_checks(2, 1, exec).unwrap()));
    }
    group.finish();
}

fn lambda_sweep(c: &mut Criterion) {
    let (store, emb, split) = fixture(1000);
    let wb = Workbench { store: &store, embeddings: &emb, split: &split };
    let config = TrainConfig { learning_rate: 1e-3, epochs: 2, mlp_hidden: 64, ..TrainConfig::default() };
    let spec = RouterSpec::new(RouterKind::Linear, FusionMethod::Concat, Lambda::ZERO, config);
    let grid = Lambda::default_grid();
    let mut group = c.benchmark_group("lambda_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(&wb, &spec, &grid, &[10], 0.1, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, knn_predict, optimality_sweep, gradient_checks, lambda_sweep);
criterion_main!(benches);
