use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edlx_core::corpus::{emit_pdf, generate_with, GenConfig, Resources};
use edlx_core::exec::Exec;
use edlx_core::ingest::IngestConfig;
use edlx_core::model::{Model, ModelConfig, ModelParams};
use edlx_core::pipeline::{bench_extract, PdfInput};
use edlx_core::trainer::{build_vocab, train, TrainConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn corpus(n: usize) -> GenConfig {
    GenConfig {
        n_documents: n,
        pages_per_doc: [1, 1],
        ..GenConfig::default()
    }
}

fn bench_generate(c: &mut Criterion) {
    let res = Resources::default();
    let cfg = corpus(32);
    let mut g = c.benchmark_group("generate_32_docs");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_with(&cfg, &res, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_extract_pipeline(c: &mut Criterion) {
    let m = generate_with(&corpus(32), &Resources::default(), Exec::Parallel).unwrap();
    let docs = m.docs();
    let vocab = build_vocab(&docs);
    let params = ModelParams::init(&ModelConfig::default(), vocab.sizes(), &mut ChaCha8Rng::seed_from_u64(0));
    let model = Model { params, vocab };
    let inputs: Vec<PdfInput> = docs
        .iter()
        .map(|d| PdfInput {
            doc_id: d.doc_id.clone(),
            bytes: emit_pdf(d),
        })
        .collect();
    let ingest = IngestConfig::default();
    let mut g = c.benchmark_group("extract_32_pdfs");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bench_extract(&model, &inputs, &ingest, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_train_steps(c: &mut Criterion) {
    let docs = generate_with(&corpus(16), &Resources::default(), Exec::Parallel)
        .unwrap()
        .docs();
    let tc = TrainConfig {
        steps: 4,
        warmup_steps: 1,
        ..TrainConfig::default()
    };
    let mc = ModelConfig::default();
    let mut g = c.benchmark_group("train_4_steps");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train(&docs, &mc, &tc, 0, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_generate, bench_extract_pipeline, bench_train_steps);
criterion_main!(benches);
