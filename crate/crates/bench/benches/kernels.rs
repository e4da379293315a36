use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mimgan_bench::{discriminator, gaussian_matrix, scored_set};
use mimgan_core::autodiff::Tape;
use mimgan_core::metrics::roc_auc;
use mimgan_core::objectives::discriminator_loss_on;
use mimgan_core::training::train_adversarial;
use mimgan_core::{GanConfig, ObjectiveKind};
use std::hint::black_box;

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [64, 256] {
        let a = gaussian_matrix(n, n, 1);
        let b = gaussian_matrix(n, n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| black_box(&a).matmul(black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn mlp(c: &mut Criterion) {
    let model = discriminator(6, &[64, 64], 3);
    let batch = gaussian_matrix(512, 6, 4);
    c.bench_function("mlp_forward_512x6", |b| b.iter(|| model.forward(black_box(&batch)).unwrap()));
    c.bench_function("mlp_forward_backward_mim_512x6", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let x = tape.leaf(batch.clone()).unwrap();
            let (out, vars) = model.forward_taped(&mut tape, x).unwrap();
            let real = tape.slice_rows(out, 0, 256).unwrap();
            let fake = tape.slice_rows(out, 256, 512).unwrap();
            let loss = discriminator_loss_on(&mut tape, ObjectiveKind::Mim, real, fake).unwrap();
            let grads = tape.backward(loss, 1.0).unwrap();
            black_box(model.collect_gradients(&grads, &vars))
        })
    });
}

fn training(c: &mut Criterion) {
    let data = gaussian_matrix(4096, 6, 5);
    let mut group = c.benchmark_group("train_10_iterations");
    group.sample_size(10);
    for kind in [ObjectiveKind::Mim, ObjectiveKind::KlSaturating] {
        let cfg = GanConfig::new(kind, 6).with_iterations(10);
        group.bench_function(kind.name(), |b| b.iter(|| train_adversarial(black_box(&cfg), &data).unwrap()));
    }
    group.finish();
}

fn auc(c: &mut Criterion) {
    let (scores, labels) = scored_set(10_000, 6);
    c.bench_function("roc_auc_10k", |b| b.iter(|| roc_auc(black_box(&scores), &labels).unwrap()));
}

criterion_group!(benches, matmul, mlp, training, auc);
criterion_main!(benches);
