use certens::fixtures::dominant_model_fixture;
use certens::weight_learner::objective_and_weight_gradient;
use certens::{learn, LearnerConfig, WeightVector};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn learner(c: &mut Criterion) {
    let rs = dominant_model_fixture();
    let w = WeightVector::uniform(3);
    c.bench_function("gradient/dominant", |b| {
        b.iter(|| objective_and_weight_gradient(black_box(&rs), black_box(&w), 1e5).unwrap())
    });
    let cfg = LearnerConfig::default();
    c.bench_function("learn/dominant_500_epochs", |b| {
        b.iter(|| learn(black_box(&rs), black_box(&cfg)).unwrap())
    });
}

criterion_group!(benches, learner);
criterion_main!(benches);
