use certens::fixtures::build_example1_fixture;
use certens::{
    apply, permutation_cascade, permutation_cascade_bruteforce, CertOutput, EnsemblerKind,
    PermutationConfig, WeightVector,
};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn ensemblers(c: &mut Criterion) {
    let rs = build_example1_fixture();
    let kinds = [
        EnsemblerKind::Cascade,
        EnsemblerKind::UniformVoting,
        EnsemblerKind::WeightedVoting(WeightVector::new(vec![0.5, 0.3, 0.2]).unwrap()),
        EnsemblerKind::PermutationCascade(PermutationConfig::default()),
    ];
    for kind in &kinds {
        c.bench_function(&format!("apply/{}", kind.name()), |b| {
            b.iter(|| apply(black_box(kind), black_box(&rs)).unwrap())
        });
    }

    let outputs: Vec<CertOutput> = (0..5).map(|i| CertOutput::new(i % 3, i % 2 == 0)).collect();
    let cfg = PermutationConfig::default();
    c.bench_function("permutation/closed_form_n5", |b| {
        b.iter(|| permutation_cascade(black_box(&outputs), 3, cfg).unwrap())
    });
    c.bench_function("permutation/bruteforce_n5", |b| {
        b.iter(|| permutation_cascade_bruteforce(black_box(&outputs), 3, cfg).unwrap())
    });
}

criterion_group!(benches, ensemblers);
criterion_main!(benches);
