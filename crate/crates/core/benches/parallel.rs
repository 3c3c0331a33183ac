use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use interrupt_engine::features::{FeatureFrame, FeatureSchema};
use interrupt_engine::ldcrf::{dataset_objective, LabeledSequence, LdcrfHyperparams, LdcrfModel};
use interrupt_engine::policy::PolicyKind;
use interrupt_engine::sim::{run_experiment, ExperimentConfig};

fn dataset(sequences: usize, len: usize, width: usize) -> Vec<LabeledSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..sequences)
        .map(|s| {
            let frames = (0..len)
                .map(|i| FeatureFrame::new(i as f64 * 0.5, (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect();
            let labels = (0..len).map(|i| ((i / 20) % 2) as u8).collect();
            LabeledSequence::new(format!("s{s}"), frames, labels)
        })
        .collect()
}

fn pools() -> [(&'static str, rayon::ThreadPool); 2] {
    [
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn objective(c: &mut Criterion) {
    let schema = FeatureSchema::standard();
    let data = dataset(16, 400, schema.len());
    let model = LdcrfModel::random_init(schema, LdcrfHyperparams::default(), 1);
    let mut group = c.benchmark_group("ldcrf_objective");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| pool.install(|| dataset_objective(&model, &data).unwrap())));
    }
    group.finish();
}

fn trials(c: &mut Criterion) {
    let config = ExperimentConfig::default();
    let mut group = c.benchmark_group("rnd_trials");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            b.iter(|| pool.install(|| run_experiment(&config, &[PolicyKind::Rnd], 16, None, 3).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, objective, trials);
criterion_main!(benches);
