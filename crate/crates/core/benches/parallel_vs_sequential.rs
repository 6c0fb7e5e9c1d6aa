use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flare_core::data::{apply_channel_policy, gen_synthetic, SplitSpec, SynthConfig};
use flare_core::trainer::{predict, train, Architecture, Params, TrainConfig};
use flare_core::{ClassWeights, Execution, FlareClass, FlareLoss, HeadState, OneHotLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn head_batch(n: usize, width: usize) -> Vec<(HeadState, OneHotLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..n)
        .map(|_| {
            let h = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = (0..4 * width)
                .map(|_| rng.random_range(-0.5..0.5))
                .collect();
            let y = OneHotLabel::new(FlareClass::ALL[rng.random_range(0..4)]);
            (HeadState::new(h, w).unwrap(), y)
        })
        .collect()
}

fn bench_loss(c: &mut Criterion) {
    let batch = head_batch(16_384, 65);
    let gamma = ClassWeights::from_raw([0.66, 0.72, 1.09, 5.62]).unwrap();
    let mut group = c.benchmark_group("flare_loss_and_grad");
    for (name, exec) in MODES {
        let loss = FlareLoss::default().with_execution(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let l = loss.evaluate(&batch, &gamma, true).unwrap();
                let g = loss.logit_grads(&batch, &gamma, true).unwrap();
                (l.total, g.len())
            })
        });
    }
    group.finish();
}

fn dataset(n: usize) -> Vec<flare_core::Sample> {
    let cfg = SynthConfig {
        n,
        seed: 5,
        ..SynthConfig::default()
    };
    apply_channel_policy(gen_synthetic(&cfg).unwrap()).kept
}

fn bench_predict(c: &mut Criterion) {
    let data = dataset(10_000);
    let arch = Architecture::new(data[0].features.len(), vec![64, 64]).unwrap();
    let params = Params::init(arch, &mut ChaCha8Rng::seed_from_u64(1));
    let mut group = c.benchmark_group("predict_10k");
    for (name, exec) in MODES {
        let cfg = TrainConfig {
            execution: exec,
            ..TrainConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| predict(&data, &params, &cfg).unwrap().len())
        });
    }
    group.finish();
}

fn bench_train_epoch(c: &mut Criterion) {
    let data = dataset(4_000);
    let fold = SplitSpec {
        fold_count: 1,
        ..SplitSpec::default()
    }
    .folds(data.len())
    .unwrap()
    .remove(0);
    let mut group = c.benchmark_group("train_one_epoch");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = TrainConfig {
            epochs: 1,
            warmup_epochs: 0,
            batch_size: 512,
            execution: exec,
            ..TrainConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train(&data, &fold, &cfg).unwrap().best.val_gmgs)
        });
    }
    group.finish();
}

criterion_group!(benches, bench_loss, bench_predict, bench_train_epoch);
criterion_main!(benches);
