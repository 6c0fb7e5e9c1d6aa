use flare_core::data::{apply_channel_policy, gen_synthetic, Fold, SplitSpec, SynthConfig};
use flare_core::trainer::{
    config_hash, history_csv, predict, train, AdamW, LossKind, SavedCheckpoint, TrainConfig,
    HISTORY_HEADER,
};
use flare_core::{Execution, FlareError, Sample};

fn data(n: usize, seed: u64) -> (Vec<Sample>, Fold) {
    let cfg = SynthConfig {
        n,
        seed,
        ..SynthConfig::default()
    };
    let kept = apply_channel_policy(gen_synthetic(&cfg).unwrap()).kept;
    let fold = SplitSpec {
        fold_count: 1,
        ..SplitSpec::default()
    }
    .folds(kept.len())
    .unwrap()
    .remove(0);
    (kept, fold)
}

fn small(execution: Execution) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        warmup_epochs: 2,
        hidden_widths: vec![16],
        optimizer: AdamW {
            learning_rate: 2e-3,
            ..AdamW::default()
        },
        execution,
        ..TrainConfig::default()
    }
}

#[test]
fn parallel_and_sequential_runs_are_identical() {
    let (samples, fold) = data(1500, 4);
    let seq = train(&samples, &fold, &small(Execution::Sequential)).unwrap();
    let par = train(&samples, &fold, &small(Execution::Parallel)).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn same_seed_same_outcome() {
    let (samples, fold) = data(1000, 5);
    let a = train(&samples, &fold, &small(Execution::default())).unwrap();
    let b = train(&samples, &fold, &small(Execution::default())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn best_checkpoint_has_the_highest_validation_gmgs() {
    let (samples, fold) = data(1500, 6);
    let out = train(&samples, &fold, &small(Execution::default())).unwrap();
    assert_eq!(out.history.len(), 4);
    let best = out
        .history
        .iter()
        .map(|r| r.validation.gmgs)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best.val_gmgs, best);
    let first = out
        .history
        .iter()
        .find(|r| r.validation.gmgs == best)
        .unwrap();
    assert_eq!(out.best.epoch, first.epoch);

    let csv = history_csv(&out.history);
    assert_eq!(csv.lines().next().unwrap(), HISTORY_HEADER);
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn gradient_check_runs_on_request() {
    let (samples, fold) = data(800, 7);
    let cfg = TrainConfig {
        verify_gradients: true,
        epochs: 1,
        warmup_epochs: 0,
        ..small(Execution::default())
    };
    let out = train(&samples, &fold, &cfg).unwrap();
    assert!(out.gradient_check.unwrap() < 1e-5);
}

#[test]
fn cross_entropy_baseline_has_no_influence_terms() {
    let (samples, fold) = data(1000, 8);
    let cfg = TrainConfig {
        loss: LossKind::CrossEntropy,
        ..small(Execution::default())
    };
    let out = train(&samples, &fold, &cfg).unwrap();
    for r in &out.history {
        assert_eq!(r.loss.ib_ce, 0.0);
        assert_eq!(r.loss.ib_bss, 0.0);
    }
}

#[test]
fn divergence_is_reported() {
    let (samples, fold) = data(800, 9);
    let cfg = TrainConfig {
        optimizer: AdamW {
            learning_rate: 1e300,
            ..AdamW::default()
        },
        ..small(Execution::default())
    };
    let err = train(&samples, &fold, &cfg).unwrap_err();
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn missing_class_in_validation_is_rejected() {
    let (mut samples, fold) = data(600, 10);
    for s in &mut samples[fold.validation.clone()] {
        if s.label == Some(flare_core::FlareClass::X) {
            s.label = Some(flare_core::FlareClass::M);
        }
    }
    assert!(matches!(
        train(&samples, &fold, &small(Execution::default())),
        Err(FlareError::DegenerateSplit(_))
    ));
}

#[test]
fn checkpoint_round_trip_reproduces_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let (samples, fold) = data(1000, 11);
    let cfg = small(Execution::default());
    let out = train(&samples, &fold, &cfg).unwrap();
    let saved = SavedCheckpoint {
        config_hash: config_hash("epochs = 4\n"),
        epoch: out.best.epoch,
        val_gmgs: out.best.val_gmgs,
        params: out.best.params.clone(),
    };
    let path = dir.path().join("checkpoint.txt");
    saved.write(&path).unwrap();
    let back = SavedCheckpoint::read(&path).unwrap();
    assert_eq!(back, saved);
    let test = &samples[fold.test.clone()];
    assert_eq!(
        predict(test, &back.params, &cfg).unwrap(),
        predict(test, &out.best.params, &cfg).unwrap()
    );
}
