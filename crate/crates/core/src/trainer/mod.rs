//! Desk-scale classifier trained with the composite imbalance loss.
//!
//! Epochs are numbered from 1. Influence-balanced terms are active from epoch
//! `warmup_epochs + 1` on. After every epoch the model is scored on the
//! validation range and the epoch with the highest validation GMGS (earliest
//! on ties) is kept.

mod adamw;
mod checkpoint;
mod network;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adamw::{adamw_step, AdamW, Moments};
pub use checkpoint::{config_hash, SavedCheckpoint, CHECKPOINT_MAGIC};
pub use network::{Architecture, Params};

use crate::cycle::{phi, CycleConfig};
use crate::data::Fold;
use crate::error::{FlareError, Result};
use crate::exec::{sum_vectors, Execution};
use crate::losses::{FlareLoss, HeadState, IbCeMode, IbFactors, LossBreakdown};
use crate::metrics::{Climatology, MetricReport};
use crate::types::{ClassWeights, FlareClass, OneHotLabel, ProbDist, Sample, NUM_CLASSES};

/// Which objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Class-weighted CE + Brier terms with influence balancing after warm-up.
    #[default]
    Flare,
    /// Plain unweighted cross-entropy.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamW,
    pub lambda_bss: f64,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub hidden_widths: Vec<usize>,
    pub use_cycle_embedding: bool,
    pub loss: LossKind,
    pub ib_ce_mode: IbCeMode,
    pub cycle: CycleConfig,
    /// Check parameter gradients against finite differences on the first
    /// batch of the run.
    pub verify_gradients: bool,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            optimizer: AdamW::default(),
            lambda_bss: crate::losses::DEFAULT_LAMBDA_BSS,
            warmup_epochs: 5,
            seed: 0,
            hidden_widths: vec![64, 64],
            use_cycle_embedding: true,
            loss: LossKind::Flare,
            ib_ce_mode: IbCeMode::Residual,
            cycle: CycleConfig::default(),
            verify_gradients: false,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlareError::InvalidConfig(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if self.warmup_epochs > self.epochs {
            return bad(format!(
                "warmup_epochs {} exceeds epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.eps > 0.0 && o.weight_decay >= 0.0) {
            return bad("learning_rate and eps must be positive, weight_decay non-negative".into());
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.lambda_bss >= 0.0 && self.lambda_bss.is_finite()) {
            return bad("lambda_bss must be non-negative".into());
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return bad(format!("invalid hidden widths {:?}", self.hidden_widths));
        }
        Ok(())
    }

    /// Influence-balanced terms apply from this 1-based epoch on.
    pub fn ib_active(&self, epoch: usize) -> bool {
        self.loss == LossKind::Flare && epoch > self.warmup_epochs
    }

    fn embedding(&self, sample: &Sample) -> f64 {
        if self.use_cycle_embedding {
            phi(sample.timestamp, &self.cycle)
        } else {
            0.0
        }
    }
}

/// Head state for one sample.
pub fn forward(sample: &Sample, params: &Params, cfg: &TrainConfig) -> Result<HeadState> {
    network::forward_cached(params, &sample.features, cfg.embedding(sample)).map(|c| c.head)
}

/// Predicted distributions for a set of samples.
pub fn predict(samples: &[Sample], params: &Params, cfg: &TrainConfig) -> Result<Vec<ProbDist>> {
    cfg.execution
        .map(samples, |s| forward(s, params, cfg).map(|h| *h.probs()))
        .into_iter()
        .collect()
}

/// Metric report of `params` on labeled samples.
pub fn evaluate(
    samples: &[Sample],
    params: &Params,
    cfg: &TrainConfig,
    climatology: &Climatology,
) -> Result<MetricReport> {
    let probs = predict(samples, params, cfg)?;
    let forecasts = samples
        .iter()
        .zip(probs)
        .map(|(s, p)| {
            s.label
                .map(|c| (p, c))
                .ok_or_else(|| FlareError::DegenerateSplit(format!("sample {} has no label", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_probabilistic(&forecasts, climatology)
}

/// Index of the largest value; earliest index wins ties.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        match best {
            Some(b) if scores[b] >= *s => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-size weighted mean of the per-batch breakdowns.
    pub loss: LossBreakdown,
    pub validation: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: Params,
    pub val_gmgs: f64,
    pub validation: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Worst relative error of the first-batch gradient check, when enabled.
    pub gradient_check: Option<f64>,
}

/// Tolerance of the first-batch gradient check.
pub const GRADIENT_CHECK_TOL: f64 = 1e-5;

/// Header of the history file.
pub const HISTORY_HEADER: &str = "epoch,wce,ib_ce,wbss,ib_bss,total,val_gmgs,val_tss,val_bss";

/// History as comma-separated text; undefined metrics are written as `nan`.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in history {
        let l = &r.loss;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            l.wce,
            l.ib_ce,
            l.wbss,
            l.ib_bss,
            l.total,
            r.validation.gmgs,
            opt(r.validation.tss_ge_m),
            opt(r.validation.bss_ge_m)
        );
    }
    out
}

struct Objective<'a> {
    cfg: &'a TrainConfig,
    loss: FlareLoss,
    gamma: ClassWeights,
}

impl Objective<'_> {
    fn heads(
        &self,
        params: &Params,
        batch: &[&Sample],
    ) -> Result<Vec<(network::ForwardCache, OneHotLabel)>> {
        self.cfg
            .execution
            .map(batch, |s| {
                let cache = network::forward_cached(params, &s.features, self.cfg.embedding(s))?;
                let y = OneHotLabel::new(s.label.expect("training samples are labeled"));
                Ok((cache, y))
            })
            .into_iter()
            .collect()
    }

    fn loss_items(
        caches: &[(network::ForwardCache, OneHotLabel)],
    ) -> Vec<(HeadState, OneHotLabel)> {
        caches.iter().map(|(c, y)| (c.head.clone(), *y)).collect()
    }

    /// Loss and parameter gradient, with influence factors computed at the
    /// current parameters (or taken from `frozen`).
    fn loss_and_grad(
        &self,
        params: &Params,
        batch: &[&Sample],
        ib_active: bool,
        frozen: Option<&[IbFactors]>,
    ) -> Result<(LossBreakdown, Vec<f64>, Vec<IbFactors>)> {
        let caches = self.heads(params, batch)?;
        let items = Self::loss_items(&caches);
        let factors = match frozen {
            Some(f) => f.to_vec(),
            None => self.loss.factors(&items),
        };
        let breakdown = self
            .loss
            .evaluate_frozen(&items, &self.gamma, ib_active, &factors)?;
        let logit_grads = self
            .loss
            .logit_grads_frozen(&items, &self.gamma, ib_active, &factors)?;
        let per_sample = self.cfg.execution.map_range(caches.len(), |i| {
            network::backward(params, &caches[i].0, &logit_grads[i])
        });
        let grad = sum_vectors(&per_sample, params.as_slice().len());
        Ok((breakdown, grad, factors))
    }

    fn frozen_total(
        &self,
        params: &Params,
        batch: &[&Sample],
        ib_active: bool,
        factors: &[IbFactors],
    ) -> Result<f64> {
        let caches = self.heads(params, batch)?;
        let items = Self::loss_items(&caches);
        Ok(self
            .loss
            .evaluate_frozen(&items, &self.gamma, ib_active, factors)?
            .total)
    }

    /// Worst normwise relative error between the analytic gradient and
    /// central differences over a strided subset of parameters.
    fn check_gradient(&self, params: &Params, batch: &[&Sample], ib_active: bool) -> Result<f64> {
        let (_, grad, factors) = self.loss_and_grad(params, batch, ib_active, None)?;
        let n = params.as_slice().len();
        let stride = (n / 256).max(1);
        let step = 1e-6;
        let mut max_diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in (0..n)
            .step_by(stride)
            .chain(n.saturating_sub(NUM_CLASSES * 8)..n)
        {
            let mut plus = params.clone();
            plus.as_mut_slice()[i] += step;
            let mut minus = params.clone();
            minus.as_mut_slice()[i] -= step;
            let fd = (self.frozen_total(&plus, batch, ib_active, &factors)?
                - self.frozen_total(&minus, batch, ib_active, &factors)?)
                / (2.0 * step);
            max_diff = max_diff.max((fd - grad[i]).abs());
            scale = scale.max(fd.abs()).max(grad[i].abs());
        }
        Ok(if scale == 0.0 { 0.0 } else { max_diff / scale })
    }
}

fn class_counts<'a>(samples: impl Iterator<Item = &'a Sample>) -> Result<[u64; NUM_CLASSES]> {
    let mut counts = [0u64; NUM_CLASSES];
    for s in samples {
        let c = s
            .label
            .ok_or_else(|| FlareError::DegenerateSplit(format!("sample {} has no label", s.id)))?;
        counts[c.rank()] += 1;
    }
    Ok(counts)
}

fn require_all_classes(counts: &[u64; NUM_CLASSES], what: &str) -> Result<()> {
    match counts.iter().position(|&c| c == 0) {
        Some(k) => Err(FlareError::DegenerateSplit(format!(
            "{what} set has no samples of class {}",
            FlareClass::ALL[k]
        ))),
        None => Ok(()),
    }
}

/// Trains on `fold.train`, selecting the checkpoint by validation GMGS.
pub fn train(dataset: &[Sample], fold: &Fold, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    for r in [&fold.train, &fold.validation] {
        if r.is_empty() || r.end > dataset.len() {
            return Err(FlareError::DegenerateSplit(format!(
                "range {r:?} is empty or outside {} samples",
                dataset.len()
            )));
        }
    }
    let train_set = &dataset[fold.train.clone()];
    let val_set = &dataset[fold.validation.clone()];
    let train_counts = class_counts(train_set.iter())?;
    require_all_classes(&train_counts, "training")?;
    require_all_classes(&class_counts(val_set.iter())?, "validation")?;

    let input_dim = train_set[0].features.len();
    let arch = Architecture::new(input_dim, cfg.hidden_widths.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Params::init(arch, &mut rng);
    let mut moments = Moments::zeros(params.as_slice().len());

    let (gamma, lambda) = match cfg.loss {
        LossKind::Flare => (ClassWeights::from_counts(train_counts)?, cfg.lambda_bss),
        LossKind::CrossEntropy => (ClassWeights::uniform(), 0.0),
    };
    let objective = Objective {
        cfg,
        loss: FlareLoss::new(lambda)?
            .with_ib_ce_mode(cfg.ib_ce_mode)
            .with_execution(cfg.execution),
        gamma,
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut snapshots: Vec<Params> = Vec::with_capacity(cfg.epochs);
    let mut gradient_check = None;
    let mut step = 0u64;

    for epoch in 1..=cfg.epochs {
        let ib_active = cfg.ib_active(epoch);
        order.shuffle(&mut rng);
        let mut sums = [0.0; 5];
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            if cfg.verify_gradients && gradient_check.is_none() {
                let err = objective.check_gradient(&params, &batch, ib_active)?;
                if err > GRADIENT_CHECK_TOL {
                    return Err(FlareError::GradientCheck(format!(
                        "first-batch relative error {err:e} exceeds {GRADIENT_CHECK_TOL:e}"
                    )));
                }
                gradient_check = Some(err);
            }
            let (breakdown, grad, _) = objective.loss_and_grad(&params, &batch, ib_active, None)?;
            if !breakdown.total.is_finite() {
                return Err(FlareError::Diverged(format!(
                    "non-finite loss in epoch {epoch}"
                )));
            }
            step += 1;
            adamw_step(
                params.as_mut_slice(),
                &grad,
                &mut moments,
                &cfg.optimizer,
                step,
            )?;
            let w = batch.len() as f64;
            for (s, v) in sums.iter_mut().zip([
                breakdown.wce,
                breakdown.ib_ce,
                breakdown.wbss,
                breakdown.ib_bss,
                breakdown.total,
            ]) {
                *s += w * v;
            }
        }
        let n = train_set.len() as f64;
        let loss = LossBreakdown {
            wce: sums[0] / n,
            ib_ce: sums[1] / n,
            wbss: sums[2] / n,
            ib_bss: sums[3] / n,
            total: sums[4] / n,
            ib_active,
        };
        let validation = evaluate(val_set, &params, cfg, &Climatology::FromMatrixRows)?;
        history.push(EpochRecord {
            epoch,
            loss,
            validation,
        });
        snapshots.push(params.clone());
    }

    let scores: Vec<f64> = history.iter().map(|r| r.validation.gmgs).collect();
    let best = select_best(&scores)
        .ok_or_else(|| FlareError::Diverged("no epoch produced a finite validation GMGS".into()))?;
    let record = &history[best];
    Ok(TrainOutcome {
        best: Checkpoint {
            epoch: record.epoch,
            params: snapshots.swap_remove(best),
            val_gmgs: record.validation.gmgs,
            validation: record.validation.clone(),
        },
        history,
        gradient_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SplitSpec, SynthConfig};

    fn small_data(seed: u64) -> Vec<Sample> {
        gen_synthetic(&SynthConfig {
            n: 400,
            class_probs: [0.35, 0.3, 0.2, 0.15],
            seed,
            feature_dim: 6,
            missing_channel_prob: 0.0,
            separation: 0.8,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            batch_size: 32,
            warmup_epochs: 2,
            hidden_widths: vec![8, 8],
            optimizer: AdamW {
                learning_rate: 5e-3,
                ..AdamW::default()
            },
            ..TrainConfig::default()
        }
    }

    fn fold(n: usize) -> Fold {
        SplitSpec {
            fold_count: 1,
            ..SplitSpec::default()
        }
        .folds(n)
        .unwrap()
        .remove(0)
    }

    #[test]
    fn zero_params_forward_uniform() {
        let data = small_data(1);
        let p = Params::zeros(Architecture::new(6, vec![8, 8]).unwrap());
        let h = forward(&data[0], &p, &small_cfg()).unwrap();
        assert_eq!(h.probs(), &ProbDist::uniform());
    }

    #[test]
    fn cycle_embedding_only_changes_last_slot() {
        let data = small_data(1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Params::init(Architecture::new(6, vec![8, 8]).unwrap(), &mut rng);
        let with = forward(&data[3], &p, &small_cfg()).unwrap();
        let without = forward(
            &data[3],
            &p,
            &TrainConfig {
                use_cycle_embedding: false,
                ..small_cfg()
            },
        )
        .unwrap();
        let n = with.hidden().len();
        assert_eq!(with.hidden()[..n - 1], without.hidden()[..n - 1]);
        assert_eq!(without.hidden()[n - 1], 0.0);
        assert_eq!(
            with.hidden()[n - 1],
            phi(data[3].timestamp, &CycleConfig::default())
        );
        assert_eq!(forward(&data[3], &p, &small_cfg()).unwrap(), with);
    }

    #[test]
    fn dimension_mismatch() {
        let p = Params::zeros(Architecture::new(5, vec![4]).unwrap());
        assert!(matches!(
            forward(&small_data(1)[0], &p, &small_cfg()),
            Err(FlareError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn select_best_earliest_tie() {
        assert_eq!(select_best(&[0.2, 0.5]), Some(1));
        assert_eq!(select_best(&[0.5, 0.2, 0.5]), Some(0));
        assert_eq!(select_best(&[f64::NAN, 0.1]), Some(1));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn warmup_schedule_and_determinism() {
        let data = small_data(2);
        let cfg = small_cfg();
        let out = train(&data, &fold(data.len()), &cfg).unwrap();
        assert_eq!(out.history.len(), 4);
        for r in &out.history {
            assert_eq!(r.loss.ib_active, r.epoch > 2);
            if r.epoch <= 2 {
                assert_eq!(r.loss.ib_ce, 0.0);
                assert_eq!(r.loss.ib_bss, 0.0);
            } else {
                assert!(r.loss.ib_ce > 0.0 && r.loss.ib_bss > 0.0);
            }
        }
        let again = train(&data, &fold(data.len()), &cfg).unwrap();
        assert_eq!(history_csv(&out.history), history_csv(&again.history));
        assert_eq!(out.best.params, again.best.params);

        let scores: Vec<f64> = out.history.iter().map(|r| r.validation.gmgs).collect();
        assert_eq!(out.best.epoch, select_best(&scores).unwrap() + 1);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let data = small_data(3);
        let seq = TrainConfig {
            execution: Execution::Sequential,
            ..small_cfg()
        };
        let par = TrainConfig {
            execution: Execution::Parallel,
            ..small_cfg()
        };
        let a = train(&data, &fold(data.len()), &seq).unwrap();
        let b = train(&data, &fold(data.len()), &par).unwrap();
        assert_eq!(history_csv(&a.history), history_csv(&b.history));
    }

    #[test]
    fn full_warmup_has_no_ib_terms() {
        let data = small_data(4);
        let cfg = TrainConfig {
            warmup_epochs: 4,
            ..small_cfg()
        };
        let out = train(&data, &fold(data.len()), &cfg).unwrap();
        assert!(out
            .history
            .iter()
            .all(|r| r.loss.ib_ce == 0.0 && r.loss.ib_bss == 0.0));
    }

    #[test]
    fn gradient_verification() {
        let data = small_data(5);
        let cfg = TrainConfig {
            epochs: 1,
            warmup_epochs: 0,
            verify_gradients: true,
            ..small_cfg()
        };
        let out = train(&data, &fold(data.len()), &cfg).unwrap();
        assert!(out.gradient_check.unwrap() <= GRADIENT_CHECK_TOL);
    }

    #[test]
    fn missing_class_is_degenerate() {
        let mut data = small_data(6);
        for s in &mut data {
            if s.label == Some(FlareClass::X) {
                s.label = Some(FlareClass::M);
            }
        }
        assert!(matches!(
            train(&data, &fold(data.len()), &small_cfg()),
            Err(FlareError::DegenerateSplit(_))
        ));
    }

    #[test]
    fn invalid_config() {
        let data = small_data(1);
        let cfg = TrainConfig {
            warmup_epochs: 9,
            ..small_cfg()
        };
        assert!(matches!(
            train(&data, &fold(data.len()), &cfg),
            Err(FlareError::InvalidConfig(_))
        ));
    }

    #[test]
    fn history_header() {
        assert!(history_csv(&[])
            .starts_with("epoch,wce,ib_ce,wbss,ib_bss,total,val_gmgs,val_tss,val_bss\n"));
    }
}
