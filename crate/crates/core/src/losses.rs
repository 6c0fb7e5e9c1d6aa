//! Influence-balanced and class-weighted cross-entropy / Brier losses for a
//! softmax head `p = softmax(W h)`.
//!
//! The composite loss is
//!
//! ```text
//! L = (L'_CE + L^IB_CE) + λ_BSS (L'_BSS + L^IB_BSS)
//! ```
//!
//! where primed terms are class-weighted batch means and IB terms divide each
//! sample's loss by its influence factor (the L1 norm of the loss gradient
//! with respect to `W`). IB terms are switched off during warm-up.

use crate::error::{FlareError, Result};
use crate::exec::{pairwise_sum, Execution};
use crate::types::{ClassWeights, OneHotLabel, ProbDist, NUM_CLASSES};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Floor applied to influence factors.
pub const IB_FACTOR_FLOOR: f64 = 1e-8;

/// Default weight of the Brier terms.
pub const DEFAULT_LAMBDA_BSS: f64 = 3.0;

/// Final hidden activations, head weights and the resulting prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadState {
    hidden: Vec<f64>,
    /// Row-major `4 × L`.
    weights: Vec<f64>,
    logits: [f64; NUM_CLASSES],
    probs: ProbDist,
}

impl HeadState {
    pub fn new(hidden: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let l = hidden.len();
        if weights.len() != NUM_CLASSES * l {
            return Err(FlareError::DimensionMismatch {
                expected: NUM_CLASSES * l,
                got: weights.len(),
            });
        }
        let mut logits = [0.0; NUM_CLASSES];
        for (k, z) in logits.iter_mut().enumerate() {
            *z = weights[k * l..(k + 1) * l]
                .iter()
                .zip(&hidden)
                .map(|(w, h)| w * h)
                .sum();
        }
        let probs = ProbDist::softmax(&logits);
        Ok(Self {
            hidden,
            weights,
            logits,
            probs,
        })
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn logits(&self) -> &[f64; NUM_CLASSES] {
        &self.logits
    }

    pub fn probs(&self) -> &ProbDist {
        &self.probs
    }

    pub fn hidden_l1(&self) -> f64 {
        self.hidden.iter().map(|h| h.abs()).sum()
    }

    /// Same hidden vector and weights with the logits replaced; used to probe
    /// the loss as a function of the logits.
    pub fn with_logits(&self, logits: [f64; NUM_CLASSES]) -> Self {
        Self {
            hidden: self.hidden.clone(),
            weights: self.weights.clone(),
            logits,
            probs: ProbDist::softmax(&logits),
        }
    }
}

/// `Δ = p − y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual([f64; NUM_CLASSES]);

impl Residual {
    pub fn new(p: &ProbDist, y: OneHotLabel) -> Self {
        let y = y.to_vector();
        let mut d = *p.as_array();
        for (dk, yk) in d.iter_mut().zip(y) {
            *dk -= yk;
        }
        Self(d)
    }

    pub fn values(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn dot(&self, p: &ProbDist) -> f64 {
        self.0.iter().zip(p.as_array()).map(|(d, p)| d * p).sum()
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().map(|d| d.abs()).sum()
    }
}

pub fn ce_loss(y: OneHotLabel, p: &ProbDist) -> f64 {
    -p.get(y.class()).max(PROB_FLOOR).ln()
}

/// `Σ_k (p_k − y_k)²`, in `[0, 2]`.
pub fn bss_loss(y: OneHotLabel, p: &ProbDist) -> f64 {
    Residual::new(p, y).values().iter().map(|d| d * d).sum()
}

/// `∂L_BSS/∂z_k = 2 p_k (Δ_k − Δ·p)`; the weight gradient is this times `h_l`.
fn bss_logit_grad(p: &ProbDist, y: OneHotLabel) -> [f64; NUM_CLASSES] {
    let delta = Residual::new(p, y);
    let dp = delta.dot(p);
    let mut g = [0.0; NUM_CLASSES];
    for (k, gk) in g.iter_mut().enumerate() {
        *gk = 2.0 * p.as_array()[k] * (delta.values()[k] - dp);
    }
    g
}

/// Gradient of the single-sample Brier loss with respect to the head weights,
/// row-major `4 × L`: entry `(k, l) = 2 h_l p_k (Δ_k − Δ·p)`.
pub fn bss_grad_w(state: &HeadState, y: OneHotLabel) -> Vec<f64> {
    let g = bss_logit_grad(state.probs(), y);
    g.iter()
        .flat_map(|gk| state.hidden().iter().map(move |h| gk * h))
        .collect()
}

/// `2 ||p ⊙ (Δ − 1(Δ·p))||₁ ||h||₁`, floored at [`IB_FACTOR_FLOOR`].
pub fn ib_factor_bss(state: &HeadState, y: OneHotLabel) -> f64 {
    let g: f64 = bss_logit_grad(state.probs(), y)
        .iter()
        .map(|v| v.abs())
        .sum();
    (g * state.hidden_l1()).max(IB_FACTOR_FLOOR)
}

/// Normalizer used by the influence-balanced cross-entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IbCeMode {
    /// `||p − y||₁ ||h||₁`, the L1 norm of the CE weight gradient.
    #[default]
    Residual,
    /// `||p||₁ ||h||₁ = ||h||₁`; constant in `p`.
    ProbabilityNorm,
}

pub fn ib_factor_ce(state: &HeadState, y: OneHotLabel, mode: IbCeMode) -> f64 {
    let scale = match mode {
        IbCeMode::Residual => Residual::new(state.probs(), y).l1(),
        IbCeMode::ProbabilityNorm => state.probs().as_array().iter().sum(),
    };
    (scale * state.hidden_l1()).max(IB_FACTOR_FLOOR)
}

/// Per-component batch losses.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub wce: f64,
    pub ib_ce: f64,
    pub wbss: f64,
    pub ib_bss: f64,
    pub total: f64,
    pub ib_active: bool,
}

impl LossBreakdown {
    fn assemble(
        wce: f64,
        ib_ce: f64,
        wbss: f64,
        ib_bss: f64,
        lambda: f64,
        ib_active: bool,
    ) -> Self {
        let (ib_ce, ib_bss) = if ib_active {
            (ib_ce, ib_bss)
        } else {
            (0.0, 0.0)
        };
        Self {
            wce,
            ib_ce,
            wbss,
            ib_bss,
            total: (wce + ib_ce) + lambda * (wbss + ib_bss),
            ib_active,
        }
    }
}

/// Influence factors of one sample, held fixed during differentiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbFactors {
    pub ce: f64,
    pub bss: f64,
}

/// Composite loss configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlareLoss {
    pub lambda_bss: f64,
    pub ib_ce_mode: IbCeMode,
    pub execution: Execution,
}

impl Default for FlareLoss {
    fn default() -> Self {
        Self {
            lambda_bss: DEFAULT_LAMBDA_BSS,
            ib_ce_mode: IbCeMode::default(),
            execution: Execution::default(),
        }
    }
}

type Item = (HeadState, OneHotLabel);

impl FlareLoss {
    pub fn new(lambda_bss: f64) -> Result<Self> {
        if !(lambda_bss >= 0.0 && lambda_bss.is_finite()) {
            return Err(FlareError::InvalidConfig(format!(
                "lambda_bss must be non-negative, got {lambda_bss}"
            )));
        }
        Ok(Self {
            lambda_bss,
            ..Self::default()
        })
    }

    pub fn with_ib_ce_mode(mut self, mode: IbCeMode) -> Self {
        self.ib_ce_mode = mode;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    /// Influence factors of every sample in the batch.
    pub fn factors(&self, batch: &[Item]) -> Vec<IbFactors> {
        let mode = self.ib_ce_mode;
        self.execution.map(batch, |(state, y)| IbFactors {
            ce: ib_factor_ce(state, *y, mode),
            bss: ib_factor_bss(state, *y),
        })
    }

    pub fn evaluate(
        &self,
        batch: &[Item],
        gamma: &ClassWeights,
        ib_active: bool,
    ) -> Result<LossBreakdown> {
        let factors = if ib_active {
            Some(self.factors(batch))
        } else {
            None
        };
        self.evaluate_with(batch, gamma, ib_active, factors.as_deref())
    }

    /// Loss with externally supplied (frozen) influence factors.
    pub fn evaluate_frozen(
        &self,
        batch: &[Item],
        gamma: &ClassWeights,
        ib_active: bool,
        factors: &[IbFactors],
    ) -> Result<LossBreakdown> {
        self.evaluate_with(batch, gamma, ib_active, Some(factors))
    }

    fn evaluate_with(
        &self,
        batch: &[Item],
        gamma: &ClassWeights,
        ib_active: bool,
        factors: Option<&[IbFactors]>,
    ) -> Result<LossBreakdown> {
        self.validate(batch, factors)?;
        let n = batch.len() as f64;
        let per_sample = self.execution.map_range(batch.len(), |i| {
            let (state, y) = &batch[i];
            let w = gamma.get(y.class());
            let ce = ce_loss(*y, state.probs());
            let bss = bss_loss(*y, state.probs());
            let (ib_ce, ib_bss) = match (ib_active, factors) {
                (true, Some(f)) => (w * ce / f[i].ce, w * bss / f[i].bss),
                _ => (0.0, 0.0),
            };
            [w * ce, ib_ce, w * bss, ib_bss]
        });
        let column = |c: usize| {
            let v: Vec<f64> = per_sample.iter().map(|row| row[c]).collect();
            pairwise_sum(&v) / n
        };
        Ok(LossBreakdown::assemble(
            column(0),
            column(1),
            column(2),
            column(3),
            self.lambda_bss,
            ib_active,
        ))
    }

    /// Gradient of the total loss with respect to each sample's logits, with
    /// influence factors treated as constants.
    pub fn logit_grads(
        &self,
        batch: &[Item],
        gamma: &ClassWeights,
        ib_active: bool,
    ) -> Result<Vec<[f64; NUM_CLASSES]>> {
        let factors = if ib_active {
            Some(self.factors(batch))
        } else {
            None
        };
        self.logit_grads_with(batch, gamma, ib_active, factors.as_deref())
    }

    pub fn logit_grads_frozen(
        &self,
        batch: &[Item],
        gamma: &ClassWeights,
        ib_active: bool,
        factors: &[IbFactors],
    ) -> Result<Vec<[f64; NUM_CLASSES]>> {
        self.logit_grads_with(batch, gamma, ib_active, Some(factors))
    }

    fn logit_grads_with(
        &self,
        batch: &[Item],
        gamma: &ClassWeights,
        ib_active: bool,
        factors: Option<&[IbFactors]>,
    ) -> Result<Vec<[f64; NUM_CLASSES]>> {
        self.validate(batch, factors)?;
        let n = batch.len() as f64;
        let lambda = self.lambda_bss;
        Ok(self.execution.map_range(batch.len(), |i| {
            let (state, y) = &batch[i];
            let w = gamma.get(y.class()) / n;
            let (ce_scale, bss_scale) = match (ib_active, factors) {
                (true, Some(f)) => (w + w / f[i].ce, w + w / f[i].bss),
                _ => (w, w),
            };
            let delta = Residual::new(state.probs(), *y);
            let g_bss = bss_logit_grad(state.probs(), *y);
            let mut g = [0.0; NUM_CLASSES];
            for k in 0..NUM_CLASSES {
                g[k] = ce_scale * delta.values()[k] + lambda * bss_scale * g_bss[k];
            }
            g
        }))
    }

    fn validate(&self, batch: &[Item], factors: Option<&[IbFactors]>) -> Result<()> {
        if batch.is_empty() {
            return Err(FlareError::EmptyBatch);
        }
        if let Some(f) = factors {
            if f.len() != batch.len() {
                return Err(FlareError::DimensionMismatch {
                    expected: batch.len(),
                    got: f.len(),
                });
            }
        }
        Ok(())
    }
}

/// Composite loss with the default influence mode.
pub fn flare_loss(
    batch: &[Item],
    gamma: &ClassWeights,
    lambda_bss: f64,
    ib_active: bool,
) -> Result<LossBreakdown> {
    FlareLoss::new(lambda_bss)?.evaluate(batch, gamma, ib_active)
}

/// Logit gradients of [`flare_loss`] with detached influence factors.
pub fn flare_loss_grad(
    batch: &[Item],
    gamma: &ClassWeights,
    lambda_bss: f64,
    ib_active: bool,
) -> Result<Vec<[f64; NUM_CLASSES]>> {
    FlareLoss::new(lambda_bss)?.logit_grads(batch, gamma, ib_active)
}
