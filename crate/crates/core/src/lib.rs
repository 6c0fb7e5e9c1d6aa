//! Influence-balanced imbalance losses, multicategory forecast verification
//! (GMGS, TSS, BSS, GMGS-Influence), a solar-cycle time embedding and a toy
//! flare classifier that ties them together.
//!
//! Batch work runs on rayon when the `parallel` feature is enabled (the
//! default); see [`exec::Execution`].

pub mod cycle;
pub mod data;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod trainer;
pub mod types;

pub use cycle::{phi, CycleConfig};
pub use error::{FlareError, Result};
pub use exec::Execution;
pub use losses::{
    bss_grad_w, bss_loss, ce_loss, flare_loss, flare_loss_grad, ib_factor_bss, ib_factor_ce,
    FlareLoss, HeadState, IbCeMode, LossBreakdown, Residual,
};
pub use metrics::{
    bss_ge_m, gerrity_matrix, gmgs, gmgs_influence, harmonic_mean, tss_ge_m, Climatology,
    InfluenceEntry, MetricReport, ScoringMatrix,
};
pub use types::{
    build_confusion, class_weights, ClassWeights, ConfusionMatrix, FlareClass, OneHotLabel,
    ProbDist, Sample, NUM_CHANNELS, NUM_CLASSES,
};
