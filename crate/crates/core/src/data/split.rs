use std::ops::Range;

use crate::error::{FlareError, Result};
use crate::types::Sample;

/// Expanding-window time-series cross-validation.
///
/// Fold `f` (0-based) covers the first `n (f + 1) / fold_count` samples and
/// partitions that prefix chronologically into train, validation and test by
/// the configured ratios, so later folds see a longer training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub fold_count: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fold_count: 3,
            train_ratio: 0.6,
            val_ratio: 0.2,
            test_ratio: 0.2,
        }
    }
}

impl SplitSpec {
    /// Ratios of the reference full-scale split (31,085 / 4,107 / 8,386).
    pub fn reference() -> Self {
        let total = 31_085.0 + 4_107.0 + 8_386.0;
        Self {
            fold_count: 3,
            train_ratio: 31_085.0 / total,
            val_ratio: 4_107.0 / total,
            test_ratio: 8_386.0 / total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fold_count == 0 {
            return Err(FlareError::InvalidConfig(
                "fold_count must be positive".into(),
            ));
        }
        let ratios = [self.train_ratio, self.val_ratio, self.test_ratio];
        if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(FlareError::InvalidConfig(format!(
                "split ratios must be positive, got {ratios:?}"
            )));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(FlareError::InvalidConfig(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Index ranges of every fold over `n` chronologically sorted samples.
    pub fn folds(&self, n: usize) -> Result<Vec<Fold>> {
        self.validate()?;
        (0..self.fold_count)
            .map(|f| {
                let end = n * (f + 1) / self.fold_count;
                let val = (end as f64 * self.val_ratio).round() as usize;
                let test = (end as f64 * self.test_ratio).round() as usize;
                let train = end.saturating_sub(val + test);
                if train == 0 || val == 0 || test == 0 || train + val + test != end {
                    return Err(FlareError::DegenerateSplit(format!(
                        "{n} samples are too few for {} folds (fold {} gets {train}/{val}/{test})",
                        self.fold_count,
                        f + 1
                    )));
                }
                Ok(Fold {
                    train: 0..train,
                    validation: train..train + val,
                    test: train + val..end,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

/// Splits chronologically sorted samples into expanding-window folds.
pub fn split_timeseries(samples: &[Sample], spec: &SplitSpec) -> Result<Vec<Fold>> {
    if let Some(i) = samples
        .windows(2)
        .position(|w| w[1].timestamp < w[0].timestamp)
    {
        return Err(FlareError::DegenerateSplit(format!(
            "samples are not sorted by timestamp (index {})",
            i + 1
        )));
    }
    spec.folds(samples.len())
}
