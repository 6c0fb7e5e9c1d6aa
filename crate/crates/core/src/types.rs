//! Domain types shared across the crate.
//!
//! Class order is fixed ascending by severity (O, C, M, X) everywhere: array
//! indices, confusion-matrix rows/columns and scoring-matrix entries all use
//! [`FlareClass::rank`].

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Timelike, Utc};

use crate::error::{FlareError, Result};

/// Number of flare classes.
pub const NUM_CLASSES: usize = 4;

/// Number of image channels per sample (1 HMI + 9 AIA wavelengths).
pub const NUM_CHANNELS: usize = 10;

/// Ordinal flare category, ordered by peak soft X-ray flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlareClass {
    O,
    C,
    M,
    X,
}

impl FlareClass {
    pub const ALL: [FlareClass; NUM_CLASSES] =
        [FlareClass::O, FlareClass::C, FlareClass::M, FlareClass::X];

    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn from_rank(rank: usize) -> Option<Self> {
        Self::ALL.get(rank).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FlareClass::O => "O",
            FlareClass::C => "C",
            FlareClass::M => "M",
            FlareClass::X => "X",
        }
    }

    /// GOES 1-8 Å peak flux thresholds in W/m².
    pub fn from_peak_flux(flux: f64) -> Self {
        if flux >= 1e-4 {
            FlareClass::X
        } else if flux >= 1e-5 {
            FlareClass::M
        } else if flux >= 1e-6 {
            FlareClass::C
        } else {
            FlareClass::O
        }
    }

    /// Whether the class belongs to the `>=M` event set.
    pub fn is_ge_m(self) -> bool {
        self >= FlareClass::M
    }
}

impl fmt::Display for FlareClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for FlareClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "O" => Ok(FlareClass::O),
            "C" => Ok(FlareClass::C),
            "M" => Ok(FlareClass::M),
            "X" => Ok(FlareClass::X),
            other => Err(format!("unknown flare class {other:?}")),
        }
    }
}

const PROB_SUM_TOL: f64 = 1e-9;

/// Probability distribution over the four flare classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbDist([f64; NUM_CLASSES]);

impl ProbDist {
    pub fn new(p: [f64; NUM_CLASSES]) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(FlareError::InvalidProbability(format!(
                "components must lie in [0, 1], got {p:?}"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(FlareError::InvalidProbability(format!(
                "components sum to {sum}, expected 1"
            )));
        }
        Ok(Self(p))
    }

    pub fn uniform() -> Self {
        Self([0.25; NUM_CLASSES])
    }

    /// Numerically stable softmax of a logit vector.
    pub fn softmax(logits: &[f64; NUM_CLASSES]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = [0.0; NUM_CLASSES];
        let mut sum = 0.0;
        for (o, z) in out.iter_mut().zip(logits) {
            *o = (z - max).exp();
            sum += *o;
        }
        for o in &mut out {
            *o /= sum;
        }
        Self(out)
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, class: FlareClass) -> f64 {
        self.0[class.rank()]
    }

    /// Probability mass on the `>=M` event (p_M + p_X).
    pub fn ge_m(&self) -> f64 {
        self.0[FlareClass::M.rank()] + self.0[FlareClass::X.rank()]
    }

    /// Most probable class; ties resolve to the lower rank.
    pub fn argmax(&self) -> FlareClass {
        let mut best = 0;
        for k in 1..NUM_CLASSES {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        FlareClass::ALL[best]
    }
}

/// One-hot encoding of a ground-truth class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHotLabel(FlareClass);

impl OneHotLabel {
    pub fn new(class: FlareClass) -> Self {
        Self(class)
    }

    /// Parses a raw vector; exactly one entry must be 1 and the rest 0.
    pub fn from_vector(y: &[f64; NUM_CLASSES]) -> Result<Self> {
        let hot: Vec<usize> = (0..NUM_CLASSES).filter(|&k| y[k] == 1.0).collect();
        let zeros = y.iter().filter(|v| **v == 0.0).count();
        match hot.as_slice() {
            [k] if zeros == NUM_CLASSES - 1 => Ok(Self(FlareClass::ALL[*k])),
            _ => Err(FlareError::InvalidProbability(format!(
                "not a one-hot vector: {y:?}"
            ))),
        }
    }

    pub fn class(self) -> FlareClass {
        self.0
    }

    pub fn to_vector(self) -> [f64; NUM_CLASSES] {
        let mut y = [0.0; NUM_CLASSES];
        y[self.0.rank()] = 1.0;
        y
    }
}

impl From<FlareClass> for OneHotLabel {
    fn from(class: FlareClass) -> Self {
        Self(class)
    }
}

/// One observation: features at a timestamp plus channel availability.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub features: Vec<f64>,
    /// `true` means the channel image is present.
    pub channel_mask: [bool; NUM_CHANNELS],
    pub label: Option<FlareClass>,
}

impl Sample {
    pub fn missing_channels(&self) -> usize {
        self.channel_mask
            .iter()
            .filter(|present| !**present)
            .count()
    }

    /// Whether the timestamp falls on a whole-hour grid of `cadence_hours`.
    pub fn is_on_cadence(&self, cadence_hours: u32) -> bool {
        let t = self.timestamp;
        cadence_hours > 0
            && t.minute() == 0
            && t.second() == 0
            && t.nanosecond() == 0
            && t.timestamp().div_euclid(3600) % i64::from(cadence_hours) == 0
    }
}

/// Observed-by-predicted counts; rows are observed class, columns predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Result<Self> {
        let cm = Self { counts };
        if cm.total() == 0 {
            return Err(FlareError::EmptyEvaluationSet);
        }
        Ok(cm)
    }

    /// Counts `(observed, predicted)` pairs.
    pub fn build<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FlareClass, FlareClass)>,
    {
        let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        for (obs, pred) in pairs {
            counts[obs.rank()][pred.rank()] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn get(&self, observed: FlareClass, predicted: FlareClass) -> u64 {
        self.counts[observed.rank()][predicted.rank()]
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Observed-class totals.
    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        let mut out = [0; NUM_CLASSES];
        for (o, row) in out.iter_mut().zip(&self.counts) {
            *o = row.iter().sum();
        }
        out
    }

    /// Predicted-class totals.
    pub fn col_sums(&self) -> [u64; NUM_CLASSES] {
        let mut out = [0; NUM_CLASSES];
        for row in &self.counts {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }

    /// Observed-class relative frequencies.
    pub fn row_climatology(&self) -> [f64; NUM_CLASSES] {
        let n = self.total() as f64;
        self.row_sums().map(|r| r as f64 / n)
    }

    /// Multiplies every count by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            counts: self.counts.map(|row| row.map(|c| c * factor)),
        }
    }
}

/// Convenience wrapper around [`ConfusionMatrix::build`].
pub fn build_confusion(pairs: &[(FlareClass, FlareClass)]) -> Result<ConfusionMatrix> {
    ConfusionMatrix::build(pairs.iter().copied())
}

/// Per-class inverse-frequency weights, normalized to mean one over the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    gamma: [f64; NUM_CLASSES],
}

impl ClassWeights {
    /// `gamma_k = (N / K) / n_k`.
    pub fn from_counts(counts: [u64; NUM_CLASSES]) -> Result<Self> {
        if let Some(k) = counts.iter().position(|&n| n == 0) {
            return Err(FlareError::EmptyClass(FlareClass::ALL[k]));
        }
        let total: u64 = counts.iter().sum();
        let base = total as f64 / NUM_CLASSES as f64;
        Ok(Self {
            gamma: counts.map(|n| base / n as f64),
        })
    }

    pub fn uniform() -> Self {
        Self {
            gamma: [1.0; NUM_CLASSES],
        }
    }

    /// Arbitrary positive weights, without the count-based normalization.
    pub fn from_raw(gamma: [f64; NUM_CLASSES]) -> Result<Self> {
        if gamma.iter().any(|g| !g.is_finite() || *g <= 0.0) {
            return Err(FlareError::InvalidConfig(format!(
                "class weights must be positive, got {gamma:?}"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn get(&self, class: FlareClass) -> f64 {
        self.gamma[class.rank()]
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.gamma
    }
}

/// Convenience wrapper around [`ClassWeights::from_counts`].
pub fn class_weights(counts: [u64; NUM_CLASSES]) -> Result<ClassWeights> {
    ClassWeights::from_counts(counts)
}
