use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::labeling::FlareEvent;
use crate::error::{FlareError, Result};
use crate::types::{FlareClass, Sample, NUM_CHANNELS, NUM_CLASSES};

/// Desk-scale stand-in for the image dataset.
///
/// Features are Gaussian around class means that shift along a fixed random
/// direction with class rank, so neighbouring classes overlap and the task
/// stays ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub class_probs: [f64; NUM_CLASSES],
    pub seed: u64,
    pub feature_dim: usize,
    pub start: DateTime<Utc>,
    /// Gap between consecutive samples; a multiple of the 2-hour cadence.
    pub spacing_hours: u32,
    /// Shift of the class mean per rank step along the class direction.
    pub separation: f64,
    /// Probability that a sample has 1-4 missing channels.
    pub missing_channel_prob: f64,
    /// Assign exact class counts by largest remainder instead of sampling.
    pub stratified: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            class_probs: [0.38, 0.35, 0.23, 0.04],
            seed: 0,
            feature_dim: 16,
            start: Utc.with_ymd_and_hms(2011, 6, 1, 0, 0, 0).unwrap(),
            spacing_hours: 72,
            separation: 0.4,
            missing_channel_prob: 0.05,
            stratified: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FlareError::InvalidConfig(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if self
            .class_probs
            .iter()
            .any(|p| !(*p >= 0.0 && p.is_finite()))
        {
            return bad(format!(
                "class probabilities must be non-negative: {:?}",
                self.class_probs
            ));
        }
        let sum: f64 = self.class_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("class probabilities sum to {sum}, expected 1"));
        }
        if self.spacing_hours == 0 || !self.spacing_hours.is_multiple_of(2) {
            return bad(format!(
                "spacing_hours must be a positive multiple of 2, got {}",
                self.spacing_hours
            ));
        }
        if !(0.0..=1.0).contains(&self.missing_channel_prob) {
            return bad(format!(
                "missing_channel_prob must be in [0, 1], got {}",
                self.missing_channel_prob
            ));
        }
        Ok(())
    }
}

fn stratified_labels(
    n: usize,
    probs: &[f64; NUM_CLASSES],
    rng: &mut ChaCha8Rng,
) -> Vec<FlareClass> {
    let exact: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &k in order.iter().cycle().take(n - assigned) {
        counts[k] += 1;
    }
    let mut labels: Vec<FlareClass> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| std::iter::repeat_n(FlareClass::ALL[k], c))
        .collect();
    labels.shuffle(rng);
    labels
}

fn sample_class(probs: &[f64; NUM_CLASSES], rng: &mut ChaCha8Rng) -> FlareClass {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return FlareClass::ALL[k];
        }
    }
    // rounding left u above the cumulative sum; take the last class with mass
    let k = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
    FlareClass::ALL[k]
}

/// Deterministic labeled samples on a regular time grid.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.feature_dim;

    let direction: Vec<f64> = (0..dim)
        .map(|_| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * rng.random_range(0.5..1.5)
        })
        .collect();
    let offsets: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|_| {
            (0..dim)
                .map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let labels = if cfg.stratified {
        stratified_labels(cfg.n, &cfg.class_probs, &mut rng)
    } else {
        (0..cfg.n)
            .map(|_| sample_class(&cfg.class_probs, &mut rng))
            .collect()
    };

    let step = Duration::hours(i64::from(cfg.spacing_hours));
    let mut samples = Vec::with_capacity(cfg.n);
    for (i, label) in labels.into_iter().enumerate() {
        let k = label.rank();
        let features = (0..dim)
            .map(|j| {
                let mean = cfg.separation * direction[j] * k as f64 + offsets[k][j];
                mean + rng.sample::<f64, _>(StandardNormal)
            })
            .collect();

        let mut mask = [true; NUM_CHANNELS];
        if rng.random::<f64>() < cfg.missing_channel_prob {
            let missing = rng.random_range(1..=4);
            let mut channels: Vec<usize> = (0..NUM_CHANNELS).collect();
            channels.shuffle(&mut rng);
            for &c in &channels[..missing] {
                mask[c] = false;
            }
        }

        samples.push(Sample {
            id: format!("s{i:06}"),
            timestamp: cfg.start + step * i as i32,
            features,
            channel_mask: mask,
            label: Some(label),
        });
    }
    Ok(samples)
}

/// Event list whose 72-hour max-class labeling reproduces the samples'
/// labels. Requires consecutive samples to be at least `horizon_hours` apart
/// so that windows do not overlap.
pub fn synthetic_events(
    samples: &[Sample],
    horizon_hours: u32,
    seed: u64,
) -> Result<Vec<FlareEvent>> {
    let horizon = Duration::hours(i64::from(horizon_hours));
    if let Some(w) = samples
        .windows(2)
        .find(|w| w[1].timestamp - w[0].timestamp < horizon)
    {
        return Err(FlareError::InvalidConfig(format!(
            "samples {} and {} are closer than the {horizon_hours} h horizon",
            w[0].id, w[1].id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7e7_5eed_e7e7);
    let mut events = Vec::new();
    for s in samples {
        let Some(label) = s.label else { continue };
        if label == FlareClass::O {
            continue;
        }
        let offset = Duration::hours(rng.random_range(1..=i64::from(horizon_hours)));
        events.push(FlareEvent {
            peak_time: s.timestamp + offset,
            flare_class: label,
        });
        if label > FlareClass::C && rng.random::<bool>() {
            let offset = Duration::hours(rng.random_range(1..=i64::from(horizon_hours)));
            events.push(FlareEvent {
                peak_time: s.timestamp + offset,
                flare_class: FlareClass::C,
            });
        }
    }
    events.sort_by_key(|e| e.peak_time);
    Ok(events)
}
