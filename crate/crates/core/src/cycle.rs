//! Phase of the ~11-year solar activity cycle as a scalar feature.

use std::f64::consts::TAU;

use chrono::{DateTime, TimeZone, Utc};

use crate::error::{FlareError, Result};

/// Default period: 48,204 two-hour steps.
pub const DEFAULT_PERIOD_HOURS: f64 = 48_204.0 * 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleConfig {
    t_base: DateTime<Utc>,
    period_hours: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            t_base: Utc.with_ymd_and_hms(2008, 12, 1, 0, 0, 0).unwrap(),
            period_hours: DEFAULT_PERIOD_HOURS,
        }
    }
}

impl CycleConfig {
    pub fn new(t_base: DateTime<Utc>, period_hours: f64) -> Result<Self> {
        if !(period_hours > 0.0 && period_hours.is_finite()) {
            return Err(FlareError::InvalidConfig(format!(
                "cycle period must be positive, got {period_hours}"
            )));
        }
        Ok(Self {
            t_base,
            period_hours,
        })
    }

    pub fn t_base(&self) -> DateTime<Utc> {
        self.t_base
    }

    pub fn period_hours(&self) -> f64 {
        self.period_hours
    }
}

fn hours_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    let d = to - from;
    // Split to keep sub-millisecond precision without i64 overflow.
    d.num_seconds() as f64 / 3600.0 + f64::from(d.subsec_nanos()) / 3.6e12
}

/// `−cos(2π (t − t_base) / T)`.
pub fn phi(t: DateTime<Utc>, cfg: &CycleConfig) -> f64 {
    phi_hours(hours_between(cfg.t_base, t), cfg.period_hours)
}

/// Embedding for an offset from `t_base` given directly in hours.
pub fn phi_hours(hours_since_base: f64, period_hours: f64) -> f64 {
    let phase = hours_since_base.rem_euclid(period_hours) / period_hours;
    -(TAU * phase).cos()
}
