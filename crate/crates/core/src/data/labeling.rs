use chrono::{DateTime, Duration, Utc};

use crate::types::FlareClass;

pub const DEFAULT_HORIZON_HOURS: f64 = 72.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlareEvent {
    pub peak_time: DateTime<Utc>,
    pub flare_class: FlareClass,
}

fn horizon(hours: f64) -> Duration {
    Duration::milliseconds((hours * 3_600_000.0).round() as i64)
}

/// Largest class among events peaking in `(t, t + horizon]`; `O` if none.
pub fn label_max_class(t: DateTime<Utc>, events: &[FlareEvent], horizon_hours: f64) -> FlareClass {
    let end = t + horizon(horizon_hours);
    events
        .iter()
        .filter(|e| e.peak_time > t && e.peak_time <= end)
        .map(|e| e.flare_class)
        .max()
        .unwrap_or(FlareClass::O)
}

/// Events sorted by peak time for repeated window queries.
#[derive(Debug, Clone)]
pub struct EventIndex {
    events: Vec<FlareEvent>,
}

impl EventIndex {
    pub fn new(mut events: Vec<FlareEvent>) -> Self {
        events.sort_by_key(|e| e.peak_time);
        Self { events }
    }

    pub fn label(&self, t: DateTime<Utc>, horizon_hours: f64) -> FlareClass {
        let end = t + horizon(horizon_hours);
        let lo = self.events.partition_point(|e| e.peak_time <= t);
        let hi = self.events.partition_point(|e| e.peak_time <= end);
        self.events[lo..hi]
            .iter()
            .map(|e| e.flare_class)
            .max()
            .unwrap_or(FlareClass::O)
    }
}
