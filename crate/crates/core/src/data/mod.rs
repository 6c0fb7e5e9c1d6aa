//! Event labeling, missing-channel policy, chronological splits, synthetic
//! data and the comma-separated file formats.

mod channels;
pub mod io;
mod labeling;
mod split;
mod synth;

pub use channels::{
    apply_channel_policy, channel_block, ChannelPolicyOutcome, MAX_MISSING_CHANNELS,
};
pub use labeling::{label_max_class, EventIndex, FlareEvent, DEFAULT_HORIZON_HOURS};
pub use split::{split_timeseries, Fold, SplitSpec};
pub use synth::{gen_synthetic, synthetic_events, SynthConfig};
