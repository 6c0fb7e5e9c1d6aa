use std::ops::Range;

use crate::types::{Sample, NUM_CHANNELS};

/// Samples with more missing channels than this are dropped: 25% of 10
/// channels is 2.5, so three or more missing excludes a sample.
pub const MAX_MISSING_CHANNELS: usize = 2;

/// Feature indices that stand in for channel `channel` when a sample has
/// `dim` features split into ten contiguous blocks.
pub fn channel_block(channel: usize, dim: usize) -> Range<usize> {
    (channel * dim / NUM_CHANNELS)..((channel + 1) * dim / NUM_CHANNELS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPolicyOutcome {
    pub kept: Vec<Sample>,
    pub excluded: usize,
}

/// Drops unlabeled samples and samples missing at least 25% of channels;
/// zero-fills the feature blocks of the remaining missing channels.
pub fn apply_channel_policy(samples: Vec<Sample>) -> ChannelPolicyOutcome {
    let mut kept = Vec::with_capacity(samples.len());
    let mut excluded = 0;
    for mut s in samples {
        if s.label.is_none() || s.missing_channels() > MAX_MISSING_CHANNELS {
            excluded += 1;
            continue;
        }
        let dim = s.features.len();
        for (c, present) in s.channel_mask.iter().enumerate() {
            if !present {
                s.features[channel_block(c, dim)].fill(0.0);
            }
        }
        kept.push(s);
    }
    ChannelPolicyOutcome { kept, excluded }
}
