//! Event-data ingestion: the N-MNIST binary record format, a line-oriented
//! canonical event CSV, time binning into binary frames, dataset directory
//! loading and a synthetic spatio-temporal pattern generator.

mod binning;
mod canonical;
mod dataset;
mod nmnist;
mod synth;

use serde::{Deserialize, Serialize};

pub use binning::{bin_events, BinnedSample};
pub use canonical::{read_canonical_events, write_canonical_events, CANONICAL_HEADER};
pub use dataset::{load_dataset_dir, EventFormat, SampleWindow};
pub use nmnist::{
    channel_to_pixel, decode_nmnist, decode_nmnist_records, pixel_to_channel, NmnistEvent,
    NmnistGeometry, NMNIST_RECORD_BYTES, NMNIST_SENSOR,
};
pub use synth::{synth_dataset, SynthConfig, SynthDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub timestamp_us: u64,
    pub channel: u32,
}

/// `T` binary frames over `num_channels` input channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub dt_ms: f64,
    pub num_channels: usize,
    pub frames: Vec<Vec<bool>>,
}

impl FrameSequence {
    pub fn zeros(steps: usize, num_channels: usize, dt_ms: f64) -> Self {
        Self {
            dt_ms,
            num_channels,
            frames: vec![vec![false; num_channels]; steps],
        }
    }

    pub fn steps(&self) -> usize {
        self.frames.len()
    }

    pub fn spike_count(&self) -> usize {
        self.frames.iter().flatten().filter(|&&s| s).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub frames: FrameSequence,
    pub label: usize,
}
