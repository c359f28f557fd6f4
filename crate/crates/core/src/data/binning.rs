use crate::data::{Event, FrameSequence};
use crate::error::{EtlpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSample {
    pub frames: FrameSequence,
    /// Events outside `[window_start, window_start + T·dt)`.
    pub dropped: usize,
}

/// Bins events into `steps` binary frames of width `dt_ms`. An event at time
/// `t` lands in bin `floor((t - window_start) / dt)`; events outside the
/// half-open window are dropped and counted, and repeated events in a bin
/// clamp to one.
pub fn bin_events(
    events: &[Event],
    dt_ms: f64,
    steps: usize,
    num_channels: usize,
    window_start_us: u64,
) -> Result<BinnedSample> {
    if !(dt_ms > 0.0) || steps == 0 {
        return Err(EtlpError::param(
            "bin_events needs dt_ms > 0 and at least one step",
        ));
    }
    let dt_us = dt_ms * 1000.0;
    let mut frames = FrameSequence::zeros(steps, num_channels, dt_ms);
    let mut dropped = 0;
    for e in events {
        let channel = e.channel as usize;
        if channel >= num_channels {
            return Err(EtlpError::param(format!(
                "event channel {channel} exceeds declared channel count {num_channels}"
            )));
        }
        let Some(offset) = e.timestamp_us.checked_sub(window_start_us) else {
            dropped += 1;
            continue;
        };
        let bin = (offset as f64 / dt_us).floor() as usize;
        if bin >= steps {
            dropped += 1;
            continue;
        }
        frames.frames[bin][channel] = true;
    }
    Ok(BinnedSample { frames, dropped })
}
