use crate::data::Event;
use crate::error::{EtlpError, Result};

pub const NMNIST_RECORD_BYTES: usize = 5;
/// Native ATIS sensor side length used by N-MNIST.
pub const NMNIST_SENSOR: u32 = 34;

/// One decoded record: pixel address, polarity and timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NmnistEvent {
    pub x: u8,
    pub y: u8,
    pub polarity: bool,
    pub timestamp_us: u32,
}

/// Decodes the 40-bit N-MNIST records:
///
/// ```text
/// byte0      x
/// byte1      y
/// byte2 b7   polarity
/// byte2 b6-0 timestamp bits 22..16
/// byte3      timestamp bits 15..8
/// byte4      timestamp bits 7..0
/// ```
pub fn decode_nmnist_records(bytes: &[u8]) -> Result<Vec<NmnistEvent>> {
    if !bytes.len().is_multiple_of(NMNIST_RECORD_BYTES) {
        let offset = bytes.len() - bytes.len() % NMNIST_RECORD_BYTES;
        return Err(EtlpError::ByteFormat {
            offset,
            msg: format!("truncated record: {} trailing bytes", bytes.len() - offset),
        });
    }
    Ok(bytes
        .chunks_exact(NMNIST_RECORD_BYTES)
        .map(|r| NmnistEvent {
            x: r[0],
            y: r[1],
            polarity: r[2] & 0x80 != 0,
            timestamp_us: (u32::from(r[2] & 0x7f) << 16) | (u32::from(r[3]) << 8) | u32::from(r[4]),
        })
        .collect())
}

/// Spatial layout of the flattened channel space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NmnistGeometry {
    pub width: u32,
    pub height: u32,
    /// Pixels dropped from the left/top edge before flattening. The central
    /// 32×32 crop of the 34×34 sensor uses an offset of 1.
    pub offset: u32,
}

impl NmnistGeometry {
    pub const NATIVE: NmnistGeometry = NmnistGeometry {
        width: NMNIST_SENSOR,
        height: NMNIST_SENSOR,
        offset: 0,
    };

    pub const CROP_32: NmnistGeometry = NmnistGeometry {
        width: 32,
        height: 32,
        offset: 1,
    };

    pub fn num_channels(&self) -> usize {
        2 * (self.width * self.height) as usize
    }
}

/// `channel = polarity * W * H + y * W + x`.
pub fn pixel_to_channel(x: u32, y: u32, polarity: bool, width: u32, height: u32) -> u32 {
    u32::from(polarity) * width * height + y * width + x
}

pub fn channel_to_pixel(channel: u32, width: u32, height: u32) -> (u32, u32, bool) {
    let plane = width * height;
    let polarity = channel >= plane;
    let rest = channel % plane;
    (rest % width, rest / width, polarity)
}

/// Decodes a per-sample `.bin` blob into flattened channel events, sorted by
/// timestamp (stable). Pixels outside the geometry are dropped.
pub fn decode_nmnist(bytes: &[u8], geometry: NmnistGeometry) -> Result<Vec<Event>> {
    let mut events: Vec<Event> = decode_nmnist_records(bytes)?
        .into_iter()
        .filter_map(|e| {
            let x = u32::from(e.x).checked_sub(geometry.offset)?;
            let y = u32::from(e.y).checked_sub(geometry.offset)?;
            (x < geometry.width && y < geometry.height).then(|| Event {
                timestamp_us: u64::from(e.timestamp_us),
                channel: pixel_to_channel(x, y, e.polarity, geometry.width, geometry.height),
            })
        })
        .collect();
    events.sort_by_key(|e| e.timestamp_us);
    Ok(events)
}
