use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::data::{
    bin_events, decode_nmnist, read_canonical_events, LabeledSample, NmnistGeometry,
};
use crate::error::{EtlpError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventFormat {
    /// N-MNIST `.bin` files.
    Nmnist(NmnistGeometry),
    /// Canonical `.csv` event files over a fixed channel count.
    Canonical { num_channels: usize },
}

impl EventFormat {
    pub fn num_channels(&self) -> usize {
        match self {
            EventFormat::Nmnist(g) => g.num_channels(),
            EventFormat::Canonical { num_channels } => *num_channels,
        }
    }

    fn extension(&self) -> &'static str {
        match self {
            EventFormat::Nmnist(_) => "bin",
            EventFormat::Canonical { .. } => "csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleWindow {
    pub dt_ms: f64,
    pub steps: usize,
    pub start_us: u64,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| EtlpError::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| EtlpError::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads `root/<label>/<sample files>`; label directories must be named by
/// their integer class index. Files are read in sorted order.
pub fn load_dataset_dir(
    root: &Path,
    format: EventFormat,
    window: SampleWindow,
) -> Result<Vec<LabeledSample>> {
    let mut classes: Vec<(usize, PathBuf)> = Vec::new();
    for path in sorted_entries(root)? {
        if !path.is_dir() {
            continue;
        }
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let label = name.parse::<usize>().map_err(|_| {
            EtlpError::param(format!(
                "class directory `{}` is not an integer label",
                path.display()
            ))
        })?;
        classes.push((label, path));
    }
    classes.sort();
    if classes.is_empty() {
        return Err(EtlpError::param(format!(
            "no class directories under {}",
            root.display()
        )));
    }

    let mut samples = Vec::new();
    for (label, dir) in classes {
        for file in sorted_entries(&dir)? {
            if file.extension().and_then(|e| e.to_str()) != Some(format.extension()) {
                continue;
            }
            let events = match format {
                EventFormat::Nmnist(geometry) => {
                    let bytes = fs::read(&file).map_err(|e| EtlpError::io(&file, e))?;
                    decode_nmnist(&bytes, geometry)?
                }
                EventFormat::Canonical { .. } => {
                    let f = fs::File::open(&file).map_err(|e| EtlpError::io(&file, e))?;
                    read_canonical_events(BufReader::new(f))?
                }
            };
            let binned = bin_events(
                &events,
                window.dt_ms,
                window.steps,
                format.num_channels(),
                window.start_us,
            )?;
            samples.push(LabeledSample {
                frames: binned.frames,
                label,
            });
        }
    }
    Ok(samples)
}
