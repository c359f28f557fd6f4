use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::data::{FrameSequence, LabeledSample};
use crate::error::{EtlpError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub num_channels: usize,
    pub steps: usize,
    pub dt_ms: f64,
    /// Poisson rate of every channel in a class template.
    pub base_rate_hz: f64,
    /// Standard deviation of the per-sample spike-time jitter.
    pub jitter_ms: f64,
    /// Probability that a template spike is missing from a sample.
    pub deletion_prob: f64,
    pub samples_per_class: usize,
    /// Restrict class `c` to its own contiguous block of channels.
    pub disjoint_channels: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            num_channels: 40,
            steps: 100,
            dt_ms: 1.0,
            base_rate_hz: 20.0,
            jitter_ms: 2.0,
            deletion_prob: 0.05,
            samples_per_class: 60,
            disjoint_channels: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    /// Class-interleaved: sample `k` has label `k % num_classes`.
    pub samples: Vec<LabeledSample>,
    /// Template spike times `(ms, channel)` per class.
    pub templates: Vec<Vec<(f64, u32)>>,
    /// Templates binned without perturbation.
    pub template_frames: Vec<FrameSequence>,
}

impl SynthDataset {
    /// First `train_per_class` samples of every class for training, the rest
    /// for testing. Order is preserved.
    pub fn split(&self, train_per_class: usize) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
        let classes = self.templates.len();
        let (train, test): (Vec<_>, Vec<_>) = self
            .samples
            .iter()
            .enumerate()
            .partition(|(k, _)| k / classes < train_per_class);
        (
            train.into_iter().map(|(_, s)| s.clone()).collect(),
            test.into_iter().map(|(_, s)| s.clone()).collect(),
        )
    }
}

fn bin_times(spikes: impl Iterator<Item = (f64, u32)>, cfg: &SynthConfig) -> FrameSequence {
    let mut frames = FrameSequence::zeros(cfg.steps, cfg.num_channels, cfg.dt_ms);
    for (t, ch) in spikes {
        if t < 0.0 {
            continue;
        }
        let bin = (t / cfg.dt_ms).floor() as usize;
        if bin < cfg.steps {
            frames.frames[bin][ch as usize] = true;
        }
    }
    frames
}

/// Class templates are Poisson spike trains per channel; each sample jitters
/// every template spike with Gaussian noise and deletes a fraction of them.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.num_classes == 0 || cfg.num_channels == 0 || cfg.steps == 0 || cfg.samples_per_class == 0
    {
        return Err(EtlpError::param(
            "synthetic dataset dimensions must be positive",
        ));
    }
    if !(cfg.base_rate_hz > 0.0) || !(cfg.dt_ms > 0.0) || !(cfg.jitter_ms >= 0.0) {
        return Err(EtlpError::param(
            "synthetic rate and dt must be positive, jitter non-negative",
        ));
    }
    if !(0.0..1.0).contains(&cfg.deletion_prob) {
        return Err(EtlpError::param("deletion probability must lie in [0, 1)"));
    }
    let window_ms = cfg.steps as f64 * cfg.dt_ms;
    let inter_arrival =
        Exp::new(cfg.base_rate_hz / 1000.0).map_err(|e| EtlpError::param(e.to_string()))?;

    let mut template_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let templates: Vec<Vec<(f64, u32)>> = (0..cfg.num_classes)
        .map(|c| {
            let channels = if cfg.disjoint_channels {
                let block = cfg.num_channels / cfg.num_classes;
                c * block..(c + 1) * block
            } else {
                0..cfg.num_channels
            };
            let mut spikes = Vec::new();
            for ch in channels {
                let mut t = inter_arrival.sample(&mut template_rng);
                while t < window_ms {
                    spikes.push((t, ch as u32));
                    t += inter_arrival.sample(&mut template_rng);
                }
            }
            spikes
        })
        .collect();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let jitter = Normal::new(0.0, cfg.jitter_ms).map_err(|e| EtlpError::param(e.to_string()))?;
    let mut samples = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
    for _ in 0..cfg.samples_per_class {
        for (label, template) in templates.iter().enumerate() {
            let mut kept = Vec::with_capacity(template.len());
            for &(t, ch) in template {
                if cfg.deletion_prob > 0.0 && noise_rng.random_bool(cfg.deletion_prob) {
                    continue;
                }
                let shifted = if cfg.jitter_ms > 0.0 {
                    t + jitter.sample(&mut noise_rng)
                } else {
                    t
                };
                kept.push((shifted, ch));
            }
            samples.push(LabeledSample {
                frames: bin_times(kept.into_iter(), cfg),
                label,
            });
        }
    }
    let template_frames = templates
        .iter()
        .map(|t| bin_times(t.iter().copied(), cfg))
        .collect();
    Ok(SynthDataset {
        samples,
        templates,
        template_frames,
    })
}
