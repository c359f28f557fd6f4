//! Run configuration: a flat `key = value` file (TOML syntax) layered over
//! per-dataset defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{NmnistGeometry, SynthConfig};
use crate::error::{EtlpError, Result};
use crate::network::{LearningConfig, LossSchedule, Network, NetworkTopology};
use crate::neuron::{NeuronKind, NeuronParams};
use crate::plasticity::{OutputSign, TeachingConfig, TeachingMode};
use crate::rule::LearningRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Nmnist,
    ShdCanonical,
    Synthetic,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Nmnist => "nmnist",
            DatasetKind::ShdCanonical => "shd_canonical",
            DatasetKind::Synthetic => "synthetic",
        }
    }
}

macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty ),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        /// Keys present in a config file.
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct ConfigPatch {
            $( $field: Option<$ty>, )*
        }

        impl ConfigPatch {
            fn apply(self, cfg: &mut RunConfig) {
                $( if let Some(v) = self.$field { cfg.$field = v; } )*
            }
        }
    };
}

run_config! {
    /// Written to the `run_id` column of the metrics file.
    run_id: String,
    dataset: DatasetKind,
    /// Dataset root; falls back to `ETLP_DATA_DIR`.
    data_dir: Option<PathBuf>,
    /// Split directories below the dataset root, each holding `<label>/<files>`.
    train_dir: String,
    test_dir: String,
    /// Crop the N-MNIST sensor to 32×32 (2048 inputs) instead of 34×34 (2312).
    nmnist_crop: bool,
    window_start_us: u64,
    rule: LearningRule,
    num_inputs: usize,
    hidden_size: usize,
    num_outputs: usize,
    recurrent: bool,
    hidden_neuron: NeuronKind,
    output_neuron: NeuronKind,
    dt_ms: f64,
    /// Steps per sample.
    steps: usize,
    tau_m_ms: f64,
    tau_a_ms: f64,
    v_th: f64,
    /// Hidden-layer adaptation scale.
    theta: f64,
    output_theta: f64,
    refractory_steps: u32,
    output_refractory_steps: u32,
    lr: f64,
    gamma_d: f64,
    teaching_rate_hz: f64,
    teaching_mode: TeachingMode,
    output_sign: OutputSign,
    /// eProp filter decay; unset uses the readout membrane decay.
    eprop_kappa: Option<f64>,
    loss: LossSchedule,
    /// BPTT only; ETLP and eProp update online.
    batch_size: usize,
    bptt_detach_adaptation: bool,
    epochs: usize,
    seeds: Vec<u64>,
    synth_base_rate_hz: f64,
    synth_jitter_ms: f64,
    synth_deletion_prob: f64,
    synth_train_per_class: usize,
    synth_test_per_class: usize,
    /// Fixed dataset seed; unset draws a fresh dataset per run seed.
    synth_seed: Option<u64>,
}

impl RunConfig {
    pub fn defaults(dataset: DatasetKind) -> Self {
        let base = Self {
            run_id: dataset.name().to_string(),
            dataset,
            data_dir: None,
            train_dir: "train".into(),
            test_dir: "test".into(),
            nmnist_crop: false,
            window_start_us: 0,
            rule: LearningRule::Etlp,
            num_inputs: 0,
            hidden_size: 0,
            num_outputs: 0,
            recurrent: false,
            hidden_neuron: NeuronKind::Lif,
            output_neuron: NeuronKind::Lif,
            dt_ms: 1.0,
            steps: 100,
            tau_m_ms: 0.0,
            tau_a_ms: 0.0,
            v_th: 1.0,
            theta: 0.0,
            output_theta: 0.0,
            refractory_steps: 5,
            output_refractory_steps: 5,
            lr: 5e-4,
            gamma_d: 0.3,
            teaching_rate_hz: 100.0,
            teaching_mode: TeachingMode::Periodic,
            output_sign: OutputSign::Descent,
            eprop_kappa: None,
            loss: LossSchedule::TeachingSteps,
            batch_size: 32,
            bptt_detach_adaptation: true,
            epochs: 50,
            seeds: vec![1, 2, 3],
            synth_base_rate_hz: 20.0,
            synth_jitter_ms: 2.0,
            synth_deletion_prob: 0.05,
            synth_train_per_class: 40,
            synth_test_per_class: 20,
            synth_seed: None,
        };
        match dataset {
            DatasetKind::Nmnist => Self {
                train_dir: "Train".into(),
                test_dir: "Test".into(),
                num_inputs: NmnistGeometry::NATIVE.num_channels(),
                hidden_size: 200,
                num_outputs: 10,
                tau_m_ms: 80.0,
                tau_a_ms: 10.0,
                ..base
            },
            DatasetKind::ShdCanonical => Self {
                num_inputs: 700,
                hidden_size: 450,
                num_outputs: 20,
                recurrent: true,
                hidden_neuron: NeuronKind::Alif,
                theta: 10.0,
                dt_ms: 10.0,
                tau_m_ms: 1000.0,
                tau_a_ms: 1000.0,
                ..base
            },
            DatasetKind::Synthetic => Self {
                num_inputs: 40,
                hidden_size: 100,
                num_outputs: 5,
                recurrent: true,
                hidden_neuron: NeuronKind::Alif,
                theta: 5.0,
                tau_m_ms: 100.0,
                tau_a_ms: 20.0,
                v_th: 0.5,
                output_refractory_steps: 0,
                lr: 2e-3,
                ..base
            },
        }
    }

    /// Parses a config file. The `dataset` key selects the defaults the other
    /// keys override; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let patch: ConfigPatch = toml::from_str(text)
            .map_err(|e| EtlpError::config("config", e.message().to_string()))?;
        let mut cfg = Self::defaults(patch.dataset.unwrap_or(DatasetKind::Synthetic));
        patch.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config serialises")
    }

    pub fn nmnist_geometry(&self) -> NmnistGeometry {
        if self.nmnist_crop {
            NmnistGeometry::CROP_32
        } else {
            NmnistGeometry::NATIVE
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: usize| {
            if v == 0 {
                Err(EtlpError::config(field, "must be positive"))
            } else {
                Ok(())
            }
        };
        positive("num_inputs", self.num_inputs)?;
        positive("hidden_size", self.hidden_size)?;
        positive("num_outputs", self.num_outputs)?;
        positive("steps", self.steps)?;
        positive("batch_size", self.batch_size)?;
        if self.dataset == DatasetKind::Nmnist {
            let expected = self.nmnist_geometry().num_channels();
            if self.num_inputs != expected {
                return Err(EtlpError::config(
                    "num_inputs",
                    format!(
                        "N-MNIST with nmnist_crop = {} has {expected} inputs",
                        self.nmnist_crop
                    ),
                ));
            }
        }
        if self.dataset == DatasetKind::Synthetic {
            positive("synth_train_per_class", self.synth_train_per_class)?;
            positive("synth_test_per_class", self.synth_test_per_class)?;
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(EtlpError::config("lr", "must be positive and finite"));
        }
        if !(self.gamma_d >= 0.0 && self.gamma_d.is_finite()) {
            return Err(EtlpError::config("gamma_d", "must be non-negative"));
        }
        if !(self.teaching_rate_hz > 0.0 && self.teaching_rate_hz.is_finite()) {
            return Err(EtlpError::config("teaching_rate_hz", "must be positive"));
        }
        if let Some(k) = self.eprop_kappa {
            if !(0.0..1.0).contains(&k) {
                return Err(EtlpError::config("eprop_kappa", "must lie in [0, 1)"));
            }
        }
        if self.seeds.is_empty() {
            return Err(EtlpError::config("seeds", "at least one seed is required"));
        }
        for (field, theta) in [("theta", self.theta), ("output_theta", self.output_theta)] {
            if !(theta >= 0.0 && theta.is_finite()) {
                return Err(EtlpError::config(field, "must be non-negative"));
            }
        }
        self.hidden_params()
            .map_err(|e| EtlpError::config("neuron", e.to_string()))?;
        self.output_params()
            .map_err(|e| EtlpError::config("neuron", e.to_string()))?;
        Ok(())
    }

    pub fn topology(&self) -> NetworkTopology {
        NetworkTopology {
            num_inputs: self.num_inputs,
            hidden_size: self.hidden_size,
            num_outputs: self.num_outputs,
            recurrent: self.recurrent,
            hidden_kind: self.hidden_neuron,
            output_kind: self.output_neuron,
        }
    }

    pub fn hidden_params(&self) -> Result<NeuronParams> {
        NeuronParams::from_time_constants(
            self.tau_m_ms,
            self.tau_a_ms,
            self.dt_ms,
            self.v_th,
            self.theta,
            self.refractory_steps,
        )
    }

    pub fn output_params(&self) -> Result<NeuronParams> {
        NeuronParams::from_time_constants(
            self.tau_m_ms,
            self.tau_a_ms,
            self.dt_ms,
            self.v_th,
            self.output_theta,
            self.output_refractory_steps,
        )
    }

    pub fn learning(&self) -> LearningConfig {
        LearningConfig {
            lr: self.lr,
            gamma_d: self.gamma_d,
            teaching: TeachingConfig {
                rate_hz: self.teaching_rate_hz,
                mode: self.teaching_mode,
                num_classes: self.num_outputs,
                dt_ms: self.dt_ms,
                window_steps: self.steps,
            },
            output_sign: self.output_sign,
            eprop_kappa: self.eprop_kappa,
            loss: self.loss,
            batch_size: self.batch_size,
            bptt_detach_adaptation: self.bptt_detach_adaptation,
        }
    }

    pub fn build_network(&self, seed: u64) -> Result<Network> {
        Network::new(
            self.topology(),
            self.hidden_params()?,
            self.output_params()?,
            self.learning(),
            seed,
        )
    }

    pub fn synth_config(&self, run_seed: u64) -> SynthConfig {
        SynthConfig {
            num_classes: self.num_outputs,
            num_channels: self.num_inputs,
            steps: self.steps,
            dt_ms: self.dt_ms,
            base_rate_hz: self.synth_base_rate_hz,
            jitter_ms: self.synth_jitter_ms,
            deletion_prob: self.synth_deletion_prob,
            samples_per_class: self.synth_train_per_class + self.synth_test_per_class,
            disjoint_channels: false,
            seed: self.synth_seed.unwrap_or(run_seed),
        }
    }
}
