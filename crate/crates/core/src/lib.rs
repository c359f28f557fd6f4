#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Online learning for spiking neural networks with event-based three-factor
//! local plasticity (ETLP), plus eProp and BPTT references, event-data
//! ingestion, an experiment harness and a bit-accurate model of a
//! fixed-point gradient unit.

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod hw;
pub mod matrix;
pub mod network;
pub mod neuron;
pub mod plasticity;
pub mod rule;
pub mod traces;

pub use config::{DatasetKind, RunConfig};
pub use error::{EtlpError, Result};
pub use harness::{run_experiment, Experiment, WeightSnapshot};
pub use matrix::Matrix;
pub use network::{evaluate, rate_decode, train_epoch, Network, NetworkTopology, SynapseSet};
pub use neuron::{decay_from_tau, step_layer, LayerState, NeuronKind, NeuronParams};
pub use rule::LearningRule;
