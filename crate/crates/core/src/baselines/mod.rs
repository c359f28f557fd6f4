//! Reference learning rules sharing the neuron and trace primitives:
//! reverse-mode BPTT through the unrolled network and eProp with random
//! broadcast feedback, plus exact gradient-state accounting for all rules.

mod bptt;
mod complexity;
mod eprop;

pub use bptt::{bptt_gradient, BpttLayer, BpttOptions, LayerGradient, LayerRecord, UnrollBuffer};
pub use complexity::{count_gradient_state, GradientStateCount, LayerTopology};
pub use eprop::{eprop_step, EligibilityStore, EpropBlock};
