use serde::Serialize;

use crate::neuron::NeuronKind;
use crate::rule::LearningRule;

/// One layer as seen by the state accounting: `inputs` pre-synaptic
/// channels onto `neurons` post-synaptic neurons over `steps` steps, with a
/// fraction `connectivity` of the dense synapse matrix realised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerTopology {
    pub inputs: usize,
    pub neurons: usize,
    pub steps: usize,
    pub connectivity: f64,
    pub kind: NeuronKind,
}

impl LayerTopology {
    pub fn synapses(&self) -> u64 {
        let dense = (self.inputs as u64) * (self.neurons as u64);
        (self.connectivity.clamp(0.0, 1.0) * dense as f64).round() as u64
    }
}

/// Scalars a learning rule must store to compute its weight updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GradientStateCount {
    pub rule: LearningRule,
    /// One trace per pre-synaptic channel.
    pub pre_traces: u64,
    /// Filtered per-synapse eligibilities (eProp only).
    pub synaptic_eligibility: u64,
    /// Per-synapse threshold-adaptation traces (ALIF only).
    pub adaptation_traces: u64,
    /// Inputs, v, a, s and A kept for every unrolled step (BPTT only).
    pub unrolled_activations: u64,
}

impl GradientStateCount {
    pub fn total(&self) -> u64 {
        self.pre_traces
            + self.synaptic_eligibility
            + self.adaptation_traces
            + self.unrolled_activations
    }
}

/// Exact storage counts matching what this crate's implementations allocate.
pub fn count_gradient_state(rule: LearningRule, topo: &LayerTopology) -> GradientStateCount {
    let synapses = topo.synapses();
    let adapt = if topo.kind == NeuronKind::Alif {
        synapses
    } else {
        0
    };
    let mut count = GradientStateCount {
        rule,
        pre_traces: 0,
        synaptic_eligibility: 0,
        adaptation_traces: 0,
        unrolled_activations: 0,
    };
    match rule {
        LearningRule::Etlp => {
            count.pre_traces = topo.inputs as u64;
            count.adaptation_traces = adapt;
        }
        LearningRule::Eprop => {
            count.pre_traces = topo.inputs as u64;
            count.synaptic_eligibility = synapses;
            count.adaptation_traces = adapt;
        }
        LearningRule::Bptt => {
            count.unrolled_activations =
                (topo.steps as u64) * (topo.inputs as u64 + 4 * topo.neurons as u64);
        }
        LearningRule::None => {}
    }
    count
}
