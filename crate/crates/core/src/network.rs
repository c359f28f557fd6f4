//! Hidden layer (optionally recurrent) plus spiking readout, the per-sample
//! simulation loop for every learning rule, and rate decoding.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    bptt_gradient, eprop_step, BpttLayer, BpttOptions, EpropBlock, LayerGradient, UnrollBuffer,
};
use crate::data::LabeledSample;
use crate::error::{check_len, EtlpError, Result};
use crate::matrix::Matrix;
use crate::neuron::{step_layer, LayerState, NeuronKind, NeuronParams};
use crate::plasticity::{
    init_projection, output_teaching_current, project_teaching, teaching_spikes,
    update_hidden_weights, update_output_weights, OutputSign, ProjectionMatrix, TeachingConfig,
};
use crate::rule::LearningRule;
use crate::traces::{surrogate_unchecked, TraceState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub num_inputs: usize,
    pub hidden_size: usize,
    pub num_outputs: usize,
    /// Adds an all-to-all hidden→hidden block driven by the previous step's spikes.
    pub recurrent: bool,
    pub hidden_kind: NeuronKind,
    pub output_kind: NeuronKind,
}

impl NetworkTopology {
    pub fn validate(&self) -> Result<()> {
        if self.num_inputs == 0 || self.hidden_size == 0 || self.num_outputs == 0 {
            return Err(EtlpError::param(format!(
                "layer sizes must be positive (inputs={}, hidden={}, outputs={})",
                self.num_inputs, self.hidden_size, self.num_outputs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapseSet {
    /// inputs × hidden
    pub w_in: Matrix,
    /// hidden × hidden
    pub w_rec: Option<Matrix>,
    /// hidden × outputs
    pub w_out: Matrix,
    /// classes × hidden, fixed.
    pub b: ProjectionMatrix,
}

impl SynapseSet {
    /// Checksum over the trainable blocks.
    pub fn checksum(&self) -> u64 {
        let mut h = self.w_in.checksum() ^ self.w_out.checksum().rotate_left(21);
        if let Some(w) = &self.w_rec {
            h ^= w.checksum().rotate_left(42);
        }
        h
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrices serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| EtlpError::param(format!("bad weight snapshot: {e}")))
    }
}

const W_IN_STREAM: u64 = 0;
const W_REC_STREAM: u64 = 1;
const W_OUT_STREAM: u64 = 2;

fn uniform_block(rows: usize, cols: usize, seed: u64, stream: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let bound = 1.0 / (rows as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Every block uniform in `[-1/√fan_in, 1/√fan_in]`, each from its own
/// generator stream so blocks do not perturb each other.
pub fn init_weights(topology: &NetworkTopology, seed: u64) -> Result<SynapseSet> {
    topology.validate()?;
    let (n, h, o) = (
        topology.num_inputs,
        topology.hidden_size,
        topology.num_outputs,
    );
    Ok(SynapseSet {
        w_in: uniform_block(n, h, seed, W_IN_STREAM),
        w_rec: topology
            .recurrent
            .then(|| uniform_block(h, h, seed, W_REC_STREAM)),
        w_out: uniform_block(h, o, seed, W_OUT_STREAM),
        b: init_projection(o, h, seed)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSchedule {
    /// Error only at teaching-spike steps (many-to-one).
    TeachingSteps,
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub lr: f64,
    pub gamma_d: f64,
    /// `window_steps` is replaced by each sample's length.
    pub teaching: TeachingConfig,
    pub output_sign: OutputSign,
    /// eProp eligibility filter decay; `None` uses the readout membrane decay.
    pub eprop_kappa: Option<f64>,
    /// Error steps for eProp and BPTT.
    pub loss: LossSchedule,
    /// BPTT gradients are averaged over this many samples before applying.
    pub batch_size: usize,
    pub bptt_detach_adaptation: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub counts: Vec<u32>,
    pub hidden_spikes: u64,
    /// Weight-update events triggered during the sample.
    pub update_events: u64,
    /// Filled for BPTT.
    pub records: Option<UnrollBuffer>,
}

#[derive(Debug, Clone)]
struct PendingGradient {
    grads: Vec<LayerGradient>,
    samples: usize,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub topology: NetworkTopology,
    pub hidden_params: NeuronParams,
    pub output_params: NeuronParams,
    pub synapses: SynapseSet,
    pub learning: LearningConfig,
    pending: Option<PendingGradient>,
}

/// Per-block traces for a training pass.
struct TraceSet {
    input: TraceState,
    recurrent: Option<TraceState>,
    output: TraceState,
}

impl Network {
    /// LIF layers ignore the `theta` of their parameters.
    pub fn new(
        topology: NetworkTopology,
        hidden_params: NeuronParams,
        output_params: NeuronParams,
        learning: LearningConfig,
        seed: u64,
    ) -> Result<Self> {
        let synapses = init_weights(&topology, seed)?;
        Self::with_synapses(topology, hidden_params, output_params, learning, synapses)
    }

    pub fn with_synapses(
        topology: NetworkTopology,
        mut hidden_params: NeuronParams,
        mut output_params: NeuronParams,
        learning: LearningConfig,
        synapses: SynapseSet,
    ) -> Result<Self> {
        topology.validate()?;
        for (kind, params) in [
            (topology.hidden_kind, &mut hidden_params),
            (topology.output_kind, &mut output_params),
        ] {
            if kind == NeuronKind::Lif {
                params.theta = 0.0;
            }
            params.validate()?;
        }
        let (n, h, o) = (
            topology.num_inputs,
            topology.hidden_size,
            topology.num_outputs,
        );
        synapses.w_in.check_shape("input weights", n, h)?;
        synapses.w_out.check_shape("output weights", h, o)?;
        match (&synapses.w_rec, topology.recurrent) {
            (Some(w), true) => w.check_shape("recurrent weights", h, h)?,
            (None, false) => {}
            _ => return Err(EtlpError::param("recurrent block does not match topology")),
        }
        synapses.b.matrix().check_shape("projection", o, h)?;
        if learning.teaching.num_classes != o {
            return Err(EtlpError::param(format!(
                "teaching population has {} classes but the readout has {o} neurons",
                learning.teaching.num_classes
            )));
        }
        if learning.batch_size == 0 {
            return Err(EtlpError::param("batch size must be at least one"));
        }
        Ok(Self {
            topology,
            hidden_params,
            output_params,
            synapses,
            learning,
            pending: None,
        })
    }

    fn teaching_for(&self, steps: usize) -> TeachingConfig {
        TeachingConfig {
            window_steps: steps,
            ..self.learning.teaching
        }
    }

    fn loss_steps(&self, steps: usize) -> Vec<usize> {
        match self.learning.loss {
            LossSchedule::TeachingSteps => self.teaching_for(steps).schedule(),
            LossSchedule::EveryStep => (0..steps).collect(),
        }
    }

    fn check_frames(&self, frames: &[Vec<bool>]) -> Result<()> {
        for f in frames {
            check_len("input frame", self.topology.num_inputs, f.len())?;
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.topology.num_outputs {
            return Err(EtlpError::param(format!(
                "label {label} out of range for {} outputs",
                self.topology.num_outputs
            )));
        }
        Ok(())
    }

    /// One forward step. `hidden.s` holds `s(t-1)` on entry.
    fn forward_step(
        &self,
        x: &[bool],
        hidden: &mut LayerState,
        output: &mut LayerState,
    ) -> Result<()> {
        let mut current = vec![0.0; self.topology.hidden_size];
        self.synapses.w_in.accumulate_active_rows(x, &mut current)?;
        if let Some(w_rec) = &self.synapses.w_rec {
            w_rec.accumulate_active_rows(&hidden.s, &mut current)?;
        }
        step_layer(hidden, &current, &self.hidden_params)?;
        let mut out_current = vec![0.0; self.topology.num_outputs];
        self.synapses
            .w_out
            .accumulate_active_rows(&hidden.s, &mut out_current)?;
        step_layer(output, &out_current, &self.output_params)?;
        Ok(())
    }

    /// Runs a sample without learning. Never touches the weights.
    pub fn simulate(&self, frames: &[Vec<bool>]) -> Result<SampleOutput> {
        self.check_frames(frames)?;
        let mut hidden = LayerState::new(self.topology.hidden_size);
        let mut output = LayerState::new(self.topology.num_outputs);
        let mut counts = vec![0u32; self.topology.num_outputs];
        let mut hidden_spikes = 0u64;
        for x in frames {
            self.forward_step(x, &mut hidden, &mut output)?;
            hidden_spikes += hidden.s.iter().filter(|&&s| s).count() as u64;
            for (c, &s) in counts.iter_mut().zip(&output.s) {
                *c += u32::from(s);
            }
        }
        Ok(SampleOutput {
            counts,
            hidden_spikes,
            update_events: 0,
            records: None,
        })
    }

    /// Presents one sample. With `train` set, applies `rule`:
    /// ETLP updates on every teaching spike, eProp accumulates deltas and
    /// applies them at the end of the sample, BPTT records the unroll and
    /// applies the averaged gradient once `batch_size` samples are pending.
    pub fn run_sample(
        &mut self,
        frames: &[Vec<bool>],
        label: usize,
        rule: LearningRule,
        train: bool,
    ) -> Result<SampleOutput> {
        self.check_label(label)?;
        if !train {
            let mut out = self.simulate(frames)?;
            if rule == LearningRule::Bptt {
                out.records = Some(self.record(frames)?);
            }
            return Ok(out);
        }
        match rule {
            LearningRule::None => self.simulate(frames),
            LearningRule::Etlp => self.run_etlp(frames, label),
            LearningRule::Eprop => self.run_eprop(frames, label),
            LearningRule::Bptt => self.run_bptt(frames, label),
        }
    }

    fn new_traces(&self) -> TraceSet {
        let (n, h, o) = (
            self.topology.num_inputs,
            self.topology.hidden_size,
            self.topology.num_outputs,
        );
        TraceSet {
            input: TraceState::new(n, h, self.hidden_params.theta),
            recurrent: self
                .topology
                .recurrent
                .then(|| TraceState::new(h, h, self.hidden_params.theta)),
            output: TraceState::new(h, o, self.output_params.theta),
        }
    }

    fn surrogates(&self, state: &LayerState, params: &NeuronParams) -> Vec<f64> {
        (0..state.len())
            .map(|j| {
                surrogate_unchecked(
                    state.v[j],
                    state.threshold(j, params),
                    self.learning.gamma_d,
                )
            })
            .collect()
    }

    /// Steps the network and advances all traces; returns the surrogates of
    /// the hidden and output layers at this step.
    fn step_with_traces(
        &self,
        x: &[bool],
        hidden: &mut LayerState,
        output: &mut LayerState,
        traces: &mut TraceSet,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let prev_hidden = hidden.s.clone();
        self.forward_step(x, hidden, output)?;
        let (hp, op) = (&self.hidden_params, &self.output_params);
        let phi_h = self.surrogates(hidden, hp);
        let phi_o = self.surrogates(output, op);
        traces.input.advance(x, &phi_h, hp.alpha, hp.gamma_a)?;
        if let Some(rec) = &mut traces.recurrent {
            rec.advance(&prev_hidden, &phi_h, hp.alpha, hp.gamma_a)?;
        }
        traces
            .output
            .advance(&hidden.s, &phi_o, op.alpha, op.gamma_a)?;
        Ok((phi_h, phi_o))
    }

    fn run_etlp(&mut self, frames: &[Vec<bool>], label: usize) -> Result<SampleOutput> {
        self.check_frames(frames)?;
        let teach_cfg = self.teaching_for(frames.len());
        let mut hidden = LayerState::new(self.topology.hidden_size);
        let mut output = LayerState::new(self.topology.num_outputs);
        let mut traces = self.new_traces();
        let mut counts = vec![0u32; self.topology.num_outputs];
        let (mut hidden_spikes, mut updates) = (0u64, 0u64);
        let lr = self.learning.lr;

        for (t, x) in frames.iter().enumerate() {
            let (phi_h, phi_o) = self.step_with_traces(x, &mut hidden, &mut output, &mut traces)?;
            hidden_spikes += hidden.s.iter().filter(|&&s| s).count() as u64;
            for (c, &s) in counts.iter_mut().zip(&output.s) {
                *c += u32::from(s);
            }

            let teach = teaching_spikes(t, label, &teach_cfg)?;
            if !teach.iter().any(|&s| s) {
                continue;
            }
            let signal = project_teaching(&self.synapses.b, &teach)?;
            let e_in = traces.input.compute_eligibility(&phi_h)?;
            update_hidden_weights(&mut self.synapses.w_in, &signal, e_in, lr)?;
            if let (Some(rec), Some(w_rec)) = (&mut traces.recurrent, &mut self.synapses.w_rec) {
                let e_rec = rec.compute_eligibility(&phi_h)?;
                update_hidden_weights(w_rec, &signal, e_rec, lr)?;
            }
            let i_teach = output_teaching_current(&teach)?;
            let e_out = traces.output.compute_eligibility(&phi_o)?;
            update_output_weights(
                &mut self.synapses.w_out,
                &output.s,
                &i_teach,
                e_out,
                lr,
                self.learning.output_sign,
            )?;
            updates += 1;
        }
        Ok(SampleOutput {
            counts,
            hidden_spikes,
            update_events: updates,
            records: None,
        })
    }

    fn eprop_kappa(&self) -> f64 {
        self.learning
            .eprop_kappa
            .unwrap_or(self.output_params.alpha)
    }

    fn run_eprop(&mut self, frames: &[Vec<bool>], label: usize) -> Result<SampleOutput> {
        self.check_frames(frames)?;
        let (n, h, o) = (
            self.topology.num_inputs,
            self.topology.hidden_size,
            self.topology.num_outputs,
        );
        let mut in_block = EpropBlock::new(n, h);
        let mut rec_block = self.topology.recurrent.then(|| EpropBlock::new(h, h));
        let mut out_block = EpropBlock::new(h, o);
        let mut loss_at = vec![0usize; frames.len()];
        for t in self.loss_steps(frames.len()) {
            loss_at[t] += 1;
        }
        let target: Vec<f64> = (0..o).map(|j| f64::from(u8::from(j == label))).collect();
        let (kappa, lr) = (self.eprop_kappa(), self.learning.lr);

        let mut hidden = LayerState::new(h);
        let mut output = LayerState::new(o);
        let mut traces = self.new_traces();
        let mut counts = vec![0u32; o];
        let mut hidden_spikes = 0u64;
        for (t, x) in frames.iter().enumerate() {
            let (phi_h, phi_o) = self.step_with_traces(x, &mut hidden, &mut output, &mut traces)?;
            hidden_spikes += hidden.s.iter().filter(|&&s| s).count() as u64;
            for (c, &s) in counts.iter_mut().zip(&output.s) {
                *c += u32::from(s);
            }
            let error: Vec<f64> = output
                .s
                .iter()
                .zip(&target)
                .map(|(&s, &y)| loss_at[t] as f64 * (f64::from(u8::from(s)) - y))
                .collect();
            let e_in = traces.input.compute_eligibility(&phi_h)?.clone();
            let e_out = traces.output.compute_eligibility(&phi_o)?.clone();
            match (&mut rec_block, &mut traces.recurrent) {
                (Some(rb), Some(rt)) => {
                    let e_rec = rt.compute_eligibility(&phi_h)?;
                    eprop_step(
                        &mut [(&mut in_block, &e_in), (rb, e_rec)],
                        (&mut out_block, &e_out),
                        &error,
                        &self.synapses.b,
                        kappa,
                        lr,
                    )?;
                }
                _ => eprop_step(
                    &mut [(&mut in_block, &e_in)],
                    (&mut out_block, &e_out),
                    &error,
                    &self.synapses.b,
                    kappa,
                    lr,
                )?,
            }
        }
        self.synapses.w_in.add_scaled(&in_block.delta, 1.0)?;
        if let (Some(w), Some(rb)) = (&mut self.synapses.w_rec, &rec_block) {
            w.add_scaled(&rb.delta, 1.0)?;
        }
        self.synapses.w_out.add_scaled(&out_block.delta, 1.0)?;
        Ok(SampleOutput {
            counts,
            hidden_spikes,
            update_events: 1,
            records: None,
        })
    }

    /// Forward pass with every per-step quantity recorded for BPTT.
    pub fn record(&self, frames: &[Vec<bool>]) -> Result<UnrollBuffer> {
        self.check_frames(frames)?;
        let mut hidden = LayerState::new(self.topology.hidden_size);
        let mut output = LayerState::new(self.topology.num_outputs);
        let mut buffer = UnrollBuffer::new(2);
        for x in frames {
            self.forward_step(x, &mut hidden, &mut output)?;
            buffer.layers[0].push(x, &hidden, &self.hidden_params);
            buffer.layers[1].push(&hidden.s, &output, &self.output_params);
        }
        Ok(buffer)
    }

    /// BPTT gradient of the configured loss for one sample.
    pub fn bptt_sample_gradient(
        &self,
        buffer: &UnrollBuffer,
        label: usize,
    ) -> Result<Vec<LayerGradient>> {
        self.check_label(label)?;
        let target: Vec<f64> = (0..self.topology.num_outputs)
            .map(|j| f64::from(u8::from(j == label)))
            .collect();
        let layers = [
            BpttLayer {
                w_ff: &self.synapses.w_in,
                w_rec: self.synapses.w_rec.as_ref(),
                params: &self.hidden_params,
            },
            BpttLayer {
                w_ff: &self.synapses.w_out,
                w_rec: None,
                params: &self.output_params,
            },
        ];
        let opts = BpttOptions {
            gamma_d: self.learning.gamma_d,
            detach_adaptation: self.learning.bptt_detach_adaptation,
        };
        bptt_gradient(
            buffer,
            &layers,
            &target,
            &self.loss_steps(buffer.steps()),
            &opts,
        )
    }

    fn run_bptt(&mut self, frames: &[Vec<bool>], label: usize) -> Result<SampleOutput> {
        let buffer = self.record(frames)?;
        let grads = self.bptt_sample_gradient(&buffer, label)?;
        match &mut self.pending {
            Some(p) => {
                for (acc, g) in p.grads.iter_mut().zip(&grads) {
                    acc.w_ff.add_scaled(&g.w_ff, 1.0)?;
                    if let (Some(a), Some(b)) = (&mut acc.w_rec, &g.w_rec) {
                        a.add_scaled(b, 1.0)?;
                    }
                }
                p.samples += 1;
            }
            None => self.pending = Some(PendingGradient { grads, samples: 1 }),
        }
        let applied = if self
            .pending
            .as_ref()
            .is_some_and(|p| p.samples >= self.learning.batch_size)
        {
            self.flush_batch()?
        } else {
            false
        };
        let out = &buffer.layers[1];
        let mut counts = vec![0u32; self.topology.num_outputs];
        for s in &out.s {
            for (c, &x) in counts.iter_mut().zip(s) {
                *c += u32::from(x);
            }
        }
        let hidden_spikes = buffer.layers[0].s.iter().flatten().filter(|&&s| s).count() as u64;
        Ok(SampleOutput {
            counts,
            hidden_spikes,
            update_events: u64::from(applied),
            records: Some(buffer),
        })
    }

    /// Applies any pending averaged BPTT gradient. Returns whether one was applied.
    pub fn flush_batch(&mut self) -> Result<bool> {
        let Some(p) = self.pending.take() else {
            return Ok(false);
        };
        let scale = -self.learning.lr / p.samples as f64;
        self.synapses.w_in.add_scaled(&p.grads[0].w_ff, scale)?;
        if let (Some(w), Some(g)) = (&mut self.synapses.w_rec, &p.grads[0].w_rec) {
            w.add_scaled(g, scale)?;
        }
        self.synapses.w_out.add_scaled(&p.grads[1].w_ff, scale)?;
        Ok(true)
    }
}

/// Index of the most active output; ties go to the lowest index.
pub fn rate_decode(spike_counts: &[u32]) -> Result<usize> {
    if spike_counts.is_empty() {
        return Err(EtlpError::param(
            "cannot decode an empty spike-count vector",
        ));
    }
    let mut best = 0;
    for (k, &c) in spike_counts.iter().enumerate() {
        if c > spike_counts[best] {
            best = k;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Mean output firing rate over neurons, steps and samples.
    pub mean_rate_hz: f64,
}

/// Rate-decoded accuracy over a dataset. Samples are simulated in parallel
/// with read-only weights and reduced in sample order.
pub fn evaluate(net: &Network, dataset: &[LabeledSample]) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(EtlpError::param("cannot evaluate on an empty dataset"));
    }
    let results = dataset
        .par_iter()
        .map(|s| {
            let out = net.simulate(&s.frames.frames)?;
            let spikes: u64 = out.counts.iter().map(|&c| u64::from(c)).sum();
            Ok((
                rate_decode(&out.counts)? == s.label,
                spikes,
                s.frames.steps(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = results.iter().filter(|r| r.0).count();
    let spikes: u64 = results.iter().map(|r| r.1).sum();
    let steps: usize = results.iter().map(|r| r.2).sum();
    let seconds = steps as f64 * net.hidden_params.dt_ms / 1000.0;
    Ok(Evaluation {
        accuracy: correct as f64 / dataset.len() as f64,
        mean_rate_hz: spikes as f64 / (net.topology.num_outputs as f64 * seconds),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpochStats {
    pub update_events: u64,
    pub samples: usize,
}

/// One pass over `data` in an order shuffled by `shuffle_seed`, then flushes
/// any partial BPTT batch.
pub fn train_epoch(
    net: &mut Network,
    data: &[LabeledSample],
    rule: LearningRule,
    shuffle_seed: u64,
) -> Result<EpochStats> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    let mut stats = EpochStats::default();
    for k in order {
        let s = &data[k];
        let out = net.run_sample(&s.frames.frames, s.label, rule, true)?;
        stats.update_events += out.update_events;
        stats.samples += 1;
    }
    if net.flush_batch()? {
        stats.update_events += 1;
    }
    Ok(stats)
}
