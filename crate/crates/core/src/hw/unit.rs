use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EtlpError, Result};
use crate::hw::fixed::{fx_quantize, fx_to_real, Fixed};
use crate::traces::{surrogate, update_pre_trace};

pub const CYCLES_PER_UPDATE: u64 = 3;

/// Clock rate one gradient unit needs to serve a neuron with
/// `synapses_per_neuron` inputs at `updates_per_second`.
pub fn required_clock_hz(synapses_per_neuron: u64, updates_per_second: u64) -> u64 {
    synapses_per_neuron * updates_per_second * CYCLES_PER_UPDATE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FsmState {
    #[default]
    Init,
    Read,
    Write,
}

impl FsmState {
    pub fn name(self) -> &'static str {
        match self {
            FsmState::Init => "init",
            FsmState::Read => "read",
            FsmState::Write => "write",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HwInputs {
    pub pre_spike: bool,
    pub post_v: Fixed,
    pub threshold: Fixed,
    /// Teaching-synapse weight when the teaching neuron fires, zero otherwise.
    /// Any surrogate dampening is folded in here.
    pub teach: Fixed,
    pub address: usize,
}

/// One pre-synaptic trace per pre-synaptic neuron address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMemory {
    cells: Vec<Fixed>,
}

impl TraceMemory {
    pub fn new(size: usize) -> Self {
        Self {
            cells: vec![Fixed::ZERO; size],
        }
    }

    pub fn from_cells(cells: Vec<Fixed>) -> Self {
        Self { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Fixed] {
        &self.cells
    }

    fn read(&self, address: usize) -> Result<Fixed> {
        self.cells.get(address).copied().ok_or_else(|| {
            EtlpError::Fsm(format!(
                "address {address} outside memory of {}",
                self.cells.len()
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GradientUnitState {
    pub fsm: FsmState,
    pub cycle_counter: u64,
    pub pending: Option<HwInputs>,
    pub fetched_trace: Fixed,
    pub new_trace: Fixed,
    pub gradient: Fixed,
    /// High for the cycle that completes an update.
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleRecord {
    pub cycle: u64,
    /// State the unit was in during this cycle.
    pub fsm: FsmState,
    pub inputs: HwInputs,
    pub trace: Fixed,
    pub gradient: Fixed,
    pub done: bool,
}

pub const CYCLE_CSV_HEADER: &str =
    "cycle,state,pre_spike,post_v,threshold,teach,address,trace,gradient,done";

pub fn write_cycle_csv(mut w: impl Write, records: &[CycleRecord]) -> std::io::Result<()> {
    writeln!(w, "{CYCLE_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.cycle,
            r.fsm.name(),
            u8::from(r.inputs.pre_spike),
            r.inputs.post_v.raw(),
            r.inputs.threshold.raw(),
            r.inputs.teach.raw(),
            r.inputs.address,
            r.trace.raw(),
            r.gradient.raw(),
            u8::from(r.done),
        )?;
    }
    Ok(())
}

/// The gradient unit: datapath constants, FSM state and an optional
/// per-cycle recorder.
#[derive(Debug, Clone)]
pub struct GradientUnit {
    pub state: GradientUnitState,
    /// Trace decay.
    pub alpha: Fixed,
    /// Constant added to the trace on a pre-synaptic spike.
    pub increment: Fixed,
    records: Option<Vec<CycleRecord>>,
}

impl GradientUnit {
    pub fn new(alpha: Fixed, increment: Fixed) -> Self {
        Self {
            state: GradientUnitState::default(),
            alpha,
            increment,
            records: None,
        }
    }

    pub fn with_recording(mut self) -> Self {
        self.records = Some(Vec::new());
        self
    }

    pub fn records(&self) -> &[CycleRecord] {
        self.records.as_deref().unwrap_or(&[])
    }

    /// Raises `step_I`: latches the inputs. Only legal in `init`.
    pub fn start(&mut self, inputs: HwInputs, mem: &TraceMemory) -> Result<()> {
        if self.state.fsm != FsmState::Init || self.state.pending.is_some() {
            return Err(EtlpError::Fsm(format!(
                "start requested in state {} with an update in flight",
                self.state.fsm.name()
            )));
        }
        mem.read(inputs.address)?;
        self.state.pending = Some(inputs);
        self.state.done = false;
        Ok(())
    }

    /// Advances one clock cycle.
    pub fn clock(&mut self, mem: &mut TraceMemory) -> Result<()> {
        let st = &mut self.state;
        let during = st.fsm;
        st.done = false;
        let inputs = st.pending.unwrap_or_default();
        match st.fsm {
            FsmState::Init => {
                if st.pending.is_some() {
                    st.fetched_trace = mem.read(inputs.address)?;
                    st.fsm = FsmState::Read;
                }
            }
            FsmState::Read => {
                let spike_term = if inputs.pre_spike {
                    self.increment
                } else {
                    Fixed::ZERO
                };
                st.new_trace = self
                    .alpha
                    .saturating_mul(st.fetched_trace)
                    .saturating_add(spike_term);
                let distance = inputs
                    .post_v
                    .saturating_sub(inputs.threshold)
                    .saturating_abs();
                let surrogate = Fixed::ONE.saturating_sub(distance).max(Fixed::ZERO);
                st.gradient = st
                    .new_trace
                    .saturating_mul(surrogate)
                    .saturating_mul(inputs.teach);
                st.fsm = FsmState::Write;
            }
            FsmState::Write => {
                mem.cells[inputs.address] = st.new_trace;
                st.done = true;
                st.pending = None;
                st.fsm = FsmState::Init;
            }
        }
        st.cycle_counter += 1;
        if let Some(records) = &mut self.records {
            records.push(CycleRecord {
                cycle: st.cycle_counter,
                fsm: during,
                inputs,
                trace: st.new_trace,
                gradient: st.gradient,
                done: st.done,
            });
        }
        Ok(())
    }
}

/// Runs one complete update (`init -> read -> write -> init`) and returns the
/// gradient together with the cycles it took.
pub fn hw_step(
    unit: &mut GradientUnit,
    mem: &mut TraceMemory,
    inputs: HwInputs,
) -> Result<(Fixed, u64)> {
    let start = unit.state.cycle_counter;
    unit.start(inputs, mem)?;
    while !unit.state.done {
        unit.clock(mem)?;
    }
    Ok((unit.state.gradient, unit.state.cycle_counter - start))
}

/// A real-valued stimulus, quantised identically for both paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwStimulus {
    pub pre_spike: bool,
    pub post_v: f64,
    pub threshold: f64,
    pub teach: f64,
    pub address: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EquivalenceReport {
    pub updates: usize,
    pub max_gradient_error: f64,
    pub mean_gradient_error: f64,
    pub max_trace_error: f64,
}

/// Drives the fixed-point unit and a floating-point reference built from the
/// trace-module functions with the same quantised stimuli, parameters and
/// initial memory, and reports `|fx - float|` statistics.
pub fn equivalence_report(
    stimuli: &[HwStimulus],
    initial_traces: &[f64],
    alpha: f64,
    increment: f64,
) -> Result<EquivalenceReport> {
    let alpha_fx = fx_quantize(alpha)?;
    let inc_fx = fx_quantize(increment)?;
    let cells = initial_traces
        .iter()
        .map(|&x| fx_quantize(x))
        .collect::<Result<Vec<_>>>()?;
    let mut float_mem: Vec<f64> = cells.iter().map(|&c| fx_to_real(c)).collect();
    let mut mem = TraceMemory::from_cells(cells);
    let mut unit = GradientUnit::new(alpha_fx, inc_fx);
    let (alpha_ref, inc_ref) = (fx_to_real(alpha_fx), fx_to_real(inc_fx));

    let mut report = EquivalenceReport::default();
    let mut total = 0.0;
    for s in stimuli {
        let inputs = HwInputs {
            pre_spike: s.pre_spike,
            post_v: fx_quantize(s.post_v)?,
            threshold: fx_quantize(s.threshold)?,
            teach: fx_quantize(s.teach)?,
            address: s.address,
        };
        let (gradient, _) = hw_step(&mut unit, &mut mem, inputs)?;

        let cell = &mut float_mem[s.address..=s.address];
        let mut trace = [cell[0]];
        update_pre_trace(&mut trace, &[false], alpha_ref)?;
        if s.pre_spike {
            trace[0] += inc_ref;
        }
        cell[0] = trace[0];
        let phi = surrogate(fx_to_real(inputs.post_v), fx_to_real(inputs.threshold), 1.0)?;
        let reference = trace[0] * phi * fx_to_real(inputs.teach);

        let err = (fx_to_real(gradient) - reference).abs();
        report.max_gradient_error = report.max_gradient_error.max(err);
        total += err;
        let trace_err = (fx_to_real(mem.cells()[s.address]) - trace[0]).abs();
        report.max_trace_error = report.max_trace_error.max(trace_err);
        report.updates += 1;
    }
    if report.updates > 0 {
        report.mean_gradient_error = total / report.updates as f64;
    }
    Ok(report)
}

/// Independent one-update trials, each from its own random memory cell,
/// trace decay and inputs: trace in `[0, 8)`, decay in `[0.5, 1)`, membrane
/// and threshold in `[-2, 6)` and `[0.5, 5)`, teaching value in `[-2, 2]`.
pub fn single_step_trials(trials: usize, seed: u64) -> Result<EquivalenceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquivalenceReport::default();
    let mut total = 0.0;
    for _ in 0..trials {
        let alpha = rng.random_range(0.5..1.0);
        let initial = rng.random_range(0.0..8.0);
        let stim = HwStimulus {
            pre_spike: rng.random_bool(0.5),
            post_v: rng.random_range(-2.0..6.0),
            threshold: rng.random_range(0.5..5.0),
            teach: rng.random_range(-2.0..=2.0),
            address: 0,
        };
        let r = equivalence_report(&[stim], &[initial], alpha, 1.0)?;
        report.max_gradient_error = report.max_gradient_error.max(r.max_gradient_error);
        report.max_trace_error = report.max_trace_error.max(r.max_trace_error);
        total += r.mean_gradient_error;
        report.updates += 1;
    }
    if trials > 0 {
        report.mean_gradient_error = total / trials as f64;
    }
    Ok(report)
}

/// `steps` consecutive updates of one memory cell with decay `alpha` and
/// pre-synaptic spike probability `spike_prob`.
pub fn accumulation_run(
    steps: usize,
    alpha: f64,
    spike_prob: f64,
    seed: u64,
) -> Result<EquivalenceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stimuli: Vec<HwStimulus> = (0..steps)
        .map(|_| HwStimulus {
            pre_spike: rng.random_bool(spike_prob),
            post_v: rng.random_range(0.0..2.0),
            threshold: 1.0,
            teach: 1.0,
            address: 0,
        })
        .collect();
    equivalence_report(&stimuli, &[0.0], alpha, 1.0)
}
