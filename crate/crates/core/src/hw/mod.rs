//! Bit-accurate, cycle-counting model of a fixed-point ETLP gradient unit:
//! Q6.10 datapath, per-neuron trace memory and a three-state control FSM
//! (`init -> read -> write -> init`, one gradient every three cycles).

mod fixed;
mod unit;

pub use fixed::{fx_quantize, fx_to_real, Fixed};
pub use unit::{
    accumulation_run, equivalence_report, hw_step, required_clock_hz, single_step_trials,
    write_cycle_csv, CycleRecord, EquivalenceReport, FsmState, GradientUnit, GradientUnitState,
    HwInputs, HwStimulus, TraceMemory, CYCLES_PER_UPDATE, CYCLE_CSV_HEADER,
};
