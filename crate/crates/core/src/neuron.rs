//! Discrete-time LIF / ALIF layer with soft reset, adaptive threshold and an
//! absolute refractory period.
//!
//! One call to [`step_layer`] advances every neuron of a layer by one step:
//!
//! ```text
//! a(t) = gamma_a * a(t-1) + s(t-1)
//! v(t) = alpha * v(t-1) + I(t) - s(t-1) * v_th
//! A(t) = v_th + theta * a(t)
//! s(t) = [v(t) >= A(t)] and refrac == 0
//! ```
//!
//! During the refractory period the membrane keeps decaying and integrating;
//! only spike emission is suppressed.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, EtlpError, Result};

/// Maps a time constant onto a per-step decay factor, `exp(-dt / tau)`.
pub fn decay_from_tau(tau_ms: f64, dt_ms: f64) -> Result<f64> {
    if !(tau_ms > 0.0) || !(dt_ms > 0.0) {
        return Err(EtlpError::param(format!(
            "time constant and step must be positive (tau={tau_ms}, dt={dt_ms})"
        )));
    }
    Ok((-dt_ms / tau_ms).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    Lif,
    Alif,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Membrane decay per step.
    pub alpha: f64,
    /// Adaptation-trace decay per step.
    pub gamma_a: f64,
    pub v_th: f64,
    /// Threshold increase per unit of adaptation trace. Zero gives a plain LIF.
    pub theta: f64,
    pub refractory_steps: u32,
    pub dt_ms: f64,
}

impl NeuronParams {
    pub fn from_time_constants(
        tau_m_ms: f64,
        tau_a_ms: f64,
        dt_ms: f64,
        v_th: f64,
        theta: f64,
        refractory_steps: u32,
    ) -> Result<Self> {
        let params = Self {
            alpha: decay_from_tau(tau_m_ms, dt_ms)?,
            gamma_a: decay_from_tau(tau_a_ms, dt_ms)?,
            v_th,
            theta,
            refractory_steps,
            dt_ms,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(EtlpError::param(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.gamma_a > 0.0 && self.gamma_a < 1.0) {
            return Err(EtlpError::param(format!(
                "gamma_a must lie in (0,1), got {}",
                self.gamma_a
            )));
        }
        if !self.v_th.is_finite() || !(self.theta >= 0.0) || !self.theta.is_finite() {
            return Err(EtlpError::param(
                "v_th must be finite and theta finite and >= 0",
            ));
        }
        if !(self.dt_ms > 0.0) {
            return Err(EtlpError::param("dt_ms must be positive"));
        }
        Ok(())
    }

    pub fn kind(&self) -> NeuronKind {
        if self.theta > 0.0 {
            NeuronKind::Alif
        } else {
            NeuronKind::Lif
        }
    }
}

/// Per-neuron state of one layer. Reset to zero at every sample onset.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub s: Vec<bool>,
    pub refrac: Vec<u32>,
}

impl LayerState {
    pub fn new(size: usize) -> Self {
        Self {
            v: vec![0.0; size],
            a: vec![0.0; size],
            s: vec![false; size],
            refrac: vec![0; size],
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn reset(&mut self) {
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.a.iter_mut().for_each(|x| *x = 0.0);
        self.s.iter_mut().for_each(|x| *x = false);
        self.refrac.iter_mut().for_each(|x| *x = 0);
    }

    /// Instantaneous threshold `v_th + theta * a_j`.
    #[inline]
    pub fn threshold(&self, j: usize, params: &NeuronParams) -> f64 {
        params.v_th + params.theta * self.a[j]
    }

    pub fn thresholds(&self, params: &NeuronParams) -> Vec<f64> {
        (0..self.len()).map(|j| self.threshold(j, params)).collect()
    }
}

/// Advances the layer by one step and returns the new spike flags.
///
/// `input_current` is the already-summed synaptic drive `Σ_i W_ij x_i(t)`.
#[allow(clippy::needless_range_loop)]
pub fn step_layer<'s>(
    state: &'s mut LayerState,
    input_current: &[f64],
    params: &NeuronParams,
) -> Result<&'s [bool]> {
    check_len("step_layer input", state.len(), input_current.len())?;
    if input_current.iter().any(|x| x.is_nan()) {
        return Err(EtlpError::Numeric("step_layer input current"));
    }
    for j in 0..state.len() {
        let prev_spike = if state.s[j] { 1.0 } else { 0.0 };
        state.a[j] = params.gamma_a * state.a[j] + prev_spike;
        state.v[j] = params.alpha * state.v[j] + input_current[j] - prev_spike * params.v_th;
        let threshold = params.v_th + params.theta * state.a[j];
        if state.refrac[j] > 0 {
            state.refrac[j] -= 1;
            state.s[j] = false;
        } else if state.v[j] >= threshold {
            state.s[j] = true;
            state.refrac[j] = params.refractory_steps;
        } else {
            state.s[j] = false;
        }
    }
    Ok(&state.s)
}
