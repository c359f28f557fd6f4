//! Local learning quantities: the pre-synaptic spike trace, the triangular
//! surrogate of the post-synaptic voltage, the threshold-adaptation
//! eligibility and their combination `e(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, EtlpError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    /// Height of the triangular surrogate.
    pub gamma_d: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self { gamma_d: 0.3 }
    }
}

/// `eps <- alpha * eps + I`, elementwise.
pub fn update_pre_trace(eps_pre: &mut [f64], input_spikes: &[bool], alpha: f64) -> Result<()> {
    check_len("update_pre_trace", eps_pre.len(), input_spikes.len())?;
    for (e, &s) in eps_pre.iter_mut().zip(input_spikes) {
        *e = alpha * *e + if s { 1.0 } else { 0.0 };
    }
    Ok(())
}

/// Explicit sum `Σ_{i=0}^{t} alpha^(t-i) I(i)` over a single channel's history.
pub fn closed_form_pre_trace(spike_history: &[bool], alpha: f64, t: usize) -> Result<f64> {
    if t >= spike_history.len() {
        return Err(EtlpError::param(format!(
            "step {t} outside history of length {}",
            spike_history.len()
        )));
    }
    Ok(spike_history[..=t]
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| alpha.powi((t - i) as i32))
        .sum())
}

/// `gamma_d * max(0, 1 - |v - threshold|)`.
pub fn surrogate(v: f64, threshold: f64, gamma_d: f64) -> Result<f64> {
    if v.is_nan() || threshold.is_nan() || gamma_d.is_nan() {
        return Err(EtlpError::Numeric("surrogate"));
    }
    Ok(surrogate_unchecked(v, threshold, gamma_d))
}

#[inline]
pub(crate) fn surrogate_unchecked(v: f64, threshold: f64, gamma_d: f64) -> f64 {
    gamma_d * (1.0 - (v - threshold).abs()).max(0.0)
}

/// Per synapse `(i, j)`:
/// `eps_adapt <- eps_pre[i] * phi[j] + (gamma_a - phi[j] * theta) * eps_adapt`.
pub fn update_adapt_trace(
    eps_adapt: &mut Matrix,
    eps_pre: &[f64],
    phi: &[f64],
    gamma_a: f64,
    theta: f64,
) -> Result<()> {
    eps_adapt.check_shape("update_adapt_trace", eps_pre.len(), phi.len())?;
    let retain: Vec<f64> = phi.iter().map(|p| gamma_a - p * theta).collect();
    for (i, &pre) in eps_pre.iter().enumerate() {
        for ((ea, &p), &r) in eps_adapt.row_mut(i).iter_mut().zip(phi).zip(&retain) {
            *ea = pre * p + r * *ea;
        }
    }
    Ok(())
}

/// Per synapse `(i, j)`: `phi[j] * (eps_pre[i] - theta * eps_adapt[i, j])`.
/// `eps_adapt = None` is the LIF case.
pub fn eligibility(
    eps_pre: &[f64],
    phi: &[f64],
    eps_adapt: Option<&Matrix>,
    theta: f64,
) -> Result<Matrix> {
    let mut out = Matrix::zeros(eps_pre.len(), phi.len());
    eligibility_into(&mut out, eps_pre, phi, eps_adapt, theta)?;
    Ok(out)
}

pub(crate) fn eligibility_into(
    out: &mut Matrix,
    eps_pre: &[f64],
    phi: &[f64],
    eps_adapt: Option<&Matrix>,
    theta: f64,
) -> Result<()> {
    out.check_shape("eligibility", eps_pre.len(), phi.len())?;
    match eps_adapt {
        Some(ea) => {
            ea.check_shape("eligibility (adaptation trace)", eps_pre.len(), phi.len())?;
            for (i, &pre) in eps_pre.iter().enumerate() {
                for ((e, &p), &a) in out.row_mut(i).iter_mut().zip(phi).zip(ea.row(i)) {
                    *e = p * (pre - theta * a);
                }
            }
        }
        None => {
            for (i, &pre) in eps_pre.iter().enumerate() {
                for (e, &p) in out.row_mut(i).iter_mut().zip(phi) {
                    *e = p * pre;
                }
            }
        }
    }
    Ok(())
}

/// Trace storage for one weight block (pre channels × post neurons).
///
/// The adaptation trace is per synapse and only allocated for ALIF
/// post-synaptic neurons (`theta > 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub eps_pre: Vec<f64>,
    pub eps_adapt: Option<Matrix>,
    pub last_e: Matrix,
    theta: f64,
}

impl TraceState {
    pub fn new(num_pre: usize, num_post: usize, theta: f64) -> Self {
        Self {
            eps_pre: vec![0.0; num_pre],
            eps_adapt: (theta > 0.0).then(|| Matrix::zeros(num_pre, num_post)),
            last_e: Matrix::zeros(num_pre, num_post),
            theta,
        }
    }

    pub fn num_pre(&self) -> usize {
        self.eps_pre.len()
    }

    pub fn num_post(&self) -> usize {
        self.last_e.cols()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn reset(&mut self) {
        self.eps_pre.iter_mut().for_each(|x| *x = 0.0);
        if let Some(ea) = &mut self.eps_adapt {
            ea.fill(0.0);
        }
        self.last_e.fill(0.0);
    }

    /// Advances the traces that must be kept every step: `eps_pre` and, for
    /// ALIF, `eps_adapt`. Does not form `e(t)`.
    pub fn advance(
        &mut self,
        input_spikes: &[bool],
        phi: &[f64],
        alpha: f64,
        gamma_a: f64,
    ) -> Result<()> {
        update_pre_trace(&mut self.eps_pre, input_spikes, alpha)?;
        if let Some(ea) = &mut self.eps_adapt {
            update_adapt_trace(ea, &self.eps_pre, phi, gamma_a, self.theta)?;
        }
        Ok(())
    }

    /// Forms `e(t)` into `last_e` from the current traces.
    pub fn compute_eligibility(&mut self, phi: &[f64]) -> Result<&Matrix> {
        eligibility_into(
            &mut self.last_e,
            &self.eps_pre,
            phi,
            self.eps_adapt.as_ref(),
            self.theta,
        )?;
        Ok(&self.last_e)
    }

    /// Scalars the learning rule must keep between steps (excluding the
    /// `last_e` scratch buffer, which is recomputed from them on demand).
    pub fn persistent_scalars(&self) -> usize {
        self.eps_pre.len() + self.eps_adapt.as_ref().map_or(0, Matrix::len)
    }
}
