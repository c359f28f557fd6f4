use crate::error::{check_len, EtlpError, Result};
use crate::matrix::Matrix;
use crate::neuron::{LayerState, NeuronParams};
use crate::traces::surrogate_unchecked;

/// Everything one layer produced during the forward pass, step by step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerRecord {
    /// Feedforward input spikes `x(t)`.
    pub inputs: Vec<Vec<bool>>,
    pub v: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub s: Vec<Vec<bool>>,
    /// Instantaneous thresholds `A(t)`.
    pub thresholds: Vec<Vec<f64>>,
}

impl LayerRecord {
    pub fn steps(&self) -> usize {
        self.v.len()
    }

    pub fn push(&mut self, inputs: &[bool], state: &LayerState, params: &NeuronParams) {
        self.inputs.push(inputs.to_vec());
        self.v.push(state.v.clone());
        self.a.push(state.a.clone());
        self.s.push(state.s.clone());
        self.thresholds.push(state.thresholds(params));
    }
}

/// Unrolled forward pass of a layer stack; the last layer is the readout.
///
/// Soft-reset contributions are always detached from the gradient: the
/// reverse pass treats `-s(t-1) v_th` as a constant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnrollBuffer {
    pub layers: Vec<LayerRecord>,
}

impl UnrollBuffer {
    pub fn new(num_layers: usize) -> Self {
        Self {
            layers: vec![LayerRecord::default(); num_layers],
        }
    }

    pub fn steps(&self) -> usize {
        self.layers.first().map_or(0, LayerRecord::steps)
    }

    /// Number of stored scalars (inputs, v, a, s and A for every step).
    pub fn stored_scalars(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                let per_step =
                    l.inputs.first().map_or(0, Vec::len) + 4 * l.v.first().map_or(0, Vec::len);
                per_step * l.steps()
            })
            .sum()
    }
}

/// Weights and neuron parameters of one layer, as seen by the reverse pass.
#[derive(Debug, Clone, Copy)]
pub struct BpttLayer<'a> {
    pub w_ff: &'a Matrix,
    pub w_rec: Option<&'a Matrix>,
    pub params: &'a NeuronParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpttOptions {
    pub gamma_d: f64,
    /// Drop the `s(t-1) -> a(t)` edge from the graph (the threshold still
    /// shapes the surrogate, but no gradient flows through adaptation).
    pub detach_adaptation: bool,
}

impl Default for BpttOptions {
    fn default() -> Self {
        Self {
            gamma_d: 0.3,
            detach_adaptation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub w_ff: Matrix,
    pub w_rec: Option<Matrix>,
}

/// Exact reverse-mode gradient of
/// `E = Σ_{t ∈ loss_steps} ½ Σ_j (s_j(t) - s*_j)²` on the readout layer,
/// with surrogate `∂s/∂v = gamma_d · max(0, 1 - |v - A|)`.
///
/// Errors travel backwards in time through the membrane decay (and, unless
/// detached, the adaptation trace), through recurrent weights with their
/// one-step delay, and down the stack through transposed feedforward weights.
pub fn bptt_gradient(
    buffer: &UnrollBuffer,
    layers: &[BpttLayer<'_>],
    target: &[f64],
    loss_steps: &[usize],
    opts: &BpttOptions,
) -> Result<Vec<LayerGradient>> {
    check_len("bptt_gradient layers", buffer.layers.len(), layers.len())?;
    let depth = layers.len();
    if depth == 0 {
        return Err(EtlpError::param("bptt_gradient needs at least one layer"));
    }
    let steps = buffer.steps();
    if let Some(&bad) = loss_steps.iter().find(|&&t| t >= steps) {
        return Err(EtlpError::param(format!(
            "loss step {bad} outside unrolled window of {steps} steps"
        )));
    }
    for (rec, layer) in buffer.layers.iter().zip(layers) {
        check_len("bptt_gradient record length", steps, rec.steps())?;
        let post = layer.w_ff.cols();
        if let Some(w_rec) = layer.w_rec {
            w_rec.check_shape("bptt_gradient recurrent weights", post, post)?;
        }
        if let (Some(x0), Some(v0)) = (rec.inputs.first(), rec.v.first()) {
            layer
                .w_ff
                .check_shape("bptt_gradient feedforward weights", x0.len(), v0.len())?;
        }
    }
    check_len(
        "bptt_gradient target",
        layers[depth - 1].w_ff.cols(),
        target.len(),
    )?;

    let mut loss_count = vec![0usize; steps];
    for &t in loss_steps {
        loss_count[t] += 1;
    }

    let mut grads: Vec<LayerGradient> = layers
        .iter()
        .map(|l| LayerGradient {
            w_ff: Matrix::zeros(l.w_ff.rows(), l.w_ff.cols()),
            w_rec: l.w_rec.map(|w| Matrix::zeros(w.rows(), w.cols())),
        })
        .collect();
    // dE/dv(t+1) and dE/da(t+1) per layer, carried backwards in time.
    let mut dv_next: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.w_ff.cols()]).collect();
    let mut da_next: Vec<Vec<f64>> = dv_next.clone();

    for t in (0..steps).rev() {
        // Gradient arriving at the current layer's spikes from the layer above.
        let mut ds_from_above: Vec<f64> = vec![0.0; layers[depth - 1].w_ff.cols()];
        if loss_count[t] > 0 {
            let s = &buffer.layers[depth - 1].s[t];
            for (j, d) in ds_from_above.iter_mut().enumerate() {
                *d = loss_count[t] as f64 * (f64::from(u8::from(s[j])) - target[j]);
            }
        }

        for l in (0..depth).rev() {
            let layer = &layers[l];
            let rec = &buffer.layers[l];
            let p = layer.params;
            let adaptation = !opts.detach_adaptation && p.theta > 0.0;

            let mut ds = ds_from_above;
            if let Some(w_rec) = layer.w_rec {
                // s(t) drives v(t+1) through the recurrent block.
                let back = w_rec.mul_vec(&dv_next[l])?;
                ds.iter_mut().zip(&back).for_each(|(d, b)| *d += b);
            }
            if adaptation {
                ds.iter_mut().zip(&da_next[l]).for_each(|(d, b)| *d += b);
            }

            let mut dv = vec![0.0; ds.len()];
            let mut da = vec![0.0; ds.len()];
            for j in 0..ds.len() {
                let phi = surrogate_unchecked(rec.v[t][j], rec.thresholds[t][j], opts.gamma_d);
                dv[j] = ds[j] * phi + p.alpha * dv_next[l][j];
                if adaptation {
                    da[j] = -p.theta * ds[j] * phi + p.gamma_a * da_next[l][j];
                }
            }

            for (i, _) in rec.inputs[t].iter().enumerate().filter(|(_, &x)| x) {
                grads[l]
                    .w_ff
                    .row_mut(i)
                    .iter_mut()
                    .zip(&dv)
                    .for_each(|(g, d)| *g += d);
            }
            if let (Some(g_rec), true) = (grads[l].w_rec.as_mut(), t > 0) {
                for (k, _) in rec.s[t - 1].iter().enumerate().filter(|(_, &x)| x) {
                    g_rec
                        .row_mut(k)
                        .iter_mut()
                        .zip(&dv)
                        .for_each(|(g, d)| *g += d);
                }
            }

            ds_from_above = if l > 0 {
                layer.w_ff.mul_vec(&dv)?
            } else {
                Vec::new()
            };
            dv_next[l] = dv;
            da_next[l] = da;
        }
    }
    Ok(grads)
}
