use crate::error::{check_len, Result};
use crate::matrix::Matrix;
use crate::plasticity::ProjectionMatrix;

/// Per-synapse low-pass filtered eligibility, `ē <- kappa * ē + e(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityStore {
    pub filtered: Matrix,
}

impl EligibilityStore {
    pub fn new(num_pre: usize, num_post: usize) -> Self {
        Self {
            filtered: Matrix::zeros(num_pre, num_post),
        }
    }

    pub fn filter(&mut self, e: &Matrix, kappa: f64) -> Result<()> {
        e.check_shape(
            "EligibilityStore::filter",
            self.filtered.rows(),
            self.filtered.cols(),
        )?;
        for (f, &x) in self.filtered.as_mut_slice().iter_mut().zip(e.as_slice()) {
            *f = kappa * *f + x;
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.filtered.fill(0.0);
    }
}

/// One weight block under eProp: its eligibility store and the weight delta
/// accumulated over the current sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EpropBlock {
    pub elig: EligibilityStore,
    pub delta: Matrix,
}

impl EpropBlock {
    pub fn new(num_pre: usize, num_post: usize) -> Self {
        Self {
            elig: EligibilityStore::new(num_pre, num_post),
            delta: Matrix::zeros(num_pre, num_post),
        }
    }

    /// Filters `e(t)` into the store and accumulates
    /// `delta_ij -= lr * signal_j * ē_ij`.
    pub fn step(&mut self, e: &Matrix, kappa: f64, learning_signal: &[f64], lr: f64) -> Result<()> {
        self.elig.filter(e, kappa)?;
        check_len(
            "EpropBlock::step learning signal",
            self.delta.cols(),
            learning_signal.len(),
        )?;
        if learning_signal.iter().all(|&x| x == 0.0) {
            return Ok(());
        }
        let gain: Vec<f64> = learning_signal.iter().map(|l| lr * l).collect();
        for i in 0..self.delta.rows() {
            let elig = self.elig.filtered.row(i);
            for ((d, &g), &el) in self.delta.row_mut(i).iter_mut().zip(&gain).zip(elig) {
                *d -= g * el;
            }
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.elig.reset();
        self.delta.fill(0.0);
    }
}

/// One eProp step for a hidden layer (any number of incoming blocks) and the
/// readout block. The hidden learning signal is the output error broadcast
/// through the fixed random feedback matrix, `Bᵀ (s_out - s*)`.
pub fn eprop_step(
    hidden: &mut [(&mut EpropBlock, &Matrix)],
    output: (&mut EpropBlock, &Matrix),
    output_error: &[f64],
    b_feedback: &ProjectionMatrix,
    kappa: f64,
    lr: f64,
) -> Result<()> {
    let signal = b_feedback.matrix().transpose_mul_vec(output_error)?;
    for (block, e) in hidden.iter_mut() {
        block.step(e, kappa, &signal, lr)?;
    }
    let (out_block, e_out) = output;
    out_block.step(e_out, kappa, output_error, lr)
}
