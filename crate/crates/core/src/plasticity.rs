//! Teaching neurons, the fixed random label projection and the
//! event-triggered weight updates for hidden and output layers.
//!
//! Learning only happens on a teaching spike. Hidden weights move along
//! `lr * (Bᵀ teach)_j * e_ij`; output weights along the spike error
//! `(2 s - I - 1) / 2 = s - s*`, where `I` is the ±1 current delivered by the
//! excitatory/inhibitory teaching synapses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, EtlpError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeachingMode {
    /// Spikes at a fixed rate throughout the sample, end-aligned.
    Periodic,
    /// A single spike at the last step of the window.
    EndOfWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeachingConfig {
    pub rate_hz: f64,
    pub mode: TeachingMode,
    pub num_classes: usize,
    pub dt_ms: f64,
    /// Steps per sample window.
    pub window_steps: usize,
}

impl TeachingConfig {
    /// Steps between two teaching spikes in periodic mode (at least one).
    pub fn period_steps(&self) -> usize {
        let period = (1000.0 / (self.rate_hz * self.dt_ms)).round();
        if period.is_finite() && period >= 1.0 {
            period as usize
        } else {
            1
        }
    }

    pub fn fires_at(&self, step: usize) -> bool {
        match self.mode {
            TeachingMode::Periodic => (step + 1).is_multiple_of(self.period_steps()),
            TeachingMode::EndOfWindow => step + 1 == self.window_steps,
        }
    }

    /// Steps of the window at which the teaching neuron of the active class fires.
    pub fn schedule(&self) -> Vec<usize> {
        (0..self.window_steps)
            .filter(|&t| self.fires_at(t))
            .collect()
    }
}

/// Spike vector of the teaching population at `step`: one-hot on `label`
/// at scheduled steps, all-zero otherwise.
pub fn teaching_spikes(step: usize, label: usize, cfg: &TeachingConfig) -> Result<Vec<bool>> {
    if label >= cfg.num_classes {
        return Err(EtlpError::param(format!(
            "label {label} out of range for {} classes",
            cfg.num_classes
        )));
    }
    let mut spikes = vec![false; cfg.num_classes];
    spikes[label] = cfg.fires_at(step);
    Ok(spikes)
}

/// Fixed random matrix carrying teaching spikes onto hidden neurons
/// (classes × hidden). Never modified after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix(Matrix);

impl ProjectionMatrix {
    pub fn from_matrix(m: Matrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.0.cols()
    }
}

pub(crate) const PROJECTION_STREAM: u64 = 3;

/// Uniform entries in `[-1/√H, 1/√H]`, deterministic per seed.
pub fn init_projection(
    num_classes: usize,
    hidden_size: usize,
    seed: u64,
) -> Result<ProjectionMatrix> {
    if num_classes == 0 || hidden_size == 0 {
        return Err(EtlpError::param("projection dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PROJECTION_STREAM);
    let bound = 1.0 / (hidden_size as f64).sqrt();
    let m = Matrix::from_fn(num_classes, hidden_size, |_, _| {
        rng.random_range(-bound..=bound)
    });
    Ok(ProjectionMatrix(m))
}

/// `Bᵀ · teach`: row `c` of `B` for a one-hot teach vector, zeros for none.
pub fn project_teaching(b: &ProjectionMatrix, teach: &[bool]) -> Result<Vec<f64>> {
    check_len("project_teaching", b.num_classes(), teach.len())?;
    let mut out = vec![0.0; b.hidden_size()];
    b.0.accumulate_active_rows(teach, &mut out)?;
    Ok(out)
}

/// `W_ij += lr * teach_signal_j * e_ij`. Columns with a zero teaching
/// signal are left untouched.
pub fn update_hidden_weights(
    w: &mut Matrix,
    teach_signal: &[f64],
    e: &Matrix,
    lr: f64,
) -> Result<()> {
    e.check_shape("update_hidden_weights (eligibility)", w.rows(), w.cols())?;
    check_len(
        "update_hidden_weights (teaching signal)",
        w.cols(),
        teach_signal.len(),
    )?;
    if teach_signal.iter().all(|&x| x == 0.0) {
        return Ok(());
    }
    let gain: Vec<f64> = teach_signal.iter().map(|t| lr * t).collect();
    for i in 0..w.rows() {
        for ((wij, &g), &eij) in w.row_mut(i).iter_mut().zip(&gain).zip(e.row(i)) {
            *wij += g * eij;
        }
    }
    Ok(())
}

/// Signed current from the teaching population into the output layer:
/// `+1` on the active class, `-1` elsewhere, zeros without a teaching spike.
pub fn output_teaching_current(teach: &[bool]) -> Result<Vec<f64>> {
    match teach.iter().filter(|&&s| s).count() {
        0 => Ok(vec![0.0; teach.len()]),
        1 => Ok(teach.iter().map(|&s| if s { 1.0 } else { -1.0 }).collect()),
        n => Err(EtlpError::param(format!(
            "teaching vector must be one-hot, got {n} active classes"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSign {
    /// `W -= lr * (s - s*) * e`: gradient descent on the squared spike error.
    #[default]
    Descent,
    /// `W += lr * (s - s*) * e`, the sign as literally printed.
    Literal,
}

/// `(2 s - I - 1) / 2` per output neuron.
pub fn output_error(s_out: &[bool], i_teach: &[f64]) -> Result<Vec<f64>> {
    check_len("output_error", s_out.len(), i_teach.len())?;
    Ok(s_out
        .iter()
        .zip(i_teach)
        .map(|(&s, &i)| (2.0 * if s { 1.0 } else { 0.0 } - i - 1.0) / 2.0)
        .collect())
}

/// Output-layer update on a teaching spike.
pub fn update_output_weights(
    w: &mut Matrix,
    s_out: &[bool],
    i_teach: &[f64],
    e_out: &Matrix,
    lr: f64,
    sign: OutputSign,
) -> Result<()> {
    e_out.check_shape("update_output_weights (eligibility)", w.rows(), w.cols())?;
    check_len("update_output_weights (spikes)", w.cols(), s_out.len())?;
    if i_teach.iter().all(|&x| x == 0.0) {
        return Err(EtlpError::param(
            "output update requires a teaching spike (zero teaching current)",
        ));
    }
    let err = output_error(s_out, i_teach)?;
    let direction = match sign {
        OutputSign::Descent => -1.0,
        OutputSign::Literal => 1.0,
    };
    let gain: Vec<f64> = err.iter().map(|e| direction * lr * e).collect();
    for i in 0..w.rows() {
        for ((wij, &g), &eij) in w.row_mut(i).iter_mut().zip(&gain).zip(e_out.row(i)) {
            *wij += g * eij;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub lr: f64,
}

impl LearningParams {
    pub fn new(lr: f64) -> Result<Self> {
        if lr > 0.0 && lr.is_finite() {
            Ok(Self { lr })
        } else {
            Err(EtlpError::param(format!(
                "learning rate must be positive, got {lr}"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::{surrogate, update_pre_trace};

    fn teaching(rate_hz: f64, dt_ms: f64, mode: TeachingMode) -> TeachingConfig {
        TeachingConfig {
            rate_hz,
            mode,
            num_classes: 3,
            dt_ms,
            window_steps: 100,
        }
    }

    #[test]
    fn teaching_schedules() {
        let every = teaching(100.0, 10.0, TeachingMode::Periodic);
        assert_eq!(every.schedule(), (0..100).collect::<Vec<_>>());
        assert_eq!(
            teaching_spikes(4, 2, &every).unwrap(),
            vec![false, false, true]
        );

        let sparse = teaching(100.0, 1.0, TeachingMode::Periodic);
        assert_eq!(
            sparse.schedule(),
            (1..=10).map(|k| 10 * k - 1).collect::<Vec<_>>()
        );
        assert_eq!(teaching_spikes(8, 1, &sparse).unwrap(), vec![false; 3]);

        let end = teaching(100.0, 1.0, TeachingMode::EndOfWindow);
        assert_eq!(end.schedule(), vec![99]);
        assert!(teaching_spikes(0, 3, &end).is_err());
    }

    #[test]
    fn projection_examples() {
        let b = init_projection(3, 8, 5).unwrap();
        assert_eq!(project_teaching(&b, &[false; 3]).unwrap(), vec![0.0; 8]);
        assert_eq!(
            project_teaching(&b, &[false, true, false]).unwrap(),
            b.matrix().row(1)
        );

        let mut scaled = b.matrix().clone();
        scaled.scale(3.0);
        let scaled = ProjectionMatrix::from_matrix(scaled);
        let base = project_teaching(&b, &[true, false, false]).unwrap();
        let out = project_teaching(&scaled, &[true, false, false]).unwrap();
        for (x, y) in base.iter().zip(&out) {
            assert!((3.0 * x - y).abs() < 1e-15);
        }
        assert!(project_teaching(&b, &[true]).is_err());
    }

    #[test]
    fn projection_init_is_seeded_and_bounded() {
        assert_eq!(
            init_projection(4, 16, 9).unwrap(),
            init_projection(4, 16, 9).unwrap()
        );
        assert_ne!(
            init_projection(4, 16, 9).unwrap(),
            init_projection(4, 16, 10).unwrap()
        );
        assert!(init_projection(0, 16, 9).is_err());

        // Uniform on [-b, b] has sd b/√3; the mean of n draws has sd b/√(3n).
        let (c, h) = (20, 1000);
        let b = init_projection(c, h, 1).unwrap();
        let bound = 1.0 / (h as f64).sqrt();
        assert!(b.matrix().as_slice().iter().all(|x| x.abs() <= bound));
        let n = (c * h) as f64;
        let mean = b.matrix().as_slice().iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * bound / (3.0 * n).sqrt());
    }

    #[test]
    fn hidden_update_examples() {
        let e = Matrix::from_vec(1, 2, vec![-0.75, 0.4]).unwrap();
        let mut w = Matrix::from_vec(1, 2, vec![0.1, 0.2]).unwrap();
        let before = w.clone();
        update_hidden_weights(&mut w, &[0.0, 0.0], &e, 5e-4).unwrap();
        assert_eq!(w, before);

        update_hidden_weights(&mut w, &[2.0, 0.0], &e, 5e-4).unwrap();
        assert!((w[(0, 0)] - before[(0, 0)] - (-7.5e-4)).abs() < 1e-15);
        assert_eq!(w[(0, 1)], before[(0, 1)]);

        let mut w1 = before.clone();
        let mut w2 = before.clone();
        update_hidden_weights(&mut w1, &[1.0, -0.5], &e, 1e-3).unwrap();
        update_hidden_weights(&mut w2, &[1.0, -0.5], &e, 2e-3).unwrap();
        for k in 0..2 {
            let d1 = w1[(0, k)] - before[(0, k)];
            let d2 = w2[(0, k)] - before[(0, k)];
            assert!((2.0 * d1 - d2).abs() < 1e-15);
        }
        assert!(update_hidden_weights(&mut w, &[1.0], &e, 1e-3).is_err());
    }

    #[test]
    fn teaching_current_examples() {
        assert_eq!(
            output_teaching_current(&[false, false, true]).unwrap(),
            vec![-1.0, -1.0, 1.0]
        );
        assert_eq!(output_teaching_current(&[false; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(
            output_teaching_current(&[true, false]).unwrap(),
            vec![1.0, -1.0]
        );
        assert!(output_teaching_current(&[true, true]).is_err());
    }

    #[test]
    fn output_error_identity_is_spike_minus_target() {
        for s in [false, true] {
            for target in [false, true] {
                let i = if target { 1.0 } else { -1.0 };
                let err = output_error(&[s], &[i]).unwrap()[0];
                let expected = f64::from(u8::from(s)) - f64::from(u8::from(target));
                assert_eq!(err, expected);
            }
        }
    }

    #[test]
    fn output_update_examples() {
        let e = Matrix::from_vec(1, 3, vec![0.4, 0.4, 0.4]).unwrap();
        let mut w = Matrix::zeros(1, 3);
        // neuron 0: target and fired; 1: target, silent (impossible with one-hot but
        // exercises the algebra per column); 2: non-target, fired.
        let s = [true, false, true];
        update_output_weights(&mut w, &s, &[1.0, 1.0, -1.0], &e, 0.1, OutputSign::Descent).unwrap();
        assert_eq!(w[(0, 0)], 0.0);
        assert!((w[(0, 1)] - 0.04).abs() < 1e-15);
        assert!((w[(0, 2)] + 0.04).abs() < 1e-15);

        let mut lit = Matrix::zeros(1, 3);
        update_output_weights(
            &mut lit,
            &s,
            &[1.0, 1.0, -1.0],
            &e,
            0.1,
            OutputSign::Literal,
        )
        .unwrap();
        assert!((lit[(0, 1)] + 0.04).abs() < 1e-15);

        assert!(
            update_output_weights(&mut w, &s, &[0.0; 3], &e, 0.1, OutputSign::Descent).is_err()
        );
    }

    #[test]
    fn negated_projection_negates_hidden_deltas() {
        let b = init_projection(3, 4, 2).unwrap();
        let mut neg = b.matrix().clone();
        neg.scale(-1.0);
        let neg = ProjectionMatrix::from_matrix(neg);
        let e = Matrix::from_fn(5, 4, |i, j| (i as f64 - 2.0) * 0.1 + j as f64 * 0.03);
        let teach = [false, true, false];
        let mut w1 = Matrix::zeros(5, 4);
        let mut w2 = Matrix::zeros(5, 4);
        update_hidden_weights(&mut w1, &project_teaching(&b, &teach).unwrap(), &e, 1e-2).unwrap();
        update_hidden_weights(&mut w2, &project_teaching(&neg, &teach).unwrap(), &e, 1e-2).unwrap();
        for (a, b) in w1.as_slice().iter().zip(w2.as_slice()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn single_layer_output_update_is_exact_descent_direction() {
        // One LIF output layer, reset detached, MSE at a single teaching step.
        // dE/dW_ij = (s_j - s*_j) * phi_j(t) * eps_pre_i(t), so the update must be
        // -lr times that.
        let (alpha, gamma_d, lr) = (0.9, 0.3, 5e-4);
        let x: Vec<Vec<bool>> = (0..12)
            .map(|t| vec![t % 3 == 0, t % 4 == 1, t % 5 == 2])
            .collect();
        let mut eps = vec![0.0; 3];
        for xt in &x {
            update_pre_trace(&mut eps, xt, alpha).unwrap();
        }
        let (v, threshold) = ([0.7, 1.2], [1.0, 1.0]);
        let phi: Vec<f64> = (0..2)
            .map(|j| surrogate(v[j], threshold[j], gamma_d).unwrap())
            .collect();
        let e = crate::traces::eligibility(&eps, &phi, None, 0.0).unwrap();
        let s = [false, true];
        let target = [true, false];
        let i_teach = output_teaching_current(&target).unwrap();
        let mut w = Matrix::zeros(3, 2);
        update_output_weights(&mut w, &s, &i_teach, &e, lr, OutputSign::Descent).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let grad =
                    (f64::from(u8::from(s[j])) - f64::from(u8::from(target[j]))) * phi[j] * eps[i];
                assert!((w[(i, j)] - (-lr * grad)).abs() < 1e-9);
            }
        }
    }
}
