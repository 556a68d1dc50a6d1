//! Reference Jacobians of the noiseless layer map and the shot-cost model of
//! gradient estimation by circuit re-execution.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pqc::{exact_layer_map, ControlVector, PqcConfig};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// `∂Q_k/∂angle_j` over the `2NM` angle controls, row-major (`rows = N`).
/// Entangler index controls are piecewise constant and have no column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("jacobian entries", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn check_shape(&self, other: &Jacobian) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::InvalidArgument(format!(
                "jacobian shapes differ: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &Jacobian) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn frobenius_diff(&self, other: &Jacobian) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    /// `Jᵀw`: the gradient of `w·Q` with respect to the angles.
    pub fn vjp(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.rows {
            return Err(Error::dim("vjp weights", self.rows, weights.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (r, w) in weights.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

fn symmetric_difference(
    q_i: &ControlVector,
    config: &PqcConfig,
    step: f64,
    denominator: f64,
) -> Result<Jacobian> {
    q_i.check(config)?;
    let rows = config.num_qubits;
    let cols = config.angle_dim();
    let mut data = vec![0.0; rows * cols];
    let mut probe = q_i.clone();
    for j in 0..cols {
        let x = q_i.as_slice()[j];
        probe.as_mut_slice()[j] = x + step;
        let plus = exact_layer_map(&probe, config)?;
        probe.as_mut_slice()[j] = x - step;
        let minus = exact_layer_map(&probe, config)?;
        probe.as_mut_slice()[j] = x;
        for k in 0..rows {
            data[k * cols + j] = (plus[k] - minus[k]) / denominator;
        }
    }
    Jacobian::from_rows(rows, cols, data)
}

/// Central differences `[Q(x + h e_j) − Q(x − h e_j)] / 2h` on the exact map.
pub fn finite_diff_jacobian(q_i: &ControlVector, config: &PqcConfig, h: f64) -> Result<Jacobian> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep(h));
    }
    symmetric_difference(q_i, config, h, 2.0 * h)
}

/// Parameter-shift rule `[Q(x + π/2 e_j) − Q(x − π/2 e_j)] / 2`, exact for
/// half-angle Pauli rotations.
pub fn parameter_shift_jacobian(q_i: &ControlVector, config: &PqcConfig) -> Result<Jacobian> {
    shift_rule_jacobian(q_i, config, FRAC_PI_2)
}

/// The shift rule with an arbitrary shift and the fixed `1/2` prefactor.
/// Only `shift = π/2` yields the true derivative; other values exist so
/// verification harnesses can confirm that a wrong rule is detected.
pub fn shift_rule_jacobian(q_i: &ControlVector, config: &PqcConfig, shift: f64) -> Result<Jacobian> {
    symmetric_difference(q_i, config, shift, 2.0)
}

/// Hardware cost of estimating one mini-batch gradient by re-running the
/// circuit, versus the single forward call per step a surrogate needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftCostReport {
    pub inputs: u64,
    pub outputs: u64,
    pub shots: u64,
    pub batch_size: u64,
    pub updates: u64,
    pub per_shot_time_s: f64,
    /// `I·O·S·N_b`.
    pub total_shots_per_update: u128,
    pub total_seconds_per_update: f64,
    pub total_seconds_full_run: f64,
    /// Surrogate training: one call per step, `K` calls in total.
    pub surrogate_pqc_calls: u64,
    /// `S·K`.
    pub surrogate_shots: u128,
    /// `I·O·S·N_b·K`.
    pub shift_extra_shots_full_run: u128,
}

pub fn shift_cost_report(
    inputs: u64,
    outputs: u64,
    shots: u64,
    batch_size: u64,
    updates: u64,
    per_shot_time_s: f64,
) -> Result<ShiftCostReport> {
    for (name, v) in [
        ("inputs", inputs),
        ("outputs", outputs),
        ("shots", shots),
        ("batch_size", batch_size),
        ("updates", updates),
    ] {
        if v == 0 {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
    }
    if !(per_shot_time_s > 0.0) || !per_shot_time_s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "per-shot time must be positive, got {per_shot_time_s}"
        )));
    }
    let per_update = [outputs, shots, batch_size]
        .into_iter()
        .try_fold(inputs as u128, |acc, v| acc.checked_mul(v as u128))
        .ok_or(Error::Overflow("shots per update"))?;
    let full_run = per_update
        .checked_mul(updates as u128)
        .ok_or(Error::Overflow("shots per run"))?;
    let seconds_per_update = per_update as f64 * per_shot_time_s;
    Ok(ShiftCostReport {
        inputs,
        outputs,
        shots,
        batch_size,
        updates,
        per_shot_time_s,
        total_shots_per_update: per_update,
        total_seconds_per_update: seconds_per_update,
        total_seconds_full_run: seconds_per_update * updates as f64,
        surrogate_pqc_calls: updates,
        surrogate_shots: shots as u128 * updates as u128,
        shift_extra_shots_full_run: full_run,
    })
}
