//! The tangential surrogate (qtDNN): a dense network fitted on observed
//! `(q_i, q_o)` pairs so the actor can backpropagate through the quantum
//! layer without running it, plus fidelity measurements against the exact
//! layer map.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{parameter_shift_jacobian, Jacobian};
use crate::neural::{adam_step, bce_loss_batch, Activation, AdamState, DenseNet};
use crate::pqc::{exact_layer_map, ControlVector, MarginalVector, PqcConfig};

/// FIFO store of quantum-layer input/output pairs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QtBuffer {
    capacity: usize,
    control_dim: usize,
    num_qubits: usize,
    entries: VecDeque<(ControlVector, MarginalVector)>,
}

impl QtBuffer {
    pub fn new(capacity: usize, config: &PqcConfig) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("qtDNN buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            control_dim: config.control_dim(),
            num_qubits: config.num_qubits,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn record_pair(&mut self, q_i: ControlVector, q_o: MarginalVector) -> Result<()> {
        if q_i.len() != self.control_dim {
            return Err(Error::dim("buffered control vector", self.control_dim, q_i.len()));
        }
        if q_o.len() != self.num_qubits {
            return Err(Error::dim("buffered marginal vector", self.num_qubits, q_o.len()));
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((q_i, q_o));
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<(&ControlVector, &MarginalVector)> {
        self.entries.get(index).map(|(a, b)| (a, b))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ControlVector, &MarginalVector)> {
        self.entries.iter().map(|(a, b)| (a, b))
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// `(2N+2)M·L_h + L_h + L_h·N + N`.
pub fn surrogate_param_count(num_qubits: u64, num_layers: u64, hidden: u64) -> u64 {
    let inputs = (2 * num_qubits + 2) * num_layers;
    inputs * hidden + hidden + hidden * num_qubits + num_qubits
}

/// Surrogate network `[(2N+2)M, L_h, N]` with LeakyReLU hidden units and a
/// sigmoid head, so outputs are per-qubit probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QtDnn {
    net: DenseNet,
}

impl QtDnn {
    pub fn new<R: Rng + ?Sized>(config: &PqcConfig, hidden: usize, rng: &mut R) -> Result<Self> {
        let net = DenseNet::new(
            &[config.control_dim(), hidden, config.num_qubits],
            Activation::leaky_relu(),
            Activation::Sigmoid,
            rng,
        )?;
        Ok(Self { net })
    }

    pub fn from_net(net: DenseNet) -> Result<Self> {
        if net.layer_sizes().len() != 3 || net.output_activation() != Activation::Sigmoid {
            return Err(Error::Config(
                "a surrogate is a single-hidden-layer network with a sigmoid head".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn control_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn num_qubits(&self) -> usize {
        self.net.output_dim()
    }

    pub fn hidden_width(&self) -> usize {
        self.net.layer_sizes()[1]
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn predict(&self, q_i: &ControlVector) -> Result<Vec<f64>> {
        self.net.predict(q_i.as_slice())
    }

    /// `∂Q_θ/∂q_i` restricted to the first `angle_dim` inputs.
    pub fn angle_jacobian(&self, q_i: &ControlVector, angle_dim: usize) -> Result<Jacobian> {
        let full = self.net.input_jacobian(q_i.as_slice())?;
        let rows = full.nrows();
        let mut data = Vec::with_capacity(rows * angle_dim);
        for k in 0..rows {
            data.extend((0..angle_dim).map(|j| full[[k, j]]));
        }
        Jacobian::from_rows(rows, angle_dim, data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitParams {
    /// Number of tiny-batches (Adam steps) per fit.
    pub tiny_batches: usize,
    pub tiny_batch_size: usize,
    /// Probability that a tiny-batch sample comes from the qtDNN buffer
    /// rather than the current mini-batch.
    pub buffer_mix: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            tiny_batches: 32,
            tiny_batch_size: 64,
            buffer_mix: 0.5,
        }
    }
}

/// Runs `tiny_batches` Adam steps on mean BCE between surrogate predictions
/// and observed marginals. Returns the loss of each tiny-batch before its step.
pub fn fit_surrogate<R: Rng + ?Sized>(
    qtdnn: &mut QtDnn,
    batch: &[(&ControlVector, &MarginalVector)],
    buffer: Option<&QtBuffer>,
    params: &FitParams,
    optimizer: &mut AdamState,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if params.tiny_batch_size == 0 {
        return Err(Error::Config("tiny-batch size must be positive".into()));
    }
    let (inputs, outputs) = (qtdnn.control_dim(), qtdnn.num_qubits());
    for (q_i, q_o) in batch {
        if q_i.len() != inputs {
            return Err(Error::dim("fit control vector", inputs, q_i.len()));
        }
        if q_o.len() != outputs {
            return Err(Error::dim("fit marginal vector", outputs, q_o.len()));
        }
    }
    let buffer = buffer.filter(|b| !b.is_empty() && params.buffer_mix > 0.0);
    let size = params.tiny_batch_size;
    let mut trace = Vec::with_capacity(params.tiny_batches);
    let mut x = Array2::zeros((size, inputs));
    let mut y = Array2::zeros((size, outputs));
    for _ in 0..params.tiny_batches {
        for row in 0..size {
            let (q_i, q_o) = match buffer {
                Some(buf) if rng.random::<f64>() < params.buffer_mix => {
                    buf.get(rng.random_range(0..buf.len())).expect("index in range")
                }
                _ => batch[rng.random_range(0..batch.len())],
            };
            x.row_mut(row).iter_mut().zip(q_i.as_slice()).for_each(|(d, s)| *d = *s);
            y.row_mut(row).iter_mut().zip(q_o.as_slice()).for_each(|(d, s)| *d = *s);
        }
        let (pred, tape) = qtdnn.net.forward_batch(x.view())?;
        let (loss, grad) = bce_loss_batch(pred.view(), y.view())?;
        let (grads, _) = qtdnn.net.backward(tape, grad.view())?;
        adam_step(&mut qtdnn.net, &grads, optimizer)?;
        trace.push(loss);
    }
    Ok(trace)
}

/// Empirical output and Jacobian gaps between the surrogate and the exact
/// noiseless layer map over a ball of angle perturbations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Largest Euclidean output gap over probes.
    pub eps1: f64,
    /// Largest Frobenius gap between angle Jacobians over probes.
    pub eps2: f64,
    pub mean_output_gap: f64,
    /// Mean cosine similarity between `J_θᵀw` and `Jᵀw` for random `w`.
    pub mean_grad_cosine: f64,
    pub radius: f64,
    pub num_probes: usize,
    pub center: Vec<f64>,
}

/// Draws a point uniformly from the radius-`radius` ball around `center` in
/// the angle subspace; entangler index controls are copied unchanged.
pub fn sample_in_ball<R: Rng + ?Sized>(
    center: &ControlVector,
    config: &PqcConfig,
    radius: f64,
    rng: &mut R,
) -> ControlVector {
    let d = config.angle_dim();
    let mut point = center.clone();
    if radius == 0.0 {
        return point;
    }
    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    for (x, u) in point.as_mut_slice()[..d].iter_mut().zip(&dir) {
        *x += r * u / norm;
    }
    point
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (true, true) => dot / (na * nb),
        (false, false) => 1.0,
        _ => 0.0,
    }
}

pub fn fidelity_report<R: Rng + ?Sized>(
    qtdnn: &QtDnn,
    config: &PqcConfig,
    center: &ControlVector,
    radius: f64,
    num_probes: usize,
    rng: &mut R,
) -> Result<FidelityReport> {
    if num_probes == 0 {
        return Err(Error::InvalidArgument("probe count must be positive".into()));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be non-negative, got {radius}")));
    }
    center.check(config)?;
    if qtdnn.control_dim() != config.control_dim() || qtdnn.num_qubits() != config.num_qubits {
        return Err(Error::Config("surrogate shape does not match the circuit".into()));
    }
    let mut eps1: f64 = 0.0;
    let mut eps2: f64 = 0.0;
    let mut gap_sum = 0.0;
    let mut cos_sum = 0.0;
    for _ in 0..num_probes {
        let x = sample_in_ball(center, config, radius, rng);
        let exact = exact_layer_map(&x, config)?;
        let approx = qtdnn.predict(&x)?;
        let gap = exact
            .iter()
            .zip(&approx)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let oracle = parameter_shift_jacobian(&x, config)?;
        let surrogate = qtdnn.angle_jacobian(&x, config.angle_dim())?;
        let weights: Vec<f64> = (0..config.num_qubits)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        eps1 = eps1.max(gap);
        eps2 = eps2.max(surrogate.frobenius_diff(&oracle)?);
        gap_sum += gap;
        cos_sum += cosine(&surrogate.vjp(&weights)?, &oracle.vjp(&weights)?);
    }
    Ok(FidelityReport {
        eps1,
        eps2,
        mean_output_gap: gap_sum / num_probes as f64,
        mean_grad_cosine: cos_sum / num_probes as f64,
        radius,
        num_probes,
        center: center.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(config: &PqcConfig, v: f64) -> (ControlVector, MarginalVector) {
        (
            ControlVector::new(vec![v; config.control_dim()]),
            MarginalVector::new(vec![0.0; config.num_qubits]).unwrap(),
        )
    }

    #[test]
    fn buffer_fifo() {
        let config = PqcConfig::new(2, 1, 1).unwrap();
        let mut buf = QtBuffer::new(3, &config).unwrap();
        assert!(buf.is_empty());
        let (q, o) = pair(&config, 1.0);
        buf.record_pair(q, o).unwrap();
        assert_eq!(buf.len(), 1);
        for v in 2..=5 {
            let (q, o) = pair(&config, v as f64);
            buf.record_pair(q, o).unwrap();
        }
        assert_eq!(buf.len(), 3);
        let held: Vec<f64> = buf.iter().map(|(q, _)| q.as_slice()[0]).collect();
        assert_eq!(held, vec![3.0, 4.0, 5.0]);

        let bad = ControlVector::new(vec![0.0; 2]);
        let o = MarginalVector::new(vec![0.0; 2]).unwrap();
        assert!(matches!(buf.record_pair(bad, o), Err(Error::Dimension { .. })));
    }

    #[test]
    fn param_count_formula() {
        assert_eq!(surrogate_param_count(10, 10, 2048), 473_098);
        assert_eq!(surrogate_param_count(1, 1, 1), 7);
        assert_eq!(surrogate_param_count(5, 10, 2048), 258_053);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (n, m, h) in [(1usize, 1usize, 1usize), (3, 2, 17), (5, 10, 64)] {
            let config = PqcConfig::new(n, m, 1).unwrap();
            let q = QtDnn::new(&config, h, &mut rng).unwrap();
            assert_eq!(q.param_count() as u64, surrogate_param_count(n as u64, m as u64, h as u64));
            // enumerate allocated shapes independently
            let allocated: usize = q
                .net()
                .layers()
                .iter()
                .map(|l| l.weight.len() + l.bias.len())
                .sum();
            assert_eq!(allocated, q.param_count());
        }
    }

    #[test]
    fn zero_tiny_batches_is_a_no_op() {
        let config = PqcConfig::new(2, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut q = QtDnn::new(&config, 8, &mut rng).unwrap();
        let before = q.clone();
        let mut opt = AdamState::new(q.net(), 3e-4);
        let (a, b) = pair(&config, 0.3);
        let params = FitParams { tiny_batches: 0, ..FitParams::default() };
        let trace = fit_surrogate(&mut q, &[(&a, &b)], None, &params, &mut opt, &mut rng).unwrap();
        assert!(trace.is_empty());
        assert_eq!(q, before);
        assert!(matches!(
            fit_surrogate(&mut q, &[], None, &FitParams::default(), &mut opt, &mut rng),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn constant_targets_are_learned() {
        let config = PqcConfig::new(3, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut q = QtDnn::new(&config, 32, &mut rng).unwrap();
        let mut opt = AdamState::new(q.net(), 3e-3);
        let data: Vec<_> = (0..64)
            .map(|_| {
                let raw: Vec<f64> = (0..config.control_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                (ControlVector::new(raw), MarginalVector::new(vec![0.0; 3]).unwrap())
            })
            .collect();
        let batch: Vec<_> = data.iter().map(|(a, b)| (a, b)).collect();
        let params = FitParams { tiny_batches: 200, tiny_batch_size: 32, buffer_mix: 0.0 };
        let trace = fit_surrogate(&mut q, &batch, None, &params, &mut opt, &mut rng).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(*trace.last().unwrap() < 0.05, "final {}", trace.last().unwrap());
        // smoothed trace decreases
        let early: f64 = trace[..20].iter().sum::<f64>() / 20.0;
        let late: f64 = trace[180..].iter().sum::<f64>() / 20.0;
        assert!(late < early);
    }

    #[test]
    fn independent_fair_bits_plateau_at_ln2() {
        let config = PqcConfig::new(2, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut q = QtDnn::new(&config, 16, &mut rng).unwrap();
        let mut opt = AdamState::new(q.net(), 1e-3);
        let data: Vec<_> = (0..512)
            .map(|_| {
                let raw: Vec<f64> = (0..config.control_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let bits = vec![f64::from(rng.random_bool(0.5) as u8), f64::from(rng.random_bool(0.5) as u8)];
                (ControlVector::new(raw), MarginalVector::new(bits).unwrap())
            })
            .collect();
        let batch: Vec<_> = data.iter().map(|(a, b)| (a, b)).collect();
        let params = FitParams { tiny_batches: 400, tiny_batch_size: 64, buffer_mix: 0.0 };
        let trace = fit_surrogate(&mut q, &batch, None, &params, &mut opt, &mut rng).unwrap();
        let late: f64 = trace[300..].iter().sum::<f64>() / 100.0;
        assert!((late - std::f64::consts::LN_2).abs() < 0.03, "plateau {late}");
    }

    #[test]
    fn buffer_mix_draws_from_buffer() {
        let config = PqcConfig::new(1, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut q = QtDnn::new(&config, 8, &mut rng).unwrap();
        let mut opt = AdamState::new(q.net(), 1e-2);
        let mut buf = QtBuffer::new(10, &config).unwrap();
        buf.record_pair(
            ControlVector::new(vec![0.0; 4]),
            MarginalVector::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        let (a, b) = pair(&config, 0.0);
        // all samples from the buffer: target 1 wins
        let params = FitParams { tiny_batches: 300, tiny_batch_size: 8, buffer_mix: 1.0 };
        fit_surrogate(&mut q, &[(&a, &b)], Some(&buf), &params, &mut opt, &mut rng).unwrap();
        assert!(q.predict(&a).unwrap()[0] > 0.9);
    }

    #[test]
    fn degenerate_ball_reports_center_gap() {
        let config = PqcConfig::new(2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = QtDnn::new(&config, 8, &mut rng).unwrap();
        let center = ControlVector::new((0..config.control_dim()).map(|i| 0.1 * i as f64).collect());
        let report = fidelity_report(&q, &config, &center, 0.0, 4, &mut rng).unwrap();
        let exact = exact_layer_map(&center, &config).unwrap();
        let approx = q.predict(&center).unwrap();
        let gap = exact.iter().zip(&approx).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert_eq!(report.eps1, gap);
        assert_eq!(report.mean_output_gap, gap);
        assert!(fidelity_report(&q, &config, &center, 0.1, 0, &mut rng).is_err());
    }

    #[test]
    fn ball_samples_stay_in_ball() {
        let config = PqcConfig::new(3, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let center = ControlVector::new(vec![0.5; config.control_dim()]);
        for _ in 0..100 {
            let p = sample_in_ball(&center, &config, 0.1, &mut rng);
            let d = config.angle_dim();
            let dist: f64 = p.as_slice()[..d]
                .iter()
                .map(|x| (x - 0.5).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(dist <= 0.1 + 1e-12);
            assert_eq!(&p.as_slice()[d..], &center.as_slice()[d..]);
        }
    }
}
