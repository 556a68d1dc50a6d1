//! The quantum layer: control encoding, circuit construction, shot-sampled
//! execution, and call accounting.
//!
//! A control vector has `(2N+2)M` entries laid out as
//! `[θ (N·M) | φ (N·M) | entangler indices (2M)]`, with the angle blocks
//! ordered layer-major (`layer * N + qubit`). The entangler pair for layer
//! `j` sits at offsets `2NM + 2j` and `2NM + 2j + 1`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{sample_shots, CircuitExecutor, NoiseConfig, StateVector, MAX_QUBITS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Per-qubit fraction of shots measuring 1.
    #[default]
    Marginal,
    /// The modal sampled bitstring as a 0/1 vector.
    MostProbableBitstring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PqcConfig {
    pub num_qubits: usize,
    pub num_layers: usize,
    pub shots: usize,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub output_mode: OutputMode,
}

impl PqcConfig {
    /// Noiseless marginal-mode configuration.
    pub fn new(num_qubits: usize, num_layers: usize, shots: usize) -> Result<Self> {
        let config = Self {
            num_qubits,
            num_layers,
            shots,
            noise: NoiseConfig::noiseless(),
            output_mode: OutputMode::Marginal,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Result<Self> {
        noise.validate()?;
        self.noise = noise;
        Ok(self)
    }

    pub fn with_output_mode(mut self, mode: OutputMode) -> Self {
        self.output_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 || self.num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "num_qubits must be in 1..={MAX_QUBITS}, got {}",
                self.num_qubits
            )));
        }
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".into()));
        }
        if self.shots == 0 {
            return Err(Error::Config("shots must be at least 1".into()));
        }
        self.noise.validate()
    }

    /// Total control count `(2N+2)M`.
    pub fn control_dim(&self) -> usize {
        (2 * self.num_qubits + 2) * self.num_layers
    }

    /// Number of differentiable angle controls `2NM`.
    pub fn angle_dim(&self) -> usize {
        2 * self.num_qubits * self.num_layers
    }

    fn theta_offset(&self, layer: usize, qubit: usize) -> usize {
        layer * self.num_qubits + qubit
    }

    fn phi_offset(&self, layer: usize, qubit: usize) -> usize {
        self.num_qubits * self.num_layers + layer * self.num_qubits + qubit
    }

    fn entangler_offset(&self, layer: usize) -> usize {
        self.angle_dim() + 2 * layer
    }
}

/// Controls consumed by one circuit execution: encoded angles followed by
/// raw (pre-rounding) entangler index controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlVector(Vec<f64>);

impl ControlVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(config: &PqcConfig) -> Self {
        Self(vec![0.0; config.control_dim()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check(&self, config: &PqcConfig) -> Result<()> {
        if self.0.len() != config.control_dim() {
            return Err(Error::dim("control vector", config.control_dim(), self.0.len()));
        }
        Ok(())
    }

    pub fn theta(&self, config: &PqcConfig, layer: usize, qubit: usize) -> f64 {
        self.0[config.theta_offset(layer, qubit)]
    }

    pub fn phi(&self, config: &PqcConfig, layer: usize, qubit: usize) -> f64 {
        self.0[config.phi_offset(layer, qubit)]
    }

    pub fn entangler_controls(&self, config: &PqcConfig, layer: usize) -> (f64, f64) {
        let o = config.entangler_offset(layer);
        (self.0[o], self.0[o + 1])
    }
}

/// Per-qubit outputs of the quantum layer, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginalVector(Vec<f64>);

impl MarginalVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("marginal {bad} outside [0, 1]")));
        }
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Counts quantum-layer calls and the shots they executed.
#[derive(Debug, Default)]
pub struct CallCounter {
    pqc_calls: AtomicU64,
    shot_executions: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub pqc_calls: u64,
    pub shot_executions: u64,
}

impl CallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: CallCounts) -> Self {
        Self {
            pqc_calls: AtomicU64::new(counts.pqc_calls),
            shot_executions: AtomicU64::new(counts.shot_executions),
        }
    }

    pub fn record(&self, shots: usize) {
        self.pqc_calls.fetch_add(1, Ordering::Relaxed);
        self.shot_executions.fetch_add(shots as u64, Ordering::Relaxed);
    }

    pub fn pqc_calls(&self) -> u64 {
        self.pqc_calls.load(Ordering::Relaxed)
    }

    pub fn shot_executions(&self) -> u64 {
        self.shot_executions.load(Ordering::Relaxed)
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            pqc_calls: self.pqc_calls(),
            shot_executions: self.shot_executions(),
        }
    }
}

impl Clone for CallCounter {
    fn clone(&self) -> Self {
        Self::from_counts(self.counts())
    }
}

impl Serialize for CallCounter {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.counts().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CallCounter {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        CallCounts::deserialize(deserializer).map(Self::from_counts)
    }
}

/// Maps raw network outputs to circuit controls: angles through `π·tanh`,
/// entangler index controls unchanged.
pub fn encode_controls(raw: &[f64], config: &PqcConfig) -> Result<ControlVector> {
    if raw.len() != config.control_dim() {
        return Err(Error::dim("raw controls", config.control_dim(), raw.len()));
    }
    let angles = config.angle_dim();
    let values = raw
        .iter()
        .enumerate()
        .map(|(i, &x)| if i < angles { PI * x.tanh() } else { x })
        .collect();
    Ok(ControlVector(values))
}

/// Rounds a pair of raw index controls to a control/target qubit pair via
/// `round(clamp((N−1)(tanh(x)+1)/2, 0, N−1))`, rounding halves away from zero.
pub fn decode_entangler(raw: (f64, f64), num_qubits: usize) -> (usize, usize) {
    let top = num_qubits.saturating_sub(1) as f64;
    let map = |x: f64| {
        let scaled = top * (x.tanh() + 1.0) / 2.0;
        let scaled = if scaled.is_nan() { 0.0 } else { scaled };
        scaled.clamp(0.0, top).round() as usize
    };
    (map(raw.0), map(raw.1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitLayer {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub entangler: (usize, usize),
}

/// A decoded circuit instance, serializable for debugging and diffing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub layers: Vec<CircuitLayer>,
}

impl Circuit {
    pub fn from_controls(q_i: &ControlVector, config: &PqcConfig) -> Result<Self> {
        config.validate()?;
        q_i.check(config)?;
        let n = config.num_qubits;
        let layers = (0..config.num_layers)
            .map(|layer| CircuitLayer {
                theta: (0..n).map(|q| q_i.theta(config, layer, q)).collect(),
                phi: (0..n).map(|q| q_i.phi(config, layer, q)).collect(),
                entangler: decode_entangler(q_i.entangler_controls(config, layer), n),
            })
            .collect();
        Ok(Self {
            num_qubits: n,
            layers,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Runs the circuit without noise.
    pub fn final_state(&self) -> Result<StateVector> {
        self.execute(&mut |_, _| Ok(()))
    }
}

impl CircuitExecutor for Circuit {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    fn noise_sites(&self) -> usize {
        self.layers
            .iter()
            .map(|l| self.num_qubits + if l.entangler.0 != l.entangler.1 { 2 } else { 0 })
            .sum()
    }

    fn execute(
        &self,
        after_gate: &mut dyn FnMut(&mut StateVector, usize) -> Result<()>,
    ) -> Result<StateVector> {
        let mut state = StateVector::zero(self.num_qubits)?;
        for layer in &self.layers {
            for q in 0..self.num_qubits {
                state.apply_rotation(q, layer.theta[q], layer.phi[q])?;
                after_gate(&mut state, q)?;
            }
            let (p, k) = layer.entangler;
            if p != k {
                state.apply_cz(p, k)?;
                after_gate(&mut state, p)?;
                after_gate(&mut state, k)?;
            }
        }
        Ok(state)
    }
}

/// Executes the quantum layer for `config.shots` shots and returns the
/// per-qubit output. Each call counts as one PQC call.
pub fn run_quantum_layer<R: Rng + ?Sized>(
    q_i: &ControlVector,
    config: &PqcConfig,
    rng: &mut R,
    counter: &CallCounter,
) -> Result<MarginalVector> {
    let circuit = Circuit::from_controls(q_i, config)?;
    let record = sample_shots(&circuit, config.shots, &config.noise, rng)?;
    counter.record(config.shots);
    let probs = match config.output_mode {
        OutputMode::Marginal => record.empirical_marginals()?,
        OutputMode::MostProbableBitstring => {
            let modal = record.modal_outcome()?;
            (0..config.num_qubits)
                .map(|q| ((modal >> q) & 1) as f64)
                .collect()
        }
    };
    MarginalVector::new(probs)
}

/// The noiseless, infinite-shot layer map: exact per-qubit marginals.
/// Noise settings in `config` are ignored and no call is counted.
pub fn exact_layer_map(q_i: &ControlVector, config: &PqcConfig) -> Result<Vec<f64>> {
    Ok(Circuit::from_controls(q_i, config)?.final_state()?.exact_marginals())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_controls(config: &PqcConfig, rng: &mut ChaCha8Rng) -> ControlVector {
        let raw: Vec<f64> = (0..config.control_dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        encode_controls(&raw, config).unwrap()
    }

    #[test]
    fn control_dimensions() {
        let config = PqcConfig::new(10, 10, 100).unwrap();
        assert_eq!(config.control_dim(), 220);
        assert_eq!(config.angle_dim(), 200);
        assert!(PqcConfig::new(0, 1, 1).is_err());
        assert!(PqcConfig::new(1, 0, 1).is_err());
        assert!(PqcConfig::new(1, 1, 0).is_err());
    }

    #[test]
    fn encode_examples() {
        let config = PqcConfig::new(10, 10, 10).unwrap();
        let q = encode_controls(&vec![0.0; 220], &config).unwrap();
        assert_eq!(q.len(), 220);
        assert!(q.as_slice().iter().all(|&v| v == 0.0));

        let mut raw = vec![0.0; 220];
        raw[0] = 1e6;
        raw[205] = 1e6;
        let q = encode_controls(&raw, &config).unwrap();
        assert_abs_diff_eq!(q.as_slice()[0], PI, epsilon = 1e-9);
        // index controls pass through
        assert_eq!(q.as_slice()[205], 1e6);

        assert!(matches!(
            encode_controls(&[0.0; 3], &config),
            Err(Error::Dimension { expected: 220, actual: 3, .. })
        ));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_entangler((0.0, 0.0), 10), (5, 5));
        assert_eq!(decode_entangler((-1e6, 1e6), 10), (0, 9));
        assert_eq!(decode_entangler((0.0, 0.0), 1), (0, 0));
        assert_eq!(decode_entangler((f64::NAN, 3.0), 4), (0, 3));
    }

    #[test]
    fn layer_examples() {
        let config = PqcConfig::new(3, 2, 64).unwrap();
        let counter = CallCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        let zero = ControlVector::zeros(&config);
        let q_o = run_quantum_layer(&zero, &config, &mut rng, &counter).unwrap();
        assert_eq!(q_o.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(exact_layer_map(&zero, &config).unwrap(), vec![0.0; 3]);

        let mut flip = ControlVector::zeros(&config);
        flip.as_mut_slice()[0] = PI;
        let q_o = run_quantum_layer(&flip, &config, &mut rng, &counter).unwrap();
        assert_eq!(q_o.as_slice(), &[1.0, 0.0, 0.0]);

        assert_eq!(counter.pqc_calls(), 2);
        assert_eq!(counter.shot_executions(), 128);

        let short = ControlVector::new(vec![0.0; 5]);
        assert!(run_quantum_layer(&short, &config, &mut rng, &counter).is_err());
        assert_eq!(counter.pqc_calls(), 2);
    }

    #[test]
    fn single_rotation_closed_form() {
        let config = PqcConfig::new(1, 1, 1).unwrap();
        for theta in [-3.0, -1.0, 0.2, 1.7, 3.1] {
            let q = ControlVector::new(vec![theta, 0.4, 0.0, 0.0]);
            let p = exact_layer_map(&q, &config).unwrap()[0];
            assert_abs_diff_eq!(p, (theta / 2.0).sin().powi(2), epsilon = 1e-14);
        }
    }

    #[test]
    fn shots_converge_to_exact_map() {
        let config = PqcConfig::new(4, 3, 100_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let counter = CallCounter::new();
        let q = random_controls(&config, &mut rng);
        let exact = exact_layer_map(&q, &config).unwrap();
        let sampled = run_quantum_layer(&q, &config, &mut rng, &counter).unwrap();
        let dev = exact
            .iter()
            .zip(sampled.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev <= 0.01, "sup deviation {dev}");
    }

    #[test]
    fn shrinking_tolerance_with_more_shots() {
        // Hoeffding with failure probability 1e-6 per qubit: t = sqrt(ln(2e6)/(2S)).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = PqcConfig::new(3, 3, 1).unwrap();
        let q = random_controls(&base, &mut rng);
        let exact = exact_layer_map(&q, &base).unwrap();
        for shots in [100usize, 10_000, 1_000_000] {
            let config = PqcConfig { shots, ..base.clone() };
            let sampled =
                run_quantum_layer(&q, &config, &mut rng, &CallCounter::new()).unwrap();
            let tol = ((2e6f64).ln() / (2.0 * shots as f64)).sqrt();
            for (a, b) in exact.iter().zip(sampled.as_slice()) {
                assert!((a - b).abs() <= tol, "S={shots}: {a} vs {b} (tol {tol})");
            }
        }
    }

    #[test]
    fn modal_mode_returns_binary_vector() {
        let config = PqcConfig::new(3, 2, 200)
            .unwrap()
            .with_output_mode(OutputMode::MostProbableBitstring);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut q = ControlVector::zeros(&config);
        q.as_mut_slice()[1] = 2.5; // qubit 1 mostly flipped
        let out = run_quantum_layer(&q, &config, &mut rng, &CallCounter::new()).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn noisy_layer_still_counts_and_bounds() {
        let config = PqcConfig::new(3, 2, 50)
            .unwrap()
            .with_noise(NoiseConfig::new(0.05, 0.05).unwrap())
            .unwrap();
        let counter = CallCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_controls(&config, &mut rng);
        let out = run_quantum_layer(&q, &config, &mut rng, &counter).unwrap();
        assert!(out.as_slice().iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(counter.counts(), CallCounts { pqc_calls: 1, shot_executions: 50 });
    }

    #[test]
    fn circuit_json_round_trips() {
        let config = PqcConfig::new(2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let circuit = Circuit::from_controls(&random_controls(&config, &mut rng), &config).unwrap();
        let json = circuit.to_json().unwrap();
        let back: Circuit = serde_json::from_str(&json).unwrap();
        assert_eq!(back, circuit);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["layers"][0]["theta"].as_array().unwrap().len(), 2);
    }

    proptest! {
        #[test]
        fn encoding_is_pure_and_bounded(raw in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let config = PqcConfig::new(2, 2, 1).unwrap();
            let a = encode_controls(&raw, &config).unwrap();
            let b = encode_controls(&raw, &config).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.as_slice()[..8].iter().all(|x| x.abs() <= PI));
            for layer in 0..2 {
                let (p, k) = decode_entangler(a.entangler_controls(&config, layer), 2);
                prop_assert!(p < 2 && k < 2);
            }
        }

        #[test]
        fn decode_covers_range(x in -10.0f64..10.0, n in 1usize..16) {
            let (p, _) = decode_entangler((x, 0.0), n);
            prop_assert!(p < n);
        }
    }
}
