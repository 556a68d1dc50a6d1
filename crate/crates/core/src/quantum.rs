//! Dense state-vector simulation of single-qubit rotations and CZ entanglers,
//! with Monte-Carlo bit-flip/phase-flip noise and multi-shot sampling.
//!
//! Qubit `q` is bit `q` of the basis index (qubit 0 is least significant).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register the simulator will allocate (2^24 amplitudes).
pub const MAX_QUBITS: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros state |0…0⟩.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {num_qubits}"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Builds a state from raw amplitudes. The length must be a power of two;
    /// normalization is the caller's responsibility.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() || len.trailing_zeros() as usize > MAX_QUBITS {
            return Err(Error::Config(format!(
                "amplitude count must be 2^N with 1 <= N <= {MAX_QUBITS}, got {len}"
            )));
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    /// Applies a 2x2 unitary `[[m00, m01], [m10, m11]]` to `qubit`.
    fn apply_single(&mut self, qubit: usize, m: [[Complex64; 2]; 2]) {
        let mask = 1usize << qubit;
        let dim = self.amplitudes.len();
        let mut base = 0;
        while base < dim {
            for i0 in base..base + mask {
                let i1 = i0 | mask;
                let a0 = self.amplitudes[i0];
                let a1 = self.amplitudes[i1];
                self.amplitudes[i0] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[i1] = m[1][0] * a0 + m[1][1] * a1;
            }
            base += mask << 1;
        }
    }

    /// Applies `R(θ, φ) = Rz(φ)·Rx(θ)` with half-angle conventions
    /// `Rx(θ) = exp(−iθX/2)` and `Rz(φ) = exp(−iφZ/2)`.
    pub fn apply_rotation(&mut self, qubit: usize, theta: f64, phi: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rotation angles must be finite, got ({theta}, {phi})"
            )));
        }
        let (s, c) = (theta / 2.0).sin_cos();
        let minus = Complex64::from_polar(1.0, -phi / 2.0);
        let plus = Complex64::from_polar(1.0, phi / 2.0);
        let i = Complex64::i();
        let m = [
            [minus * c, -i * minus * s],
            [-i * plus * s, plus * c],
        ];
        self.apply_single(qubit, m);
        Ok(())
    }

    /// Controlled-Z on `(p, k)`; the identity when `p == k`.
    pub fn apply_cz(&mut self, p: usize, k: usize) -> Result<()> {
        self.check_qubit(p)?;
        self.check_qubit(k)?;
        if p == k {
            return Ok(());
        }
        let mask = (1usize << p) | (1usize << k);
        for (b, amp) in self.amplitudes.iter_mut().enumerate() {
            if b & mask == mask {
                *amp = -*amp;
            }
        }
        Ok(())
    }

    /// Applies a sampled Pauli error to one qubit. Global phases are dropped.
    pub fn apply_pauli(&mut self, qubit: usize, error: PauliError) -> Result<()> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        if error.has_z() {
            for (b, amp) in self.amplitudes.iter_mut().enumerate() {
                if b & mask != 0 {
                    *amp = -*amp;
                }
            }
        }
        if error.has_x() {
            for b in 0..self.amplitudes.len() {
                if b & mask == 0 {
                    self.amplitudes.swap(b, b | mask);
                }
            }
        }
        Ok(())
    }

    /// Basis-state probabilities `|amp_b|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Per-qubit probability of measuring 1.
    pub fn exact_marginals(&self) -> Vec<f64> {
        let mut marginals = vec![0.0; self.num_qubits];
        for (b, amp) in self.amplitudes.iter().enumerate() {
            let p = amp.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let mut bits = b;
            while bits != 0 {
                let q = bits.trailing_zeros() as usize;
                marginals[q] += p;
                bits &= bits - 1;
            }
        }
        for m in &mut marginals {
            *m = m.clamp(0.0, 1.0);
        }
        marginals
    }
}

/// Per-gate, per-shot bit-flip and phase-flip probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub bit_flip_rate: f64,
    #[serde(default)]
    pub phase_flip_rate: f64,
}

impl NoiseConfig {
    pub fn new(bit_flip_rate: f64, phase_flip_rate: f64) -> Result<Self> {
        let noise = Self {
            bit_flip_rate,
            phase_flip_rate,
        };
        noise.validate()?;
        Ok(noise)
    }

    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("bit_flip_rate", self.bit_flip_rate),
            ("phase_flip_rate", self.phase_flip_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {rate}")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.bit_flip_rate == 0.0 && self.phase_flip_rate == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PauliError {
    None,
    X,
    Z,
    XZ,
}

impl PauliError {
    pub fn has_x(self) -> bool {
        matches!(self, PauliError::X | PauliError::XZ)
    }

    pub fn has_z(self) -> bool {
        matches!(self, PauliError::Z | PauliError::XZ)
    }
}

/// Draws X with probability `bit_flip_rate` and, independently, Z with
/// probability `phase_flip_rate`.
pub fn sample_pauli_error<R: Rng + ?Sized>(noise: &NoiseConfig, rng: &mut R) -> PauliError {
    let x = rng.random::<f64>() < noise.bit_flip_rate;
    let z = rng.random::<f64>() < noise.phase_flip_rate;
    match (x, z) {
        (false, false) => PauliError::None,
        (true, false) => PauliError::X,
        (false, true) => PauliError::Z,
        (true, true) => PauliError::XZ,
    }
}

/// Measured computational-basis outcomes, one basis index per shot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    num_qubits: usize,
    outcomes: Vec<usize>,
}

impl ShotRecord {
    pub fn from_outcomes(num_qubits: usize, outcomes: Vec<usize>) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Config(format!("invalid qubit count {num_qubits}")));
        }
        if let Some(&bad) = outcomes.iter().find(|&&o| o >> num_qubits != 0) {
            return Err(Error::InvalidArgument(format!(
                "outcome {bad} does not fit in {num_qubits} bits"
            )));
        }
        Ok(Self {
            num_qubits,
            outcomes,
        })
    }

    /// Builds a record from bit vectors where element `l` is the value of qubit `l`.
    pub fn from_bitstrings(bitstrings: &[Vec<u8>]) -> Result<Self> {
        let num_qubits = bitstrings.first().map(Vec::len).ok_or(Error::EmptyRecord)?;
        let mut outcomes = Vec::with_capacity(bitstrings.len());
        for bits in bitstrings {
            if bits.len() != num_qubits {
                return Err(Error::dim("bitstring", num_qubits, bits.len()));
            }
            let mut index = 0usize;
            for (q, &bit) in bits.iter().enumerate() {
                match bit {
                    0 => {}
                    1 => index |= 1 << q,
                    other => {
                        return Err(Error::InvalidArgument(format!("bit value {other}")));
                    }
                }
            }
            outcomes.push(index);
        }
        Self::from_outcomes(num_qubits, outcomes)
    }

    /// Parses strings such as `"101"`; character `l` is qubit `l`.
    pub fn parse<S: AsRef<str>>(shots: &[S]) -> Result<Self> {
        let bitstrings = shots
            .iter()
            .map(|s| {
                s.as_ref()
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(0u8),
                        '1' => Ok(1u8),
                        other => Err(Error::InvalidArgument(format!("bad bit character {other:?}"))),
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bitstrings(&bitstrings)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn shots(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }

    pub fn bitstring(&self, shot: usize) -> Vec<u8> {
        let index = self.outcomes[shot];
        (0..self.num_qubits).map(|q| ((index >> q) & 1) as u8).collect()
    }

    pub fn bitstrings(&self) -> Vec<Vec<u8>> {
        (0..self.shots()).map(|s| self.bitstring(s)).collect()
    }

    /// Mean of each bit over shots.
    pub fn empirical_marginals(&self) -> Result<Vec<f64>> {
        if self.outcomes.is_empty() {
            return Err(Error::EmptyRecord);
        }
        let mut counts = vec![0usize; self.num_qubits];
        for &o in &self.outcomes {
            for (q, count) in counts.iter_mut().enumerate() {
                *count += (o >> q) & 1;
            }
        }
        let shots = self.outcomes.len() as f64;
        Ok(counts.into_iter().map(|c| c as f64 / shots).collect())
    }

    /// Pauli-Z expectation view `m̂ = 1 − 2p̂`.
    pub fn z_expectations(&self) -> Result<Vec<f64>> {
        Ok(self
            .empirical_marginals()?
            .into_iter()
            .map(|p| 1.0 - 2.0 * p)
            .collect())
    }

    /// The most frequent outcome; ties go to the lowest basis index.
    pub fn modal_outcome(&self) -> Result<usize> {
        if self.outcomes.is_empty() {
            return Err(Error::EmptyRecord);
        }
        let mut sorted = self.outcomes.clone();
        sorted.sort_unstable();
        let (mut best, mut best_count) = (sorted[0], 0usize);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            if j - i > best_count {
                best = sorted[i];
                best_count = j - i;
            }
            i = j;
        }
        Ok(best)
    }
}

/// A circuit that can be replayed from |0…0⟩ with a hook after every gate.
///
/// `execute` must call `after_gate(state, qubit)` exactly `noise_sites()`
/// times, in a fixed order, once for each qubit touched by each gate.
pub trait CircuitExecutor {
    fn num_qubits(&self) -> usize;

    fn noise_sites(&self) -> usize;

    fn execute(
        &self,
        after_gate: &mut dyn FnMut(&mut StateVector, usize) -> Result<()>,
    ) -> Result<StateVector>;
}

struct Cdf(Vec<f64>);

impl Cdf {
    fn new(probabilities: &[f64]) -> Self {
        let mut acc = 0.0;
        Cdf(probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.0.last().expect("non-empty distribution");
        let u = rng.random::<f64>() * total;
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

/// Samples `shots` bitstrings from a circuit.
///
/// Without noise the circuit runs once and the final distribution is sampled
/// repeatedly. With noise every shot is an independent trajectory whose Pauli
/// errors come from a per-shot stream derived from one draw of `rng`, so the
/// result does not depend on the order in which shots are evaluated.
pub fn sample_shots<E, R>(
    executor: &E,
    shots: usize,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<ShotRecord>
where
    E: CircuitExecutor + ?Sized,
    R: Rng + ?Sized,
{
    if shots == 0 {
        return Err(Error::NoShots);
    }
    noise.validate()?;
    let ideal = executor.execute(&mut |_, _| Ok(()))?;
    let ideal_cdf = Cdf::new(&ideal.probabilities());
    let num_qubits = executor.num_qubits();

    if noise.is_noiseless() {
        let outcomes = (0..shots).map(|_| ideal_cdf.sample(rng)).collect();
        return ShotRecord::from_outcomes(num_qubits, outcomes);
    }

    let seed: [u8; 32] = rng.random();
    let sites = executor.noise_sites();
    let mut errors = Vec::with_capacity(sites);
    let mut outcomes = Vec::with_capacity(shots);
    for shot in 0..shots {
        let mut shot_rng = ChaCha8Rng::from_seed(seed);
        shot_rng.set_stream(shot as u64);
        errors.clear();
        errors.extend((0..sites).map(|_| sample_pauli_error(noise, &mut shot_rng)));
        let outcome = if errors.iter().all(|&e| e == PauliError::None) {
            // an error-free trajectory ends in the ideal state
            ideal_cdf.sample(&mut shot_rng)
        } else {
            let mut pending = errors.iter();
            let state = executor.execute(&mut |state, qubit| {
                let error = *pending.next().ok_or_else(|| {
                    Error::InvalidArgument("executor reported too few noise sites".into())
                })?;
                state.apply_pauli(qubit, error)
            })?;
            Cdf::new(&state.probabilities()).sample(&mut shot_rng)
        };
        outcomes.push(outcome);
    }
    ShotRecord::from_outcomes(num_qubits, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Fixed state, no gates.
    struct Prepared(StateVector);

    impl CircuitExecutor for Prepared {
        fn num_qubits(&self) -> usize {
            self.0.num_qubits()
        }
        fn noise_sites(&self) -> usize {
            0
        }
        fn execute(
            &self,
            _: &mut dyn FnMut(&mut StateVector, usize) -> Result<()>,
        ) -> Result<StateVector> {
            Ok(self.0.clone())
        }
    }

    /// One Rx(θ) on a single qubit.
    struct SingleRx(f64);

    impl CircuitExecutor for SingleRx {
        fn num_qubits(&self) -> usize {
            1
        }
        fn noise_sites(&self) -> usize {
            1
        }
        fn execute(
            &self,
            after_gate: &mut dyn FnMut(&mut StateVector, usize) -> Result<()>,
        ) -> Result<StateVector> {
            let mut sv = StateVector::zero(1)?;
            sv.apply_rotation(0, self.0, 0.0)?;
            after_gate(&mut sv, 0)?;
            Ok(sv)
        }
    }

    #[test]
    fn zero_state_layout() {
        let sv = StateVector::zero(1).unwrap();
        assert_eq!(sv.amplitudes(), &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let sv = StateVector::zero(3).unwrap();
        assert_eq!(sv.amplitudes().len(), 8);
        assert_eq!(sv.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert!(sv.amplitudes()[1..].iter().all(|a| a.norm_sqr() == 0.0));
        assert!(matches!(StateVector::zero(25), Err(Error::Config(_))));
        assert!(matches!(StateVector::zero(0), Err(Error::Config(_))));
    }

    #[test]
    fn rotation_examples() {
        let mut sv = StateVector::zero(2).unwrap();
        sv.apply_rotation(1, 0.3, 0.0).unwrap();
        let before = sv.clone();
        sv.apply_rotation(0, 0.0, 0.0).unwrap();
        assert_eq!(sv, before);

        let mut sv = StateVector::zero(1).unwrap();
        sv.apply_rotation(0, PI, 0.0).unwrap();
        assert_abs_diff_eq!(sv.exact_marginals()[0], 1.0, epsilon = 1e-15);
        // Rx(π)|0⟩ = −i|1⟩
        assert_abs_diff_eq!(sv.amplitudes()[1].im, -1.0, epsilon = 1e-15);

        let mut sv = StateVector::zero(1).unwrap();
        sv.apply_rotation(0, PI / 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(sv.exact_marginals()[0], 0.5, epsilon = 1e-15);

        let mut sv = StateVector::zero(2).unwrap();
        assert!(matches!(
            sv.apply_rotation(2, 0.1, 0.1),
            Err(Error::QubitOutOfRange { index: 2, num_qubits: 2 })
        ));
    }

    #[test]
    fn rotation_order_is_x_then_z() {
        // Rz(φ)·Rx(θ)|0⟩ = (e^{-iφ/2} cos(θ/2), −i e^{iφ/2} sin(θ/2))
        let (theta, phi) = (0.7, 1.3);
        let mut sv = StateVector::zero(1).unwrap();
        sv.apply_rotation(0, theta, phi).unwrap();
        let a0 = Complex64::from_polar((theta / 2.0).cos(), -phi / 2.0);
        let a1 = -Complex64::i() * Complex64::from_polar((theta / 2.0).sin(), phi / 2.0);
        assert_abs_diff_eq!((sv.amplitudes()[0] - a0).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((sv.amplitudes()[1] - a1).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cz_examples() {
        let mut sv = StateVector::zero(3).unwrap();
        for q in 0..3 {
            sv.apply_rotation(q, 1.0 + q as f64, 0.2).unwrap();
        }
        let before = sv.clone();
        sv.apply_cz(2, 2).unwrap();
        assert_eq!(sv, before);

        // |11⟩ picks up a sign
        let mut amps = vec![Complex64::new(0.0, 0.0); 4];
        amps[3] = Complex64::new(1.0, 0.0);
        let mut sv = StateVector::from_amplitudes(amps).unwrap();
        sv.apply_cz(0, 1).unwrap();
        assert_eq!(sv.amplitudes()[3], Complex64::new(-1.0, 0.0));

        let mut sv = before.clone();
        sv.apply_cz(0, 2).unwrap();
        assert_ne!(sv, before);
        sv.apply_cz(0, 2).unwrap();
        assert_eq!(sv, before);

        assert!(sv.apply_cz(0, 3).is_err());
    }

    #[test]
    fn pauli_error_sampling() {
        let mut r = rng(1);
        let quiet = NoiseConfig::noiseless();
        assert!((0..1000).all(|_| sample_pauli_error(&quiet, &mut r) == PauliError::None));
        let flip = NoiseConfig::new(1.0, 0.0).unwrap();
        assert!((0..1000).all(|_| sample_pauli_error(&flip, &mut r) == PauliError::X));
        let both = NoiseConfig::new(1.0, 1.0).unwrap();
        assert_eq!(sample_pauli_error(&both, &mut r), PauliError::XZ);
        assert!(NoiseConfig::new(1.5, 0.0).is_err());
        assert!(NoiseConfig::new(0.0, -0.1).is_err());
    }

    #[test]
    fn pauli_error_frequency() {
        // Binomial(10^6, 1e-3): sd ≈ 31.6 counts, so [800, 1200] is ±6.3 sd.
        let noise = NoiseConfig::new(1e-3, 1e-3).unwrap();
        let mut r = rng(7);
        let draws = 1_000_000;
        let x_count = (0..draws)
            .filter(|_| sample_pauli_error(&noise, &mut r).has_x())
            .count();
        let freq = x_count as f64 / draws as f64;
        assert!((8e-4..=1.2e-3).contains(&freq), "X frequency {freq}");
    }

    #[test]
    fn pauli_application() {
        let mut sv = StateVector::zero(2).unwrap();
        sv.apply_pauli(1, PauliError::X).unwrap();
        assert_eq!(sv.exact_marginals(), vec![0.0, 1.0]);
        sv.apply_pauli(1, PauliError::Z).unwrap();
        assert_eq!(sv.amplitudes()[2], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn marginal_examples() {
        let sv = StateVector::zero(4).unwrap();
        assert_eq!(sv.exact_marginals(), vec![0.0; 4]);

        let mut sv = StateVector::zero(2).unwrap();
        sv.apply_rotation(0, PI / 2.0, 0.0).unwrap();
        let m = sv.exact_marginals();
        assert_abs_diff_eq!(m[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn marginals_match_brute_force_on_random_circuit() {
        let mut r = rng(3);
        let mut sv = StateVector::zero(4).unwrap();
        for _ in 0..6 {
            for q in 0..4 {
                sv.apply_rotation(q, r.random_range(-PI..PI), r.random_range(-PI..PI))
                    .unwrap();
            }
            sv.apply_cz(r.random_range(0..4), r.random_range(0..4)).unwrap();
        }
        let probs = sv.probabilities();
        for q in 0..4 {
            let brute: f64 = (0..16).filter(|b| b >> q & 1 == 1).map(|b| probs[b]).sum();
            assert_abs_diff_eq!(sv.exact_marginals()[q], brute, epsilon = 1e-12);
        }
    }

    #[test]
    fn shots_of_basis_state() {
        let mut amps = vec![Complex64::new(0.0, 0.0); 8];
        amps[0b101] = Complex64::new(1.0, 0.0);
        let exec = Prepared(StateVector::from_amplitudes(amps).unwrap());
        let record = sample_shots(&exec, 50, &NoiseConfig::noiseless(), &mut rng(0)).unwrap();
        assert_eq!(record.shots(), 50);
        assert!(record.bitstrings().iter().all(|b| b == &vec![1, 0, 1]));
        assert!(matches!(
            sample_shots(&exec, 0, &NoiseConfig::noiseless(), &mut rng(0)),
            Err(Error::NoShots)
        ));
    }

    #[test]
    fn uniform_superposition_shot_fraction() {
        // Hoeffding: P(|p̂ − 0.5| > 0.01) ≤ 2 exp(−2·10^5·10^-4) ≈ 4e-9.
        let record =
            sample_shots(&SingleRx(PI / 2.0), 100_000, &NoiseConfig::noiseless(), &mut rng(11))
                .unwrap();
        let p = record.empirical_marginals().unwrap()[0];
        assert!((p - 0.5).abs() <= 0.01, "fraction {p}");
    }

    #[test]
    fn certain_bit_flip_inverts_outcome() {
        let noise = NoiseConfig::new(1.0, 0.0).unwrap();
        let record = sample_shots(&SingleRx(0.0), 20, &noise, &mut rng(2)).unwrap();
        assert_eq!(record.empirical_marginals().unwrap(), vec![1.0]);
    }

    #[test]
    fn empirical_marginal_examples() {
        let r = ShotRecord::parse(&["00", "01", "11", "10"]).unwrap();
        assert_eq!(r.empirical_marginals().unwrap(), vec![0.5, 0.5]);

        let r = ShotRecord::parse(&["111", "111"]).unwrap();
        assert_eq!(r.empirical_marginals().unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(r.z_expectations().unwrap(), vec![-1.0, -1.0, -1.0]);

        let r = ShotRecord::parse(&["110", "100"]).unwrap();
        assert_eq!(r.empirical_marginals().unwrap(), vec![1.0, 0.5, 0.0]);

        let empty = ShotRecord::from_outcomes(2, vec![]).unwrap();
        assert!(matches!(empty.empirical_marginals(), Err(Error::EmptyRecord)));
        assert!(ShotRecord::parse(&["10", "1"]).is_err());
    }

    #[test]
    fn modal_outcome_breaks_ties_low() {
        let r = ShotRecord::from_outcomes(2, vec![3, 1, 3, 1, 2]).unwrap();
        assert_eq!(r.modal_outcome().unwrap(), 1);
        let r = ShotRecord::from_outcomes(2, vec![3, 3, 1]).unwrap();
        assert_eq!(r.modal_outcome().unwrap(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn norm_is_preserved(n in 1usize..=6, seed in any::<u64>()) {
            let mut r = rng(seed);
            let mut sv = StateVector::zero(n).unwrap();
            for _ in 0..400 {
                if r.random_bool(0.7) {
                    sv.apply_rotation(r.random_range(0..n), r.random_range(-PI..PI), r.random_range(-PI..PI)).unwrap();
                } else {
                    sv.apply_cz(r.random_range(0..n), r.random_range(0..n)).unwrap();
                }
            }
            prop_assert!((sv.norm_sqr() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn cz_is_an_involution(n in 2usize..=5, seed in any::<u64>()) {
            let mut r = rng(seed);
            let mut sv = StateVector::zero(n).unwrap();
            for q in 0..n {
                sv.apply_rotation(q, r.random_range(-PI..PI), r.random_range(-PI..PI)).unwrap();
            }
            let before = sv.clone();
            let (p, k) = (r.random_range(0..n), r.random_range(0..n));
            sv.apply_cz(p, k).unwrap();
            sv.apply_cz(p, k).unwrap();
            prop_assert_eq!(sv, before);
        }

        #[test]
        fn product_state_marginals_factorize(angles in proptest::collection::vec((-PI..PI, -PI..PI), 1..=5)) {
            let n = angles.len();
            let mut sv = StateVector::zero(n).unwrap();
            for (q, &(theta, phi)) in angles.iter().enumerate() {
                sv.apply_rotation(q, theta, phi).unwrap();
            }
            let m = sv.exact_marginals();
            for (q, &(theta, _)) in angles.iter().enumerate() {
                prop_assert!((m[q] - (theta / 2.0).sin().powi(2)).abs() < 1e-12);
            }
        }
    }
}
