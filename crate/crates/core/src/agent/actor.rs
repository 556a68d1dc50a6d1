use std::f64::consts::PI;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{AgentConfig, SurrogateConfig, Variant};
use crate::error::{Error, Result};
use crate::neural::{adam_step, soft_update, Activation, AdamState, DenseNet, GradientTape, NetGrads};
use crate::pqc::{run_quantum_layer, CallCounter, ControlVector, MarginalVector, PqcConfig};
use crate::surrogate::{QtBuffer, QtDnn};

/// How the PQC middle block is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// Run the shot-sampled circuit; counts one PQC call.
    RealPqc,
    /// Use the frozen qtDNN.
    Surrogate,
}

/// The trainable classical parts of an actor. The FC block is present only
/// for the FC variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorNets {
    pub pre: DenseNet,
    pub post: DenseNet,
    pub fc: Option<DenseNet>,
}

impl ActorNets {
    pub fn soft_update_from(&mut self, online: &ActorNets, tau: f64) -> Result<()> {
        soft_update(&mut self.pre, &online.pre, tau)?;
        soft_update(&mut self.post, &online.post, tau)?;
        match (&mut self.fc, &online.fc) {
            (Some(t), Some(o)) => soft_update(t, o, tau),
            (None, None) => Ok(()),
            _ => Err(Error::TopologyMismatch("FC block present in only one actor".into())),
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut p = self.pre.params_flat();
        p.extend(self.post.params_flat());
        if let Some(fc) = &self.fc {
            p.extend(fc.params_flat());
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorOptimizer {
    pub pre: AdamState,
    pub post: AdamState,
    pub fc: Option<AdamState>,
}

impl ActorOptimizer {
    pub fn new(nets: &ActorNets, lr: f64) -> Self {
        Self {
            pre: AdamState::new(&nets.pre, lr),
            post: AdamState::new(&nets.post, lr),
            fc: nets.fc.as_ref().map(|n| AdamState::new(n, lr)),
        }
    }
}

/// Quantum middle block state: circuit settings, surrogate, pair buffer and
/// the surrogate's optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PqcBlock {
    pub qtdnn: QtDnn,
    pub buffer: QtBuffer,
    pub optimizer: AdamState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MiddleBlock {
    Pqc(PqcBlock),
    Fc,
    Rbg,
    Zero,
}

impl MiddleBlock {
    pub fn variant(&self) -> Variant {
        match self {
            MiddleBlock::Pqc(_) => Variant::Pqc,
            MiddleBlock::Fc => Variant::Fc,
            MiddleBlock::Rbg => Variant::Rbg,
            MiddleBlock::Zero => Variant::Zero,
        }
    }
}

enum MiddleTape {
    Qt(GradientTape),
    Fc(GradientTape),
    Blocked,
}

pub struct ActorTape {
    pre: GradientTape,
    raw_controls: Array2<f64>,
    middle: MiddleTape,
    post: GradientTape,
}

#[derive(Clone, Debug)]
pub struct ActorGrads {
    pub pre: NetGrads,
    pub post: NetGrads,
    pub fc: Option<NetGrads>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorOutput {
    pub action: Vec<f64>,
    /// Encoded controls fed to the middle block (PQC variant only).
    pub q_i: Option<ControlVector>,
    /// Middle-block output (PQC variant only).
    pub q_o: Option<MarginalVector>,
}

/// PreDNN → middle block → PostDNN, with the trailing `clink_dim` PreDNN
/// outputs bypassing the middle block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridActor {
    pub pqc: PqcConfig,
    pub bounds: Vec<(f64, f64)>,
    pub clink_dim: usize,
    pub nets: ActorNets,
    pub middle: MiddleBlock,
}

impl HybridActor {
    pub fn new<R: Rng + ?Sized>(
        variant: Variant,
        obs_dim: usize,
        bounds: Vec<(f64, f64)>,
        pqc: &PqcConfig,
        agent: &AgentConfig,
        surrogate: &SurrogateConfig,
        rng: &mut R,
    ) -> Result<Self> {
        pqc.validate()?;
        if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("action bounds must be non-empty with low < high".into()));
        }
        let lrelu = Activation::leaky_relu();
        let (i, n, d, h) = (pqc.control_dim(), pqc.num_qubits, agent.clink_dim, agent.hidden_width);
        let pre = DenseNet::new(&[obs_dim, h, i + d], lrelu, Activation::Linear, rng)?;
        let post = DenseNet::new(&[n + d, h, bounds.len()], lrelu, Activation::Tanh, rng)?;
        let (fc, middle) = match variant {
            Variant::Pqc => {
                let qtdnn = QtDnn::new(pqc, surrogate.hidden_width, rng)?;
                let optimizer = AdamState::new(qtdnn.net(), surrogate.lr);
                let buffer = QtBuffer::new(surrogate.buffer_capacity, pqc)?;
                (None, MiddleBlock::Pqc(PqcBlock { qtdnn, buffer, optimizer }))
            }
            Variant::Fc => {
                let fc = DenseNet::new(&[i, surrogate.hidden_width, n], lrelu, Activation::Sigmoid, rng)?;
                (Some(fc), MiddleBlock::Fc)
            }
            Variant::Rbg => (None, MiddleBlock::Rbg),
            Variant::Zero => (None, MiddleBlock::Zero),
        };
        Ok(Self {
            pqc: pqc.clone(),
            bounds,
            clink_dim: d,
            nets: ActorNets { pre, post, fc },
            middle,
        })
    }

    pub fn variant(&self) -> Variant {
        self.middle.variant()
    }

    pub fn obs_dim(&self) -> usize {
        self.nets.pre.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn control_dim(&self) -> usize {
        self.pqc.control_dim()
    }

    pub fn qtdnn(&self) -> Option<&QtDnn> {
        match &self.middle {
            MiddleBlock::Pqc(b) => Some(&b.qtdnn),
            _ => None,
        }
    }

    fn scale_action(&self, y: &mut Array2<f64>) {
        for mut row in y.rows_mut() {
            for (v, (lo, hi)) in row.iter_mut().zip(&self.bounds) {
                *v = 0.5 * (hi + lo) + 0.5 * (hi - lo) * *v;
            }
        }
    }

    fn encode(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        let angles = self.pqc.angle_dim();
        let mut q = raw.to_owned();
        q.slice_mut(s![.., ..angles]).mapv_inplace(|x| PI * x.tanh());
        q
    }

    fn bits<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, self.pqc.num_qubits), || f64::from(u8::from(rng.random_bool(0.5))))
    }

    /// Batched forward in surrogate mode through `nets` (online or target);
    /// the middle block (qtDNN, RBG source) is shared.
    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        nets: &ActorNets,
        s: ArrayView2<f64>,
        rng: &mut R,
    ) -> Result<(Array2<f64>, ActorTape)> {
        let i = self.control_dim();
        let (z, pre) = nets.pre.forward_batch(s)?;
        let raw = z.slice(s![.., ..i]);
        let (mid, middle) = match &self.middle {
            MiddleBlock::Pqc(b) => {
                let (m, t) = b.qtdnn.net().forward_batch(self.encode(raw).view())?;
                (m, MiddleTape::Qt(t))
            }
            MiddleBlock::Fc => {
                let fc = nets.fc.as_ref().ok_or(Error::MissingSurrogate)?;
                let (m, t) = fc.forward_batch(self.encode(raw).view())?;
                (m, MiddleTape::Fc(t))
            }
            MiddleBlock::Rbg => (self.bits(z.nrows(), rng), MiddleTape::Blocked),
            MiddleBlock::Zero => (Array2::zeros((z.nrows(), self.pqc.num_qubits)), MiddleTape::Blocked),
        };
        let x = concatenate(Axis(1), &[mid.view(), z.slice(s![.., i..])]).expect("row counts agree");
        let (mut y, post) = nets.post.forward_batch(x.view())?;
        self.scale_action(&mut y);
        let tape = ActorTape { pre, raw_controls: raw.to_owned(), middle, post };
        Ok((y, tape))
    }

    pub fn predict_batch<R: Rng + ?Sized>(&self, nets: &ActorNets, s: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        Ok(self.forward_batch(nets, s, rng)?.0)
    }

    /// Backpropagates `∂L/∂a` to the PreDNN, PostDNN and (FC) middle block.
    /// The qtDNN is treated as a fixed differentiable map; gradients reach
    /// the entangler index inputs through it as well as the angles.
    pub fn backward(&self, nets: &ActorNets, tape: ActorTape, d_action: ArrayView2<f64>) -> Result<ActorGrads> {
        let (n, i) = (self.pqc.num_qubits, self.control_dim());
        let mut dy = d_action.to_owned();
        for mut row in dy.rows_mut() {
            for (v, (lo, hi)) in row.iter_mut().zip(&self.bounds) {
                *v *= 0.5 * (hi - lo);
            }
        }
        let (post, dx) = nets.post.backward(tape.post, dy.view())?;
        let d_mid = dx.slice(s![.., ..n]);
        let mut fc = None;
        let mut dq = match (tape.middle, &self.middle) {
            (MiddleTape::Qt(t), MiddleBlock::Pqc(b)) => b.qtdnn.net().backward_input(t, d_mid)?,
            (MiddleTape::Fc(t), MiddleBlock::Fc) => {
                let net = nets.fc.as_ref().ok_or(Error::MissingSurrogate)?;
                let (g, dq) = net.backward(t, d_mid)?;
                fc = Some(g);
                dq
            }
            (MiddleTape::Blocked, _) => Array2::zeros((dx.nrows(), i)),
            _ => return Err(Error::StaleTape),
        };
        let angles = self.pqc.angle_dim();
        dq.slice_mut(s![.., ..angles])
            .zip_mut_with(&tape.raw_controls.slice(s![.., ..angles]), |g, &x| {
                let t = x.tanh();
                *g *= PI * (1.0 - t * t);
            });
        let dz = concatenate(Axis(1), &[dq.view(), dx.slice(s![.., n..])]).expect("row counts agree");
        let (pre, _) = nets.pre.backward(tape.pre, dz.view())?;
        Ok(ActorGrads { pre, post, fc })
    }

    pub fn apply(&mut self, grads: &ActorGrads, opt: &mut ActorOptimizer) -> Result<()> {
        adam_step(&mut self.nets.pre, &grads.pre, &mut opt.pre)?;
        adam_step(&mut self.nets.post, &grads.post, &mut opt.post)?;
        match (&mut self.nets.fc, &grads.fc, &mut opt.fc) {
            (Some(net), Some(g), Some(o)) => adam_step(net, g, o),
            (None, None, _) => Ok(()),
            _ => Err(Error::TopologyMismatch("FC gradient without FC block".into())),
        }
    }

    /// Deterministic single-observation forward through the online nets.
    /// In `RealPqc` mode the PQC variant runs the circuit and counts a call.
    pub fn act<R: Rng + ?Sized>(
        &self,
        s: &[f64],
        mode: ForwardMode,
        rng: &mut R,
        counter: &CallCounter,
    ) -> Result<ActorOutput> {
        if s.len() != self.obs_dim() {
            return Err(Error::dim("observation", self.obs_dim(), s.len()));
        }
        let i = self.control_dim();
        let z = self.nets.pre.predict(s)?;
        let raw = ArrayView2::from_shape((1, i), &z[..i]).expect("slice length");
        let encoded = self.encode(raw);
        let (mid, q_i, q_o) = match &self.middle {
            MiddleBlock::Pqc(b) => {
                let q_i = ControlVector::new(encoded.into_raw_vec_and_offset().0);
                let q_o = match mode {
                    ForwardMode::RealPqc => run_quantum_layer(&q_i, &self.pqc, rng, counter)?,
                    ForwardMode::Surrogate => MarginalVector::new(b.qtdnn.predict(&q_i)?)?,
                };
                (q_o.as_slice().to_vec(), Some(q_i), Some(q_o))
            }
            MiddleBlock::Fc => {
                let fc = self.nets.fc.as_ref().ok_or(Error::MissingSurrogate)?;
                (fc.predict(encoded.as_slice().expect("standard layout"))?, None, None)
            }
            MiddleBlock::Rbg => (self.bits(1, rng).into_raw_vec_and_offset().0, None, None),
            MiddleBlock::Zero => (vec![0.0; self.pqc.num_qubits], None, None),
        };
        let mut x = mid;
        x.extend_from_slice(&z[i..]);
        let y = self.nets.post.predict(&x)?;
        let action = y
            .iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| 0.5 * (hi + lo) + 0.5 * (hi - lo) * v)
            .collect();
        Ok(ActorOutput { action, q_i, q_o })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(variant: Variant, seed: u64) -> HybridActor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pqc = PqcConfig::new(2, 1, 50).unwrap();
        let agent = AgentConfig { hidden_width: 6, clink_dim: 3, ..Default::default() };
        let sur = SurrogateConfig { hidden_width: 5, ..Default::default() };
        HybridActor::new(variant, 3, vec![(-2.0, 2.0), (0.0, 1.0)], &pqc, &agent, &sur, &mut rng).unwrap()
    }

    fn zero_net(net: &mut DenseNet) {
        let zeros = vec![0.0; net.param_count()];
        net.set_params_flat(&zeros).unwrap();
    }

    #[test]
    fn ablation_variants_share_topologies() {
        let sizes: Vec<_> = Variant::ALL
            .iter()
            .map(|&v| {
                let a = small(v, 0);
                (a.nets.pre.layer_sizes().to_vec(), a.nets.post.layer_sizes().to_vec())
            })
            .collect();
        assert!(sizes.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(sizes[0].0, vec![3, 6, 6 + 3]);
        assert_eq!(sizes[0].1, vec![2 + 3, 6, 2]);
    }

    #[test]
    fn zero_pre_gives_zero_quantum_output() {
        let mut actor = small(Variant::Pqc, 1);
        zero_net(&mut actor.nets.pre);
        let counter = CallCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = actor.act(&[0.4, -1.0, 2.0], ForwardMode::RealPqc, &mut rng, &counter).unwrap();
        assert!(out.q_i.unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert!(out.q_o.unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(counter.pqc_calls(), 1);
        assert_eq!(counter.shot_executions(), 50);
        actor.act(&[0.4, -1.0, 2.0], ForwardMode::Surrogate, &mut rng, &counter).unwrap();
        assert_eq!(counter.pqc_calls(), 1);
    }

    #[test]
    fn zero_variant_uses_only_clink() {
        let mut actor = small(Variant::Zero, 2);
        let counter = CallCounter::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = [0.1, 0.2, 0.3];
        let base = actor.act(&s, ForwardMode::RealPqc, &mut rng, &counter).unwrap();
        // perturb only the weights producing control outputs
        let mut w = actor.nets.pre.layers()[1].weight.clone();
        w.slice_mut(s![.., ..6]).mapv_inplace(|v| v + 1.0);
        actor.nets.pre.layers_mut()[1].weight = w;
        let moved = actor.act(&s, ForwardMode::RealPqc, &mut rng, &counter).unwrap();
        assert_eq!(base.action, moved.action);
        assert_eq!(counter.pqc_calls(), 0);

        // gradient reaches control outputs as exactly zero
        let sb = array![[0.1, 0.2, 0.3]];
        let nets = actor.nets.clone();
        let (_, tape) = actor.forward_batch(&nets, sb.view(), &mut rng).unwrap();
        let g = actor.backward(&nets, tape, array![[1.0, 1.0]].view()).unwrap();
        let last = &g.pre.layers[1];
        assert!(last.weight.slice(s![.., ..6]).iter().all(|&v| v == 0.0));
        assert!(last.weight.slice(s![.., 6..]).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn rbg_is_seeded() {
        let actor = small(Variant::Rbg, 3);
        let counter = CallCounter::new();
        let s = [0.5, 0.5, 0.5];
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..8)
                .map(|_| actor.act(&s, ForwardMode::RealPqc, &mut rng, &counter).unwrap().action)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn actions_respect_bounds() {
        let actor = small(Variant::Fc, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = Array2::from_shape_fn((20, 3), |(r, c)| 10.0 * ((r * 3 + c) as f64).sin());
        let a = actor.predict_batch(&actor.nets, s.view(), &mut rng).unwrap();
        for row in a.rows() {
            assert!((-2.0..=2.0).contains(&row[0]));
            assert!((0.0..=1.0).contains(&row[1]));
        }
    }

    fn check_gradient(variant: Variant) {
        let actor = small(variant, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = array![[0.3, -0.4, 0.8], [1.0, 0.2, -0.6]];
        let w = array![[0.7, -1.3], [0.4, 0.9]];
        let nets = actor.nets.clone();
        let (_, tape) = actor.forward_batch(&nets, s.view(), &mut rng).unwrap();
        let g = actor.backward(&nets, tape, w.view()).unwrap();
        let mut analytic = g.pre.flat();
        analytic.extend(g.post.flat());
        if let Some(fc) = &g.fc {
            analytic.extend(fc.flat());
        }
        let loss = |n: &ActorNets| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            (actor.predict_batch(n, s.view(), &mut r).unwrap() * &w).sum()
        };
        let base = nets.params_flat();
        let h = 1e-6;
        let set = |p: &[f64]| {
            let mut n = nets.clone();
            let (a, rest) = p.split_at(n.pre.param_count());
            let (b, c) = rest.split_at(n.post.param_count());
            n.pre.set_params_flat(a).unwrap();
            n.post.set_params_flat(b).unwrap();
            if let Some(fc) = &mut n.fc {
                fc.set_params_flat(c).unwrap();
            }
            n
        };
        for idx in 0..base.len() {
            let (mut up, mut down) = (base.clone(), base.clone());
            up[idx] += h;
            down[idx] -= h;
            let fd = (loss(&set(&up)) - loss(&set(&down))) / (2.0 * h);
            let err = (fd - analytic[idx]).abs() / fd.abs().max(analytic[idx].abs()).max(1e-3);
            assert!(err < 1e-4, "{variant} param {idx}: fd {fd} analytic {}", analytic[idx]);
        }
    }

    #[test]
    fn fc_gradient_matches_finite_differences() {
        check_gradient(Variant::Fc);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        check_gradient(Variant::Pqc);
        check_gradient(Variant::Zero);
    }
}
