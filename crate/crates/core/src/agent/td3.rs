use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::actor::{ActorNets, ActorOptimizer, HybridActor, MiddleBlock};
use super::config::{AgentConfig, SurrogateConfig, Variant};
use super::critic::{Critic, CriticOptimizer};
use super::replay::{Batch, ReplayBuffer};
use crate::error::{Error, Result};
use crate::neural::mse_loss;
use crate::pqc::{ControlVector, MarginalVector, PqcConfig};
use crate::surrogate::fit_surrogate;

/// Independent random streams derived from one master seed, one per role,
/// so that changing how often one role draws leaves the others untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    pub init: ChaCha8Rng,
    pub env: ChaCha8Rng,
    pub explore: ChaCha8Rng,
    pub replay: ChaCha8Rng,
    pub fit: ChaCha8Rng,
    pub shots: ChaCha8Rng,
    pub eval: ChaCha8Rng,
    pub rbg: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Self {
            init: stream(1),
            env: stream(2),
            explore: stream(3),
            replay: stream(4),
            fit: stream(5),
            shots: stream(6),
            eval: stream(7),
            rbg: stream(8),
        }
    }
}

/// Summary of one qtDNN fit, kept for later fidelity probing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub update: u64,
    /// Component-wise mean of the mini-batch controls.
    pub center: Vec<f64>,
    /// Largest angle-subspace distance from the center to a batch point.
    pub radius: f64,
    /// Mean tiny-batch BCE over the fit.
    pub bce: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: [f64; 2],
    pub policy_loss: Option<f64>,
    pub fit: Option<FitRecord>,
}

/// `y = r + γ·(1 − done)·min(q₀, q₁)`.
pub fn td_targets(r: &[f64], done: &[bool], q0: &[f64], q1: &[f64], gamma: f64) -> Vec<f64> {
    r.iter()
        .zip(done)
        .zip(q0.iter().zip(q1))
        .map(|((r, d), (a, b))| if *d { *r } else { r + gamma * a.min(*b) })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Td3Agent {
    pub config: AgentConfig,
    pub surrogate: SurrogateConfig,
    pub actor: HybridActor,
    pub actor_target: ActorNets,
    pub actor_opt: ActorOptimizer,
    pub critics: [Critic; 2],
    pub critic_targets: [Critic; 2],
    pub critic_opts: [CriticOptimizer; 2],
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub fits: u64,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(
        variant: Variant,
        obs_dim: usize,
        bounds: Vec<(f64, f64)>,
        pqc: &PqcConfig,
        config: &AgentConfig,
        surrogate: &SurrogateConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        surrogate.validate()?;
        let act_dim = bounds.len();
        let actor = HybridActor::new(variant, obs_dim, bounds, pqc, config, surrogate, rng)?;
        let h = config.hidden_width;
        let critics = [Critic::new(obs_dim, act_dim, h, rng)?, Critic::new(obs_dim, act_dim, h, rng)?];
        Ok(Self {
            actor_target: actor.nets.clone(),
            actor_opt: ActorOptimizer::new(&actor.nets, config.lr),
            critic_targets: critics.clone(),
            critic_opts: [
                CriticOptimizer::new(&critics[0], config.lr),
                CriticOptimizer::new(&critics[1], config.lr),
            ],
            critics,
            actor,
            config: config.clone(),
            surrogate: surrogate.clone(),
            critic_updates: 0,
            actor_updates: 0,
            fits: 0,
        })
    }

    pub fn variant(&self) -> Variant {
        self.actor.variant()
    }

    /// Whether the next update includes an actor step.
    pub fn next_update_is_actor_step(&self) -> bool {
        (self.critic_updates + 1) % self.config.actor_update_interval as u64 == 0
    }

    /// One update epoch: fit the surrogate (on actor steps), one critic step,
    /// and every `N_A` critic steps one actor step plus soft target updates.
    pub fn update(&mut self, replay: &ReplayBuffer, rngs: &mut RngStreams) -> Result<UpdateStats> {
        let batch = replay.sample(self.config.batch_size, &mut rngs.replay)?;
        let actor_step = self.next_update_is_actor_step();
        let fit = if actor_step && self.variant() == Variant::Pqc {
            Some(self.fit_qtdnn(replay, &batch, &mut rngs.fit)?)
        } else {
            None
        };
        let critic_loss = self.critic_update(&batch, rngs)?;
        self.critic_updates += 1;
        let policy_loss = if actor_step {
            let loss = self.actor_update(&batch, &mut rngs.rbg)?;
            self.soft_update_targets()?;
            self.actor_updates += 1;
            Some(loss)
        } else {
            None
        };
        Ok(UpdateStats { critic_loss, policy_loss, fit })
    }

    /// Refits the qtDNN on the mini-batch's quantum pairs mixed with its
    /// buffer. The surrogate stays frozen until the next call.
    pub fn fit_qtdnn<R: Rng + ?Sized>(&mut self, replay: &ReplayBuffer, batch: &Batch, rng: &mut R) -> Result<FitRecord> {
        let pairs: Vec<(&ControlVector, &MarginalVector)> = batch
            .indices
            .iter()
            .filter_map(|&i| {
                let t = replay.get(i)?;
                Some((t.q_i.as_ref()?, t.q_o.as_ref()?))
            })
            .collect();
        if pairs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let params = self.surrogate.fit_params();
        let angles = self.actor.pqc.angle_dim();
        let dim = self.actor.control_dim();
        let mut center = vec![0.0; dim];
        for (q, _) in &pairs {
            for (c, v) in center.iter_mut().zip(q.as_slice()) {
                *c += v / pairs.len() as f64;
            }
        }
        let radius = pairs
            .iter()
            .map(|(q, _)| {
                q.as_slice()[..angles]
                    .iter()
                    .zip(&center)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        let MiddleBlock::Pqc(block) = &mut self.actor.middle else {
            return Err(Error::MissingSurrogate);
        };
        let trace = fit_surrogate(&mut block.qtdnn, &pairs, Some(&block.buffer), &params, &mut block.optimizer, rng)?;
        self.fits += 1;
        let bce = if trace.is_empty() { f64::NAN } else { trace.iter().sum::<f64>() / trace.len() as f64 };
        Ok(FitRecord { update: self.critic_updates + 1, center, radius, bce })
    }

    /// Target actions from the target actor with clipped smoothing noise.
    fn target_actions(&self, s_next: ArrayView2<f64>, rngs: &mut RngStreams) -> Result<Array2<f64>> {
        let mut a = self.actor.predict_batch(&self.actor_target, s_next, &mut rngs.rbg)?;
        for mut row in a.rows_mut() {
            for (v, (lo, hi)) in row.iter_mut().zip(&self.actor.bounds) {
                let range = hi - lo;
                let sigma = self.config.target_noise * range;
                let clip = self.config.target_noise_clip * range;
                let eps = if sigma > 0.0 {
                    Normal::new(0.0, sigma).expect("positive std").sample(&mut rngs.explore)
                } else {
                    0.0
                };
                *v = (*v + eps.clamp(-clip, clip)).clamp(*lo, *hi);
            }
        }
        Ok(a)
    }

    pub fn critic_update(&mut self, batch: &Batch, rngs: &mut RngStreams) -> Result<[f64; 2]> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let a_next = self.target_actions(batch.s_next.view(), rngs)?;
        let q0 = self.critic_targets[0].predict_batch(batch.s_next.view(), a_next.view())?;
        let q1 = self.critic_targets[1].predict_batch(batch.s_next.view(), a_next.view())?;
        let y = td_targets(
            &batch.r,
            &batch.done,
            q0.as_slice().expect("column vector"),
            q1.as_slice().expect("column vector"),
            self.config.gamma,
        );
        let y = Array2::from_shape_vec((y.len(), 1), y).expect("one target per row");
        let mut losses = [0.0; 2];
        for j in 0..2 {
            let (q, tape) = self.critics[j].forward_batch(batch.s.view(), batch.a.view())?;
            let (loss, dq) = mse_loss(q.view(), y.view())?;
            let (grads, _) = self.critics[j].backward(tape, dq.view())?;
            self.critics[j].apply(&grads, &mut self.critic_opts[j])?;
            losses[j] = loss;
        }
        Ok(losses)
    }

    /// One deterministic policy-gradient step on `−mean C₀(s, A(s))`,
    /// backpropagating through the frozen surrogate. Returns the loss.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let (a, tape) = self.actor.forward_batch(&self.actor.nets, batch.s.view(), rng)?;
        let (q, ctape) = self.critics[0].forward_batch(batch.s.view(), a.view())?;
        let n = q.nrows() as f64;
        let loss = -q.mean_axis(Axis(0)).expect("non-empty")[0];
        let dq = Array2::from_elem((q.nrows(), 1), -1.0 / n);
        let da = self.critics[0].action_gradient(ctape, dq.view())?;
        let grads = self.actor.backward(&self.actor.nets, tape, da.view())?;
        self.actor.apply(&grads, &mut self.actor_opt)?;
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        let tau = self.config.tau;
        for j in 0..2 {
            self.critic_targets[j].soft_update_from(&self.critics[j], tau)?;
        }
        self.actor_target.soft_update_from(&self.actor.nets, tau)
    }

    /// Adds exploration noise (std = `exploration_noise` × half-range) and
    /// clips to the bounds.
    pub fn explore<R: Rng + ?Sized>(&self, action: &[f64], rng: &mut R) -> Vec<f64> {
        action
            .iter()
            .zip(&self.actor.bounds)
            .map(|(a, (lo, hi))| {
                let sigma = self.config.exploration_noise * 0.5 * (hi - lo);
                let eps = if sigma > 0.0 { Normal::new(0.0, sigma).expect("positive std").sample(rng) } else { 0.0 };
                (a + eps).clamp(*lo, *hi)
            })
            .collect()
    }

    /// Uniform random action within the bounds.
    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.actor.bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()
    }
}
