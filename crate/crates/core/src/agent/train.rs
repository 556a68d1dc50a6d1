use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actor::{ForwardMode, HybridActor, MiddleBlock};
use super::config::{AgentConfig, SurrogateConfig, Variant};
use super::replay::{ReplayBuffer, Transition};
use super::td3::{FitRecord, RngStreams, Td3Agent};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::pqc::{CallCounter, CallCounts, PqcConfig};
use crate::quantum::NoiseConfig;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    /// Environment steps to collect.
    pub total_steps: u64,
    /// Evaluate every this many steps; 0 disables periodic evaluation.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Run evaluation on the noiseless circuit instead of the training noise.
    pub eval_noiseless: bool,
    /// Checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_interval: u64,
    /// Emit one update record per this many critic updates.
    pub update_log_interval: u64,
    /// Fit records kept for fidelity probing.
    pub fit_history: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            total_steps: 50_000,
            eval_interval: 1_000,
            eval_episodes: 10,
            eval_noiseless: false,
            checkpoint_interval: 0,
            update_log_interval: 1,
            fit_history: 16,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive when evaluating".into()));
        }
        if self.update_log_interval == 0 {
            return Err(Error::Config("update_log_interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the metrics stream. Wall-clock time is deliberately absent so
/// identical runs produce identical streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Update {
        step: u64,
        episode: u64,
        update: u64,
        critic_loss_0: f64,
        critic_loss_1: f64,
        /// Most recent policy loss, if an actor step has happened.
        policy_loss: Option<f64>,
        /// Most recent qtDNN fit BCE (PQC variant).
        bce_loss: Option<f64>,
        pqc_calls: u64,
    },
    Evaluation {
        step: u64,
        episode: u64,
        mean_return: f64,
        std_return: f64,
        pqc_calls: u64,
        eval_pqc_calls: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub episode: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub policy_loss: Option<f64>,
    pub bce_loss: Option<f64>,
    pub pqc_calls: u64,
    pub eval_pqc_calls: u64,
    pub minutes: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub step: u64,
    pub episode: u64,
    pub seed: u64,
    /// Agent state; the qtDNN pair buffer is stored empty.
    pub agent: Td3Agent,
    pub rngs: RngStreams,
    pub counts: CallCounts,
    pub eval_counts: CallCounts,
    pub fit_records: Vec<FitRecord>,
}

impl Checkpoint {
    pub fn pqc_config(&self) -> &PqcConfig {
        &self.agent.actor.pqc
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub steps: u64,
    pub episodes: u64,
    pub evaluations: Vec<EvalPoint>,
    pub pqc_calls: u64,
    pub shot_executions: u64,
    pub eval_pqc_calls: u64,
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub fits: u64,
    /// Mean tiny-batch BCE of every fit, in order.
    pub fit_bce: Vec<f64>,
    /// PQC calls observed while update epochs ran (expected 0).
    pub update_pqc_calls: u64,
    pub minutes: f64,
}

/// Mean and population standard deviation of `values` (0, 0 when empty).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `episodes` deterministic episodes (no exploration noise, real circuit
/// for the PQC variant) and returns the mean and std of episode returns.
pub fn evaluate(
    actor: &HybridActor,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
    counter: &CallCounter,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng.random());
        let mut total = 0.0;
        for _ in 0..env.max_steps() {
            let out = actor.act(&obs, ForwardMode::RealPqc, &mut rng, counter)?;
            let step = env.step(&out.action)?;
            total += step.reward;
            let done = step.done();
            obs = step.obs;
            if done {
                break;
            }
        }
        returns.push(total);
    }
    Ok(mean_std(&returns))
}

pub type MetricSink<'a> = dyn FnMut(&MetricRecord) -> Result<()> + 'a;
pub type CheckpointSink<'a> = dyn FnMut(&Checkpoint) -> Result<()> + 'a;

/// Owns everything one seeded training run needs.
pub struct Trainer {
    pub agent: Td3Agent,
    pub replay: ReplayBuffer,
    pub rngs: RngStreams,
    pub counter: CallCounter,
    pub eval_counter: CallCounter,
    pub settings: TrainSettings,
    seed: u64,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    step: u64,
    episode: u64,
    obs: Option<Vec<f64>>,
    fit_records: VecDeque<FitRecord>,
}

impl Trainer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        variant: Variant,
        pqc: &PqcConfig,
        agent: &AgentConfig,
        surrogate: &SurrogateConfig,
        settings: &TrainSettings,
        seed: u64,
        env: Box<dyn Environment>,
        eval_env: Box<dyn Environment>,
    ) -> Result<Self> {
        settings.validate()?;
        if env.obs_dim() != eval_env.obs_dim() || env.bounds() != eval_env.bounds() {
            return Err(Error::Config("training and evaluation environments differ".into()));
        }
        let mut rngs = RngStreams::new(seed);
        let agent = Td3Agent::new(variant, env.obs_dim(), env.bounds(), pqc, agent, surrogate, &mut rngs.init)?;
        let replay = ReplayBuffer::new(agent.config.replay_capacity, env.obs_dim(), env.act_dim())?;
        Ok(Self {
            agent,
            replay,
            rngs,
            counter: CallCounter::new(),
            eval_counter: CallCounter::new(),
            settings: settings.clone(),
            seed,
            env,
            eval_env,
            step: 0,
            episode: 0,
            obs: None,
            fit_records: VecDeque::new(),
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut agent = self.agent.clone();
        if let MiddleBlock::Pqc(block) = &mut agent.actor.middle {
            block.buffer.clear();
        }
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            step: self.step,
            episode: self.episode,
            seed: self.seed,
            agent,
            rngs: self.rngs.clone(),
            counts: self.counter.counts(),
            eval_counts: self.eval_counter.counts(),
            fit_records: self.fit_records.iter().cloned().collect(),
        }
    }

    /// Evaluates the current policy with a seed drawn from the eval stream.
    pub fn evaluate_now(&mut self) -> Result<(f64, f64)> {
        let seed = self.rngs.eval.random();
        let noiseless = self.settings.eval_noiseless && !self.agent.actor.pqc.noise.is_noiseless();
        if noiseless {
            let mut actor = self.agent.actor.clone();
            actor.pqc.noise = NoiseConfig::noiseless();
            evaluate(&actor, self.eval_env.as_mut(), self.settings.eval_episodes, seed, &self.eval_counter)
        } else {
            evaluate(&self.agent.actor, self.eval_env.as_mut(), self.settings.eval_episodes, seed, &self.eval_counter)
        }
    }

    /// Collects one environment step and runs an update epoch when due.
    fn advance(&mut self, sink: &mut MetricSink<'_>, last: &mut (Option<f64>, Option<f64>), fit_bce: &mut Vec<f64>, update_calls: &mut u64) -> Result<()> {
        let obs = match self.obs.take() {
            Some(o) => o,
            None => self.env.reset(self.rngs.env.random()),
        };
        let out = self.agent.actor.act(&obs, ForwardMode::RealPqc, &mut self.rngs.shots, &self.counter)?;
        let action = if self.step < self.agent.config.warmup_steps as u64 {
            self.agent.random_action(&mut self.rngs.explore)
        } else {
            self.agent.explore(&out.action, &mut self.rngs.explore)
        };
        let result = self.env.step(&action)?;
        if let (MiddleBlock::Pqc(block), Some(q_i), Some(q_o)) = (&mut self.agent.actor.middle, &out.q_i, &out.q_o) {
            block.buffer.record_pair(q_i.clone(), q_o.clone())?;
        }
        let done = result.done();
        self.replay.push(Transition {
            s: obs,
            a: action,
            q_i: out.q_i,
            q_o: out.q_o,
            r: result.reward,
            s_next: result.obs.clone(),
            done: result.terminated,
        })?;
        self.step += 1;
        if done {
            self.episode += 1;
        } else {
            self.obs = Some(result.obs);
        }

        let ready = self.step > self.agent.config.warmup_steps as u64
            && self.replay.len() >= self.agent.config.batch_size;
        if ready {
            let before = self.counter.pqc_calls();
            let stats = self.agent.update(&self.replay, &mut self.rngs)?;
            *update_calls += self.counter.pqc_calls() - before;
            if let Some(p) = stats.policy_loss {
                last.0 = Some(p);
            }
            if let Some(fit) = stats.fit {
                last.1 = Some(fit.bce);
                fit_bce.push(fit.bce);
                if self.settings.fit_history > 0 {
                    if self.fit_records.len() == self.settings.fit_history {
                        self.fit_records.pop_front();
                    }
                    self.fit_records.push_back(fit);
                }
            }
            if self.agent.critic_updates % self.settings.update_log_interval == 0 {
                sink(&MetricRecord::Update {
                    step: self.step,
                    episode: self.episode,
                    update: self.agent.critic_updates,
                    critic_loss_0: stats.critic_loss[0],
                    critic_loss_1: stats.critic_loss[1],
                    policy_loss: last.0,
                    bce_loss: last.1,
                    pqc_calls: self.counter.pqc_calls(),
                })?;
            }
        }
        Ok(())
    }

    /// Runs the configured number of steps. On failure a checkpoint of the
    /// state at the failure point is handed to `checkpoints` before the error
    /// is returned.
    pub fn run(&mut self, metrics: &mut MetricSink<'_>, checkpoints: &mut CheckpointSink<'_>) -> Result<TrainOutcome> {
        let start = Instant::now();
        let mut last = (None, None);
        let mut fit_bce = Vec::new();
        let mut update_calls = 0;
        let mut evaluations = Vec::new();
        while self.step < self.settings.total_steps {
            let res = self.advance(metrics, &mut last, &mut fit_bce, &mut update_calls).and_then(|()| {
                let interval = self.settings.eval_interval;
                if interval > 0 && self.step % interval == 0 {
                    let (mean, std) = self.evaluate_now()?;
                    metrics(&MetricRecord::Evaluation {
                        step: self.step,
                        episode: self.episode,
                        mean_return: mean,
                        std_return: std,
                        pqc_calls: self.counter.pqc_calls(),
                        eval_pqc_calls: self.eval_counter.pqc_calls(),
                    })?;
                    evaluations.push(EvalPoint {
                        step: self.step,
                        episode: self.episode,
                        mean_return: mean,
                        std_return: std,
                        policy_loss: last.0,
                        bce_loss: last.1,
                        pqc_calls: self.counter.pqc_calls(),
                        eval_pqc_calls: self.eval_counter.pqc_calls(),
                        minutes: start.elapsed().as_secs_f64() / 60.0,
                    });
                }
                let ci = self.settings.checkpoint_interval;
                if ci > 0 && self.step % ci == 0 {
                    checkpoints(&self.checkpoint())?;
                }
                Ok(())
            });
            if let Err(e) = res {
                // best effort: the original error matters more
                let _ = checkpoints(&self.checkpoint());
                return Err(e);
            }
        }
        checkpoints(&self.checkpoint())?;
        Ok(TrainOutcome {
            steps: self.step,
            episodes: self.episode,
            evaluations,
            pqc_calls: self.counter.pqc_calls(),
            shot_executions: self.counter.shot_executions(),
            eval_pqc_calls: self.eval_counter.pqc_calls(),
            critic_updates: self.agent.critic_updates,
            actor_updates: self.agent.actor_updates,
            fits: self.agent.fits,
            fit_bce,
            update_pqc_calls: update_calls,
            minutes: start.elapsed().as_secs_f64() / 60.0,
        })
    }
}
