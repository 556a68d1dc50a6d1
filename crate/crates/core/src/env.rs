//! Small built-in control tasks with a common episode interface.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// The task reached a terminal state; bootstrapping stops here.
    pub terminated: bool,
    /// The step cap was hit.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Per-dimension `(low, high)` action bounds.
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn max_steps(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Advances one step. Actions outside the bounds are clipped.
    fn step(&mut self, action: &[f64]) -> Result<Step>;
}

/// Clips `action` to `bounds` after checking its length.
pub fn clip_action(action: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>> {
    if action.len() != bounds.len() {
        return Err(Error::dim("action", bounds.len(), action.len()));
    }
    if action.iter().any(|a| a.is_nan()) {
        return Err(Error::InvalidArgument("action contains NaN".into()));
    }
    Ok(action
        .iter()
        .zip(bounds)
        .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
        .collect())
}

fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Torque-limited pendulum swing-up. Dynamics and reward follow the usual
/// gym formulation: g = 10, dt = 0.05, |u| ≤ 2, |θ̇| ≤ 8, 200-step cap.
#[derive(Clone, Debug)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
    steps: usize,
    max_steps: usize,
}

impl Pendulum {
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const DT: f64 = 0.05;
    pub const G: f64 = 10.0;

    pub fn new() -> Self {
        Self { theta: PI, theta_dot: 0.0, steps: 0, max_steps: 200 }
    }

    pub fn with_state(theta: f64, theta_dot: f64) -> Self {
        Self { theta, theta_dot, ..Self::new() }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn obs_dim(&self) -> usize {
        3
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-Self::MAX_TORQUE, Self::MAX_TORQUE)]
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.theta = rng.random_range(-PI..PI);
        self.theta_dot = rng.random_range(-1.0..1.0);
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let u = clip_action(action, &self.bounds())?[0];
        let (th, thdot) = (self.theta, self.theta_dot);
        let cost = angle_normalize(th).powi(2) + 0.1 * thdot.powi(2) + 0.001 * u * u;
        let new_thdot = (thdot + (1.5 * Self::G * th.sin() + 3.0 * u) * Self::DT)
            .clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta = th + new_thdot * Self::DT;
        self.theta_dot = new_thdot;
        self.steps += 1;
        Ok(Step {
            obs: self.obs(),
            reward: -cost,
            terminated: false,
            truncated: self.steps >= self.max_steps,
        })
    }
}

/// A unit point mass pushed by a bounded 2-D force towards the origin.
/// Observation is `(x, y, vx, vy)`; the episode terminates once the mass
/// rests near the target.
#[derive(Clone, Debug)]
pub struct PointMassReacher {
    pos: [f64; 2],
    vel: [f64; 2],
    steps: usize,
    max_steps: usize,
}

impl PointMassReacher {
    pub const DT: f64 = 0.05;
    pub const DAMPING: f64 = 0.1;
    pub const GOAL_RADIUS: f64 = 0.05;

    pub fn new() -> Self {
        Self { pos: [0.0; 2], vel: [0.0; 2], steps: 0, max_steps: 200 }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Default for PointMassReacher {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMassReacher {
    fn obs_dim(&self) -> usize {
        4
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); 2]
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.pos {
            *p = rng.random_range(-1.0..1.0);
        }
        self.vel = [0.0; 2];
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let u = clip_action(action, &self.bounds())?;
        for d in 0..2 {
            self.vel[d] += (u[d] - Self::DAMPING * self.vel[d]) * Self::DT;
            self.pos[d] = (self.pos[d] + self.vel[d] * Self::DT).clamp(-2.0, 2.0);
        }
        self.steps += 1;
        let dist = self.pos[0].hypot(self.pos[1]);
        let speed = self.vel[0].hypot(self.vel[1]);
        let reached = dist < Self::GOAL_RADIUS && speed < Self::GOAL_RADIUS;
        let effort = 0.01 * (u[0] * u[0] + u[1] * u[1]);
        Ok(Step {
            obs: self.obs(),
            reward: -dist - effort + if reached { 10.0 } else { 0.0 },
            terminated: reached,
            truncated: !reached && self.steps >= self.max_steps,
        })
    }
}

/// Fixture environment: zero observations, a constant reward per step and
/// an optional early termination step.
#[derive(Clone, Debug)]
pub struct StubEnv {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub reward: f64,
    pub max_steps: usize,
    pub terminate_at: Option<usize>,
    steps: usize,
}

impl StubEnv {
    pub fn new(obs_dim: usize, act_dim: usize, reward: f64, max_steps: usize) -> Self {
        Self { obs_dim, act_dim, reward, max_steps, terminate_at: None, steps: 0 }
    }
}

impl Environment for StubEnv {
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn act_dim(&self) -> usize {
        self.act_dim
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); self.act_dim]
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.steps = 0;
        vec![0.0; self.obs_dim]
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        clip_action(action, &self.bounds())?;
        self.steps += 1;
        let terminated = self.terminate_at.is_some_and(|t| self.steps >= t);
        Ok(Step {
            obs: vec![0.0; self.obs_dim],
            reward: self.reward,
            terminated,
            truncated: !terminated && self.steps >= self.max_steps,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Pendulum,
    PointMassReacher,
    /// Constant reward 1, obs 3, act 1, cap 200.
    Stub,
}

impl EnvId {
    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvId::Pendulum => Box::new(Pendulum::new()),
            EnvId::PointMassReacher => Box::new(PointMassReacher::new()),
            EnvId::Stub => Box::new(StubEnv::new(3, 1, 1.0, 200)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Pendulum => "pendulum",
            EnvId::PointMassReacher => "point_mass_reacher",
            EnvId::Stub => "stub",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(EnvId::Pendulum),
            "point_mass_reacher" | "reacher" => Ok(EnvId::PointMassReacher),
            "stub" => Ok(EnvId::Stub),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}
