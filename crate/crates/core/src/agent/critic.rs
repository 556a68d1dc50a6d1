use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{adam_step, soft_update, Activation, AdamState, DenseNet, GradientTape, NetGrads};

/// Two-block Q network: a state trunk `[obs, h]` followed by a joint head
/// `[h + act, h, 1]` that sees the trunk features and the action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub trunk: DenseNet,
    pub head: DenseNet,
}

pub struct CriticTape {
    trunk: GradientTape,
    head: GradientTape,
}

#[derive(Clone, Debug)]
pub struct CriticGrads {
    pub trunk: NetGrads,
    pub head: NetGrads,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticOptimizer {
    pub trunk: AdamState,
    pub head: AdamState,
}

impl CriticOptimizer {
    pub fn new(critic: &Critic, lr: f64) -> Self {
        Self {
            trunk: AdamState::new(&critic.trunk, lr),
            head: AdamState::new(&critic.head, lr),
        }
    }
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let lrelu = Activation::leaky_relu();
        Ok(Self {
            trunk: DenseNet::new(&[obs_dim, hidden], lrelu, lrelu, rng)?,
            head: DenseNet::new(&[hidden + act_dim, hidden, 1], lrelu, Activation::Linear, rng)?,
        })
    }

    pub fn from_parts(trunk: DenseNet, head: DenseNet) -> Result<Self> {
        if head.input_dim() < trunk.output_dim() || head.output_dim() != 1 {
            return Err(Error::TopologyMismatch("critic head does not fit its trunk".into()));
        }
        Ok(Self { trunk, head })
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.head.input_dim() - self.trunk.output_dim()
    }

    /// Q values as a `B × 1` array.
    pub fn forward_batch(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<(Array2<f64>, CriticTape)> {
        if a.ncols() != self.act_dim() {
            return Err(Error::dim("critic action", self.act_dim(), a.ncols()));
        }
        let (t, trunk) = self.trunk.forward_batch(s)?;
        let joint = concatenate(Axis(1), &[t.view(), a])
            .map_err(|_| Error::dim("critic batch", t.nrows(), a.nrows()))?;
        let (q, head) = self.head.forward_batch(joint.view())?;
        Ok((q, CriticTape { trunk, head }))
    }

    pub fn predict_batch(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(s, a)?.0)
    }

    /// Parameter gradients and `∂/∂a` for an upstream `B × 1` gradient.
    pub fn backward(&self, tape: CriticTape, dq: ArrayView2<f64>) -> Result<(CriticGrads, Array2<f64>)> {
        let h = self.trunk.output_dim();
        let (head, dx) = self.head.backward(tape.head, dq)?;
        let (trunk, _) = self.trunk.backward(tape.trunk, dx.slice(s![.., ..h]))?;
        Ok((CriticGrads { trunk, head }, dx.slice(s![.., h..]).to_owned()))
    }

    /// `∂/∂a` only; the trunk is not traversed.
    pub fn action_gradient(&self, tape: CriticTape, dq: ArrayView2<f64>) -> Result<Array2<f64>> {
        let h = self.trunk.output_dim();
        let dx = self.head.backward_input(tape.head, dq)?;
        Ok(dx.slice(s![.., h..]).to_owned())
    }

    pub fn apply(&mut self, grads: &CriticGrads, opt: &mut CriticOptimizer) -> Result<()> {
        adam_step(&mut self.trunk, &grads.trunk, &mut opt.trunk)?;
        adam_step(&mut self.head, &grads.head, &mut opt.head)
    }

    pub fn soft_update_from(&mut self, online: &Critic, tau: f64) -> Result<()> {
        soft_update(&mut self.trunk, &online.trunk, tau)?;
        soft_update(&mut self.head, &online.head, tau)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut p = self.trunk.params_flat();
        p.extend(self.head.params_flat());
        p
    }
}
