use serde::{Deserialize, Serialize};

use super::net::{DenseNet, NetGrads};
use crate::error::{Error, Result};

/// Adam moments for one network, flattened in parameter order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    /// Moments sized for `net`, with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Self::with_params(net.param_count(), lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_params(param_count: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// One bias-corrected update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::dim("adam parameters", self.first.len(), params.len()));
        }
        if grads.len() != params.len() {
            return Err(Error::dim("adam gradients", params.len(), grads.len()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Applies one Adam step to every parameter of `net`.
pub fn adam_step(net: &mut DenseNet, grads: &NetGrads, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != net.layers().len()
        || grads
            .layers
            .iter()
            .zip(net.layers())
            .any(|(g, l)| g.weight.dim() != l.weight.dim() || g.bias.dim() != l.bias.dim())
    {
        return Err(Error::TopologyMismatch("gradient shapes do not match the network".into()));
    }
    if state.first.len() != net.param_count() {
        return Err(Error::dim("adam state", net.param_count(), state.first.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    let mut offset = 0;
    let (first, second) = (&mut state.first, &mut state.second);
    let mut apply = |p: &mut f64, g: f64, i: usize| {
        first[i] = b1 * first[i] + (1.0 - b1) * g;
        second[i] = b2 * second[i] + (1.0 - b2) * g * g;
        *p -= lr * (first[i] / c1) / ((second[i] / c2).sqrt() + eps);
    };
    for (layer, grad) in net.layers_mut().iter_mut().zip(&grads.layers) {
        for (p, &g) in layer.weight.iter_mut().zip(grad.weight.iter()) {
            apply(p, g, offset);
            offset += 1;
        }
        for (p, &g) in layer.bias.iter_mut().zip(grad.bias.iter()) {
            apply(p, g, offset);
            offset += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut state = AdamState::with_params(2, 3e-4, 0.9, 0.999, 1e-8);
        let mut params = vec![1.0, -2.0];
        state.update(&mut params, &[0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0]);

        state.update(&mut params, &[0.5, 0.5]).unwrap();
        let (m, v) = (state.first_moment()[0], state.second_moment()[0]);
        state.update(&mut params, &[0.0, 0.0]).unwrap();
        assert!((state.first_moment()[0] - 0.9 * m).abs() < 1e-15);
        assert!((state.second_moment()[0] - 0.999 * v).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut state = AdamState::with_params(3, 1e-3, 0.9, 0.999, 1e-8);
        let mut params = vec![0.0; 3];
        state.update(&mut params, &[2.0, -0.01, 40.0]).unwrap();
        for (p, s) in params.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((p - s * 1e-3).abs() < 1e-8, "{p}");
        }
    }

    #[test]
    fn constant_gradient_steps_converge_to_lr() {
        let mut state = AdamState::with_params(1, 3e-4, 0.9, 0.999, 1e-8);
        let mut params = vec![0.0];
        let mut last = 0.0;
        for _ in 0..10_000 {
            last = params[0];
            state.update(&mut params, &[0.37]).unwrap();
        }
        let delta = (params[0] - last).abs();
        assert!((delta - 3e-4).abs() / 3e-4 < 0.05, "{delta}");
    }

    #[test]
    fn net_step_matches_flat_update() {
        let mut net = DenseNet::zeros(&[2, 2], Activation::leaky_relu(), Activation::Linear).unwrap();
        net.set_params_flat(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let mut grads = super::super::NetGrads::zeros_like(&net);
        grads.layers[0].weight[[0, 1]] = 1.0;
        grads.layers[0].bias[1] = -1.0;
        let mut flat = net.params_flat();
        let mut reference = AdamState::new(&net, 1e-2);
        reference.update(&mut flat, &grads.flat()).unwrap();
        let mut state = AdamState::new(&net, 1e-2);
        adam_step(&mut net, &grads, &mut state).unwrap();
        assert_eq!(net.params_flat(), flat);
        assert_eq!(state, reference);

        let other = DenseNet::zeros(&[2, 3], Activation::leaky_relu(), Activation::Linear).unwrap();
        assert!(adam_step(&mut net, &super::super::NetGrads::zeros_like(&other), &mut state).is_err());
    }
}
