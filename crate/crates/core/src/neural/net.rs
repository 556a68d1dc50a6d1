use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slope of the negative branch of LeakyReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu { slope: LEAKY_SLOPE }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine map `y = x·W + b`, with `W` stored as `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

/// Feed-forward chain of dense layers: `hidden` activation between layers,
/// `output` activation on the last one.
#[derive(Debug)]
pub struct DenseNet {
    sizes: Vec<usize>,
    layers: Vec<DenseLayer>,
    hidden: Activation,
    output: Activation,
    id: u64,
    version: u64,
}

impl Clone for DenseNet {
    fn clone(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            layers: self.layers.clone(),
            hidden: self.hidden,
            output: self.output,
            id: next_id(),
            version: 0,
        }
    }
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes
            && self.hidden == other.hidden
            && self.output == other.output
            && self.layers == other.layers
    }
}

/// Intermediates of one forward pass, consumed by one backward pass.
#[derive(Debug)]
pub struct GradientTape {
    net_id: u64,
    version: u64,
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl GradientTape {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

/// Parameter gradients laid out like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<DenseLayer>,
}

impl NetGrads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }
}

impl DenseNet {
    /// Initializes weights and biases from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weight.nrows() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer.weight.mapv_inplace(|_| dist.sample(rng));
            layer.bias.mapv_inplace(|_| dist.sample(rng));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("a network needs at least two layer sizes".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("layer sizes must be positive: {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer {
                weight: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            hidden,
            output,
            id: next_id(),
            version: 0,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access to the parameters; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version += 1;
        &mut self.layers
    }

    /// `Σ_l (n_l·n_{l+1} + n_{l+1})`.
    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::dim("flat parameters", self.param_count(), params.len()));
        }
        let mut it = params.iter();
        for l in self.layers_mut() {
            l.weight.iter_mut().for_each(|w| *w = *it.next().expect("length checked"));
            l.bias.iter_mut().for_each(|b| *b = *it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn same_topology(&self, other: &DenseNet) -> bool {
        self.sizes == other.sizes && self.hidden == other.hidden && self.output == other.output
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.ncols()));
        }
        if x.nrows() == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(())
    }

    /// Batched forward pass over rows of `x`, recording a tape.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, GradientTape)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weight);
            z += &layer.bias;
            let act = self.activation(i);
            let a = z.mapv(|v| act.apply(v));
            inputs.push(current);
            pre_activations.push(z);
            current = a;
        }
        Ok((
            current,
            GradientTape {
                net_id: self.id,
                version: self.version,
                inputs,
                pre_activations,
            },
        ))
    }

    /// Batched forward pass without a tape.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut current = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weight);
            z += &layer.bias;
            let act = self.activation(i);
            z.mapv_inplace(|v| act.apply(v));
            current = z;
        }
        Ok(current)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, GradientTape)> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let (y, tape) = self.forward_batch(view)?;
        Ok((y.into_raw_vec_and_offset().0, tape))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.predict_batch(view)?.into_raw_vec_and_offset().0)
    }

    fn check_tape(&self, tape: &GradientTape, upstream: &ArrayView2<f64>) -> Result<()> {
        if tape.net_id != self.id || tape.version != self.version {
            return Err(Error::StaleTape);
        }
        if upstream.ncols() != self.output_dim() {
            return Err(Error::dim("upstream gradient", self.output_dim(), upstream.ncols()));
        }
        if upstream.nrows() != tape.batch_size() {
            return Err(Error::dim("upstream batch", tape.batch_size(), upstream.nrows()));
        }
        Ok(())
    }

    fn backward_impl(
        &self,
        tape: GradientTape,
        upstream: ArrayView2<f64>,
        with_params: bool,
    ) -> Result<(Option<NetGrads>, Array2<f64>)> {
        self.check_tape(&tape, &upstream)?;
        let mut delta = upstream.to_owned();
        let mut grads = Vec::with_capacity(if with_params { self.layers.len() } else { 0 });
        for i in (0..self.layers.len()).rev() {
            let act = self.activation(i);
            if act != Activation::Linear {
                delta.zip_mut_with(&tape.pre_activations[i], |d, &z| *d *= act.derivative(z));
            }
            if with_params {
                grads.push(DenseLayer {
                    weight: tape.inputs[i].t().dot(&delta),
                    bias: delta.sum_axis(Axis(0)),
                });
            }
            delta = delta.dot(&self.layers[i].weight.t());
        }
        grads.reverse();
        Ok((with_params.then_some(NetGrads { layers: grads }), delta))
    }

    /// Reverse pass: parameter gradients and `dL/dx` for each row.
    pub fn backward(&self, tape: GradientTape, upstream: ArrayView2<f64>) -> Result<(NetGrads, Array2<f64>)> {
        let (grads, dx) = self.backward_impl(tape, upstream, true)?;
        Ok((grads.expect("requested"), dx))
    }

    /// Reverse pass computing only `dL/dx`.
    pub fn backward_input(&self, tape: GradientTape, upstream: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.backward_impl(tape, upstream, false)?.1)
    }

    /// Jacobian `∂y/∂x` at a single input, shape `out × in`.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Array2<f64>> {
        let out = self.output_dim();
        let rows = Array2::from_shape_fn((out, x.len()), |(_, j)| x[j]);
        let (_, tape) = self.forward_batch(rows.view())?;
        self.backward_input(tape, Array2::eye(out).view())
    }
}

/// Serialized form: topology tags and flattened parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDocument {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    params: Vec<f64>,
}

impl Serialize for DenseNet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        NetDocument {
            layer_sizes: self.sizes.clone(),
            hidden_activation: self.hidden,
            output_activation: self.output,
            params: self.params_flat(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenseNet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = NetDocument::deserialize(deserializer)?;
        let mut net = DenseNet::zeros(&doc.layer_sizes, doc.hidden_activation, doc.output_activation)
            .map_err(D::Error::custom)?;
        net.set_params_flat(&doc.params).map_err(D::Error::custom)?;
        Ok(net)
    }
}

/// Blends `target ← τ·online + (1−τ)·target` parameter-wise.
pub fn soft_update(target: &mut DenseNet, online: &DenseNet, tau: f64) -> Result<()> {
    if !target.same_topology(online) {
        return Err(Error::TopologyMismatch(format!(
            "{:?} vs {:?}",
            target.layer_sizes(),
            online.layer_sizes()
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must be in [0, 1], got {tau}")));
    }
    for (t, o) in target.layers_mut().iter_mut().zip(&online.layers) {
        t.weight.zip_mut_with(&o.weight, |a, &b| *a = tau * b + (1.0 - tau) * *a);
        t.bias.zip_mut_with(&o.bias, |a, &b| *a = tau * b + (1.0 - tau) * *a);
    }
    Ok(())
}
