use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pointwise nonlinearity. All but `Identity` are smooth, so Jacobians are
/// defined everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Silu,
    Softplus,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Silu => x * sigmoid(x),
            Activation::Softplus => softplus(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Softplus => sigmoid(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
            Activation::Softplus => "softplus",
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Fully connected layer `y = act(W·x + b)`, `W` stored `out × in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::shape(format!(
                "layer {in_dim}->{out_dim} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
            .collect()
    }

    fn linear(&self, dx: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .map(|row| row.iter().zip(dx).map(|(w, d)| w * d).sum())
            .collect()
    }

    fn linear_transposed(&self, dy: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim];
        for (row, &g) in self.weights.chunks_exact(self.in_dim).zip(dy) {
            if g == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * g;
            }
        }
        out
    }
}

/// Per-layer gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.bias)
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::shape(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Random init with variance `1/fan_in` (LeCun normal) and zero biases.
    pub fn new_random<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let scale = (1.0 / w[0] as f64).sqrt();
                let weights = (0..w[0] * w[1])
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Dense {
                    in_dim: w[0],
                    out_dim: w[1],
                    weights,
                    bias: vec![0.0; w[1]],
                    activation: if i == last { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    /// Rounds every parameter to the nearest `f32` so checkpoints round-trip exactly.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer
                .affine(&h)
                .into_iter()
                .map(|a| layer.activation.apply(a))
                .collect();
        }
        h
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let a = layer.affine(&h);
            let next = a.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(a);
        }
        Trace {
            inputs,
            pre,
            output: h,
        }
    }

    /// Forward-mode Jacobian-vector product `J(x)·dx`.
    pub fn jvp(&self, x: &[f64], dx: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let mut dh = dx.to_vec();
        for layer in &self.layers {
            let a = layer.affine(&h);
            let da = layer.linear(&dh);
            dh = a
                .iter()
                .zip(&da)
                .map(|(&ai, &dai)| layer.activation.derivative(ai) * dai)
                .collect();
            h = a.into_iter().map(|ai| layer.activation.apply(ai)).collect();
        }
        dh
    }

    /// Reverse-mode vector-Jacobian product `J(x)ᵀ·v`.
    pub fn vjp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let trace = self.forward_trace(x);
        self.backprop(&trace, v, None)
    }

    /// Backpropagates `dy` through a recorded pass, accumulating parameter
    /// gradients into `grads`, and returns the input gradient.
    pub fn backward(&self, trace: &Trace, dy: &[f64], grads: &mut Gradients) -> Vec<f64> {
        self.backprop(trace, dy, Some(grads))
    }

    fn backprop(&self, trace: &Trace, dy: &[f64], mut grads: Option<&mut Gradients>) -> Vec<f64> {
        let mut g = dy.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let da: Vec<f64> = trace.pre[i]
                .iter()
                .zip(&g)
                .map(|(&a, &gi)| layer.activation.derivative(a) * gi)
                .collect();
            if let Some(grads) = grads.as_deref_mut() {
                let input = &trace.inputs[i];
                for (o, &dao) in da.iter().enumerate() {
                    grads.bias[i][o] += dao;
                    if dao == 0.0 {
                        continue;
                    }
                    let row = &mut grads.weights[i][o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (w, &xi) in row.iter_mut().zip(input) {
                        *w += dao * xi;
                    }
                }
            }
            g = layer.linear_transposed(&da);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn seeded(sizes: &[usize], act: Activation) -> Mlp {
        let mut rng = RngStream::new(3, 0).rng();
        let mut net = Mlp::new_random(sizes, act, Activation::Identity, &mut rng);
        for l in &mut net.layers {
            for b in &mut l.bias {
                *b = 0.1;
            }
        }
        net
    }

    #[test]
    fn hand_traced_forward() {
        let l1 = Dense::new(2, 2, vec![1.0, -1.0, 0.5, 2.0], vec![0.0, 0.1], Activation::Tanh).unwrap();
        let l2 = Dense::new(2, 1, vec![2.0, -3.0], vec![0.5], Activation::Identity).unwrap();
        let net = Mlp::from_layers(vec![l1, l2]).unwrap();
        let x = [0.3, -0.2];
        let h0 = (0.3f64 + 0.2).tanh();
        let h1 = (0.1f64 + 0.15 - 0.4).tanh();
        let expected = 0.5 + 2.0 * h0 - 3.0 * h1;
        assert!((net.forward(&x)[0] - expected).abs() < 1e-15);
        assert_eq!(net.forward_trace(&x).output, net.forward(&x));
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in [Activation::Tanh, Activation::Silu, Activation::Softplus, Activation::Identity] {
            for &x in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn jvp_vjp_adjoint() {
        let net = seeded(&[3, 5, 4], Activation::Silu);
        let x = [0.2, -0.5, 1.0];
        let u = [1.0, 0.3, -0.7];
        let v = [0.5, -1.0, 0.25, 2.0];
        let lhs: f64 = v.iter().zip(net.jvp(&x, &u)).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(net.vjp(&x, &v)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    // A 1-3-1 network has exactly 10 parameters.
    #[test]
    fn parameter_gradients_match_central_differences() {
        let mut net = seeded(&[1, 3, 1], Activation::Tanh);
        assert_eq!(net.param_count(), 10);
        let x = [0.8];
        let target = 0.3;
        let loss = |n: &Mlp| {
            let y = n.forward(&x)[0];
            0.5 * (y - target) * (y - target)
        };
        let trace = net.forward_trace(&x);
        let mut grads = Gradients::zeros_like(&net);
        net.backward(&trace, &[trace.output[0] - target], &mut grads);
        let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();
        let h = 1e-3;
        let mut idx = 0;
        for t in 0..4 {
            for j in 0..net.tensors_mut()[t].len() {
                let orig = net.tensors_mut()[t][j];
                net.tensors_mut()[t][j] = orig + h;
                let up = loss(&net);
                net.tensors_mut()[t][j] = orig - h;
                let down = loss(&net);
                net.tensors_mut()[t][j] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic[idx];
                assert!((fd - a).abs() <= 1e-4 * a.abs().max(1e-3), "param {idx}: {fd} vs {a}");
                idx += 1;
            }
        }
    }

    #[test]
    fn round_to_f32_is_idempotent() {
        let mut net = seeded(&[2, 3, 2], Activation::Tanh);
        net.round_to_f32();
        let once = net.clone();
        net.round_to_f32();
        assert_eq!(once, net);
    }
}
