use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, check_len, dot, NnError, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the activated output `y`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

/// One dense layer: `activation(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "LayerRepr<T>")]
pub struct Layer<T> {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    /// Row-major `(out_dim, in_dim)`.
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(NnError::InvalidNetwork(
                "layer dimensions must be positive".into(),
            ));
        }
        check_len("layer weights", in_dim * out_dim, weights.len())?;
        check_len("layer bias", out_dim, bias.len())?;
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("layer parameters"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias,
        })
    }

    /// Uniform in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]` for weights and biases.
    pub fn init_uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dimensions must be positive");
        let limit = 1.0 / (in_dim as f64).sqrt();
        let mut draw = || T::lit(rng.gen_range(-limit..=limit));
        let weights = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    fn forward_into(&self, x: &[T], pre: &mut Vec<T>, post: &mut Vec<T>) {
        pre.clear();
        post.clear();
        for (row, &b) in self.weights.chunks_exact(self.in_dim).zip(&self.bias) {
            let z = dot(row, x) + b;
            pre.push(z);
            post.push(self.activation.apply(z));
        }
    }
}

/// Per-layer gradient entries, shape-congruent with [`Layer`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// One gradient entry per network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer<T> {
    layers: Vec<LayerGrad<T>>,
}

impl<T: Scalar> GradBuffer<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![T::zero(); l.weights.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerGrad<T>] {
        &mut self.layers
    }

    pub fn fill_zero(&mut self) {
        self.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn scale(&mut self, s: T) {
        self.iter_mut().for_each(|g| *g *= s);
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    pub fn len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn congruent_with(&self, net: &Mlp<T>) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }
}

/// Reusable activation storage for one forward/backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
    delta: Vec<T>,
    next_delta: Vec<T>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            pre: Vec::new(),
            post: Vec::new(),
            delta: Vec::new(),
            next_delta: Vec::new(),
        }
    }

    /// Output of the last recorded forward pass.
    pub fn output(&self) -> &[T] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "MlpRepr<T>")]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

// Deserialization goes through the validating constructors.
#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct LayerRepr<T> {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Scalar> TryFrom<LayerRepr<T>> for Layer<T> {
    type Error = NnError;

    fn try_from(r: LayerRepr<T>) -> Result<Self> {
        Layer::new(r.in_dim, r.out_dim, r.activation, r.weights, r.bias)
    }
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct MlpRepr<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> TryFrom<MlpRepr<T>> for Mlp<T> {
    type Error = NnError;

    fn try_from(r: MlpRepr<T>) -> Result<Self> {
        Mlp::new(r.layers)
    }
}

impl<T: Scalar> Mlp<T> {
    /// Validates that dimensions chain and the output layer is linear.
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(NnError::InvalidNetwork(format!(
                    "layer output {} does not feed next input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        if let Some(last) = layers.last() {
            if last.activation != Activation::Identity {
                return Err(NnError::InvalidNetwork(
                    "output layer must use the identity activation".into(),
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Zero-depth network: returns its input unchanged.
    pub fn identity() -> Self {
        Self { layers: Vec::new() }
    }

    /// Randomly initialized network with `sizes = [input, hidden.., output]`.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n {
                    Activation::Identity
                } else {
                    hidden
                };
                Layer::init_uniform(w[0], w[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.layers.first().map(|l| l.in_dim)
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    /// True when every parameter has the same bit pattern as in `other`.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.in_dim == b.in_dim && a.out_dim == b.out_dim && a.activation == b.activation
            })
            && self
                .params()
                .zip(other.params())
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }

    /// `self <- (1 - tau) * self + tau * source`, elementwise.
    pub fn blend_toward(&mut self, source: &Self, tau: T) {
        assert_eq!(self.num_params(), source.num_params(), "shape mismatch");
        let keep = T::one() - tau;
        for (t, &s) in self.params_mut().zip(source.params()) {
            *t = keep * *t + tau * s;
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        match self.in_dim() {
            Some(d) => check_len("network input", d, input.len()),
            None => Ok(()),
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        self.forward_tape(input, &mut tape)?;
        Ok(match tape.post.pop() {
            Some(out) => out,
            None => input.to_vec(),
        })
    }

    /// Forward pass that records activations for a later backward pass.
    pub fn forward_tape<'t>(&self, input: &[T], tape: &'t mut Tape<T>) -> Result<&'t [T]> {
        self.check_input(input)?;
        let n = self.layers.len();
        tape.pre.resize_with(n, Vec::new);
        tape.post.resize_with(n, Vec::new);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = tape.post.split_at_mut(i);
            let x = if i == 0 { input } else { &done[i - 1] };
            layer.forward_into(x, &mut tape.pre[i], &mut rest[0]);
        }
        Ok(tape.output())
    }

    /// Exact parameter gradient of `upstream · f(input)`.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<GradBuffer<T>> {
        let mut tape = Tape::new();
        let mut grads = GradBuffer::zeros_like(self);
        self.forward_tape(input, &mut tape)?;
        self.backward_tape(input, &mut tape, upstream, &mut grads, None)?;
        Ok(grads)
    }

    /// Accumulates parameter gradients into `grads` using activations recorded
    /// by [`Mlp::forward_tape`] on the same `input`. When `input_grad` is given
    /// it is overwritten with the gradient with respect to the input.
    pub fn backward_tape(
        &self,
        input: &[T],
        tape: &mut Tape<T>,
        upstream: &[T],
        grads: &mut GradBuffer<T>,
        input_grad: Option<&mut [T]>,
    ) -> Result<()> {
        let n = self.layers.len();
        if n == 0 {
            check_len("upstream gradient", input.len(), upstream.len())?;
            if let Some(g) = input_grad {
                check_len("input gradient", input.len(), g.len())?;
                g.copy_from_slice(upstream);
            }
            return Ok(());
        }
        check_len("upstream gradient", self.layers[n - 1].out_dim, upstream.len())?;
        if !grads.congruent_with(self) {
            return Err(NnError::InvalidNetwork(
                "gradient buffer does not match network".into(),
            ));
        }
        if tape.post.len() != n {
            return Err(NnError::InvalidNetwork(
                "tape was not recorded for this network".into(),
            ));
        }
        let Tape {
            pre,
            post,
            delta,
            next_delta,
        } = tape;
        delta.clear();
        delta.extend_from_slice(upstream);
        let want_input = input_grad.is_some();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            for ((d, &z), &y) in delta.iter_mut().zip(&pre[i]).zip(&post[i]) {
                *d *= layer.activation.derivative(z, y);
            }
            let x = if i == 0 { input } else { &post[i - 1] };
            let g = &mut grads.layers[i];
            for ((gw_row, gb), &d) in g
                .weights
                .chunks_exact_mut(layer.in_dim)
                .zip(g.bias.iter_mut())
                .zip(delta.iter())
            {
                if d != T::zero() {
                    axpy(d, x, gw_row);
                    *gb += d;
                }
            }
            if i > 0 || want_input {
                next_delta.clear();
                next_delta.resize(layer.in_dim, T::zero());
                for (row, &d) in layer.weights.chunks_exact(layer.in_dim).zip(delta.iter()) {
                    if d != T::zero() {
                        axpy(d, row, next_delta);
                    }
                }
                std::mem::swap(delta, next_delta);
            }
        }
        if let Some(g) = input_grad {
            check_len("input gradient", input.len(), g.len())?;
            g.copy_from_slice(delta);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(in_dim: usize, out_dim: usize, act: Activation, w: &[f64], b: &[f64]) -> Layer<f64> {
        Layer::new(in_dim, out_dim, act, w.to_vec(), b.to_vec()).unwrap()
    }

    #[test]
    fn single_affine_layer() {
        let net = Mlp::new(vec![layer(1, 1, Activation::Identity, &[2.0], &[1.0])]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn zero_depth_is_identity() {
        let net = Mlp::<f64>::identity();
        assert_eq!(net.forward(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn two_layer_relu_by_hand() {
        // h = relu([[1, -1], [0.5, 2]] x + [0, -1]); y = [3, -2] h + 0.5
        // x = (2, 1): pre = (1, 2) -> h = (1, 2) -> y = 3 - 4 + 0.5 = -0.5
        // x = (1, 2): pre = (-1, 3.5) -> h = (0, 3.5) -> y = -7 + 0.5 = -6.5
        let net = Mlp::new(vec![
            layer(2, 2, Activation::Relu, &[1.0, -1.0, 0.5, 2.0], &[0.0, -1.0]),
            layer(2, 1, Activation::Identity, &[3.0, -2.0], &[0.5]),
        ])
        .unwrap();
        assert_eq!(net.forward(&[2.0, 1.0]).unwrap(), vec![-0.5]);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![-6.5]);
    }

    #[test]
    fn squared_error_gradient_by_hand() {
        // L = 0.5 (y - t)^2 with y = w x + b, w = 1, b = 0, x = 2, t = 3
        let net = Mlp::new(vec![layer(1, 1, Activation::Identity, &[1.0], &[0.0])]).unwrap();
        let y = net.forward(&[2.0]).unwrap()[0];
        let g = net.backward(&[2.0], &[y - 3.0]).unwrap();
        assert_eq!(g.layers()[0].weights, vec![-2.0]);
        assert_eq!(g.layers()[0].bias, vec![-1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f64>::random(&[4, 6, 3], Activation::Tanh, &mut rng);
        let g = net.backward(&[0.1, 0.2, -0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert_eq!(g.len(), net.num_params());
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::new(vec![layer(2, 1, Activation::Identity, &[1.0, 1.0], &[0.0])]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(NnError::Shape { .. })));
        assert!(matches!(
            net.backward(&[1.0, 2.0], &[1.0, 1.0]),
            Err(NnError::Shape { .. })
        ));
        let bad = Mlp::new(vec![
            layer(2, 3, Activation::Relu, &[0.0; 6], &[0.0; 3]),
            layer(2, 1, Activation::Identity, &[0.0; 2], &[0.0]),
        ]);
        assert!(matches!(bad, Err(NnError::InvalidNetwork(_))));
        let nonlinear_out = Mlp::new(vec![layer(1, 1, Activation::Relu, &[1.0], &[0.0])]);
        assert!(nonlinear_out.is_err());
    }

    #[test]
    fn input_gradient_matches_weights_for_linear_net() {
        let net = Mlp::new(vec![layer(3, 1, Activation::Identity, &[0.5, -1.0, 2.0], &[0.0])]).unwrap();
        let mut tape = Tape::new();
        let mut grads = GradBuffer::zeros_like(&net);
        let x = [1.0, 1.0, 1.0];
        net.forward_tape(&x, &mut tape).unwrap();
        let mut gx = [0.0; 3];
        net.backward_tape(&x, &mut tape, &[1.0], &mut grads, Some(&mut gx))
            .unwrap();
        assert_eq!(gx, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = Mlp::<f64>::random(&[16, 8, 2], Activation::Relu, &mut ChaCha8Rng::seed_from_u64(1));
        let b = Mlp::<f64>::random(&[16, 8, 2], Activation::Relu, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(a.bits_eq(&b));
        let first = &a.layers()[0];
        assert!(first.weights().iter().all(|w| w.abs() <= 0.25));
        let second = &a.layers()[1];
        assert!(second.weights().iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
    }

    #[test]
    fn blend_toward_endpoints() {
        let mut target = Mlp::new(vec![layer(1, 1, Activation::Identity, &[0.0], &[0.0])]).unwrap();
        let online = Mlp::new(vec![layer(1, 1, Activation::Identity, &[4.0], &[2.0])]).unwrap();
        target.blend_toward(&online, 0.5);
        assert_eq!(target.layers()[0].weights(), &[2.0]);
        assert_eq!(target.layers()[0].bias(), &[1.0]);
    }

    #[test]
    fn deserialization_validates_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::<f64>::random(&[3, 4, 2], Activation::Tanh, &mut rng);
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp<f64> = serde_json::from_str(&json).unwrap();
        assert!(back.bits_eq(&net));

        let short_bias = r#"{"layers":[{"in_dim":1,"out_dim":2,"activation":"identity","weights":[1.0,2.0],"bias":[0.0]}]}"#;
        assert!(serde_json::from_str::<Mlp<f64>>(short_bias).is_err());
        let unchained = r#"{"layers":[
            {"in_dim":1,"out_dim":2,"activation":"relu","weights":[1.0,2.0],"bias":[0.0,0.0]},
            {"in_dim":3,"out_dim":1,"activation":"identity","weights":[1.0,1.0,1.0],"bias":[0.0]}]}"#;
        assert!(serde_json::from_str::<Mlp<f64>>(unchained).is_err());
    }
}
