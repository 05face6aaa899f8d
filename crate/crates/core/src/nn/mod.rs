//! Layers, losses and optimizers built on the tensor engine.

mod optim;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Graph, Padding, Scalar, Tensor, Var};

pub use optim::{adam_step, sgd_step, OptimizerConfig, OptimizerKind, OptimizerState};

/// Ordered collection of trainable tensors. Layers refer to their
/// tensors by index, so build order is also storage order.
#[derive(Clone, Debug, Default)]
pub struct Params<T> {
    tensors: Vec<Arc<Tensor<T>>>,
    names: Vec<String>,
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Params {
            tensors: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        self.tensors.push(Arc::new(tensor.with_requires_grad(true)));
        self.names.push(name.into());
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor<T> {
        &self.tensors[i]
    }

    /// Mutable access; clones the storage if a graph still shares it.
    pub fn get_mut(&mut self, i: usize) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.tensors[i])
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter().map(|t| &**t))
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Registers every tensor as a graph leaf (without copying).
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.shared_leaf(Arc::clone(t))).collect()
    }

    /// Mutable data slices of every tensor, in storage order.
    pub fn data_mut(&mut self) -> Vec<&mut [T]> {
        self.tensors
            .iter_mut()
            .map(|t| Arc::make_mut(t).data_mut())
            .collect()
    }
}

/// He-uniform sample: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub fn he_uniform<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dLayer {
    pub weight: usize,
    pub bias: Option<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel.0 * kernel.1;
        let w = he_uniform(
            vec![out_channels, in_channels, kernel.0, kernel.1],
            fan_in,
            rng,
        );
        let weight = params.push(format!("{name}.weight"), w);
        let bias = params.push(format!("{name}.bias"), Tensor::zeros(vec![out_channels]));
        Conv2dLayer {
            weight,
            bias: Some(bias),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel.0 * self.kernel.1
            + if self.bias.is_some() { self.out_channels } else { 0 }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], x: Var) -> Result<Var> {
        g.conv2d(
            x,
            bound[self.weight],
            self.bias.map(|b| bound[b]),
            self.stride,
            self.padding,
        )
    }
}

/// Learnable up-sampling: transposed convolution with kernel equal to
/// stride, channel count preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTransposeLayer {
    pub weight: usize,
    pub channels: usize,
    pub stride: (usize, usize),
}

impl ConvTransposeLayer {
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        channels: usize,
        stride: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        // each output pixel receives exactly one tap per input channel
        let w = he_uniform(vec![channels, channels, stride.0, stride.1], channels, rng);
        let weight = params.push(format!("{name}.weight"), w);
        ConvTransposeLayer {
            weight,
            channels,
            stride,
        }
    }

    pub fn param_count(&self) -> usize {
        self.channels * self.channels * self.stride.0 * self.stride.1
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], x: Var) -> Result<Var> {
        g.conv2d_transposed(x, bound[self.weight], self.stride)
    }
}

/// Two 3x3 same-padded convolutions, each followed by ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub conv1: Conv2dLayer,
    pub conv2: Conv2dLayer,
}

impl ConvBlock {
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let conv = |params: &mut Params<T>, suffix: &str, cin, rng: &mut _| {
            Conv2dLayer::new(
                params,
                &format!("{name}.{suffix}"),
                cin,
                out_channels,
                (3, 3),
                (1, 1),
                Padding::Same,
                rng,
            )
        };
        let conv1 = conv(params, "conv1", in_channels, rng);
        let conv2 = conv(params, "conv2", out_channels, rng);
        ConvBlock { conv1, conv2 }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count()
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, bound: &[Var], x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, bound, x)?;
        let h = g.relu(h)?;
        let h = self.conv2.forward(g, bound, h)?;
        g.relu(h)
    }
}

/// `1/(2N) * sum((y - y_hat)^2)`, averaged over every element of the batch.
pub fn mse_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var> {
    g.mse_loss(pred, target)
}

/// What the network is trained to output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Predict the multiple-free gather `y`.
    #[default]
    Direct,
    /// Predict the multiples `x - y`; the demultiple result is `x - prediction`.
    Inverse,
}

impl Objective {
    /// Training target for an input `x` with multiple-free label `y`.
    pub fn target(self, x: &[f32], y: &[f32]) -> Vec<f32> {
        match self {
            Objective::Direct => y.to_vec(),
            Objective::Inverse => x.iter().zip(y).map(|(a, b)| a - b).collect(),
        }
    }

    /// Demultiple result from the input and the network prediction.
    pub fn demultiple(self, x: &[f32], prediction: &[f32]) -> Vec<f32> {
        match self {
            Objective::Direct => prediction.to_vec(),
            Objective::Inverse => x.iter().zip(prediction).map(|(a, p)| a - p).collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Direct => "direct",
            Objective::Inverse => "inverse",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_values() {
        let mut g = Graph::<f64>::new();
        let p = g.param(Tensor::new(vec![1], vec![0.0]).unwrap());
        let t = g.constant(Tensor::new(vec![1], vec![2.0]).unwrap());
        let l = mse_loss(&mut g, p, t).unwrap();
        assert_eq!(g.value(l).data(), &[2.0]);
        g.backward(l).unwrap();
        assert_eq!(g.grad(p).unwrap(), &[-2.0]);

        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::full(vec![3, 2], 0.7));
        let b = g.param(Tensor::full(vec![3, 2], 0.7));
        let l = mse_loss(&mut g, a, b).unwrap();
        assert_eq!(g.value(l).data(), &[0.0]);
    }

    #[test]
    fn mse_matches_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut reference = 0.0;
        for i in 0..60 {
            reference += (t[i] - p[i]) * (t[i] - p[i]);
        }
        reference /= 120.0;
        let mut g = Graph::<f64>::new();
        let pv = g.constant(Tensor::new(vec![2, 30], p).unwrap());
        let tv = g.constant(Tensor::new(vec![2, 30], t).unwrap());
        let l = mse_loss(&mut g, pv, tv).unwrap();
        assert!((g.value(l).data()[0] - reference).abs() <= 1e-7);
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let err = grad_check(|g, v| g.mse_loss(v[0], v[1]), &[vec![2, 3, 4], vec![2, 3, 4]], 5)
            .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn mse_rejects_shape_mismatch() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(vec![2, 2]));
        let b = g.constant(Tensor::zeros(vec![4]));
        assert!(mse_loss(&mut g, a, b).is_err());
    }

    #[test]
    fn conv_block_preserves_spatial_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = Params::<f32>::new();
        let block = ConvBlock::new(&mut params, "b", 3, 5, &mut rng);
        assert_eq!(params.count(), block.param_count());
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let x = g.constant(Tensor::full(vec![2, 3, 6, 10], 0.5));
        let y = block.forward(&mut g, &bound, x).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 5, 6, 10]);
    }

    #[test]
    fn objective_targets() {
        let x = [1.0, 2.0];
        let y = [0.5, 2.0];
        assert_eq!(Objective::Direct.target(&x, &y), vec![0.5, 2.0]);
        assert_eq!(Objective::Inverse.target(&x, &y), vec![0.5, 0.0]);
        let m = Objective::Inverse.target(&x, &y);
        assert_eq!(Objective::Inverse.demultiple(&x, &m), y.to_vec());
    }
}
