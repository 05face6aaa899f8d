use std::sync::Arc;

use crate::error::{Error, Result};

use super::kernels::{self, ConvGeom, Padding};
use super::ops;
use super::{Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    ConvTransposed {
        input: Var,
        kernel: Var,
        geom: ConvGeom,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Bilinear {
        input: Var,
        factor: (usize, usize),
    },
    Relu(Var),
    Sigmoid(Var),
    Concat(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Records operations in creation order, which is a topological order of
/// the computation. Backward walks the tape once in reverse.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    checked: bool,
    backward_done: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            checked: false,
            backward_done: false,
        }
    }

    /// In checked mode every op rejects non-finite outputs.
    pub fn checked(mut self, checked: bool) -> Self {
        self.checked = checked;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. Whether it receives a gradient follows the tensor's
    /// `requires_grad` flag.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        self.shared_leaf(Arc::new(tensor))
    }

    /// Adds a leaf without copying its data.
    pub fn shared_leaf(&mut self, tensor: Arc<Tensor<T>>) -> Var {
        let requires_grad = tensor.requires_grad();
        self.push_raw(tensor, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shared_value(&self, v: Var) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes[v.0].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the loss with respect to a leaf, once backward ran.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    /// The leaf's tensor with its gradient attached.
    pub fn export(&self, v: Var) -> Tensor<T> {
        let node = &self.nodes[v.0];
        let mut t = (*node.value).clone();
        t.grad = node.grad.clone();
        t
    }

    fn push_raw(&mut self, value: Arc<Tensor<T>>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op, inputs: &[Var]) -> Result<Var> {
        if self.checked && !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(Arc::new(value), op, requires_grad))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Var> {
        let (x, k) = (self.value(input), self.value(kernel));
        let geom = ConvGeom::conv(x.dims4("conv2d")?, k.dims4("conv2d")?, stride, padding)?;
        let out = ops::conv2d(x, k, bias.map(|b| self.value(b)), stride, padding)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.push(
            "conv2d",
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            &inputs,
        )
    }

    pub fn conv2d_transposed(
        &mut self,
        input: Var,
        kernel: Var,
        stride: (usize, usize),
    ) -> Result<Var> {
        let (x, k) = (self.value(input), self.value(kernel));
        let geom = ConvGeom::transposed(
            x.dims4("conv2d_transposed")?,
            k.dims4("conv2d_transposed")?,
            stride,
        )?;
        let out = ops::conv2d_transposed(x, k, stride)?;
        self.push(
            "conv2d_transposed",
            out,
            Op::ConvTransposed {
                input,
                kernel,
                geom,
            },
            &[input, kernel],
        )
    }

    pub fn maxpool2d(&mut self, input: Var, kernel: (usize, usize)) -> Result<Var> {
        let x = self.value(input);
        let dims = x.dims4("maxpool2d")?;
        let (out, argmax) = kernels::maxpool_forward(x.data(), dims, kernel)?;
        let [n, c, h, w] = dims;
        let out = Tensor::new(vec![n, c, h / kernel.0, w / kernel.1], out)?;
        self.push("maxpool2d", out, Op::MaxPool { input, argmax }, &[input])
    }

    pub fn bilinear_upsample(&mut self, input: Var, factor: (usize, usize)) -> Result<Var> {
        let out = ops::bilinear_upsample(self.value(input), factor)?;
        self.push("bilinear_upsample", out, Op::Bilinear { input, factor }, &[input])
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let out = ops::relu(self.value(input));
        self.push("relu", out, Op::Relu(input), &[input])
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        let out = ops::sigmoid(self.value(input));
        self.push("sigmoid", out, Op::Sigmoid(input), &[input])
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        self.push("concat_channels", out, Op::Concat(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::sub(self.value(a), self.value(b))?;
        self.push("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::mul(self.value(a), self.value(b))?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total = self
            .value(input)
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        self.push("sum", Tensor::scalar(total), Op::Sum(input), &[input])
    }

    /// `1/(2N) * sum((target - pred)^2)` over all `N` elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::shape(
                "mse_loss",
                format!("prediction {:?} vs target {:?}", p.shape(), t.shape()),
            ));
        }
        let sq = p
            .data()
            .iter()
            .zip(t.data())
            .fold(T::zero(), |acc, (&a, &b)| acc + (b - a) * (b - a));
        let two_n = T::from_usize(2 * p.numel()).expect("element count fits");
        self.push(
            "mse_loss",
            Tensor::scalar(sq / two_n),
            Op::Mse { pred, target },
            &[pred, target],
        )
    }

    /// Reverse-mode accumulation from a scalar loss. Every leaf that
    /// requires grad ends up with a gradient (zeros if unreachable).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_node.value.shape().to_vec()));
        }
        if !loss_node.requires_grad {
            return Err(Error::Detached);
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if matches!(self.nodes[id].op, Op::Leaf) {
                self.nodes[id].grad = Some(g);
                continue;
            }
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                } => {
                    let n = self.value(*input).shape()[0];
                    if self.requires_grad(*input) {
                        let dx = kernels::conv_backward_input(&g, n, self.value(*kernel).data(), geom);
                        accumulate(&mut grads, &self.nodes, *input, dx);
                    }
                    let need_bias = bias.is_some_and(|b| self.requires_grad(b));
                    if self.requires_grad(*kernel) || need_bias {
                        let (dk, db) =
                            kernels::conv_backward_kernel(self.value(*input).data(), &g, n, geom);
                        accumulate(&mut grads, &self.nodes, *kernel, dk);
                        if let Some(b) = bias {
                            accumulate(&mut grads, &self.nodes, *b, db);
                        }
                    }
                }
                Op::ConvTransposed {
                    input,
                    kernel,
                    geom,
                } => {
                    let n = self.value(*input).shape()[0];
                    if self.requires_grad(*input) {
                        let dx = kernels::conv_forward(&g, n, self.value(*kernel).data(), None, geom);
                        accumulate(&mut grads, &self.nodes, *input, dx);
                    }
                    if self.requires_grad(*kernel) {
                        let (dk, _) =
                            kernels::conv_backward_kernel(&g, self.value(*input).data(), n, geom);
                        accumulate(&mut grads, &self.nodes, *kernel, dk);
                    }
                }
                Op::MaxPool { input, argmax } => {
                    let dx = kernels::maxpool_backward(&g, argmax, self.value(*input).numel());
                    accumulate(&mut grads, &self.nodes, *input, dx);
                }
                Op::Bilinear { input, factor } => {
                    let dims = self.value(*input).dims4("bilinear_upsample")?;
                    let dx = kernels::bilinear_backward(&g, dims, *factor);
                    accumulate(&mut grads, &self.nodes, *input, dx);
                }
                Op::Relu(input) => {
                    let x = self.value(*input).data();
                    let dx = g
                        .iter()
                        .zip(x)
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, &self.nodes, *input, dx);
                }
                Op::Sigmoid(input) => {
                    let y = node.value.data();
                    let dx = g
                        .iter()
                        .zip(y)
                        .map(|(&g, &y)| g * y * (T::one() - y))
                        .collect();
                    accumulate(&mut grads, &self.nodes, *input, dx);
                }
                Op::Concat(a, b) => {
                    let [n, ca, h, w] = self.value(*a).dims4("concat_channels")?;
                    let cb = self.value(*b).shape()[1];
                    let (ga, gb) = ops::split_channels(&g, n, ca, cb, h * w);
                    accumulate(&mut grads, &self.nodes, *a, ga);
                    accumulate(&mut grads, &self.nodes, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, &self.nodes, *a, g.clone());
                    accumulate(&mut grads, &self.nodes, *b, g);
                }
                Op::Sub(a, b) => {
                    let neg = g.iter().map(|&v| -v).collect();
                    accumulate(&mut grads, &self.nodes, *a, g);
                    accumulate(&mut grads, &self.nodes, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let ga = g.iter().zip(vb).map(|(&g, &y)| g * y).collect();
                    let gb = g.iter().zip(va).map(|(&g, &x)| g * x).collect();
                    accumulate(&mut grads, &self.nodes, *a, ga);
                    accumulate(&mut grads, &self.nodes, *b, gb);
                }
                Op::Sum(input) => {
                    let n = self.value(*input).numel();
                    accumulate(&mut grads, &self.nodes, *input, vec![g[0]; n]);
                }
                Op::Mse { pred, target } => {
                    let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                    let scale = g[0] / T::from_usize(p.len()).expect("element count fits");
                    let gp: Vec<T> = p.iter().zip(t).map(|(&p, &t)| (p - t) * scale).collect();
                    let gt = gp.iter().map(|&v| -v).collect();
                    accumulate(&mut grads, &self.nodes, *pred, gp);
                    accumulate(&mut grads, &self.nodes, *target, gt);
                }
            }
        }

        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) && node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var, g: Vec<T>) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.iter_mut().zip(g) {
                *e = *e + x;
            }
        }
        slot => *slot = Some(g),
    }
}
