//! Functional forms of the differentiable ops. These compute values only;
//! [`Graph`](super::Graph) wraps them and records what backward needs.

use crate::error::{Error, Result};

use super::kernels::{self, ConvGeom, Padding};
use super::{Scalar, Tensor};

/// Cross-correlation (no kernel flip) of `input [n, cin, h, w]` with
/// `kernel [cout, cin, kh, kw]`, plus an optional `[cout]` bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor<T>> {
    let geom = ConvGeom::conv(
        input.dims4("conv2d")?,
        kernel.dims4("conv2d")?,
        stride,
        padding,
    )?;
    if let Some(b) = bias {
        if b.numel() != geom.cout {
            return Err(Error::shape(
                "conv2d",
                format!("bias has {} values for {} output channels", b.numel(), geom.cout),
            ));
        }
    }
    let n = input.shape()[0];
    let out = kernels::conv_forward(
        input.data(),
        n,
        kernel.data(),
        bias.map(|b| b.data()),
        &geom,
    );
    Tensor::new(vec![n, geom.cout, geom.oh, geom.ow], out)
}

/// Transposed convolution of `input [n, cin, h, w]` with
/// `kernel [cin, cout, kh, kw]`; output is `[n, cout, h*sh, w*sw]`.
pub fn conv2d_transposed<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: (usize, usize),
) -> Result<Tensor<T>> {
    let geom = ConvGeom::transposed(
        input.dims4("conv2d_transposed")?,
        kernel.dims4("conv2d_transposed")?,
        stride,
    )?;
    let n = input.shape()[0];
    let out = kernels::conv_backward_input(input.data(), n, kernel.data(), &geom);
    Tensor::new(vec![n, geom.cin, geom.h, geom.w], out)
}

pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, kernel: (usize, usize)) -> Result<Tensor<T>> {
    let dims = input.dims4("maxpool2d")?;
    let (out, _) = kernels::maxpool_forward(input.data(), dims, kernel)?;
    let [n, c, h, w] = dims;
    Tensor::new(vec![n, c, h / kernel.0, w / kernel.1], out)
}

pub fn bilinear_upsample<T: Scalar>(
    input: &Tensor<T>,
    factor: (usize, usize),
) -> Result<Tensor<T>> {
    let dims = input.dims4("bilinear_upsample")?;
    if factor.0 == 0 || factor.1 == 0 {
        return Err(Error::shape("bilinear_upsample", "factor must be at least 1"));
    }
    let [n, c, h, w] = dims;
    let out = kernels::bilinear_forward(input.data(), dims, factor);
    Tensor::new(vec![n, c, h * factor.0, w * factor.1], out)
}

pub fn relu<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    map(t, |v| v.max(T::zero()))
}

pub fn sigmoid<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    map(t, |v| T::one() / (T::one() + (-v).exp()))
}

pub fn map<T: Scalar>(t: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::from_fn(t.shape().to_vec(), |i| f(t.data()[i]))
}

fn zip_with<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(Tensor::from_fn(a.shape().to_vec(), |i| {
        f(a.data()[i], b.data()[i])
    }))
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("mul", a, b, |x, y| x * y)
}

/// Concatenates two 4D tensors along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, ca, h, w] = a.dims4("concat_channels")?;
    let [nb, cb, hb, wb] = b.dims4("concat_channels")?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::shape(
            "concat_channels",
            format!("non-channel dims differ: {:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * (ca + cb) * plane);
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * ca * plane..(i + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[i * cb * plane..(i + 1) * cb * plane]);
    }
    Tensor::new(vec![n, ca + cb, h, w], data)
}

/// Splits a channel-concatenated gradient back into its two halves.
pub(crate) fn split_channels<T: Scalar>(
    g: &[T],
    n: usize,
    ca: usize,
    cb: usize,
    plane: usize,
) -> (Vec<T>, Vec<T>) {
    let mut ga = Vec::with_capacity(n * ca * plane);
    let mut gb = Vec::with_capacity(n * cb * plane);
    for i in 0..n {
        let base = i * (ca + cb) * plane;
        ga.extend_from_slice(&g[base..base + ca * plane]);
        gb.extend_from_slice(&g[base + ca * plane..base + (ca + cb) * plane]);
    }
    (ga, gb)
}
