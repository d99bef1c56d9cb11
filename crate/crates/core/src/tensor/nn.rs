//! Elementwise, pooling, linear and loss kernels.

use super::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => input.map(|x| x.max(0.0)),
        Activation::Sigmoid => input.map(sigmoid),
    }
}

/// `output` is the forward result; the sigmoid adjoint is expressed through it.
pub fn activation_backward(grad_out: &Tensor, input: &Tensor, output: &Tensor, kind: Activation) -> Result<Tensor> {
    match kind {
        // d relu / dx taken as 0 at x = 0
        Activation::Relu => grad_out.zip_map(input, "relu backward", |g, x| if x > 0.0 { g } else { 0.0 }),
        Activation::Sigmoid => grad_out.zip_map(output, "sigmoid backward", |g, y| g * y * (1.0 - y)),
    }
}

/// Concatenates along the channel axis, `a`'s channels first.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n {
        return Err(Error::dim("concat_channels", "batch", sa.n, sb.n));
    }
    if sa.h != sb.h {
        return Err(Error::dim("concat_channels", "height", sa.h, sb.h));
    }
    if sa.w != sb.w {
        return Err(Error::dim("concat_channels", "width", sa.w, sb.w));
    }
    let plane = sa.spatial();
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * sa.c * plane..(n + 1) * sa.c * plane]);
        data.extend_from_slice(&b.data()[n * sb.c * plane..(n + 1) * sb.c * plane]);
    }
    Tensor::from_vec(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), data)
}

pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, "hadamard", |x, y| x * y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max { window: usize, stride: usize },
    GlobalAvg,
}

#[derive(Clone, Debug)]
pub struct MaxPoolOutput {
    pub output: Tensor,
    /// Flat input index of the winning element for each output element.
    pub argmax: Vec<usize>,
}

pub fn pool2d(input: &Tensor, kind: PoolKind) -> Result<Tensor> {
    match kind {
        PoolKind::Max { window, stride } => max_pool2d(input, window, stride).map(|o| o.output),
        PoolKind::GlobalAvg => Ok(global_avg_pool(input)),
    }
}

/// Windowed maximum without padding. Ties resolve to the first element in
/// row-major window order.
pub fn max_pool2d(input: &Tensor, window: usize, stride: usize) -> Result<MaxPoolOutput> {
    let s = input.shape();
    if window == 0 || stride == 0 {
        return Err(Error::invalid("max_pool2d", "window and stride must be at least 1"));
    }
    if window > s.h {
        return Err(Error::dim("max_pool2d", "height", window, s.h));
    }
    if window > s.w {
        return Err(Error::dim("max_pool2d", "width", window, s.w));
    }
    let oh = (s.h - window) / stride + 1;
    let ow = (s.w - window) / stride + 1;
    let os = Shape::new(s.n, s.c, oh, ow);
    let mut output = Tensor::zeros(os);
    let mut argmax = vec![0; os.numel()];
    let mut o = 0;
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for ky in 0..window {
                        for kx in 0..window {
                            let i = input.offset(n, c, oy * stride + ky, ox * stride + kx);
                            let v = input.data()[i];
                            if v > best {
                                best = v;
                                best_i = i;
                            }
                        }
                    }
                    output.data_mut()[o] = best;
                    argmax[o] = best_i;
                    o += 1;
                }
            }
        }
    }
    Ok(MaxPoolOutput { output, argmax })
}

pub fn max_pool2d_backward(grad_out: &Tensor, argmax: &[usize], input_shape: Shape) -> Tensor {
    let mut grad = Tensor::zeros(input_shape);
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        grad.data_mut()[i] += g;
    }
    grad
}

/// Per-channel spatial mean, shape `(n, c, 1, 1)`.
pub fn global_avg_pool(input: &Tensor) -> Tensor {
    let s = input.shape();
    let plane = s.spatial();
    let data = input
        .data()
        .chunks(plane)
        .map(|ch| ch.iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), data).expect("pooled length matches")
}

pub fn global_avg_pool_backward(grad_out: &Tensor, input_shape: Shape) -> Tensor {
    let plane = input_shape.spatial();
    let scale = 1.0 / plane as f64;
    let data = grad_out
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g * scale, plane))
        .collect();
    Tensor::from_vec(input_shape, data).expect("grad length matches")
}

/// `input · weightᵀ + bias`, with the input flattened to `n x (c*h*w)` and
/// `weight` a `(k, d, 1, 1)` matrix.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    let d = s.c * s.spatial();
    let ws = weight.shape();
    let k = ws.n;
    if ws.c * ws.spatial() != d {
        return Err(Error::dim("linear", "feature dim", ws.c * ws.spatial(), d));
    }
    if bias.numel() != k {
        return Err(Error::dim("linear", "bias length", k, bias.numel()));
    }
    let mut out = Vec::with_capacity(s.n * k);
    for row in input.data().chunks(d) {
        for (j, wrow) in weight.data().chunks(d).enumerate() {
            let dot: f64 = row.iter().zip(wrow).map(|(a, b)| a * b).sum();
            out.push(dot + bias.data()[j]);
        }
    }
    Tensor::matrix(s.n, k, out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn linear_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let s = input.shape();
    let d = s.c * s.spatial();
    let k = weight.shape().n;
    Shape::new(s.n, k, 1, 1).expect_eq(&grad_out.shape(), "linear backward")?;
    let mut gi = vec![0.0; s.n * d];
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    for n in 0..s.n {
        let x = &input.data()[n * d..(n + 1) * d];
        let gx = &mut gi[n * d..(n + 1) * d];
        for j in 0..k {
            let g = grad_out.data()[n * k + j];
            gb[j] += g;
            let wrow = &weight.data()[j * d..(j + 1) * d];
            let gwrow = &mut gw[j * d..(j + 1) * d];
            for i in 0..d {
                gx[i] += g * wrow[i];
                gwrow[i] += g * x[i];
            }
        }
    }
    Ok((
        Tensor::from_vec(s, gi)?,
        Tensor::from_vec(weight.shape(), gw)?,
        Tensor::from_vec(bias_shape(k), gb)?,
    ))
}

fn bias_shape(k: usize) -> Shape {
    Shape::new(1, k, 1, 1)
}

#[derive(Clone, Debug)]
pub struct SoftmaxCrossEntropy {
    pub loss: f64,
    /// Row-stochastic `(n, K, 1, 1)` matrix.
    pub probabilities: Tensor,
}

/// Mean negative log-likelihood of `labels` under a max-shifted softmax.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxCrossEntropy> {
    let s = logits.shape();
    let k = s.c * s.spatial();
    if k < 2 {
        return Err(Error::invalid("softmax_cross_entropy", "need at least two classes"));
    }
    if labels.len() != s.n {
        return Err(Error::dim("softmax_cross_entropy", "labels", s.n, labels.len()));
    }
    if s.n == 0 {
        return Err(Error::invalid("softmax_cross_entropy", "empty batch"));
    }
    let mut probs = Vec::with_capacity(s.n * k);
    let mut total = 0.0;
    for (row, &y) in logits.data().chunks(k).zip(labels) {
        if y >= k {
            return Err(Error::invalid("softmax_cross_entropy", format!("label {y} out of range for {k} classes")));
        }
        let (p, log_z) = softmax_row(row);
        total += log_z - row[y];
        probs.extend(p);
    }
    Ok(SoftmaxCrossEntropy {
        loss: total / s.n as f64,
        probabilities: Tensor::matrix(s.n, k, probs)?,
    })
}

/// Row-wise softmax of an `(n, K, 1, 1)` logit matrix.
pub fn softmax_rows(logits: &Tensor) -> Vec<Vec<f64>> {
    let s = logits.shape();
    let k = s.c * s.spatial();
    logits.data().chunks(k.max(1)).map(|row| softmax_row(row).0).collect()
}

/// Softmax of a row and its log-partition `ln Σ exp(x)`.
pub(crate) fn softmax_row(row: &[f64]) -> (Vec<f64>, f64) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    (exps.into_iter().map(|e| e / z).collect(), max + z.ln())
}
