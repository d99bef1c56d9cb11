//! Dense rank-4 tensors in NCHW layout and the forward kernels built on them.
//!
//! Matrices are carried as `(rows, cols, 1, 1)` tensors and per-channel
//! vectors as `(1, len, 1, 1)` tensors, so every value flowing through the
//! graph has the same type.

mod conv;
mod nn;
mod norm;

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

pub use conv::{conv2d, conv2d_backward_input, conv2d_backward_weight, ConvSpec};
pub use nn::{
    activation, activation_backward, concat_channels, global_avg_pool, global_avg_pool_backward,
    hadamard, linear, linear_backward, max_pool2d, max_pool2d_backward, pool2d,
    softmax_cross_entropy, softmax_rows, Activation, MaxPoolOutput, PoolKind, SoftmaxCrossEntropy,
};
pub use norm::{batchnorm2d, batchnorm2d_backward, BatchNormOutput, BnMode, RunningStats};

/// Batch-norm epsilon used across the network.
pub const BN_EPS: f64 = 1e-5;
/// Running-statistics momentum for batch norm.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn spatial(&self) -> usize {
        self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// Checks this shape equals `other`, naming the first axis that differs.
    pub fn expect_eq(&self, other: &Shape, op: &'static str) -> Result<()> {
        let axes = ["batch", "channels", "height", "width"];
        for ((a, b), axis) in self.dims().iter().zip(other.dims()).zip(axes) {
            if *a != b {
                return Err(Error::dim(op, axis, *a, b));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::dim("Tensor::from_vec", "length", shape.numel(), data.len()));
        }
        Ok(Tensor { shape, data })
    }

    /// A `(rows, cols, 1, 1)` matrix.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::from_vec(Shape::new(rows, cols, 1, 1), data)
    }

    /// A `(1, len, 1, 1)` per-channel vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: Shape::new(1, data.len(), 1, 1),
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::vector(vec![value])
    }

    /// Uniform samples in `[low, high)`.
    pub fn uniform<R: Rng + ?Sized>(shape: Shape, low: f64, high: f64, rng: &mut R) -> Self {
        let data = (0..shape.numel()).map(|_| rng.gen_range(low..high)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::dim("Tensor::item", "length", 1, self.data.len()));
        }
        Ok(self.data[0])
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + h) * s.w + w
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(Error::dim("Tensor::reshape", "length", self.shape.numel(), shape.numel()));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.shape.expect_eq(&other.shape, op)?;
        Ok(Tensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        self.map(|x| alpha * x)
    }

    /// In-place `self += other`.
    pub fn accumulate(&mut self, other: &Tensor) -> Result<()> {
        self.shape.expect_eq(&other.shape, "accumulate")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Channels `[start, start + len)` of every batch item.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let s = self.shape;
        if start + len > s.c {
            return Err(Error::dim("slice_channels", "channels", s.c, start + len));
        }
        let plane = s.spatial();
        let mut data = Vec::with_capacity(s.n * len * plane);
        for n in 0..s.n {
            let base = (n * s.c + start) * plane;
            data.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Ok(Tensor {
            shape: Shape::new(s.n, len, s.h, s.w),
            data,
        })
    }

    /// Batch items `[start, start + len)`.
    pub fn slice_batch(&self, start: usize, len: usize) -> Result<Tensor> {
        let s = self.shape;
        if start + len > s.n {
            return Err(Error::dim("slice_batch", "batch", s.n, start + len));
        }
        let item = s.c * s.spatial();
        Ok(Tensor {
            shape: Shape::new(len, s.c, s.h, s.w),
            data: self.data[start * item..(start + len) * item].to_vec(),
        })
    }

    /// Stacks tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("Tensor::stack", "no tensors to stack"))?
            .shape;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        let mut n = 0;
        for t in items {
            let s = t.shape;
            Shape::new(first.n, s.c, s.h, s.w).expect_eq(&Shape::new(first.n, first.c, first.h, first.w), "stack")?;
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape::new(n, first.c, first.h, first.w),
            data,
        })
    }
}
