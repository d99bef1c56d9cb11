//! 2-D convolution (cross-correlation) via im2col.

use serde::{Deserialize, Serialize};

use super::{Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Square kernel with "same"-style padding `k / 2`.
    pub fn square(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, has_bias: bool) -> Self {
        ConvSpec {
            out_channels,
            in_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding: kernel / 2,
            has_bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be at least 1"));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::invalid("conv2d", "kernel dims must be at least 1"));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("conv2d", "channel counts must be at least 1"));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < self.kernel_h {
            return Err(Error::dim("conv2d", "height", self.kernel_h, ph));
        }
        if pw < self.kernel_w {
            return Err(Error::dim("conv2d", "width", self.kernel_w, pw));
        }
        Ok(((ph - self.kernel_h) / self.stride + 1, (pw - self.kernel_w) / self.stride + 1))
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let (oh, ow) = self.output_hw(input.h, input.w)?;
        Ok(Shape::new(input.n, self.out_channels, oh, ow))
    }

    fn check(&self, input: Shape, weight: Shape, bias: Option<&Tensor>) -> Result<Shape> {
        self.validate()?;
        if input.c != self.in_channels {
            return Err(Error::dim("conv2d", "input channels", self.in_channels, input.c));
        }
        self.weight_shape().expect_eq(&weight, "conv2d weight")?;
        match (bias, self.has_bias) {
            (Some(b), true) => {
                if b.numel() != self.out_channels {
                    return Err(Error::dim("conv2d", "bias length", self.out_channels, b.numel()));
                }
            }
            (None, false) => {}
            (Some(_), false) => return Err(Error::invalid("conv2d", "bias given but spec has no bias")),
            (None, true) => return Err(Error::invalid("conv2d", "spec requires a bias")),
        }
        self.output_shape(input)
    }
}

/// Unfolds one batch item into a `(in_c * kh * kw) x (oh * ow)` column matrix.
fn im2col(src: &[f64], input: Shape, spec: &ConvSpec, oh: usize, ow: usize, cols: &mut [f64]) {
    let (h, w) = (input.h as isize, input.w as isize);
    let plane = oh * ow;
    let pad = spec.padding as isize;
    let stride = spec.stride as isize;
    for ci in 0..input.c {
        let chan = &src[ci * input.h * input.w..(ci + 1) * input.h * input.w];
        for ki in 0..spec.kernel_h {
            for kj in 0..spec.kernel_w {
                let row = (ci * spec.kernel_h + ki) * spec.kernel_w + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let y = oy as isize * stride + ki as isize - pad;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if y < 0 || y >= h {
                        line.fill(0.0);
                        continue;
                    }
                    let src_row = &chan[(y * w) as usize..((y + 1) * w) as usize];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let x = ox as isize * stride + kj as isize - pad;
                        *v = if x < 0 || x >= w { 0.0 } else { src_row[x as usize] };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back onto one batch item (adjoint of `im2col`).
fn col2im(cols: &[f64], input: Shape, spec: &ConvSpec, oh: usize, ow: usize, dst: &mut [f64]) {
    let (h, w) = (input.h as isize, input.w as isize);
    let plane = oh * ow;
    let pad = spec.padding as isize;
    let stride = spec.stride as isize;
    for ci in 0..input.c {
        let chan = &mut dst[ci * input.h * input.w..(ci + 1) * input.h * input.w];
        for ki in 0..spec.kernel_h {
            for kj in 0..spec.kernel_w {
                let row = (ci * spec.kernel_h + ki) * spec.kernel_w + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let y = oy as isize * stride + ki as isize - pad;
                    if y < 0 || y >= h {
                        continue;
                    }
                    for ox in 0..ow {
                        let x = ox as isize * stride + kj as isize - pad;
                        if x >= 0 && x < w {
                            chan[(y * w + x) as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `input` with `weight` (no kernel flip).
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
    let is = input.shape();
    let os = spec.check(is, weight.shape(), bias)?;
    let plane = os.h * os.w;
    let krows = spec.fan_in();
    let mut cols = vec![0.0; krows * plane];
    let mut out = Tensor::zeros(os);
    let item_in = is.c * is.spatial();
    let item_out = os.c * plane;
    let wdata = weight.data();
    for n in 0..is.n {
        im2col(&input.data()[n * item_in..(n + 1) * item_in], is, spec, os.h, os.w, &mut cols);
        let dst = &mut out.data_mut()[n * item_out..(n + 1) * item_out];
        for oc in 0..spec.out_channels {
            let acc = &mut dst[oc * plane..(oc + 1) * plane];
            if let Some(b) = bias {
                acc.fill(b.data()[oc]);
            }
            let wrow = &wdata[oc * krows..(oc + 1) * krows];
            for (k, &wv) in wrow.iter().enumerate() {
                let col = &cols[k * plane..(k + 1) * plane];
                for (a, &c) in acc.iter_mut().zip(col) {
                    *a += wv * c;
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of the convolution with respect to its input.
pub fn conv2d_backward_input(grad_out: &Tensor, weight: &Tensor, input_shape: Shape, spec: &ConvSpec) -> Result<Tensor> {
    let os = spec.output_shape(input_shape)?;
    os.expect_eq(&grad_out.shape(), "conv2d backward")?;
    let plane = os.h * os.w;
    let krows = spec.fan_in();
    let mut dcols = vec![0.0; krows * plane];
    let mut grad_in = Tensor::zeros(input_shape);
    let item_in = input_shape.c * input_shape.spatial();
    let item_out = os.c * plane;
    let wdata = weight.data();
    for n in 0..input_shape.n {
        dcols.fill(0.0);
        let g = &grad_out.data()[n * item_out..(n + 1) * item_out];
        for oc in 0..spec.out_channels {
            let grow = &g[oc * plane..(oc + 1) * plane];
            let wrow = &wdata[oc * krows..(oc + 1) * krows];
            for (k, &wv) in wrow.iter().enumerate() {
                let d = &mut dcols[k * plane..(k + 1) * plane];
                for (a, &gv) in d.iter_mut().zip(grow) {
                    *a += wv * gv;
                }
            }
        }
        col2im(&dcols, input_shape, spec, os.h, os.w, &mut grad_in.data_mut()[n * item_in..(n + 1) * item_in]);
    }
    Ok(grad_in)
}

/// Gradients with respect to the weight and (when the spec has one) the bias.
pub fn conv2d_backward_weight(grad_out: &Tensor, input: &Tensor, spec: &ConvSpec) -> Result<(Tensor, Option<Tensor>)> {
    let is = input.shape();
    let os = spec.output_shape(is)?;
    os.expect_eq(&grad_out.shape(), "conv2d backward")?;
    let plane = os.h * os.w;
    let krows = spec.fan_in();
    let mut cols = vec![0.0; krows * plane];
    let mut grad_w = Tensor::zeros(spec.weight_shape());
    let mut grad_b = vec![0.0; spec.out_channels];
    let item_in = is.c * is.spatial();
    let item_out = os.c * plane;
    for n in 0..is.n {
        im2col(&input.data()[n * item_in..(n + 1) * item_in], is, spec, os.h, os.w, &mut cols);
        let g = &grad_out.data()[n * item_out..(n + 1) * item_out];
        let gw = grad_w.data_mut();
        for oc in 0..spec.out_channels {
            let grow = &g[oc * plane..(oc + 1) * plane];
            grad_b[oc] += grow.iter().sum::<f64>();
            for k in 0..krows {
                let col = &cols[k * plane..(k + 1) * plane];
                gw[oc * krows + k] += grow.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    let grad_b = spec.has_bias.then(|| Tensor::vector(grad_b));
    Ok((grad_w, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shape_formula() {
        let spec = ConvSpec::square(8, 4, 3, 1, true);
        let out = spec.output_shape(Shape::new(1, 8, 5, 7)).unwrap();
        assert_eq!(out, Shape::new(1, 4, 5, 7));
        let strided = ConvSpec { stride: 2, padding: 0, ..spec };
        assert_eq!(strided.output_shape(Shape::new(2, 8, 5, 5)).unwrap(), Shape::new(2, 4, 2, 2));
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let spec = ConvSpec::square(3, 2, 3, 1, false);
        let x = Tensor::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::zeros(spec.weight_shape());
        match conv2d(&x, &w, None, &spec) {
            Err(Error::Dimension { axis, expected, actual, .. }) => {
                assert_eq!(axis, "input channels");
                assert_eq!((expected, actual), (3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kernel_larger_than_padded_input_rejected() {
        let spec = ConvSpec { padding: 0, ..ConvSpec::square(1, 1, 5, 1, false) };
        let x = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let w = Tensor::zeros(spec.weight_shape());
        assert!(conv2d(&x, &w, None, &spec).is_err());
    }

    #[test]
    fn zero_stride_rejected() {
        let spec = ConvSpec { stride: 0, ..ConvSpec::square(1, 1, 1, 1, false) };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn identity_1x1() {
        let spec = ConvSpec::square(1, 1, 1, 1, false);
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 3), vec![1., -2., 3., 0.5, 7., -1.]).unwrap();
        let w = Tensor::full(spec.weight_shape(), 1.0);
        assert_eq!(conv2d(&x, &w, None, &spec).unwrap(), x);
    }
}
