//! Naive nested-loop references shared by the integration tests.
#![allow(dead_code)]

use llanet::tensor::{ConvSpec, Shape, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Random valid convolution problem.
pub fn random_conv(rng: &mut ChaCha8Rng) -> (Tensor, Tensor, Option<Tensor>, ConvSpec) {
    let n = rng.gen_range(1..=3);
    let cin = rng.gen_range(1..=4);
    let cout = rng.gen_range(1..=4);
    let kh: usize = rng.gen_range(1..=5);
    let kw: usize = rng.gen_range(1..=5);
    let padding: usize = rng.gen_range(0..=2);
    let stride = rng.gen_range(1..=3);
    let h = rng.gen_range(kh.saturating_sub(2 * padding).max(1)..=9);
    let w = rng.gen_range(kw.saturating_sub(2 * padding).max(1)..=9);
    let spec = ConvSpec {
        out_channels: cout,
        in_channels: cin,
        kernel_h: kh,
        kernel_w: kw,
        stride,
        padding,
        has_bias: rng.gen_bool(0.5),
    };
    let x = random_tensor(Shape::new(n, cin, h, w), rng);
    let wt = random_tensor(spec.weight_shape(), rng);
    let b = spec.has_bias.then(|| random_tensor(Shape::new(1, cout, 1, 1), rng));
    (x, wt, b, spec)
}

fn out_hw(s: Shape, spec: &ConvSpec) -> (usize, usize) {
    (
        (s.h + 2 * spec.padding - spec.kernel_h) / spec.stride + 1,
        (s.w + 2 * spec.padding - spec.kernel_w) / spec.stride + 1,
    )
}

/// Input element feeding output `(oy, ox)` at kernel tap `(ky, kx)`, or
/// `None` inside the zero padding.
fn tap(s: Shape, spec: &ConvSpec, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
    let y = (oy * spec.stride + ky) as isize - spec.padding as isize;
    let x = (ox * spec.stride + kx) as isize - spec.padding as isize;
    (y >= 0 && x >= 0 && (y as usize) < s.h && (x as usize) < s.w).then_some((y as usize, x as usize))
}

pub fn naive_conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>, spec: &ConvSpec) -> Tensor {
    let s = x.shape();
    let (oh, ow) = out_hw(s, spec);
    let mut out = Tensor::zeros(Shape::new(s.n, spec.out_channels, oh, ow));
    for n in 0..s.n {
        for o in 0..spec.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b.data()[o]);
                    for i in 0..s.c {
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                if let Some((y, xx)) = tap(s, spec, oy, ox, ky, kx) {
                                    acc += x.at(n, i, y, xx) * w.at(o, i, ky, kx);
                                }
                            }
                        }
                    }
                    let k = out.offset(n, o, oy, ox);
                    out.data_mut()[k] = acc;
                }
            }
        }
    }
    out
}

/// Adjoint of [`naive_conv`] w.r.t. the input.
pub fn naive_conv_grad_input(gy: &Tensor, w: &Tensor, input_shape: Shape, spec: &ConvSpec) -> Tensor {
    let s = input_shape;
    let (oh, ow) = out_hw(s, spec);
    let mut gx = Tensor::zeros(s);
    for n in 0..s.n {
        for o in 0..spec.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gy.at(n, o, oy, ox);
                    for i in 0..s.c {
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                if let Some((y, xx)) = tap(s, spec, oy, ox, ky, kx) {
                                    let k = gx.offset(n, i, y, xx);
                                    gx.data_mut()[k] += g * w.at(o, i, ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Adjoint of [`naive_conv`] w.r.t. weight and bias.
pub fn naive_conv_grad_weight(gy: &Tensor, x: &Tensor, spec: &ConvSpec) -> (Tensor, Tensor) {
    let s = x.shape();
    let (oh, ow) = out_hw(s, spec);
    let mut gw = Tensor::zeros(spec.weight_shape());
    let mut gb = Tensor::zeros(Shape::new(1, spec.out_channels, 1, 1));
    for n in 0..s.n {
        for o in 0..spec.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gy.at(n, o, oy, ox);
                    gb.data_mut()[o] += g;
                    for i in 0..s.c {
                        for ky in 0..spec.kernel_h {
                            for kx in 0..spec.kernel_w {
                                if let Some((y, xx)) = tap(s, spec, oy, ox, ky, kx) {
                                    let k = gw.offset(o, i, ky, kx);
                                    gw.data_mut()[k] += g * x.at(n, i, y, xx);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (gw, gb)
}

pub fn naive_linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let s = x.shape();
    let d = s.c * s.h * s.w;
    let k = w.shape().n;
    let mut out = vec![0.0; s.n * k];
    for n in 0..s.n {
        for j in 0..k {
            let mut acc = b.data()[j];
            for i in 0..d {
                acc += x.data()[n * d + i] * w.data()[j * d + i];
            }
            out[n * k + j] = acc;
        }
    }
    Tensor::matrix(s.n, k, out).unwrap()
}

pub fn naive_max_pool(x: &Tensor, window: usize, stride: usize) -> Tensor {
    let s = x.shape();
    let oh = (s.h - window) / stride + 1;
    let ow = (s.w - window) / stride + 1;
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut m = f64::NEG_INFINITY;
                    for ky in 0..window {
                        for kx in 0..window {
                            m = m.max(x.at(n, c, oy * stride + ky, ox * stride + kx));
                        }
                    }
                    let k = out.offset(n, c, oy, ox);
                    out.data_mut()[k] = m;
                }
            }
        }
    }
    out
}

pub fn naive_avg_pool(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, 1));
    for n in 0..s.n {
        for c in 0..s.c {
            let mut acc = 0.0;
            for y in 0..s.h {
                for xx in 0..s.w {
                    acc += x.at(n, c, y, xx);
                }
            }
            out.data_mut()[n * s.c + c] = acc / (s.h * s.w) as f64;
        }
    }
    out
}

/// Runs `n` seeded instances of `check` and returns the largest discrepancy.
pub fn worst_over(n: usize, seed: u64, mut check: impl FnMut(&mut ChaCha8Rng) -> f64) -> f64 {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| check(&mut rng)).fold(0.0, f64::max)
}

pub fn conv_oracle_error(rng: &mut ChaCha8Rng) -> f64 {
    let (x, w, b, spec) = random_conv(rng);
    let y = llanet::tensor::conv2d(&x, &w, b.as_ref(), &spec).unwrap();
    let forward = max_abs_diff(&y, &naive_conv(&x, &w, b.as_ref(), &spec));
    let gy = random_tensor(y.shape(), rng);
    let gx = llanet::tensor::conv2d_backward_input(&gy, &w, x.shape(), &spec).unwrap();
    let (gw, gb) = llanet::tensor::conv2d_backward_weight(&gy, &x, &spec).unwrap();
    let (rw, rb) = naive_conv_grad_weight(&gy, &x, &spec);
    let mut err = forward
        .max(max_abs_diff(&gx, &naive_conv_grad_input(&gy, &w, x.shape(), &spec)))
        .max(max_abs_diff(&gw, &rw));
    if let Some(gb) = gb {
        err = err.max(max_abs_diff(&gb, &rb));
    }
    err
}

pub fn linear_oracle_error(rng: &mut ChaCha8Rng) -> f64 {
    let s = Shape::new(rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=3), rng.gen_range(1..=3));
    let d = s.c * s.h * s.w;
    let k = rng.gen_range(1..=6);
    let x = random_tensor(s, rng);
    let w = random_tensor(Shape::new(k, d, 1, 1), rng);
    let b = random_tensor(Shape::new(1, k, 1, 1), rng);
    let y = llanet::tensor::linear(&x, &w, &b).unwrap();
    let forward = max_abs_diff(&y, &naive_linear(&x, &w, &b));
    // backward against the transposed naive products
    let gy = random_tensor(y.shape(), rng);
    let (gx, gw, gb) = llanet::tensor::linear_backward(&gy, &x, &w).unwrap();
    let mut err = forward;
    for n in 0..s.n {
        for i in 0..d {
            let r: f64 = (0..k).map(|j| gy.data()[n * k + j] * w.data()[j * d + i]).sum();
            err = err.max((gx.data()[n * d + i] - r).abs());
        }
    }
    for j in 0..k {
        for i in 0..d {
            let r: f64 = (0..s.n).map(|n| gy.data()[n * k + j] * x.data()[n * d + i]).sum();
            err = err.max((gw.data()[j * d + i] - r).abs());
        }
        let r: f64 = (0..s.n).map(|n| gy.data()[n * k + j]).sum();
        err = err.max((gb.data()[j] - r).abs());
    }
    err
}

pub fn pool_oracle_error(rng: &mut ChaCha8Rng) -> f64 {
    let window = rng.gen_range(1..=3);
    let stride = rng.gen_range(1..=3);
    let s = Shape::new(rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(window..=8), rng.gen_range(window..=8));
    let x = random_tensor(s, rng);
    let max = llanet::tensor::max_pool2d(&x, window, stride).unwrap();
    let avg = llanet::tensor::global_avg_pool(&x);
    max_abs_diff(&max.output, &naive_max_pool(&x, window, stride)).max(max_abs_diff(&avg, &naive_avg_pool(&x)))
}
