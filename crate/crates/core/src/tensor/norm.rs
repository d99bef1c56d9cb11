//! Per-channel batch normalization.

use serde::{Deserialize, Serialize};

use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Running mean/variance carried between calls by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub struct BatchNormOutput {
    pub output: Tensor,
    /// Normalized activations, needed by the train-mode adjoint.
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
    /// Updated running statistics; `None` in eval mode.
    pub running: Option<RunningStats>,
}

/// Batch normalization over (batch, height, width) per channel.
///
/// Train mode normalizes by the biased batch variance and blends the
/// unbiased variance into the returned running statistics.
pub fn batchnorm2d(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running: &RunningStats,
    mode: BnMode,
    eps: f64,
    momentum: f64,
) -> Result<BatchNormOutput> {
    let s = input.shape();
    for (name, t) in [("gamma length", gamma), ("beta length", beta)] {
        if t.numel() != s.c {
            return Err(Error::dim("batchnorm2d", name, s.c, t.numel()));
        }
    }
    if running.mean.len() != s.c || running.var.len() != s.c {
        return Err(Error::dim("batchnorm2d", "running stats length", s.c, running.mean.len()));
    }
    let count = s.n * s.spatial();
    let (mean, var, new_running) = match mode {
        BnMode::Train => {
            if count < 2 {
                return Err(Error::invalid("batchnorm2d", format!("train mode needs n*h*w >= 2, got {count}")));
            }
            let (mean, var) = channel_stats(input);
            let unbiased = count as f64 / (count - 1) as f64;
            let next = RunningStats {
                mean: running
                    .mean
                    .iter()
                    .zip(&mean)
                    .map(|(r, m)| (1.0 - momentum) * r + momentum * m)
                    .collect(),
                var: running
                    .var
                    .iter()
                    .zip(&var)
                    .map(|(r, v)| (1.0 - momentum) * r + momentum * v * unbiased)
                    .collect(),
            };
            (mean, var, Some(next))
        }
        BnMode::Eval => (running.mean.clone(), running.var.clone(), None),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut normalized = Tensor::zeros(s);
    let mut output = Tensor::zeros(s);
    let plane = s.spatial();
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * plane;
            let (g, b) = (gamma.data()[c], beta.data()[c]);
            for i in base..base + plane {
                let xh = (input.data()[i] - mean[c]) * inv_std[c];
                normalized.data_mut()[i] = xh;
                output.data_mut()[i] = g * xh + b;
            }
        }
    }
    Ok(BatchNormOutput {
        output,
        normalized,
        inv_std,
        running: new_running,
    })
}

/// Per-channel mean and biased variance.
fn channel_stats(input: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let s = input.shape();
    let plane = s.spatial();
    let count = (s.n * plane) as f64;
    let mut mean = vec![0.0; s.c];
    let mut var = vec![0.0; s.c];
    for c in 0..s.c {
        let mut acc = 0.0;
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            acc += input.data()[base..base + plane].iter().sum::<f64>();
        }
        mean[c] = acc / count;
        let mut sq = 0.0;
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            sq += input.data()[base..base + plane].iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
        }
        var[c] = sq / count;
    }
    (mean, var)
}

/// Adjoint of [`batchnorm2d`]; returns `(grad_input, grad_gamma, grad_beta)`.
///
/// In eval mode the running statistics are constants, so the input
/// gradient is just `gamma * inv_std * grad_out`.
pub fn batchnorm2d_backward(
    grad_out: &Tensor,
    normalized: &Tensor,
    gamma: &Tensor,
    inv_std: &[f64],
    mode: BnMode,
) -> Result<(Tensor, Tensor, Tensor)> {
    let s = normalized.shape();
    s.expect_eq(&grad_out.shape(), "batchnorm2d backward")?;
    let plane = s.spatial();
    let count = (s.n * plane) as f64;
    let mut grad_in = Tensor::zeros(s);
    let mut grad_gamma = vec![0.0; s.c];
    let mut grad_beta = vec![0.0; s.c];
    let go = grad_out.data();
    let xh = normalized.data();
    for c in 0..s.c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            for i in base..base + plane {
                sum_g += go[i];
                sum_gx += go[i] * xh[i];
            }
        }
        grad_beta[c] = sum_g;
        grad_gamma[c] = sum_gx;
        let g = gamma.data()[c];
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            for i in base..base + plane {
                grad_in.data_mut()[i] = match mode {
                    BnMode::Train => g * inv_std[c] * (go[i] - sum_g / count - xh[i] * sum_gx / count),
                    BnMode::Eval => g * inv_std[c] * go[i],
                };
            }
        }
    }
    Ok((grad_in, Tensor::vector(grad_gamma), Tensor::vector(grad_beta)))
}

impl BatchNormOutput {
    pub fn shape(&self) -> Shape {
        self.output.shape()
    }
}
