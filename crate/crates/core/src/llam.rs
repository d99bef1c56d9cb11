//! Lossless attention: a full-size 3-D attention map computed from the
//! channel concatenation of the previous and current feature maps.
//!
//! ```text
//! cat = [prev : cur]                (n, 2C, H, W)
//! M   = sigmoid(conv_kxk(cat))      (n, C, H, W)
//! out = cur ⊙ M
//! ```
//!
//! The convolution halves the channel count back to `C` but keeps the
//! spatial extent, so `M` has exactly the shape of `cur`.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{self, Activation, ConvSpec, Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LlamParams {
    /// `(C, 2C, k, k)`
    pub conv_weight: Tensor,
    /// `(1, C, 1, 1)`
    pub conv_bias: Tensor,
    pub kernel: usize,
}

impl LlamParams {
    pub fn channels(&self) -> usize {
        self.conv_weight.shape().n
    }

    pub fn spec(&self) -> ConvSpec {
        llam_conv_spec(self.channels(), self.kernel)
    }

    /// Zero weights and bias: the attention map is 0.5 everywhere.
    pub fn zeros(channels: usize, kernel: usize) -> Result<Self> {
        check_kernel(kernel)?;
        let spec = llam_conv_spec(channels, kernel);
        Ok(LlamParams {
            conv_weight: Tensor::zeros(spec.weight_shape()),
            conv_bias: Tensor::vector(vec![0.0; channels]),
            kernel,
        })
    }
}

/// Stride 1 and padding `(k - 1) / 2`, so spatial dims are preserved.
pub fn llam_conv_spec(channels: usize, kernel: usize) -> ConvSpec {
    ConvSpec {
        out_channels: channels,
        in_channels: 2 * channels,
        kernel_h: kernel,
        kernel_w: kernel,
        stride: 1,
        padding: (kernel - 1) / 2,
        has_bias: true,
    }
}

fn check_kernel(kernel: usize) -> Result<()> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::invalid("llam", format!("kernel size must be odd, got {kernel}")));
    }
    Ok(())
}

/// Kaiming-uniform bound `sqrt(6 / fan_in)`.
pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Kaiming-uniform weights over fan-in `2C·k·k`, zero bias.
pub fn llam_init<R: Rng + ?Sized>(channels: usize, kernel: usize, rng: &mut R) -> Result<LlamParams> {
    if channels == 0 {
        return Err(Error::invalid("llam_init", "channels must be at least 1"));
    }
    check_kernel(kernel)?;
    let spec = llam_conv_spec(channels, kernel);
    let bound = kaiming_bound(spec.fan_in());
    Ok(LlamParams {
        conv_weight: Tensor::uniform(spec.weight_shape(), -bound, bound, rng),
        conv_bias: Tensor::vector(vec![0.0; channels]),
        kernel,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlamOutput {
    pub refined: Tensor,
    pub attention: Tensor,
}

fn check_inputs(pre: Shape, cur: Shape, params: &LlamParams) -> Result<()> {
    pre.expect_eq(&cur, "llam_forward")?;
    if cur.c != params.channels() {
        return Err(Error::dim("llam_forward", "channels", params.channels(), cur.c));
    }
    Ok(())
}

/// Refines `f_cur` with an attention map generated from `[f_pre : f_cur]`.
pub fn llam_forward(f_pre: &Tensor, f_cur: &Tensor, params: &LlamParams) -> Result<LlamOutput> {
    check_inputs(f_pre.shape(), f_cur.shape(), params)?;
    let cat = tensor::concat_channels(f_pre, f_cur)?;
    let logits = tensor::conv2d(&cat, &params.conv_weight, Some(&params.conv_bias), &params.spec())?;
    let attention = tensor::activation(&logits, Activation::Sigmoid);
    let refined = tensor::hadamard(f_cur, &attention)?;
    Ok(LlamOutput { refined, attention })
}

/// [`llam_forward`] recorded on a graph; returns `(refined, attention)`.
pub fn llam_forward_graph(
    g: &mut Graph,
    f_pre: Var,
    f_cur: Var,
    weight: Var,
    bias: Var,
    kernel: usize,
) -> Result<(Var, Var)> {
    let channels = g.shape(weight).n;
    let spec = llam_conv_spec(channels, kernel);
    g.shape(f_pre).expect_eq(&g.shape(f_cur), "llam_forward")?;
    if g.shape(f_cur).c != channels {
        return Err(Error::dim("llam_forward", "channels", channels, g.shape(f_cur).c));
    }
    let cat = g.concat_channels(f_pre, f_cur)?;
    let logits = g.conv2d(cat, weight, Some(bias), spec)?;
    let attention = g.sigmoid(logits);
    let refined = g.hadamard(f_cur, attention)?;
    Ok((refined, attention))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_shapes_and_determinism() {
        let a = llam_init(4, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = llam_init(4, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.conv_weight.shape(), Shape::new(4, 8, 3, 3));
        assert_eq!(a, b);
        assert!(a.conv_bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn even_kernel_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(llam_init(4, 2, &mut rng).is_err());
        assert!(llam_init(0, 3, &mut rng).is_err());
    }

    #[test]
    fn zero_params_halve_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Shape::new(2, 3, 4, 5);
        let pre = Tensor::uniform(s, -1.0, 1.0, &mut rng);
        let cur = Tensor::uniform(s, -1.0, 1.0, &mut rng);
        let out = llam_forward(&pre, &cur, &LlamParams::zeros(3, 3).unwrap()).unwrap();
        assert!(out.attention.data().iter().all(|&m| m == 0.5));
        assert_eq!(out.refined, cur.scale(0.5));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let params = LlamParams::zeros(2, 3).unwrap();
        let pre = Tensor::zeros(Shape::new(1, 2, 4, 4));
        let cur = Tensor::zeros(Shape::new(1, 2, 2, 2));
        assert!(matches!(llam_forward(&pre, &cur, &params), Err(Error::Dimension { axis: "height", .. })));
        let wrong_c = Tensor::zeros(Shape::new(1, 3, 4, 4));
        assert!(llam_forward(&wrong_c, &wrong_c, &params).is_err());
    }

    #[test]
    fn graph_and_tensor_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Shape::new(1, 2, 4, 4);
        let pre = Tensor::uniform(s, -1.0, 1.0, &mut rng);
        let cur = Tensor::uniform(s, -1.0, 1.0, &mut rng);
        let mut params = llam_init(2, 3, &mut rng).unwrap();
        params.conv_bias = Tensor::vector(vec![0.2, -0.3]);
        let direct = llam_forward(&pre, &cur, &params).unwrap();

        let mut g = Graph::new();
        let (p, c) = (g.input(pre), g.input(cur));
        let (w, b) = (g.param(params.conv_weight.clone()), g.param(params.conv_bias.clone()));
        let (refined, attention) = llam_forward_graph(&mut g, p, c, w, b, 3).unwrap();
        assert_eq!(g.value(refined), &direct.refined);
        assert_eq!(g.value(attention), &direct.attention);
    }
}
