//! Finite-difference suites over every graph kernel, the attention block and
//! a small end-to-end network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, grad_check_sampled, GradCheckReport, Graph, Kernel, Var};
use crate::backbone::{self, Binding, NetworkConfig};
use crate::error::Result;
use crate::llam;
use crate::tensor::{BnMode, ConvSpec, RunningStats, Shape, Tensor};

/// Elements checked per parameter tensor in the network suite.
pub const NETWORK_SAMPLES_PER_PARAM: usize = 64;

type Program = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// One named finite-difference comparison.
#[derive(Clone, Debug)]
pub struct CheckLine {
    pub name: String,
    pub report: GradCheckReport,
}

fn uniform(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

/// `sum(x ⊙ w)` with a fixed random `w`, so every output element carries a
/// distinct adjoint.
fn readout(g: &mut Graph, x: Var, w: &Tensor) -> Result<Var> {
    let w = g.input(w.clone());
    let prod = g.hadamard(x, w)?;
    Ok(g.sum(prod))
}

/// Values at least `gap` away from zero, keeping ReLU off its kink.
fn away_from_zero(shape: Shape, gap: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape.numel())
        .map(|_| {
            let v: f64 = rng.gen_range(gap..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

fn kernel_case(kernel: Kernel, rng: &mut ChaCha8Rng) -> (Vec<Tensor>, Program) {
    let s = Shape::new(2, 3, 4, 4);
    match kernel {
        Kernel::Conv2d => {
            let spec = ConvSpec {
                out_channels: 4,
                in_channels: 3,
                kernel_h: 3,
                kernel_w: 3,
                stride: 2,
                padding: 1,
                has_bias: true,
            };
            let params = vec![
                uniform(Shape::new(2, 3, 5, 5), rng),
                uniform(spec.weight_shape(), rng),
                uniform(Shape::new(1, 4, 1, 1), rng),
            ];
            let w = uniform(spec.output_shape(Shape::new(2, 3, 5, 5)).expect("valid conv"), rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), spec)?;
                readout(g, y, &w)
            });
            (params, program)
        }
        Kernel::BatchNorm2d => {
            let xs = Shape::new(3, 2, 3, 3);
            let params = vec![
                uniform(xs, rng),
                Tensor::vector(vec![1.3, -0.7]),
                Tensor::vector(vec![0.2, 0.4]),
            ];
            let running = RunningStats {
                mean: vec![0.1, -0.2],
                var: vec![0.8, 1.5],
            };
            let (w1, w2) = (uniform(xs, rng), uniform(xs, rng));
            let program: Program = Box::new(move |g, v| {
                let (train, _) = g.batch_norm(v[0], v[1], v[2], &running, BnMode::Train)?;
                let (eval, _) = g.batch_norm(v[0], v[1], v[2], &running, BnMode::Eval)?;
                let a = readout(g, train, &w1)?;
                let b = readout(g, eval, &w2)?;
                g.add(a, b)
            });
            (params, program)
        }
        Kernel::Relu => {
            let w = uniform(s, rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.relu(v[0]);
                readout(g, y, &w)
            });
            (vec![away_from_zero(s, 0.05, rng)], program)
        }
        Kernel::Sigmoid => {
            let w = uniform(s, rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.sigmoid(v[0]);
                readout(g, y, &w)
            });
            (vec![uniform(s, rng).scale(3.0)], program)
        }
        Kernel::ConcatChannels => {
            let w = uniform(Shape::new(2, 3, 3, 3), rng);
            let params = vec![uniform(Shape::new(2, 1, 3, 3), rng), uniform(Shape::new(2, 2, 3, 3), rng)];
            let program: Program = Box::new(move |g, v| {
                let y = g.concat_channels(v[0], v[1])?;
                readout(g, y, &w)
            });
            (params, program)
        }
        Kernel::Hadamard => {
            let w = uniform(s, rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.hadamard(v[0], v[1])?;
                let y = g.hadamard(y, v[0])?;
                readout(g, y, &w)
            });
            (vec![uniform(s, rng), uniform(s, rng)], program)
        }
        Kernel::Add => {
            let w = uniform(s, rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.add(v[0], v[1])?;
                let y = g.hadamard(y, y)?;
                readout(g, y, &w)
            });
            (vec![uniform(s, rng), uniform(s, rng)], program)
        }
        Kernel::Scale => {
            let w = uniform(s, rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.scale(v[0], -1.7);
                let y = g.hadamard(y, v[0])?;
                readout(g, y, &w)
            });
            (vec![uniform(s, rng)], program)
        }
        Kernel::MaxPool2d => {
            let xs = Shape::new(2, 2, 7, 7);
            let w = uniform(Shape::new(2, 2, 3, 3), rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.max_pool(v[0], 3, 2)?;
                readout(g, y, &w)
            });
            (vec![uniform(xs, rng)], program)
        }
        Kernel::GlobalAvgPool => {
            let w = uniform(Shape::new(2, 3, 1, 1), rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.global_avg_pool(v[0]);
                let y = g.hadamard(y, y)?;
                readout(g, y, &w)
            });
            (vec![uniform(s, rng)], program)
        }
        Kernel::Linear => {
            let params = vec![
                uniform(Shape::new(3, 2, 2, 2), rng),
                uniform(Shape::new(4, 8, 1, 1), rng),
                uniform(Shape::new(1, 4, 1, 1), rng),
            ];
            let w = uniform(Shape::new(3, 4, 1, 1), rng);
            let program: Program = Box::new(move |g, v| {
                let y = g.linear(v[0], v[1], v[2])?;
                readout(g, y, &w)
            });
            (params, program)
        }
        Kernel::SoftmaxCrossEntropy => {
            let program: Program = Box::new(|g, v| g.softmax_cross_entropy(v[0], &[0, 3, 4, 1]));
            (vec![uniform(Shape::new(4, 5, 1, 1), rng).scale(2.0)], program)
        }
        Kernel::Sum => {
            let program: Program = Box::new(|g, v| {
                let y = g.hadamard(v[0], v[0])?;
                Ok(g.sum(y))
            });
            (vec![uniform(s, rng)], program)
        }
    }
}

/// One check per graph kernel, in [`Kernel::ALL`] order.
pub fn ops_suite(eps: f64) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    Kernel::ALL
        .iter()
        .map(|&k| {
            let (params, program) = kernel_case(k, &mut rng);
            Ok(CheckLine {
                name: k.name().to_owned(),
                report: grad_check(&*program, &params, eps)?,
            })
        })
        .collect()
}

/// The attention block on its own: gradients w.r.t. both feature maps and
/// the convolution parameters.
pub fn llam_check(eps: f64) -> Result<CheckLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c6c_616d);
    let (c, k) = (3, 3);
    let fs = Shape::new(2, c, 4, 4);
    let p = llam::llam_init(c, k, &mut rng)?;
    let params = vec![uniform(fs, &mut rng), uniform(fs, &mut rng), p.conv_weight, p.conv_bias];
    let w = uniform(fs, &mut rng);
    let report = grad_check(
        |g: &mut Graph, v: &[Var]| {
            let (refined, _) = llam::llam_forward_graph(g, v[0], v[1], v[2], v[3], k)?;
            readout(g, refined, &w)
        },
        &params,
        eps,
    )?;
    Ok(CheckLine { name: "llam".into(), report })
}

/// Train-mode cross-entropy of a network on a random `batch × 8 × 8` input,
/// checked on up to [`NETWORK_SAMPLES_PER_PARAM`] elements of every
/// trainable tensor.
pub fn network_check(config: &NetworkConfig, name: &str, batch: usize, eps: f64) -> Result<CheckLine> {
    let store = backbone::init_network(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e65_7477);
    let input = uniform(Shape::new(batch, config.input.channels, 8, 8), &mut rng);
    let labels: Vec<usize> = (0..batch).map(|i| (3 * i + 1) % config.classes).collect();
    let params: Vec<Tensor> = store.trainable().map(|e| e.value.clone()).collect();
    let report = grad_check_sampled(
        |g: &mut Graph, v: &[Var]| {
            let binding = Binding::from_vars(&store, v)?;
            let x = g.input(input.clone());
            let out = backbone::forward_graph(g, &store, config, &binding, x, BnMode::Train)?;
            g.softmax_cross_entropy(out.logits, &labels)
        },
        &params,
        eps,
        NETWORK_SAMPLES_PER_PARAM,
    )?;
    Ok(CheckLine { name: name.into(), report })
}

/// The attention block, the width-4 network on one image and the tiny
/// network with and without attention.
pub fn tiny_suite(eps: f64) -> Result<Vec<CheckLine>> {
    let tiny = NetworkConfig::tiny();
    let plain = NetworkConfig { use_llam: false, ..tiny.clone() };
    Ok(vec![
        llam_check(eps)?,
        network_check(&NetworkConfig::micro(), "network.micro", 1, eps)?,
        network_check(&tiny, "network.tiny", 2, eps)?,
        network_check(&plain, "network.tiny.no_llam", 2, eps)?,
    ])
}
