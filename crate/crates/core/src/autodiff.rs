//! Tape-based reverse-mode differentiation over the tensor kernels.
//!
//! Every operation appends a node to a [`Graph`] in creation order, so the
//! tape is a DAG in topological order by construction. [`Graph::backward`]
//! walks it once in reverse, summing adjoints across fan-out.
//!
//! [`grad_check`] compares the reverse-mode gradient of a tensor program
//! against central differences. Programs containing ReLU or max-pooling are
//! only piecewise differentiable: an element whose ±eps perturbation flips
//! the sign of any ReLU input or moves any max-pool winner is skipped and
//! counted in [`GradCheckReport::skipped_kinks`] instead of being compared.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::{self, Activation, BnMode, ConvSpec, RunningStats, Shape, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The differentiable kernels a graph can record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kernel {
    Conv2d,
    BatchNorm2d,
    Relu,
    Sigmoid,
    ConcatChannels,
    Hadamard,
    Add,
    Scale,
    MaxPool2d,
    GlobalAvgPool,
    Linear,
    SoftmaxCrossEntropy,
    Sum,
}

impl Kernel {
    pub const ALL: [Kernel; 13] = [
        Kernel::Conv2d,
        Kernel::BatchNorm2d,
        Kernel::Relu,
        Kernel::Sigmoid,
        Kernel::ConcatChannels,
        Kernel::Hadamard,
        Kernel::Add,
        Kernel::Scale,
        Kernel::MaxPool2d,
        Kernel::GlobalAvgPool,
        Kernel::Linear,
        Kernel::SoftmaxCrossEntropy,
        Kernel::Sum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Conv2d => "conv2d",
            Kernel::BatchNorm2d => "batchnorm2d",
            Kernel::Relu => "relu",
            Kernel::Sigmoid => "sigmoid",
            Kernel::ConcatChannels => "concat_channels",
            Kernel::Hadamard => "hadamard",
            Kernel::Add => "add",
            Kernel::Scale => "scale",
            Kernel::MaxPool2d => "max_pool2d",
            Kernel::GlobalAvgPool => "global_avg_pool",
            Kernel::Linear => "linear",
            Kernel::SoftmaxCrossEntropy => "softmax_cross_entropy",
            Kernel::Sum => "sum",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { trainable: bool },
    Conv2d { input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec },
    BatchNorm { input: Var, gamma: Var, beta: Var, normalized: Tensor, inv_std: Vec<f64>, mode: BnMode },
    Activation { input: Var, kind: Activation },
    Concat { a: Var, b: Var },
    Hadamard { a: Var, b: Var },
    Add { a: Var, b: Var },
    Scale { input: Var, alpha: f64 },
    MaxPool { input: Var, argmax: Vec<usize> },
    GlobalAvgPool { input: Var },
    Linear { input: Var, weight: Var, bias: Var },
    SoftmaxCe { logits: Var, probabilities: Tensor, labels: Vec<usize> },
    Sum { input: Var },
}

impl Op {
    fn kernel(&self) -> Option<Kernel> {
        Some(match self {
            Op::Leaf { .. } => return None,
            Op::Conv2d { .. } => Kernel::Conv2d,
            Op::BatchNorm { .. } => Kernel::BatchNorm2d,
            Op::Activation { kind: Activation::Relu, .. } => Kernel::Relu,
            Op::Activation { kind: Activation::Sigmoid, .. } => Kernel::Sigmoid,
            Op::Concat { .. } => Kernel::ConcatChannels,
            Op::Hadamard { .. } => Kernel::Hadamard,
            Op::Add { .. } => Kernel::Add,
            Op::Scale { .. } => Kernel::Scale,
            Op::MaxPool { .. } => Kernel::MaxPool2d,
            Op::GlobalAvgPool { .. } => Kernel::GlobalAvgPool,
            Op::Linear { .. } => Kernel::Linear,
            Op::SoftmaxCe { .. } => Kernel::SoftmaxCrossEntropy,
            Op::Sum { .. } => Kernel::Sum,
        })
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records tensor operations for reverse-mode differentiation.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf; no gradient is reported for it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { trainable: false })
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { trainable: true })
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf { trainable: true })
    }

    /// Kernels recorded on this tape, in creation order.
    pub fn kernels(&self) -> impl Iterator<Item = Kernel> + '_ {
        self.nodes.iter().filter_map(|n| n.op.kernel())
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let out = tensor::conv2d(self.value(input), self.value(weight), bias.map(|b| self.value(b)), &spec)?;
        Ok(self.push(out, Op::Conv2d { input, weight, bias, spec }))
    }

    /// Batch norm; in train mode also returns the updated running statistics.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &RunningStats,
        mode: BnMode,
    ) -> Result<(Var, Option<RunningStats>)> {
        let out = tensor::batchnorm2d(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            running,
            mode,
            tensor::BN_EPS,
            tensor::BN_MOMENTUM,
        )?;
        let v = self.push(
            out.output,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                normalized: out.normalized,
                inv_std: out.inv_std,
                mode,
            },
        );
        Ok((v, out.running))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let out = tensor::activation(self.value(input), kind);
        self.push(out, Op::Activation { input, kind })
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::hadamard(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Hadamard { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn scale(&mut self, input: Var, alpha: f64) -> Var {
        let out = self.value(input).scale(alpha);
        self.push(out, Op::Scale { input, alpha })
    }

    pub fn max_pool(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let out = tensor::max_pool2d(self.value(input), window, stride)?;
        Ok(self.push(out.output, Op::MaxPool { input, argmax: out.argmax }))
    }

    pub fn global_avg_pool(&mut self, input: Var) -> Var {
        let out = tensor::global_avg_pool(self.value(input));
        self.push(out, Op::GlobalAvgPool { input })
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = tensor::linear(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(out, Op::Linear { input, weight, bias }))
    }

    /// Mean cross-entropy as a scalar node.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let out = tensor::softmax_cross_entropy(self.value(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(out.loss),
            Op::SoftmaxCe {
                logits,
                probabilities: out.probabilities,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Softmax probabilities saved by a cross-entropy node.
    pub fn probabilities(&self, loss: Var) -> Option<&Tensor> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCe { probabilities, .. } => Some(probabilities),
            _ => None,
        }
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(self.value(input).sum());
        self.push(out, Op::Sum { input })
    }

    /// Which side of every kink each recorded ReLU input and max-pool window
    /// sits on. Two evaluations with equal signatures lie on the same smooth
    /// piece of the program.
    pub fn kink_signature(&self) -> Vec<u64> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Activation { input, kind: Activation::Relu } => {
                    let x = self.value(*input).data();
                    for chunk in x.chunks(64) {
                        let mut bits = 0u64;
                        for (i, v) in chunk.iter().enumerate() {
                            if *v > 0.0 {
                                bits |= 1 << i;
                            }
                        }
                        sig.push(bits);
                    }
                }
                Op::MaxPool { argmax, .. } => sig.extend(argmax.iter().map(|&i| i as u64)),
                _ => {}
            }
        }
        sig
    }

    /// Reverse pass from a scalar node. Each node is visited exactly once,
    /// in reverse creation order.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(Error::invalid("backward", format!("loss must be scalar, got shape {ls}")));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(ls, 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            for (var, adj) in self.adjoints(node, &g)? {
                match &mut grads[var.0] {
                    Some(acc) => acc.accumulate(&adj)?,
                    slot @ None => *slot = Some(adj),
                }
            }
            grads[idx] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }

    fn adjoints(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Conv2d { input, weight, bias, spec } => {
                let x = self.value(*input);
                out.push((*input, tensor::conv2d_backward_input(g, self.value(*weight), x.shape(), spec)?));
                let (gw, gb) = tensor::conv2d_backward_weight(g, x, spec)?;
                out.push((*weight, gw));
                if let (Some(b), Some(gb)) = (bias, gb) {
                    let shape = self.shape(*b);
                    out.push((*b, gb.reshape(shape)?));
                }
            }
            Op::BatchNorm { input, gamma, beta, normalized, inv_std, mode } => {
                let (gx, gg, gb) = tensor::batchnorm2d_backward(g, normalized, self.value(*gamma), inv_std, *mode)?;
                out.push((*input, gx));
                out.push((*gamma, gg.reshape(self.shape(*gamma))?));
                out.push((*beta, gb.reshape(self.shape(*beta))?));
            }
            Op::Activation { input, kind } => {
                out.push((*input, tensor::activation_backward(g, self.value(*input), &node.value, *kind)?));
            }
            Op::Concat { a, b } => {
                let ca = self.shape(*a).c;
                let cb = self.shape(*b).c;
                out.push((*a, g.slice_channels(0, ca)?));
                out.push((*b, g.slice_channels(ca, cb)?));
            }
            Op::Hadamard { a, b } => {
                out.push((*a, tensor::hadamard(g, self.value(*b))?));
                out.push((*b, tensor::hadamard(g, self.value(*a))?));
            }
            Op::Add { a, b } => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Scale { input, alpha } => out.push((*input, g.scale(*alpha))),
            Op::MaxPool { input, argmax } => {
                out.push((*input, tensor::max_pool2d_backward(g, argmax, self.shape(*input))));
            }
            Op::GlobalAvgPool { input } => {
                out.push((*input, tensor::global_avg_pool_backward(g, self.shape(*input))));
            }
            Op::Linear { input, weight, bias } => {
                let (gx, gw, gb) = tensor::linear_backward(g, self.value(*input), self.value(*weight))?;
                out.push((*input, gx));
                out.push((*weight, gw));
                out.push((*bias, gb.reshape(self.shape(*bias))?));
            }
            Op::SoftmaxCe { logits, probabilities, labels } => {
                let upstream = g.item()?;
                let n = labels.len();
                let k = probabilities.numel() / n;
                let mut d = probabilities.data().to_vec();
                for (row, &y) in labels.iter().enumerate() {
                    d[row * k + y] -= 1.0;
                }
                let scale = upstream / n as f64;
                d.iter_mut().for_each(|v| *v *= scale);
                out.push((*logits, Tensor::from_vec(self.shape(*logits), d)?));
            }
            Op::Sum { input } => {
                out.push((*input, Tensor::full(self.shape(*input), g.item()?)));
            }
        }
        Ok(out)
    }
}

/// Adjoints of every node reached from the loss.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zeros of `shape` when unreachable.
    pub fn wrt(&self, v: Var, shape: Shape) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

/// Gradients keyed by parameter name, in parameter-store order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradMap {
    entries: Vec<(String, Tensor)>,
}

impl GradMap {
    pub fn new() -> Self {
        GradMap::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some((_, g)) => *g = grad,
            None => self.entries.push((name, grad)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, g)| (n.as_str(), g))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scale(&mut self, alpha: f64) {
        for (_, g) in &mut self.entries {
            *g = g.scale(alpha);
        }
    }
}

/// Location of one checked parameter element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementCheck {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<ElementCheck>,
    /// First element where either gradient was NaN or infinite.
    pub non_finite: Option<ElementCheck>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.non_finite.is_none() && self.max_rel_error < tolerance
    }
}

pub const DEFAULT_GRADCHECK_EPS: f64 = 1e-5;

/// `|a - b| / max(1e-12, |a| + |b|)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-12)
}

/// Compares reverse-mode gradients of `program` w.r.t. every element of
/// `params` against central differences with step `eps`.
///
/// `program` receives the graph and one trainable leaf per parameter and
/// must return a scalar node.
pub fn grad_check<F>(program: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_sampled(program, params, eps, usize::MAX)
}

/// [`grad_check`] restricted to at most `per_param` evenly spaced elements
/// of each parameter tensor.
pub fn grad_check_sampled<F>(program: F, params: &[Tensor], eps: f64, per_param: usize) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::invalid("grad_check", "eps must be positive"));
    }
    let evaluate = |values: &[Tensor]| -> Result<(f64, Vec<u64>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let loss = program(&mut g, &vars)?;
        Ok((g.value(loss).item()?, g.kink_signature()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.param(t.clone())).collect();
    let loss = program(&mut g, &vars)?;
    let base_sig = g.kink_signature();
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = params.to_vec();
    for (p, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var, params[p].shape());
        for i in sample_indices(params[p].numel(), per_param) {
            let orig = params[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let (plus, sig_plus) = evaluate(&work)?;
            work[p].data_mut()[i] = orig - eps;
            let (minus, sig_minus) = evaluate(&work)?;
            work[p].data_mut()[i] = orig;

            let check = ElementCheck {
                param: p,
                index: i,
                analytic: analytic.data()[i],
                numeric: (plus - minus) / (2.0 * eps),
            };
            if !check.analytic.is_finite() || !check.numeric.is_finite() {
                report.non_finite.get_or_insert(check);
                continue;
            }
            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped_kinks += 1;
                continue;
            }
            report.checked += 1;
            let err = relative_error(check.analytic, check.numeric);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(check);
            }
        }
    }
    Ok(report)
}

fn sample_indices(numel: usize, per_param: usize) -> Vec<usize> {
    if numel <= per_param {
        return (0..numel).collect();
    }
    (0..per_param).map(|j| j * numel / per_param).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn product_rule() {
        let s = Shape::new(1, 2, 1, 2);
        let mut g = Graph::new();
        let a = g.param(t(s, &[1., 2., 3., 4.]));
        let b = g.param(t(s, &[-1., 0.5, 2., 7.]));
        let prod = g.hadamard(a, b).unwrap();
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap(), g.value(b));
        assert_eq!(grads.get(b).unwrap(), g.value(a));
    }

    #[test]
    fn concat_adjoint_is_slice() {
        let mut g = Graph::new();
        let a = g.param(Tensor::full(Shape::new(2, 1, 2, 2), 0.3));
        let b = g.param(Tensor::full(Shape::new(2, 3, 2, 2), -0.1));
        let cat = g.concat_channels(a, b).unwrap();
        let loss = g.sum(cat);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap(), &Tensor::full(Shape::new(2, 1, 2, 2), 1.0));
        assert_eq!(grads.get(b).unwrap(), &Tensor::full(Shape::new(2, 3, 2, 2), 1.0));
    }

    #[test]
    fn fan_out_accumulates() {
        let s = Shape::new(1, 1, 1, 3);
        let x0 = t(s, &[0.5, -1.0, 2.0]);

        let mut g = Graph::new();
        let x = g.param(x0.clone());
        let y = g.add(x, x).unwrap();
        let sq = g.hadamard(y, y).unwrap();
        let loss = g.sum(sq);
        let twice = g.backward(loss).unwrap().wrt(x, s);

        let mut h = Graph::new();
        let x2 = h.param(x0);
        let y2 = h.scale(x2, 2.0);
        let sq2 = h.hadamard(y2, y2).unwrap();
        let loss2 = h.sum(sq2);
        let scaled = h.backward(loss2).unwrap().wrt(x2, s);

        assert_eq!(twice, scaled);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(Shape::new(1, 2, 1, 1)));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn unreachable_leaf_gets_zeros() {
        let mut g = Graph::new();
        let used = g.param(Tensor::full(Shape::new(1, 1, 1, 2), 1.0));
        let unused = g.param(Tensor::full(Shape::new(1, 1, 1, 3), 1.0));
        let loss = g.sum(used);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.wrt(unused, Shape::new(1, 1, 1, 3)), Tensor::zeros(Shape::new(1, 1, 1, 3)));
    }

    #[test]
    fn sum_of_squares_grad_check() {
        let x = t(Shape::new(2, 2, 1, 1), &[0.3, -1.2, 2.5, 0.7]);
        let report = grad_check(
            |g, p| {
                let sq = g.hadamard(p[0], p[0])?;
                Ok(g.sum(sq))
            },
            &[x],
            DEFAULT_GRADCHECK_EPS,
        )
        .unwrap();
        assert_eq!(report.checked, 4);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn nan_reported_with_location() {
        let x = t(Shape::new(1, 1, 1, 2), &[1.0, f64::NAN]);
        let report = grad_check(|g, p| Ok(g.sum(p[0])), &[x], 1e-5).unwrap();
        assert!(!report.passed(1e-4));
        let loc = report.non_finite.unwrap();
        assert_eq!((loc.param, loc.index), (0, 0));
    }

    #[test]
    fn relu_kink_is_skipped() {
        let x = t(Shape::new(1, 1, 1, 2), &[1e-7, 0.8]);
        let report = grad_check(
            |g, p| {
                let r = g.relu(p[0]);
                Ok(g.sum(r))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.skipped_kinks, 1);
        assert_eq!(report.checked, 1);
        assert!(report.passed(1e-9));
    }
}
