//! LLA-Net: a ResNet-style stem, a stack of combined modules (BasicBlock
//! followed by lossless attention), global average pooling and a linear
//! classifier.
//!
//! Each combined module receives the previous module's refined output both
//! as the block input and as the attention module's "previous" features.
//! When the block changes the channel count or stride, the previous
//! features go through a learned 1×1 projection (conv + batch norm) so both
//! attention inputs share one shape.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{GradMap, Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::llam::{self, kaiming_bound};
use crate::tensor::{BnMode, ConvSpec, RunningStats, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StemSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub blocks: usize,
    pub channels: usize,
    /// Stride of the stage's first block; later blocks use stride 1.
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input: InputSpec,
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub llam_kernel: usize,
    /// Ablation switch: `false` builds a plain ResNet.
    pub use_llam: bool,
    pub classes: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// ResNet-18 sized, 112×112 input, no-resize stem.
    Paper,
    /// Test sized: stem 8, stages [1, 1] at [8, 16], 32×32 input.
    Tiny,
    /// Gradient-check sized: stem 4, one combined module at width 4, 8×8 input.
    Micro,
}

impl Preset {
    pub fn config(self) -> NetworkConfig {
        match self {
            Preset::Paper => NetworkConfig::paper(),
            Preset::Tiny => NetworkConfig::tiny(),
            Preset::Micro => NetworkConfig::micro(),
        }
    }
}

/// Placement of one combined module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleLayout {
    pub index: usize,
    pub stage: usize,
    pub block: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub prefix: String,
}

impl ModuleLayout {
    /// Whether the block input needs projecting to the block output shape.
    pub fn needs_projection(&self) -> bool {
        self.stride != 1 || self.in_channels != self.out_channels
    }
}

impl NetworkConfig {
    pub fn paper() -> Self {
        let stage = |channels, stride| StageSpec { blocks: 2, channels, stride };
        NetworkConfig {
            input: InputSpec { channels: 3, height: 112, width: 112 },
            stem: StemSpec { channels: 64, kernel: 3, stride: 1 },
            stages: vec![stage(64, 1), stage(128, 2), stage(256, 2), stage(512, 2)],
            llam_kernel: 3,
            use_llam: true,
            classes: 7,
            seed: 0,
        }
    }

    pub fn tiny() -> Self {
        NetworkConfig {
            input: InputSpec { channels: 3, height: 32, width: 32 },
            stem: StemSpec { channels: 8, kernel: 3, stride: 1 },
            stages: vec![
                StageSpec { blocks: 1, channels: 8, stride: 1 },
                StageSpec { blocks: 1, channels: 16, stride: 2 },
            ],
            llam_kernel: 3,
            use_llam: true,
            classes: 7,
            seed: 0,
        }
    }

    pub fn micro() -> Self {
        NetworkConfig {
            input: InputSpec { channels: 3, height: 8, width: 8 },
            stem: StemSpec { channels: 4, kernel: 3, stride: 1 },
            stages: vec![StageSpec { blocks: 1, channels: 4, stride: 1 }],
            llam_kernel: 3,
            use_llam: true,
            classes: 7,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("/network/classes", "need at least 2 classes"));
        }
        if self.input.channels == 0 || self.input.height == 0 || self.input.width == 0 {
            return Err(Error::config("/network/input", "input dims must be positive"));
        }
        if self.stem.channels == 0 || self.stem.stride == 0 {
            return Err(Error::config("/network/stem", "stem channels and stride must be positive"));
        }
        if self.stem.kernel.is_multiple_of(2) {
            return Err(Error::config("/network/stem/kernel", "kernel must be odd"));
        }
        if self.llam_kernel.is_multiple_of(2) {
            return Err(Error::config("/network/llam_kernel", "kernel must be odd"));
        }
        if self.stages.is_empty() {
            return Err(Error::config("/network/stages", "at least one stage required"));
        }
        let mut prev = self.stem.channels;
        for (i, st) in self.stages.iter().enumerate() {
            let at = |field: &str| format!("/network/stages/{i}/{field}");
            if st.blocks == 0 {
                return Err(Error::config(at("blocks"), "stage needs at least one block"));
            }
            if st.stride == 0 {
                return Err(Error::config(at("stride"), "stride must be positive"));
            }
            if st.channels < prev || st.channels == 0 {
                return Err(Error::config(
                    at("channels"),
                    format!("channel progression must be non-decreasing and positive ({prev} -> {})", st.channels),
                ));
            }
            prev = st.channels;
        }
        self.feature_shape(self.input.height, self.input.width)
            .map_err(|e| Error::config("/network/input", e.to_string()))?;
        Ok(())
    }

    pub fn stem_spec(&self) -> ConvSpec {
        ConvSpec::square(self.input.channels, self.stem.channels, self.stem.kernel, self.stem.stride, false)
    }

    pub fn modules(&self) -> Vec<ModuleLayout> {
        let mut out = Vec::new();
        let mut in_channels = self.stem.channels;
        for (s, st) in self.stages.iter().enumerate() {
            for b in 0..st.blocks {
                out.push(ModuleLayout {
                    index: out.len(),
                    stage: s,
                    block: b,
                    in_channels,
                    out_channels: st.channels,
                    stride: if b == 0 { st.stride } else { 1 },
                    prefix: format!("stage{s}.block{b}"),
                });
                in_channels = st.channels;
            }
        }
        out
    }

    /// Shape `(C, H, W)` of the last feature map before pooling for an
    /// `h × w` input.
    pub fn feature_shape(&self, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        let (mut h, mut w) = self.stem_spec().output_hw(h, w)?;
        let mut c = self.stem.channels;
        for m in self.modules() {
            let conv1 = ConvSpec::square(m.in_channels, m.out_channels, 3, m.stride, false);
            (h, w) = conv1.output_hw(h, w)?;
            c = m.out_channels;
        }
        Ok((c, h, w))
    }

    /// SHA-256 over the canonical JSON form.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    ConvWeight,
    LinearWeight,
    Bias,
    BnGamma,
    BnBeta,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }

    /// Weight decay applies to conv and linear weights only.
    pub fn decayed(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::LinearWeight)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Named learnable tensors plus batch-norm running statistics, in a fixed
/// creation order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"LLANETCK";

impl ParamStore {
    fn push(&mut self, name: String, kind: ParamKind, value: Tensor) {
        debug_assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, kind, value });
    }

    fn push_bn(&mut self, prefix: &str, channels: usize) {
        self.push(format!("{prefix}.gamma"), ParamKind::BnGamma, Tensor::vector(vec![1.0; channels]));
        self.push(format!("{prefix}.beta"), ParamKind::BnBeta, Tensor::vector(vec![0.0; channels]));
        self.push(format!("{prefix}.running_mean"), ParamKind::RunningMean, Tensor::vector(vec![0.0; channels]));
        self.push(format!("{prefix}.running_var"), ParamKind::RunningVar, Tensor::vector(vec![1.0; channels]));
    }

    fn push_conv(&mut self, name: String, spec: &ConvSpec, rng: &mut ChaCha8Rng) {
        let bound = kaiming_bound(spec.fan_in());
        self.push(name, ParamKind::ConvWeight, Tensor::uniform(spec.weight_shape(), -bound, bound, rng));
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index_of(name)
            .map(|i| &self.entries[i].value)
            .ok_or_else(|| Error::invalid("ParamStore", format!("no parameter named {name}")))
    }

    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::invalid("ParamStore", format!("no parameter named {name}")))?;
        self.entries[i].value.shape().expect_eq(&value.shape(), "ParamStore::set")?;
        self.entries[i].value = value;
        Ok(())
    }

    pub fn entry_mut(&mut self, index: usize) -> &mut ParamEntry {
        &mut self.entries[index]
    }

    /// Trainable entries in store order.
    pub fn trainable(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter().filter(|e| e.kind.trainable())
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.trainable().map(|e| e.value.numel()).sum()
    }

    fn running(&self, prefix: &str) -> Result<RunningStats> {
        Ok(RunningStats {
            mean: self.get(&format!("{prefix}.running_mean"))?.data().to_vec(),
            var: self.get(&format!("{prefix}.running_var"))?.data().to_vec(),
        })
    }

    pub fn apply_running_updates(&mut self, updates: Vec<(String, RunningStats)>) -> Result<()> {
        for (prefix, stats) in updates {
            self.set(&format!("{prefix}.running_mean"), Tensor::vector(stats.mean))?;
            self.set(&format!("{prefix}.running_var"), Tensor::vector(stats.var))?;
        }
        Ok(())
    }

    /// Serializes every entry after a magic string and the config digest.
    pub fn to_bytes(&self, config_digest: &[u8; 32]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(config_digest);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            for d in e.value.shape().dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in e.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Loads values into a store shaped by `config`; the checkpoint must
    /// carry the same config digest and exactly the same entries.
    pub fn from_bytes(bytes: &[u8], config: &NetworkConfig) -> Result<Self> {
        let mut store = init_network(config)?;
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::invalid("checkpoint", "bad magic"));
        }
        if r.take(32)? != config.digest() {
            return Err(Error::invalid("checkpoint", "config digest does not match"));
        }
        let count = r.u32()? as usize;
        if count != store.len() {
            return Err(Error::invalid("checkpoint", format!("expected {} entries, found {count}", store.len())));
        }
        for i in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::invalid("checkpoint", "entry name is not UTF-8"))?
                .to_owned();
            if name != store.entries[i].name {
                return Err(Error::invalid(
                    "checkpoint",
                    format!("entry {i} is {name}, expected {}", store.entries[i].name),
                ));
            }
            let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
            let data = (0..shape.numel()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            store.set(&name, Tensor::from_vec(shape, data)?)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::invalid("checkpoint", "trailing bytes"));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path, config: &NetworkConfig) -> Result<()> {
        std::fs::write(path, self.to_bytes(&config.digest())).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, config: &NetworkConfig) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ParamStore::from_bytes(&bytes, config).map_err(|e| Error::Format {
            path: path.to_owned(),
            msg: e.to_string(),
        })
    }

    /// Hex SHA-256 of the checkpoint encoding.
    pub fn digest(&self, config: &NetworkConfig) -> String {
        hex::encode(Sha256::digest(self.to_bytes(&config.digest())))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::invalid("checkpoint", "truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn block_specs(m: &ModuleLayout) -> (ConvSpec, ConvSpec, ConvSpec) {
    let conv1 = ConvSpec::square(m.in_channels, m.out_channels, 3, m.stride, false);
    let conv2 = ConvSpec::square(m.out_channels, m.out_channels, 3, 1, false);
    let proj = ConvSpec::square(m.in_channels, m.out_channels, 1, m.stride, false);
    (conv1, conv2, proj)
}

/// Builds every parameter for `config`, deterministically from its seed.
pub fn init_network(config: &NetworkConfig) -> Result<ParamStore> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::default();
    store.push_conv("stem.conv.weight".into(), &config.stem_spec(), &mut rng);
    store.push_bn("stem.bn", config.stem.channels);
    for m in config.modules() {
        let (conv1, conv2, proj) = block_specs(&m);
        let p = &m.prefix;
        store.push_conv(format!("{p}.conv1.weight"), &conv1, &mut rng);
        store.push_bn(&format!("{p}.bn1"), m.out_channels);
        store.push_conv(format!("{p}.conv2.weight"), &conv2, &mut rng);
        store.push_bn(&format!("{p}.bn2"), m.out_channels);
        if m.needs_projection() {
            store.push_conv(format!("{p}.shortcut.conv.weight"), &proj, &mut rng);
            store.push_bn(&format!("{p}.shortcut.bn"), m.out_channels);
        }
        if config.use_llam {
            if m.needs_projection() {
                store.push_conv(format!("{p}.align.conv.weight"), &proj, &mut rng);
                store.push_bn(&format!("{p}.align.bn"), m.out_channels);
            }
            let params = llam::llam_init(m.out_channels, config.llam_kernel, &mut rng)?;
            store.push(format!("{p}.llam.weight"), ParamKind::ConvWeight, params.conv_weight);
            store.push(format!("{p}.llam.bias"), ParamKind::Bias, params.conv_bias);
        }
    }
    let (features, _, _) = config.feature_shape(config.input.height, config.input.width)?;
    let bound = kaiming_bound(features);
    store.push(
        "head.weight".into(),
        ParamKind::LinearWeight,
        Tensor::uniform(Shape::new(config.classes, features, 1, 1), -bound, bound, &mut rng),
    );
    store.push("head.bias".into(), ParamKind::Bias, Tensor::vector(vec![0.0; config.classes]));
    Ok(store)
}

/// Graph leaves for one forward pass: a trainable leaf per learnable entry.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Option<Var>>,
}

impl Binding {
    pub fn new(g: &mut Graph, store: &ParamStore) -> Self {
        let vars = store
            .entries
            .iter()
            .map(|e| e.kind.trainable().then(|| g.param(e.value.clone())))
            .collect();
        Binding { vars }
    }

    /// Uses pre-made leaves, one per trainable entry in store order.
    pub fn from_vars(store: &ParamStore, trainable_vars: &[Var]) -> Result<Self> {
        let mut it = trainable_vars.iter();
        let vars = store
            .entries
            .iter()
            .map(|e| if e.kind.trainable() { it.next().copied().map(Some) } else { Some(None) })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::invalid("Binding", "too few variables for the trainable parameters"))?;
        if it.next().is_some() {
            return Err(Error::invalid("Binding", "more variables than trainable parameters"));
        }
        Ok(Binding { vars })
    }

    fn var(&self, store: &ParamStore, name: &str) -> Result<Var> {
        let i = store
            .index_of(name)
            .ok_or_else(|| Error::invalid("network", format!("missing parameter {name}")))?;
        self.vars[i].ok_or_else(|| Error::invalid("network", format!("{name} is not trainable")))
    }

    /// Collects gradients for every trainable entry; unreachable ones are zero.
    pub fn grad_map(&self, store: &ParamStore, grads: &Gradients) -> GradMap {
        let mut map = GradMap::new();
        for (e, v) in store.entries.iter().zip(&self.vars) {
            if let Some(v) = v {
                map.insert(e.name.clone(), grads.wrt(*v, e.value.shape()));
            }
        }
        map
    }
}

/// Graph handles of one combined module's intermediate values.
#[derive(Clone, Copy, Debug)]
pub struct ModuleTrace {
    pub input: Var,
    pub previous: Var,
    pub current: Var,
    pub output: Var,
    pub attention: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Var,
    pub stem: Var,
    pub modules: Vec<ModuleTrace>,
    /// Batch-norm running statistics produced in train mode, keyed by layer prefix.
    pub running_updates: Vec<(String, RunningStats)>,
}

struct Ctx<'a> {
    store: &'a ParamStore,
    config: &'a NetworkConfig,
    binding: &'a Binding,
    mode: BnMode,
    updates: Vec<(String, RunningStats)>,
}

impl Ctx<'_> {
    fn var(&self, name: &str) -> Result<Var> {
        self.binding.var(self.store, name)
    }

    fn conv_bn(&mut self, g: &mut Graph, x: Var, conv: &str, bn: &str, spec: ConvSpec) -> Result<Var> {
        let w = self.var(conv)?;
        let y = g.conv2d(x, w, None, spec)?;
        let gamma = self.var(&format!("{bn}.gamma"))?;
        let beta = self.var(&format!("{bn}.beta"))?;
        let running = self.store.running(bn)?;
        let (out, next) = g.batch_norm(y, gamma, beta, &running, self.mode)?;
        if let Some(next) = next {
            self.updates.push((bn.to_owned(), next));
        }
        Ok(out)
    }

    fn combined_module(&mut self, g: &mut Graph, m: &ModuleLayout, f_in: Var, f_prev_out: Var) -> Result<ModuleTrace> {
        let (conv1, conv2, proj) = block_specs(m);
        let p = &m.prefix;
        let h = self.conv_bn(g, f_in, &format!("{p}.conv1.weight"), &format!("{p}.bn1"), conv1)?;
        let h = g.relu(h);
        let h = self.conv_bn(g, h, &format!("{p}.conv2.weight"), &format!("{p}.bn2"), conv2)?;
        let shortcut = if m.needs_projection() {
            self.conv_bn(g, f_in, &format!("{p}.shortcut.conv.weight"), &format!("{p}.shortcut.bn"), proj)?
        } else {
            f_in
        };
        let sum = g.add(h, shortcut)?;
        let current = g.relu(sum);
        if !self.config.use_llam {
            return Ok(ModuleTrace { input: f_in, previous: f_prev_out, current, output: current, attention: None });
        }
        let previous = if g.shape(f_prev_out) == g.shape(current) {
            f_prev_out
        } else {
            self.conv_bn(g, f_prev_out, &format!("{p}.align.conv.weight"), &format!("{p}.align.bn"), proj)?
        };
        let w = self.var(&format!("{p}.llam.weight"))?;
        let b = self.var(&format!("{p}.llam.bias"))?;
        let (output, attention) = llam::llam_forward_graph(g, previous, current, w, b, self.config.llam_kernel)?;
        Ok(ModuleTrace {
            input: f_in,
            previous,
            current,
            output,
            attention: Some(attention),
        })
    }
}

/// Records the whole network on `g`. The batch's channel count must match
/// the config; any spatial size that survives the strides is accepted.
pub fn forward_graph(
    g: &mut Graph,
    store: &ParamStore,
    config: &NetworkConfig,
    binding: &Binding,
    batch: Var,
    mode: BnMode,
) -> Result<ForwardOutput> {
    let bs = g.shape(batch);
    if bs.c != config.input.channels {
        return Err(Error::dim("network_forward", "channels", config.input.channels, bs.c));
    }
    let mut ctx = Ctx { store, config, binding, mode, updates: Vec::new() };
    let stem = ctx.conv_bn(g, batch, "stem.conv.weight", "stem.bn", config.stem_spec())?;
    let stem = g.relu(stem);
    let mut modules = Vec::new();
    let mut x = stem;
    for m in config.modules() {
        let trace = ctx.combined_module(g, &m, x, x)?;
        x = trace.output;
        modules.push(trace);
    }
    let pooled = g.global_avg_pool(x);
    let w = ctx.var("head.weight")?;
    let b = ctx.var("head.bias")?;
    let logits = g.linear(pooled, w, b)?;
    Ok(ForwardOutput {
        logits,
        stem,
        modules,
        running_updates: ctx.updates,
    })
}

/// Runs one combined module on concrete tensors.
pub fn combined_module_forward(
    f_in: &Tensor,
    f_prev_out: &Tensor,
    store: &ParamStore,
    config: &NetworkConfig,
    module_index: usize,
    mode: BnMode,
) -> Result<Tensor> {
    let layout = config
        .modules()
        .into_iter()
        .nth(module_index)
        .ok_or_else(|| Error::invalid("combined_module_forward", format!("no module {module_index}")))?;
    let mut g = Graph::new();
    let binding = Binding::new(&mut g, store);
    let (x, prev) = (g.input(f_in.clone()), g.input(f_prev_out.clone()));
    let mut ctx = Ctx { store, config, binding: &binding, mode, updates: Vec::new() };
    let trace = ctx.combined_module(&mut g, &layout, x, prev)?;
    Ok(g.value(trace.output).clone())
}

/// Logits `(n, K, 1, 1)` for a batch. Train mode folds the new running
/// statistics back into `store`.
pub fn network_forward(batch: &Tensor, store: &mut ParamStore, config: &NetworkConfig, mode: BnMode) -> Result<Tensor> {
    let mut g = Graph::new();
    let binding = Binding::new(&mut g, store);
    let x = g.input(batch.clone());
    let out = forward_graph(&mut g, store, config, &binding, x, mode)?;
    let logits = g.value(out.logits).clone();
    store.apply_running_updates(out.running_updates)?;
    Ok(logits)
}

/// Eval-mode logits; does not touch the store.
pub fn network_logits(batch: &Tensor, store: &ParamStore, config: &NetworkConfig) -> Result<Tensor> {
    let mut g = Graph::new();
    let binding = Binding::new(&mut g, store);
    let x = g.input(batch.clone());
    let out = forward_graph(&mut g, store, config, &binding, x, BnMode::Eval)?;
    Ok(g.value(out.logits).clone())
}

/// Attention maps of every combined module for one eval-mode pass.
pub fn attention_maps(batch: &Tensor, store: &ParamStore, config: &NetworkConfig) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let binding = Binding::new(&mut g, store);
    let x = g.input(batch.clone());
    let out = forward_graph(&mut g, store, config, &binding, x, BnMode::Eval)?;
    Ok(out
        .modules
        .iter()
        .filter_map(|m| m.attention.map(|a| g.value(a).clone()))
        .collect())
}
