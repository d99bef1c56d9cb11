//! SGD with momentum and weight decay, an exponential learning-rate
//! schedule, the epoch loop and TenCrop evaluation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GradMap, Graph};
use crate::backbone::{self, Binding, NetworkConfig, ParamStore};
use crate::data::{self, DatasetManifest, Image, Normalization};
use crate::error::{Error, Result};
use crate::metrics::{challenge_score, ConfusionMatrix};
use crate::tensor::{softmax_rows, BnMode, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub decay_start_epoch: usize,
    pub decay_rate: f64,
    pub max_epochs: usize,
    /// Also decay batch-norm scales/shifts and biases.
    pub decay_norm_and_bias: bool,
    /// Zero the attention convolutions and keep them fixed (attention ≡ 0.5).
    pub freeze_llam: bool,
    /// Stop once an epoch's training accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    /// Use TenCrop when scoring the validation set each epoch.
    pub eval_tencrop: bool,
    #[serde(skip_deserializing)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 256,
            decay_start_epoch: 60,
            decay_rate: 0.9,
            max_epochs: 60,
            decay_norm_and_bias: false,
            freeze_llam: false,
            stop_at_train_accuracy: None,
            eval_tencrop: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: &str| Err(Error::config(format!("/train/{field}"), msg));
        if !(self.base_lr > 0.0) {
            return fail("base_lr", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum", "must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay", "must be >= 0");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return fail("decay_rate", "must be in (0, 1]");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be >= 1");
        }
        if let Some(a) = self.stop_at_train_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return fail("stop_at_train_accuracy", "must be in [0, 1]");
            }
        }
        Ok(())
    }
}

/// `base_lr` before `decay_start_epoch`, then
/// `base_lr · decay_rate^(epoch − decay_start_epoch + 1)`.
pub fn lr_at_epoch(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.decay_start_epoch {
        cfg.base_lr
    } else {
        cfg.base_lr * cfg.decay_rate.powi((epoch - cfg.decay_start_epoch + 1) as i32)
    }
}

/// Momentum buffers mirroring the trainable entries of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    buffers: Vec<(String, Tensor)>,
    frozen: Vec<bool>,
    pub step: u64,
    pub epoch: usize,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        OptimizerState::with_frozen(store, |_| false)
    }

    pub fn with_frozen(store: &ParamStore, frozen: impl Fn(&str) -> bool) -> Self {
        let (buffers, frozen) = store
            .trainable()
            .map(|e| ((e.name.clone(), Tensor::zeros(e.value.shape())), frozen(&e.name)))
            .unzip();
        OptimizerState { buffers, frozen, step: 0, epoch: 0 }
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor> {
        self.buffers.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }
}

/// One heavy-ball step: `g = grad + wd·p; buf = m·buf + g; p -= lr·buf`.
pub fn sgd_step(store: &mut ParamStore, grads: &GradMap, state: &mut OptimizerState, lr: f64, cfg: &TrainConfig) -> Result<()> {
    let mut slot = 0;
    for i in 0..store.len() {
        let entry = store.entry_mut(i);
        if !entry.kind.trainable() {
            continue;
        }
        let (name, buf) = &mut state.buffers[slot];
        let frozen = state.frozen[slot];
        slot += 1;
        if *name != entry.name {
            return Err(Error::invalid("sgd_step", format!("optimizer state out of sync at {}", entry.name)));
        }
        if frozen {
            continue;
        }
        let grad = grads
            .get(&entry.name)
            .ok_or_else(|| Error::invalid("sgd_step", format!("no gradient for {}", entry.name)))?;
        entry.value.shape().expect_eq(&grad.shape(), "sgd_step")?;
        let wd = if entry.kind.decayed() || cfg.decay_norm_and_bias { cfg.weight_decay } else { 0.0 };
        let params = entry.value.data_mut();
        for ((p, b), g) in params.iter_mut().zip(buf.data_mut()).zip(grad.data()) {
            let g = g + wd * *p;
            *b = cfg.momentum * *b + g;
            *p -= lr * *b;
        }
    }
    state.step += 1;
    Ok(())
}

/// Labeled images held in memory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    items: Vec<(Image, usize)>,
}

impl Dataset {
    pub fn from_images(items: Vec<(Image, usize)>) -> Self {
        Dataset { items }
    }

    /// Loads every image of `manifest`, resolving paths against `root`.
    pub fn load(manifest: &DatasetManifest, root: &Path) -> Result<Self> {
        let items = manifest
            .records()
            .iter()
            .map(|r| Ok((data::load_image(&root.join(&r.image_path))?, r.label)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { items })
    }

    pub fn items(&self) -> &[(Image, usize)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// How images become network inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputPipeline {
    pub normalization: Normalization,
    /// Reflect padding before the random train crop.
    pub pad: usize,
    pub flip: bool,
    /// Side of the TenCrop / center crop used at evaluation; `None` means
    /// ⌊7/8 · side⌋.
    pub eval_crop: Option<usize>,
}

impl Default for InputPipeline {
    fn default() -> Self {
        InputPipeline {
            normalization: Normalization::default(),
            pad: 8,
            flip: true,
            eval_crop: None,
        }
    }
}

impl InputPipeline {
    pub fn eval_crop_for(&self, img: &Image) -> usize {
        self.eval_crop.unwrap_or(img.height().min(img.width()) * 7 / 8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub accuracy: f64,
    pub samples: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One pass over `dataset` in seeded random order: forward in train mode,
/// mean cross-entropy, backward, SGD step. The final batch may be partial.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    store: &mut ParamStore,
    state: &mut OptimizerState,
    dataset: &Dataset,
    network: &NetworkConfig,
    pipeline: &InputPipeline,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    if dataset.is_empty() {
        return Err(Error::invalid("train_epoch", "dataset is empty"));
    }
    let lr = lr_at_epoch(state.epoch, cfg);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    let out_size = network.input.height;
    for chunk in order.chunks(cfg.batch_size) {
        let mut inputs = Vec::with_capacity(chunk.len());
        let mut labels = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let (img, label) = &dataset.items[i];
            let flip_prob = if pipeline.flip { 0.5 } else { 0.0 };
            let (aug, _) = data::random_crop_flip(img, out_size, pipeline.pad, flip_prob, rng)?;
            inputs.push(data::to_tensor(&aug, &pipeline.normalization)?);
            labels.push(*label);
        }
        let batch = Tensor::stack(&inputs)?;

        let mut g = Graph::new();
        let binding = Binding::new(&mut g, store);
        let x = g.input(batch);
        let out = backbone::forward_graph(&mut g, store, network, &binding, x, BnMode::Train)?;
        let loss = g.softmax_cross_entropy(out.logits, &labels)?;
        loss_sum += g.value(loss).item()? * chunk.len() as f64;
        let k = network.classes;
        for (row, &y) in g.value(out.logits).data().chunks(k).zip(&labels) {
            if argmax(row) == y {
                correct += 1;
            }
        }
        let grads = g.backward(loss)?;
        let grad_map = binding.grad_map(store, &grads);
        store.apply_running_updates(out.running_updates)?;
        sgd_step(store, &grad_map, state, lr, cfg)?;
    }
    let stats = EpochStats {
        epoch: state.epoch,
        lr,
        mean_loss: loss_sum / dataset.len() as f64,
        accuracy: correct as f64 / dataset.len() as f64,
        samples: dataset.len(),
    };
    state.epoch += 1;
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub predicted: usize,
    /// Softmax probabilities averaged over the crops.
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<Prediction>,
    /// Crops scored per image (10 with TenCrop, else 1).
    pub crops_per_image: usize,
}

/// Crops fed to the network for one evaluation image.
pub fn eval_crops(img: &Image, pipeline: &InputPipeline, use_tencrop: bool) -> Result<Vec<Image>> {
    let size = pipeline.eval_crop_for(img);
    if use_tencrop {
        data::ten_crop(img, size)
    } else {
        Ok(vec![data::center_crop(img, size)?])
    }
}

/// Mean of probability rows.
pub fn average_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    let mut avg = vec![0.0; k];
    for r in rows {
        for (a, v) in avg.iter_mut().zip(r) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= rows.len() as f64);
    avg
}

/// Eval-mode scoring. With TenCrop the softmax outputs of the ten crops are
/// averaged before the argmax.
pub fn evaluate(
    store: &ParamStore,
    network: &NetworkConfig,
    dataset: &Dataset,
    pipeline: &InputPipeline,
    use_tencrop: bool,
) -> Result<Evaluation> {
    let mut confusion = ConfusionMatrix::new(network.classes);
    let mut predictions = Vec::with_capacity(dataset.len());
    let mut crops_per_image = 0;
    for (img, label) in &dataset.items {
        let crops = eval_crops(img, pipeline, use_tencrop)?;
        crops_per_image = crops.len();
        let tensors = crops
            .iter()
            .map(|c| data::to_tensor(c, &pipeline.normalization))
            .collect::<Result<Vec<_>>>()?;
        let logits = backbone::network_logits(&Tensor::stack(&tensors)?, store, network)?;
        let probabilities = average_rows(&softmax_rows(&logits));
        let predicted = argmax(&probabilities);
        confusion.update(*label, predicted)?;
        predictions.push(Prediction { label: *label, predicted, probabilities });
    }
    Ok(Evaluation { confusion, predictions, crops_per_image })
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub val_f1: f64,
    pub val_score: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: ParamStore,
    pub best_epoch: usize,
    pub best_score: f64,
    pub last: ParamStore,
    pub history: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn final_train_accuracy(&self) -> f64 {
        self.history.last().map_or(0.0, |l| l.train_acc)
    }
}

/// Names of the attention-convolution parameters.
pub fn is_llam_param(name: &str) -> bool {
    name.contains(".llam.")
}

/// Runs up to `max_epochs` epochs, keeping the parameters with the highest
/// validation challenge score (earliest epoch on ties). Without a
/// validation set the training images are scored instead.
pub fn fit(
    network: &NetworkConfig,
    cfg: &TrainConfig,
    pipeline: &InputPipeline,
    train: &Dataset,
    val: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut store = backbone::init_network(network)?;
    let mut state = if cfg.freeze_llam {
        for i in 0..store.len() {
            let e = store.entry_mut(i);
            if is_llam_param(&e.name) {
                e.value = Tensor::zeros(e.value.shape());
            }
        }
        OptimizerState::with_frozen(&store, is_llam_param)
    } else {
        OptimizerState::new(&store)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let val = val.unwrap_or(train);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    for _ in 0..cfg.max_epochs {
        let stats = train_epoch(&mut store, &mut state, train, network, pipeline, cfg, &mut rng)?;
        let eval = evaluate(&store, network, val, pipeline, cfg.eval_tencrop)?;
        let summary = eval.confusion.summarize()?;
        let score = challenge_score(summary.accuracy, summary.macro_f1)?;
        let log = EpochLog {
            epoch: stats.epoch,
            lr: stats.lr,
            train_loss: stats.mean_loss,
            train_acc: stats.accuracy,
            val_acc: summary.accuracy,
            val_f1: summary.macro_f1,
            val_score: score,
        };
        on_epoch(&log)?;
        history.push(log);
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((stats.epoch, score, store.clone()));
        }
        if cfg.stop_at_train_accuracy.is_some_and(|t| stats.accuracy >= t) {
            break;
        }
    }
    let (best_epoch, best_score, best) = best.ok_or_else(|| Error::config("/train/max_epochs", "must be >= 1"))?;
    Ok(TrainOutcome { best, best_epoch, best_score, last: store, history })
}
