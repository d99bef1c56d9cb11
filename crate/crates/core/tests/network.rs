mod common;

use common::{max_abs_diff, random_tensor};
use llanet::autodiff::GradMap;
use llanet::backbone::{self, NetworkConfig, ParamStore};
use llanet::llam::{self, kaiming_bound};
use llanet::tensor::{BnMode, Shape, Tensor};
use llanet::training::{self, sgd_step, Dataset, InputPipeline, OptimizerState, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Trainable scalars of a ResNet-style layer list with one attention module
/// per block, counted straight from the layer arithmetic.
fn parameter_count_oracle(c: &NetworkConfig) -> usize {
    let bn = |ch: usize| 2 * ch;
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k;
    let mut total = conv(c.input.channels, c.stem.channels, c.stem.kernel) + bn(c.stem.channels);
    let mut cin = c.stem.channels;
    let mut spatial = (c.input.height, c.input.width);
    spatial = ((spatial.0 - 1) / c.stem.stride + 1, (spatial.1 - 1) / c.stem.stride + 1);
    for st in &c.stages {
        for b in 0..st.blocks {
            let stride = if b == 0 { st.stride } else { 1 };
            let cout = st.channels;
            total += conv(cin, cout, 3) + bn(cout) + conv(cout, cout, 3) + bn(cout);
            let projected = stride != 1 || cin != cout;
            if projected {
                total += 2 * (conv(cin, cout, 1) + bn(cout));
            }
            total += conv(2 * cout, cout, c.llam_kernel) + cout;
            cin = cout;
            spatial = ((spatial.0 - 1) / stride + 1, (spatial.1 - 1) / stride + 1);
        }
    }
    total + cin * c.classes + c.classes
}

#[test]
fn full_size_preset_shapes_and_parameter_count() {
    let c = NetworkConfig::paper();
    assert_eq!(c.feature_shape(112, 112).unwrap(), (512, 14, 14));
    assert_eq!(c.modules().len(), 8);
    let store = backbone::init_network(&c).unwrap();
    let count = store.parameter_count();
    assert_eq!(count, parameter_count_oracle(&c));
    println!("full-size preset trainable parameters: {count}");
}

#[test]
fn tiny_parameter_count_matches_layer_list() {
    let c = NetworkConfig::tiny();
    assert_eq!(backbone::init_network(&c).unwrap().parameter_count(), parameter_count_oracle(&c));
}

#[test]
fn tiny_forward_shape_finiteness_determinism() {
    let c = NetworkConfig::tiny();
    let store = backbone::init_network(&c).unwrap();
    assert_eq!(store, backbone::init_network(&c).unwrap());
    let x = random_tensor(Shape::new(2, 3, 32, 32), &mut ChaCha8Rng::seed_from_u64(0));
    let a = backbone::network_logits(&x, &store, &c).unwrap();
    let b = backbone::network_logits(&x, &store, &c).unwrap();
    assert_eq!(a.shape(), Shape::new(2, 7, 1, 1));
    assert!(a.is_finite());
    assert_eq!(a, b);
}

#[test]
fn eval_forward_is_thread_safe() {
    let c = NetworkConfig::tiny();
    let store = backbone::init_network(&c).unwrap();
    let x = random_tensor(Shape::new(1, 3, 32, 32), &mut ChaCha8Rng::seed_from_u64(4));
    let serial = backbone::network_logits(&x, &store, &c).unwrap();
    let results: Vec<Tensor> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4).map(|_| s.spawn(|| backbone::network_logits(&x, &store, &c).unwrap())).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(results.iter().all(|r| *r == serial));
}

#[test]
fn ablation_changes_the_function() {
    let with = NetworkConfig::tiny();
    let without = NetworkConfig { use_llam: false, ..with.clone() };
    let x = random_tensor(Shape::new(1, 3, 32, 32), &mut ChaCha8Rng::seed_from_u64(5));
    let a = backbone::network_logits(&x, &backbone::init_network(&with).unwrap(), &with).unwrap();
    let b = backbone::network_logits(&x, &backbone::init_network(&without).unwrap(), &without).unwrap();
    assert_ne!(a, b);
    assert!(backbone::init_network(&without).unwrap().parameter_count() < backbone::init_network(&with).unwrap().parameter_count());
}

#[test]
fn train_mode_updates_running_stats_eval_does_not() {
    let c = NetworkConfig::tiny();
    let mut store = backbone::init_network(&c).unwrap();
    let before = store.clone();
    let x = random_tensor(Shape::new(2, 3, 32, 32), &mut ChaCha8Rng::seed_from_u64(6));
    backbone::network_forward(&x, &mut store, &c, BnMode::Eval).unwrap();
    assert_eq!(store, before);
    backbone::network_forward(&x, &mut store, &c, BnMode::Train).unwrap();
    assert_ne!(store.get("stem.bn.running_mean").unwrap(), before.get("stem.bn.running_mean").unwrap());
    assert_eq!(store.get("stem.conv.weight").unwrap(), before.get("stem.conv.weight").unwrap());
}

fn zero_llam(store: &mut ParamStore) {
    for i in 0..store.len() {
        let e = store.entry_mut(i);
        if training::is_llam_param(&e.name) {
            e.value = Tensor::zeros(e.value.shape());
        }
    }
}

#[test]
fn zero_attention_halves_the_block_output() {
    let with = NetworkConfig::tiny();
    let mut store = backbone::init_network(&with).unwrap();
    zero_llam(&mut store);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // stage-internal module and a stage-boundary module
    for (index, shape_in) in [(0, Shape::new(2, 8, 32, 32)), (1, Shape::new(2, 8, 32, 32))] {
        let f_in = random_tensor(shape_in, &mut rng);
        let attended = backbone::combined_module_forward(&f_in, &f_in, &store, &with, index, BnMode::Eval).unwrap();
        let without = NetworkConfig { use_llam: false, ..with.clone() };
        // same block weights: copy shared entries into an ablated store
        let mut plain = backbone::init_network(&without).unwrap();
        for e in plain.entries().to_vec() {
            plain.set(&e.name, store.get(&e.name).unwrap().clone()).unwrap();
        }
        let block = backbone::combined_module_forward(&f_in, &f_in, &plain, &without, index, BnMode::Eval).unwrap();
        assert_eq!(attended, block.scale(0.5));
    }
}

#[test]
fn boundary_module_aligns_previous_features() {
    let c = NetworkConfig::tiny();
    let layout = &c.modules()[1];
    assert!(layout.needs_projection());
    let store = backbone::init_network(&c).unwrap();
    let f_in = random_tensor(Shape::new(1, 8, 32, 32), &mut ChaCha8Rng::seed_from_u64(8));
    let out = backbone::combined_module_forward(&f_in, &f_in, &store, &c, 1, BnMode::Eval).unwrap();
    assert_eq!(out.shape(), Shape::new(1, 16, 16, 16));
    let maps = backbone::attention_maps(&random_tensor(Shape::new(1, 3, 32, 32), &mut ChaCha8Rng::seed_from_u64(9)), &store, &c).unwrap();
    assert_eq!(maps.iter().map(Tensor::shape).collect::<Vec<_>>(), vec![Shape::new(1, 8, 32, 32), Shape::new(1, 16, 16, 16)]);
}

#[test]
fn previous_features_influence_output() {
    let c = NetworkConfig::tiny();
    let store = backbone::init_network(&c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let f_in = random_tensor(Shape::new(1, 8, 32, 32), &mut rng);
    let other = random_tensor(Shape::new(1, 8, 32, 32), &mut rng);
    let a = backbone::combined_module_forward(&f_in, &f_in, &store, &c, 0, BnMode::Eval).unwrap();
    let b = backbone::combined_module_forward(&f_in, &other, &store, &c, 0, BnMode::Eval).unwrap();
    assert_ne!(a, b);
}

#[test]
fn llam_init_within_fan_in_bound() {
    let bound = kaiming_bound(8 * 9);
    assert!((bound - (6.0f64 / 72.0).sqrt()).abs() < 1e-15);
    for seed in 0..10 {
        let p = llam::llam_init(4, 3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(p.conv_weight.shape(), Shape::new(4, 8, 3, 3));
        assert!(p.conv_weight.data().iter().all(|w| w.abs() <= bound));
    }
}

#[test]
fn checkpoint_round_trip_through_disk() {
    let c = NetworkConfig::tiny();
    let store = backbone::init_network(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    store.save(&path, &c).unwrap();
    assert_eq!(ParamStore::load(&path, &c).unwrap(), store);
    assert_eq!(store.digest(&c), ParamStore::load(&path, &c).unwrap().digest(&c));
    let other = NetworkConfig { use_llam: false, ..c };
    assert!(ParamStore::load(&path, &other).is_err());
}

/// Store holding a single 1×1 linear weight, for optimizer recurrences.
fn scalar_store(x: f64) -> (ParamStore, String) {
    let c = NetworkConfig::micro();
    let mut store = backbone::init_network(&c).unwrap();
    let name = "head.weight".to_owned();
    let shape = store.get(&name).unwrap().shape();
    store.set(&name, Tensor::full(shape, x)).unwrap();
    (store, name)
}

fn grads_for(store: &ParamStore, name: &str, f: impl Fn(&Tensor) -> Tensor) -> GradMap {
    let mut g = GradMap::new();
    for e in store.trainable() {
        let grad = if e.name == name { f(&e.value) } else { Tensor::zeros(e.value.shape()) };
        g.insert(e.name.clone(), grad);
    }
    g
}

#[test]
fn sgd_momentum_hand_recurrence() {
    // loss x²/2 from x = 1, lr 0.1, momentum 0.9:
    // step 1: buf = 1, x = 0.9; step 2: buf = 0.9·1 + 0.9, x = 0.9 − 0.1·1.8 = 0.72
    let (mut store, name) = scalar_store(1.0);
    let cfg = TrainConfig { momentum: 0.9, weight_decay: 0.0, ..TrainConfig::default() };
    let mut state = OptimizerState::new(&store);
    for _ in 0..2 {
        let grads = grads_for(&store, &name, Tensor::clone);
        sgd_step(&mut store, &grads, &mut state, 0.1, &cfg).unwrap();
    }
    for &v in store.get(&name).unwrap().data() {
        assert!((v - 0.72).abs() < 1e-15, "{v}");
    }
    assert_eq!(state.step, 2);
}

#[test]
fn sgd_plain_descent_and_buffer_decay() {
    let (mut store, name) = scalar_store(2.0);
    let plain = TrainConfig { momentum: 0.0, weight_decay: 0.0, ..TrainConfig::default() };
    let mut state = OptimizerState::new(&store);
    let grads = grads_for(&store, &name, |t| Tensor::full(t.shape(), 0.5));
    sgd_step(&mut store, &grads, &mut state, 0.1, &plain).unwrap();
    assert!(store.get(&name).unwrap().data().iter().all(|&v| (v - 1.95).abs() < 1e-15));

    let cfg = TrainConfig { momentum: 0.9, weight_decay: 0.0, ..TrainConfig::default() };
    let mut state = OptimizerState::new(&store);
    sgd_step(&mut store, &grads, &mut state, 0.1, &cfg).unwrap();
    let before = store.clone();
    let zero = grads_for(&store, &name, |t| Tensor::zeros(t.shape()));
    let buf = state.buffer(&name).unwrap().clone();
    sgd_step(&mut store, &zero, &mut state, 0.0, &cfg).unwrap();
    assert_eq!(store, before);
    assert!(max_abs_diff(state.buffer(&name).unwrap(), &buf.scale(0.9)) <= 1e-15);
}

#[test]
fn weight_decay_skips_norm_and_bias_by_default() {
    let c = NetworkConfig::micro();
    let mut store = backbone::init_network(&c).unwrap();
    store.set("stem.bn.gamma", Tensor::vector(vec![2.0; c.stem.channels])).unwrap();
    let before = store.clone();
    let cfg = TrainConfig { momentum: 0.0, weight_decay: 0.1, ..TrainConfig::default() };
    let zero = grads_for(&store, "", |t| t.clone());
    let mut state = OptimizerState::new(&store);
    sgd_step(&mut store, &zero, &mut state, 1.0, &cfg).unwrap();
    assert_eq!(store.get("stem.bn.gamma").unwrap(), before.get("stem.bn.gamma").unwrap());
    assert!(max_abs_diff(store.get("stem.conv.weight").unwrap(), &before.get("stem.conv.weight").unwrap().scale(0.9)) <= 1e-15);

    let all = TrainConfig { decay_norm_and_bias: true, ..cfg };
    let mut state = OptimizerState::new(&store);
    let g = store.get("stem.bn.gamma").unwrap().clone();
    sgd_step(&mut store, &zero, &mut state, 1.0, &all).unwrap();
    assert!(max_abs_diff(store.get("stem.bn.gamma").unwrap(), &g.scale(0.9)) <= 1e-15);
}

fn tiny_set() -> Dataset {
    Dataset::from_images(llanet::data::synthetic::expression_set(2, 32, 3))
}

fn quick_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        base_lr: 0.05,
        batch_size: 5,
        max_epochs: epochs,
        eval_tencrop: false,
        seed: 17,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_given_seed() {
    let c = NetworkConfig::tiny();
    let data = tiny_set();
    let run = || training::fit(&c, &quick_cfg(2), &InputPipeline::default(), &data, None, |_| Ok(())).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.best, b.best);
    let other = training::fit(&c, &TrainConfig { seed: 18, ..quick_cfg(2) }, &InputPipeline::default(), &data, None, |_| Ok(())).unwrap();
    assert_ne!(a.history, other.history);
}

#[test]
fn single_image_is_memorized() {
    let c = NetworkConfig::tiny();
    let data = Dataset::from_images(llanet::data::synthetic::expression_set(1, 32, 5).into_iter().take(1).collect());
    let pipeline = InputPipeline { pad: 0, flip: false, ..InputPipeline::default() };
    let cfg = TrainConfig { base_lr: 0.05, batch_size: 1, max_epochs: 200, eval_tencrop: false, ..TrainConfig::default() };
    let mut state = OptimizerState::new(&backbone::init_network(&c).unwrap());
    let mut store = backbone::init_network(&c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        last = training::train_epoch(&mut store, &mut state, &data, &c, &pipeline, &cfg, &mut rng).unwrap().mean_loss;
        if last < 0.01 {
            break;
        }
    }
    assert!(last < 0.01, "loss {last}");
}

#[test]
fn frozen_attention_stays_at_one_half() {
    let c = NetworkConfig::tiny();
    let cfg = TrainConfig { freeze_llam: true, ..quick_cfg(1) };
    let out = training::fit(&c, &cfg, &InputPipeline::default(), &tiny_set(), None, |_| Ok(())).unwrap();
    for e in out.last.entries() {
        if training::is_llam_param(&e.name) {
            assert!(e.value.data().iter().all(|&v| v == 0.0), "{}", e.name);
        }
    }
}

#[test]
fn evaluation_emits_one_prediction_per_image() {
    let c = NetworkConfig::tiny();
    let store = backbone::init_network(&c).unwrap();
    let data = tiny_set();
    let pipeline = InputPipeline::default();
    for tencrop in [false, true] {
        let eval = training::evaluate(&store, &c, &data, &pipeline, tencrop).unwrap();
        assert_eq!(eval.predictions.len(), data.len());
        assert_eq!(eval.crops_per_image, if tencrop { 10 } else { 1 });
        assert_eq!(eval.confusion.total(), data.len() as u64);
        for p in &eval.predictions {
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
