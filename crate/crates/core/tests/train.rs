use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synsacc_core::kinematics::EyeClass;
use synsacc_core::snn::{
    assemble, build_dense, CubaParams, LayerSpec, ModelConfig, NeuronConfig, Shape, SnnModel,
    SpikeMode,
};
use synsacc_core::spike_codec::SpikeTensor;
use synsacc_core::train::{
    bptt_train, finetune, loss_and_gradients, spike_rate_loss, stratified_subset, TrainConfig,
};
use synsacc_core::Error;

#[test]
fn loss_examples() {
    let z = vec![0.0; 4];
    let half = vec![1.0, 1.0, 0.0, 0.0];
    assert_eq!(spike_rate_loss(&[half, z], 0, 0.5, 0.0), 0.0);
    let ones = vec![1.0; 4];
    assert_eq!(spike_rate_loss(&[ones.clone(), ones], 0, 0.5, 0.0), 0.625);
}

proptest! {
    #[test]
    fn loss_floor(a in 0usize..=10, b in 0usize..=10, label in 0usize..2, rt in 0.1f64..1.0) {
        let train = |n: usize| (0..10).map(|t| if t < n { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        let rf = rt / 4.0;
        let l = spike_rate_loss(&[train(a), train(b)], label, rt, rf);
        prop_assert!(l >= 0.0);
        let rates = [a as f64 / 10.0, b as f64 / 10.0];
        let hit = (0..2).all(|c| rates[c] == if c == label { rt } else { rf });
        prop_assert_eq!(l == 0.0, hit);
    }
}

fn wide_params() -> CubaParams {
    CubaParams {
        alpha: 0.6,
        beta: 0.7,
        theta: 1.0,
        surrogate_slope: 3.0,
        surrogate_width: 1.0,
    }
}

fn with_params(mut m: SnnModel, p: CubaParams) -> SnnModel {
    for l in &mut m.layers {
        if l.neuron.is_some() {
            l.neuron = Some(p);
        }
    }
    m
}

fn micro_recurrent(seed: u64) -> SnnModel {
    let specs = vec![
        LayerSpec::Flatten {
            channels: 2,
            height: 1,
            width: 2,
        },
        LayerSpec::Recurrent {
            inputs: 4,
            outputs: 3,
        },
        LayerSpec::Dense {
            inputs: 3,
            outputs: 2,
        },
    ];
    let cfg = ModelConfig {
        init_gain: 6.0,
        ..ModelConfig::default()
    };
    with_params(
        assemble("micro-rec".into(), Shape::new(2, 1, 2), specs, &cfg, seed).unwrap(),
        wide_params(),
    )
}

fn micro_conv(seed: u64) -> SnnModel {
    let specs = vec![
        LayerSpec::SumPool {
            channels: 2,
            height: 4,
            width: 4,
            stride: 2,
        },
        LayerSpec::Conv2d {
            in_channels: 2,
            out_channels: 1,
            kernel: 3,
            padding: 1,
            height: 2,
            width: 2,
        },
        LayerSpec::Flatten {
            channels: 1,
            height: 2,
            width: 2,
        },
        LayerSpec::Dense {
            inputs: 4,
            outputs: 2,
        },
    ];
    let cfg = ModelConfig {
        init_gain: 6.0,
        ..ModelConfig::default()
    };
    with_params(
        assemble("micro-conv".into(), Shape::new(2, 4, 4), specs, &cfg, seed).unwrap(),
        wide_params(),
    )
}

fn micro_delay(seed: u64) -> SnnModel {
    let specs = vec![
        LayerSpec::Flatten {
            channels: 2,
            height: 1,
            width: 2,
        },
        LayerSpec::Dense {
            inputs: 4,
            outputs: 3,
        },
        LayerSpec::Dense {
            inputs: 3,
            outputs: 2,
        },
    ];
    let cfg = ModelConfig {
        init_gain: 6.0,
        max_delay: 2,
        ..ModelConfig::default()
    };
    with_params(
        assemble("micro-delay".into(), Shape::new(2, 1, 2), specs, &cfg, seed).unwrap(),
        wide_params(),
    )
}

fn random_tensor(h: usize, w: usize, steps: usize, rng: &mut ChaCha8Rng) -> SpikeTensor {
    let active = (0..steps)
        .map(|_| {
            (0..(2 * h * w) as u32)
                .filter(|_| rng.random_bool(0.5))
                .collect()
        })
        .collect();
    SpikeTensor::from_active(h, w, 1.0, active).unwrap()
}

fn relaxed_loss(m: &SnnModel, t: &SpikeTensor, label: usize, cfg: &TrainConfig) -> f64 {
    let (out, _) = m.forward_traced(t, SpikeMode::Relaxed).unwrap();
    spike_rate_loss(&out.output, label, cfg.r_true, cfg.r_false)
}

/// Relative error of BPTT against central differences for one random point,
/// or `None` when the gradient is too small to check numerically.
fn check_point(
    mut m: SnnModel,
    t: &SpikeTensor,
    label: usize,
    rng: &mut ChaCha8Rng,
) -> Option<f64> {
    let cfg = TrainConfig::default();
    for layer in &mut m.layers {
        for w in layer.weights.iter_mut().chain(layer.recurrent.iter_mut()) {
            *w = rng.random_range(-2.5..2.5);
        }
    }
    let (_, _, g) = loss_and_gradients(&m, t, label, &cfg, SpikeMode::Relaxed).unwrap();
    let h = 1e-6;
    let (mut diff, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for l in 0..m.layers.len() {
        for (which, n) in [
            (0, m.layers[l].weights.len()),
            (1, m.layers[l].recurrent.len()),
        ] {
            for k in 0..n {
                let mut plus = m.clone();
                let mut minus = m.clone();
                let (p, q) = if which == 0 {
                    (
                        &mut plus.layers[l].weights[k],
                        &mut minus.layers[l].weights[k],
                    )
                } else {
                    (
                        &mut plus.layers[l].recurrent[k],
                        &mut minus.layers[l].recurrent[k],
                    )
                };
                *p += h;
                *q -= h;
                let fd = (relaxed_loss(&plus, t, label, &cfg)
                    - relaxed_loss(&minus, t, label, &cfg))
                    / (2.0 * h);
                let an = if which == 0 {
                    g.weights[l][k]
                } else {
                    g.recurrent[l][k]
                };
                diff += (an - fd).powi(2);
                na += an * an;
                nb += fd * fd;
            }
        }
    }
    // Below this norm the central differences sit at round-off and cannot
    // resolve a 1e-4 relative error.
    let scale = na.sqrt().max(nb.sqrt());
    (scale > 1e-6).then(|| diff.sqrt() / scale)
}

fn gradient_check(build: fn(u64) -> SnnModel, h: usize, w: usize, steps: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut live = 0;
    for point in 0..100 {
        let m = build(point);
        assert!(m.param_count() <= 30);
        let t = random_tensor(h, w, steps, &mut rng);
        if let Some(err) = check_point(m, &t, point as usize % 2, &mut rng) {
            assert!(err <= 1e-4, "point {point}: relative error {err:e}");
            live += 1;
        }
    }
    assert!(live >= 50, "only {live} points had a non-zero gradient");
}

#[test]
fn gradient_check_recurrent() {
    gradient_check(micro_recurrent, 1, 2, 5);
}

#[test]
fn gradient_check_conv_pool() {
    gradient_check(micro_conv, 4, 4, 4);
}

#[test]
fn gradient_check_delays() {
    gradient_check(micro_delay, 1, 2, 5);
}

/// Two-class set: class 0 fires in the left half, class 1 in the right half.
fn toy_set(n: usize, h: usize, w: usize, steps: usize, seed: u64) -> Vec<SpikeTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = EyeClass::ALL[i % 2];
            let active = (0..steps)
                .map(|_| {
                    let mut bin = Vec::new();
                    for y in 0..h {
                        for x in 0..w {
                            let left = x < w / 2;
                            let p = if left == (class == EyeClass::Fixation) {
                                0.3
                            } else {
                                0.02
                            };
                            if rng.random_bool(p) {
                                bin.push((rng.random_range(0..2) * h * w + y * w + x) as u32);
                            }
                        }
                    }
                    bin
                })
                .collect();
            SpikeTensor::from_active(h, w, 1.0, active)
                .unwrap()
                .with_label(class)
        })
        .collect()
}

fn small_model(h: usize, w: usize, hidden: &[usize], seed: u64) -> SnnModel {
    build_dense(h, w, hidden, &ModelConfig::default(), seed).unwrap()
}

#[test]
fn separable_toy_set_is_learned() {
    let set = toy_set(40, 16, 16, 20, 1);
    let cfg = TrainConfig {
        epochs: 50,
        seed: 1,
        ..TrainConfig::default()
    };
    let (_, history) = bptt_train(small_model(16, 16, &[32], 1), &set, &[], &cfg).unwrap();
    let best = history
        .epochs
        .iter()
        .map(|r| r.train_acc)
        .fold(0.0, f64::max);
    assert!(best >= 0.95, "best train accuracy {best}");
}

#[test]
fn zero_learning_rate_freezes_weights() {
    let set = toy_set(8, 6, 6, 8, 2);
    let m = small_model(6, 6, &[8], 2);
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let (trained, history) = bptt_train(m.clone(), &set, &set, &cfg).unwrap();
    assert_eq!(trained.layers, m.layers);
    assert_eq!(history.len(), 3);
}

#[test]
fn single_sample_overfits() {
    let sample = toy_set(1, 4, 4, 10, 3);
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 1,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    // Support as wide as the threshold, so every positive voltage carries gradient.
    let neuron = NeuronConfig {
        surrogate_width: 1.25,
        ..NeuronConfig::default()
    };
    let mc = ModelConfig {
        neuron,
        ..ModelConfig::default()
    };
    // A draw whose outputs sit far below threshold has no gradient at all;
    // take the first initialisation that does.
    let label = sample[0].label.unwrap().index();
    let model = (0..20)
        .map(|seed| build_dense(4, 4, &[], &mc, seed).unwrap())
        .find(|m| {
            let (_, _, g) =
                loss_and_gradients(m, &sample[0], label, &cfg, SpikeMode::Heaviside).unwrap();
            g.weights.iter().flatten().any(|&v| v != 0.0)
        })
        .expect("some initialisation has a gradient");
    let (_, history) = bptt_train(model, &sample, &[], &cfg).unwrap();
    let losses: Vec<f64> = history.epochs.iter().map(|r| r.loss).collect();
    let smooth: Vec<f64> = losses
        .windows(10)
        .map(|w| w.iter().sum::<f64>() / 10.0)
        .collect();
    assert!(smooth.last().unwrap() < &smooth[0], "{losses:?}");
    for k in 10..smooth.len() - 1 {
        assert!(
            smooth[k + 1] <= smooth[k] + 1e-12,
            "smoothed loss rose at step {k}: {smooth:?}"
        );
    }
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let set = toy_set(20, 6, 6, 10, 4);
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 5,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| bptt_train(small_model(6, 6, &[8], 4), &set, &set, &cfg).unwrap())
    };
    let (a, ha) = run(1);
    let (b, hb) = run(3);
    assert_eq!(a.layers, b.layers);
    let strip = |h: &synsacc_core::train::TrainHistory| {
        h.epochs
            .iter()
            .map(|r| (r.loss, r.train_acc, r.eval_acc))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&ha), strip(&hb));
}

#[test]
fn relabeling_with_permuted_outputs_keeps_the_loss_curve() {
    let set = toy_set(16, 5, 5, 8, 5);
    let swapped: Vec<SpikeTensor> = set
        .iter()
        .map(|s| {
            let other = EyeClass::from_index(1 - s.label.unwrap().index()).unwrap();
            s.clone().with_label(other)
        })
        .collect();
    let m = small_model(5, 5, &[6], 5);
    let mut p = m.clone();
    let out = p.layers.len() - 1;
    for row in p.layers[out].weights.chunks_mut(2) {
        row.swap(0, 1);
    }
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (_, ha) = bptt_train(m, &set, &[], &cfg).unwrap();
    let (_, hb) = bptt_train(p, &swapped, &[], &cfg).unwrap();
    let la: Vec<f64> = ha.epochs.iter().map(|r| r.loss).collect();
    let lb: Vec<f64> = hb.epochs.iter().map(|r| r.loss).collect();
    assert_eq!(la, lb);
}

#[test]
fn non_finite_weights_trip_the_divergence_guard() {
    let set = toy_set(4, 4, 4, 6, 6);
    let mut m = small_model(4, 4, &[4], 6);
    m.layers[1].weights.iter_mut().for_each(|w| *w = f64::NAN);
    let err = bptt_train(
        m,
        &set,
        &[],
        &TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Divergence(_)), "{err}");
}

#[test]
fn full_fraction_finetune_is_plain_training() {
    let set = toy_set(12, 5, 5, 6, 7);
    let m = small_model(5, 5, &[6], 7);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 2,
        ..TrainConfig::default()
    };
    let (a, ha, used) = finetune(m.clone(), 1.0, &set, &set[..4], &cfg).unwrap();
    let (b, hb) = bptt_train(m, &set, &set[..4], &cfg).unwrap();
    assert_eq!(used, (0..12).collect::<Vec<_>>());
    assert_eq!(a.layers, b.layers);
    assert_eq!(
        ha.epochs.iter().map(|r| r.loss).collect::<Vec<_>>(),
        hb.epochs.iter().map(|r| r.loss).collect::<Vec<_>>()
    );
    assert!(stratified_subset(&[EyeClass::Saccade; 3], 0.1, 0).is_ok());
    assert!(stratified_subset(&[], 0.5, 0).is_err());
    assert!(stratified_subset(&[EyeClass::Saccade], 0.0, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn subsets_are_stratified(
        labels in prop::collection::vec(prop::sample::select(EyeClass::ALL.to_vec()), 1..200),
        fraction in 0.01f64..=1.0,
        seed in any::<u64>(),
    ) {
        let subset = stratified_subset(&labels, fraction, seed).unwrap();
        let n = labels.len();
        prop_assert_eq!(subset.len(), (fraction * n as f64 - 1e-9).ceil() as usize);
        prop_assert!(subset.windows(2).all(|w| w[0] < w[1]));
        let sac_all = labels.iter().filter(|&&l| l == EyeClass::Saccade).count() as f64;
        let sac_sub = subset.iter().filter(|&&i| labels[i] == EyeClass::Saccade).count() as f64;
        let expected = sac_all / n as f64 * subset.len() as f64;
        prop_assert!((sac_sub - expected).abs() <= 1.0, "{sac_sub} vs {expected}");
    }
}
