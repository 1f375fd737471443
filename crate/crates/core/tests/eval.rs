use proptest::prelude::*;
use synsacc_core::eval::{count_ops, count_ops_with_means, evaluate, metrics, Confusion};
use synsacc_core::kinematics::EyeClass;
use synsacc_core::snn::{
    assemble, build_conv_snn, build_dense, build_dense_snn, LayerSpec, ModelConfig, Shape, SnnModel,
};
use synsacc_core::spike_codec::SpikeTensor;

#[test]
fn metric_examples() {
    let m = metrics(&Confusion {
        tp: 3,
        tn: 2,
        fp: 1,
        fn_: 1,
    })
    .unwrap();
    assert_eq!(m.accuracy, 5.0 / 7.0);
    assert_eq!((m.precision, m.recall, m.f1), (0.75, 0.75, 0.75));

    let perfect = metrics(&Confusion {
        tp: 4,
        tn: 9,
        fp: 0,
        fn_: 0,
    })
    .unwrap();
    assert_eq!(
        (
            perfect.accuracy,
            perfect.precision,
            perfect.recall,
            perfect.f1
        ),
        (1.0, 1.0, 1.0, 1.0)
    );

    let none = metrics(&Confusion {
        tp: 0,
        tn: 3,
        fp: 2,
        fn_: 0,
    })
    .unwrap();
    assert_eq!((none.precision, none.f1), (0.0, 0.0));
    assert!(none.recall_undefined && none.f1_undefined && !none.precision_undefined);

    assert!(metrics(&Confusion::default()).is_err());
}

#[test]
fn dense_table_macs() {
    let m = build_dense_snn(260, 360).unwrap();
    let r = count_ops_with_means(&m, &[19.36, 17.91, 0.33]).unwrap();
    let macs: Vec<u64> = r.layers.iter().map(|l| l.ann_macs).collect();
    let acts: Vec<u64> = r.layers.iter().map(|l| l.ann_activations).collect();
    assert_eq!(macs, vec![95_846_400, 262_144, 1_024]);
    assert_eq!(acts, vec![512, 512, 2]);
    assert_eq!(r.total_ann_macs, 96_109_568);
    for (row, want) in r.layers.iter().zip([9_911.36, 9_167.36, 0.66]) {
        assert!(
            (row.synaptic_ops_per_timestep - want).abs() <= 0.005 * want,
            "{row:?}"
        );
    }
    assert!(!r.layers.iter().any(|l| l.extension));

    let zero = count_ops_with_means(&m, &[0.0, 0.0, 0.0]).unwrap();
    assert_eq!(zero.total_synaptic_ops, 0.0);
    assert_eq!(zero.total_ann_macs, r.total_ann_macs);
}

#[test]
fn conv_rows_are_marked_as_extensions() {
    let m = build_conv_snn(64, 64).unwrap();
    let means = vec![1.0; m.weighted_layers().len()];
    let r = count_ops_with_means(&m, &means).unwrap();
    let conv: Vec<_> = r.layers.iter().filter(|l| l.kind == "conv2d").collect();
    assert_eq!(conv.len(), 3);
    assert!(conv.iter().all(|l| l.extension));
    // First conv sees 2 channels at 32x32 after pooling and keeps that size.
    assert_eq!(conv[0].ann_macs, 2 * 8 * 25 * 32 * 32);
    assert!(r.to_markdown().contains("extend"));
}

#[test]
fn ops_require_recorded_statistics() {
    assert!(count_ops(&build_dense(4, 4, &[3], &ModelConfig::default(), 0).unwrap()).is_err());
}

/// OFF input drives the fixation output, ON input drives the saccade output.
fn wired() -> SnnModel {
    let specs = vec![
        LayerSpec::Flatten {
            channels: 2,
            height: 1,
            width: 1,
        },
        LayerSpec::Dense {
            inputs: 2,
            outputs: 2,
        },
    ];
    let mut m = assemble(
        "wired".into(),
        Shape::new(2, 1, 1),
        specs,
        &ModelConfig::default(),
        0,
    )
    .unwrap();
    m.layers[1].weights = vec![60.0, 0.0, 0.0, 60.0];
    m
}

fn sample(channel: Option<u32>, label: EyeClass) -> SpikeTensor {
    let active = (0..6).map(|_| channel.into_iter().collect()).collect();
    SpikeTensor::from_active(1, 1, 1.0, active)
        .unwrap()
        .with_label(label)
}

#[test]
fn four_sample_confusion() {
    let (off, on) = (Some(0), Some(1));
    let set = vec![
        sample(on, EyeClass::Saccade),
        sample(off, EyeClass::Fixation),
        sample(on, EyeClass::Fixation),
        sample(off, EyeClass::Saccade),
    ];
    let m = wired();
    let r = evaluate(&m, &set).unwrap();
    assert_eq!(
        r.confusion,
        Confusion {
            tp: 1,
            tn: 1,
            fp: 1,
            fn_: 1
        }
    );
    assert_eq!(
        r.predictions,
        vec![
            EyeClass::Saccade,
            EyeClass::Fixation,
            EyeClass::Saccade,
            EyeClass::Fixation
        ]
    );
    assert_eq!(r, evaluate(&m, &set).unwrap());
    // One input event per step into the first layer.
    assert_eq!(r.ops.layers[0].mean_events_per_timestep, 1.0);
}

#[test]
fn constant_predictor_splits_recall() {
    let set: Vec<_> = [EyeClass::Fixation, EyeClass::Saccade, EyeClass::Saccade]
        .into_iter()
        .map(|l| sample(None, l))
        .collect();
    let r = evaluate(&wired(), &set).unwrap();
    assert_eq!(
        r.confusion,
        Confusion {
            tp: 0,
            tn: 1,
            fp: 0,
            fn_: 2
        }
    );
    assert_eq!(r.metrics.recall, 0.0);
    assert!(evaluate(&wired(), &[]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metric_bounds(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
        let c = Confusion { tp, tn, fp, fn_ };
        prop_assume!(c.total() > 0);
        let m = metrics(&c).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1, m.macro_precision, m.macro_recall, m.macro_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if m.precision * m.recall == 0.0 {
            prop_assert_eq!(m.f1, 0.0);
        }
    }

    #[test]
    fn macs_match_an_independent_shape_walk(
        h in 1usize..30,
        w in 1usize..30,
        hidden in prop::collection::vec(1usize..300, 0..4),
        events in prop::collection::vec(0.0f64..1.0, 5),
    ) {
        let m = build_dense(h, w, &hidden, &ModelConfig::default(), 0).unwrap();
        let mut widths = vec![2 * h * w];
        widths.extend(&hidden);
        widths.push(2);
        let walked: u64 = widths.windows(2).map(|p| (p[0] * p[1]) as u64).sum();

        // Mean events per step never exceed the number of binary inputs.
        let means: Vec<f64> = widths[..widths.len() - 1].iter().zip(&events).map(|(&n, &f)| f * n as f64).collect();
        let r = count_ops_with_means(&m, &means).unwrap();
        prop_assert_eq!(r.total_ann_macs, walked);
        for row in &r.layers {
            prop_assert!(row.synaptic_ops_per_timestep <= row.ann_macs as f64 + 1e-9);
        }
    }
}
