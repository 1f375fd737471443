//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use synsacc_cli::commands::{
    cmd_eval, cmd_finetune, cmd_gen, cmd_sweep, cmd_train, load_dataset, EVENTS_FILE,
    FINAL_CHECKPOINT, HISTORY_FILE, MANIFEST_FILE,
};
use synsacc_cli::config::{Overrides, RunConfig};
use synsacc_core::eval::{count_ops_with_means, evaluate, metrics, Confusion};
use synsacc_core::event_sim::{
    decode_evb1, encode_evb1, simulate, EventSimulator, EventStream, Polarity, SimConfig, LOG_EPS,
};
use synsacc_core::render::{Frame, IntensityFrameSequence};
use synsacc_core::rng::seeded;
use synsacc_core::snn::{
    assemble, build_dense_snn, cuba_step, load_checkpoint, save_checkpoint, CubaParams, LayerSpec,
    ModelConfig, NeuronState, Shape, SnnModel, SpikeMode,
};
use synsacc_core::spike_codec::{read_manifest, write_manifest, SpikeTensor};
use synsacc_core::train::{loss_and_gradients, spike_rate_loss, TrainConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&mut Run) -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

struct Pretrained {
    seed: u64,
    checkpoint: PathBuf,
    accuracy: f64,
}

struct Run {
    root: tempfile::TempDir,
    pretrained: Vec<Pretrained>,
}

impl Run {
    fn dir(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }
}

fn config(text: &str, seed: u64, out: &Path) -> RunConfig {
    RunConfig::from_json(text)
        .unwrap()
        .resolve(&Overrides {
            seed: Some(seed),
            out: Some(out.to_path_buf()),
            ..Overrides::default()
        })
        .unwrap()
}

fn c1_table_macs(_: &mut Run) -> Outcome {
    let start = Instant::now();
    let m = build_dense_snn(260, 360).map_err(|e| e.to_string())?;
    let r = count_ops_with_means(&m, &[0.0; 3]).map_err(|e| e.to_string())?;
    let macs: Vec<u64> = r.layers.iter().map(|l| l.ann_macs).collect();
    let acts: Vec<u64> = r.layers.iter().map(|l| l.ann_activations).collect();
    ensure(
        macs == [95_846_400, 262_144, 1_024],
        format!("MACs {macs:?}"),
    )?;
    ensure(acts == [512, 512, 2], format!("activations {acts:?}"))?;
    ensure(
        r.total_ann_macs == 96_109_568,
        format!("total {}", r.total_ann_macs),
    )?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, format!("took {secs:.2} s"))?;
    Ok(format!("total {} in {secs:.2} s", r.total_ann_macs))
}

fn c2_synaptic_ops(_: &mut Run) -> Outcome {
    let m = build_dense_snn(260, 360).map_err(|e| e.to_string())?;
    let r = count_ops_with_means(&m, &[19.36, 17.91, 0.33]).map_err(|e| e.to_string())?;
    let got: Vec<f64> = r
        .layers
        .iter()
        .map(|l| l.synaptic_ops_per_timestep)
        .collect();
    for (g, want) in got.iter().zip([9_911.36, 9_167.36, 0.66]) {
        ensure((g - want).abs() <= 0.005 * want, format!("{g} vs {want}"))?;
    }
    Ok(format!("{got:?}"))
}

fn c3_hand_traces(_: &mut Run) -> Outcome {
    let run = |x: &[f64], p: &CubaParams| {
        let mut s = NeuronState::zeros(1);
        x.iter()
            .map(|&v| {
                let (next, spk) = cuba_step(&s, &[v], p).unwrap();
                s = next;
                (s.i[0], s.y[0], spk[0] == 1.0)
            })
            .collect::<Vec<_>>()
    };
    let p = CubaParams::default();
    let t = run(&[50.0, 0.0], &p);
    ensure(
        close(t[0].0, 50.0, 1e-9) && close(t[0].1, 1.5, 1e-9) && t[0].2,
        format!("step 1 {:?}", t[0]),
    )?;
    ensure(
        close(t[1].0, 37.5, 1e-9) && close(t[1].1, 1.33, 1e-9) && t[1].2,
        format!("step 2 {:?}", t[1]),
    )?;

    let sub = run(&[1.0; 2000], &CubaParams { alpha: 0.0, ..p });
    let mut y = 0.0;
    for (k, &(i, yk, s)) in sub.iter().enumerate() {
        y = 0.97 * y + 0.03;
        ensure(
            close(i, 1.0, 1e-9) && close(yk, y, 1e-9) && !s,
            format!("sub-threshold step {k}: {yk} vs {y}"),
        )?;
    }
    Ok(format!(
        "y = {:.2}, {:.2}; sub-threshold settles at {:.9}",
        t[0].1, t[1].1, sub[1999].1
    ))
}

fn c4_event_counts(_: &mut Run) -> Outcome {
    let pixel = |levels: &[f64]| IntensityFrameSequence {
        width: 1,
        height: 1,
        fps: 100.0,
        t0_us: 0,
        frames: levels
            .iter()
            .map(|&v| Frame {
                width: 1,
                height: 1,
                data: vec![v.exp() - LOG_EPS],
            })
            .collect(),
    };
    let mut seen = Vec::new();
    for (delta, want) in [(0.19, 0), (0.20, 1), (0.45, 2), (1.0, 5)] {
        for cuts in [
            vec![0.0, 1.0],
            vec![0.0, 0.3, 0.35, 1.0],
            vec![0.0, 0.1, 0.5, 0.9, 1.0],
        ] {
            for factor in [1, 4, 8] {
                for sign in [1.0, -1.0] {
                    let levels: Vec<f64> = cuts.iter().map(|c| 1.0 + sign * delta * c).collect();
                    let cfg = SimConfig {
                        upsample_factor: factor,
                        ..SimConfig::ideal(0.2)
                    };
                    let s = simulate(&pixel(&levels), &cfg).map_err(|e| e.to_string())?;
                    let pol = if sign > 0.0 {
                        Polarity::On
                    } else {
                        Polarity::Off
                    };
                    let n = s.events.iter().filter(|e| e.polarity == pol).count();
                    ensure(
                        n == want && s.len() == want,
                        format!("Δ={} cuts {cuts:?} ×{factor}: {}", sign * delta, s.len()),
                    )?;
                }
            }
        }
        seen.push(want);
    }
    Ok(format!(
        "{seen:?} across 3 partitions, factors 1/4/8, both signs"
    ))
}

fn c5_noise_rate(_: &mut Run) -> Outcome {
    let start = Instant::now();
    let (w, h) = (346, 260);
    let mean = (w * h) as f64 * 5.1;
    let mut passes = 0;
    for seed in 0..10 {
        let cfg = SimConfig {
            leak_rate_hz: 0.1,
            shot_rate_hz: 5.0,
            seed,
            ..SimConfig::ideal(0.2)
        };
        let mut sim = EventSimulator::new(w, h, 250.0, 0, &cfg).map_err(|e| e.to_string())?;
        let blank = Frame::filled(w, h, 128.0);
        for _ in 0..250 {
            sim.push_frame(&blank).map_err(|e| e.to_string())?;
        }
        let s = sim.finish().map_err(|e| e.to_string())?;
        ensure(
            s.duration_us == 1_000_000,
            format!("duration {}", s.duration_us),
        )?;
        if (s.len() as f64 - mean).abs() <= 3.0 * mean.sqrt() {
            passes += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(passes >= 8, format!("{passes}/10 seeds within 3σ"))?;
    ensure(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "{passes}/10 seeds within 3σ of {mean}, {secs:.1} s"
    ))
}

fn c6_gradient_check(_: &mut Run) -> Outcome {
    let p = CubaParams {
        alpha: 0.6,
        beta: 0.7,
        theta: 1.0,
        surrogate_slope: 3.0,
        surrogate_width: 1.0,
    };
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
    let cfg = TrainConfig::default();
    let loss = |m: &SnnModel, t: &SpikeTensor, label: usize| {
        let (out, _) = m.forward_traced(t, SpikeMode::Relaxed).unwrap();
        spike_rate_loss(&out.output, label, cfg.r_true, cfg.r_false)
    };
    let mut rng = seeded(29, 0);
    let (mut worst, mut live) = (0.0f64, 0);
    for point in 0..100u64 {
        let mut m = assemble(
            "micro".into(),
            Shape::new(2, 1, 2),
            specs.clone(),
            &ModelConfig::default(),
            point,
        )
        .map_err(|e| e.to_string())?;
        for l in &mut m.layers {
            if l.neuron.is_some() {
                l.neuron = Some(p);
            }
            for w in l.weights.iter_mut().chain(l.recurrent.iter_mut()) {
                *w = rng.random_range(-2.5..2.5);
            }
        }
        let active = (0..5)
            .map(|_| (0..4u32).filter(|_| rng.random_bool(0.5)).collect())
            .collect();
        let t = SpikeTensor::from_active(1, 2, 1.0, active).map_err(|e| e.to_string())?;
        let label = (point % 2) as usize;
        let (_, _, g) = loss_and_gradients(&m, &t, label, &cfg, SpikeMode::Relaxed)
            .map_err(|e| e.to_string())?;
        let (mut diff, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
        for l in 0..m.layers.len() {
            for rec in [false, true] {
                let n = if rec {
                    m.layers[l].recurrent.len()
                } else {
                    m.layers[l].weights.len()
                };
                for k in 0..n {
                    let (mut a, mut b) = (m.clone(), m.clone());
                    let h = 1e-6;
                    if rec {
                        a.layers[l].recurrent[k] += h;
                        b.layers[l].recurrent[k] -= h;
                    } else {
                        a.layers[l].weights[k] += h;
                        b.layers[l].weights[k] -= h;
                    }
                    let fd = (loss(&a, &t, label) - loss(&b, &t, label)) / (2.0 * h);
                    let an = if rec {
                        g.recurrent[l][k]
                    } else {
                        g.weights[l][k]
                    };
                    diff += (an - fd).powi(2);
                    na += an * an;
                    nb += fd * fd;
                }
            }
        }
        let scale = na.sqrt().max(nb.sqrt());
        // Smaller gradients are below what central differences resolve.
        if scale > 1e-6 {
            live += 1;
            let err = diff.sqrt() / scale;
            ensure(
                err <= 1e-4,
                format!("point {point}: relative error {err:e}"),
            )?;
            worst = worst.max(err);
        }
    }
    ensure(
        live >= 50,
        format!("only {live} of 100 points had a non-zero gradient"),
    )?;
    Ok(format!(
        "worst relative error {worst:.2e} over {live} live points of 100"
    ))
}

const DESK: &str = r#"{
    "kinematics": {"duration_ms": 20000},
    "model": {"hidden": [128, 128]},
    "train": {"epochs": 50}
}"#;

fn c7_desk_training(run: &mut Run) -> Outcome {
    let start = Instant::now();
    let mut accs = Vec::new();
    for seed in 1..=3u64 {
        let data = cmd_gen(&config(DESK, seed, &run.dir(&format!("a{seed}"))))
            .map_err(|e| e.to_string())?;
        ensure(
            data.counts.fixation == data.counts.saccade,
            "unbalanced dataset",
        )?;
        ensure(
            data.counts.total() >= 200,
            format!("only {} samples", data.counts.total()),
        )?;
        let mut cfg = config(DESK, seed, &run.dir(&format!("a{seed}-train")));
        cfg.dataset = Some(data.dir.clone());
        let t = cmd_train(&cfg).map_err(|e| e.to_string())?;
        accs.push(t.report.metrics.accuracy);
        run.pretrained.push(Pretrained {
            seed,
            checkpoint: t.dir.join(FINAL_CHECKPOINT),
            accuracy: t.report.metrics.accuracy,
        });
    }
    let secs = start.elapsed().as_secs_f64();
    let good = accs.iter().filter(|&&a| a >= 0.80).count();
    ensure(good >= 2, format!("held-out accuracy {accs:?}"))?;
    ensure(secs <= 600.0, format!("took {secs:.0} s"))?;
    Ok(format!("held-out accuracy {accs:.4?}, {secs:.0} s"))
}

const SWEEP: &str = r#"{
    "kinematics": {"duration_ms": 180000},
    "model": {"hidden": [128, 128]},
    "train": {"epochs": 30},
    "sweep": {"ts_list": [200, 10], "samples_per_class": 50}
}"#;

fn c8_window_trend(run: &mut Run) -> Outcome {
    let (mut long, mut short) = (0.0, 0.0);
    for seed in 1..=3u64 {
        let data = cmd_gen(&config(SWEEP, seed, &run.dir(&format!("s{seed}"))))
            .map_err(|e| e.to_string())?;
        let mut cfg = config(SWEEP, seed, &run.dir(&format!("s{seed}-sweep")));
        cfg.dataset = Some(data.dir);
        let rows = cmd_sweep(&cfg).map_err(|e| e.to_string())?;
        long += rows[0].accuracy / 3.0;
        short += rows[1].accuracy / 3.0;
    }
    ensure(
        long >= short,
        format!("200 ms {long:.4} < 10 ms {short:.4}"),
    )?;
    Ok(format!("mean accuracy 200 ms {long:.4}, 10 ms {short:.4}"))
}

const SHIFTED: &str = r#"{
    "kinematics": {"duration_ms": 20000},
    "render": {"appearance": {
        "sclera_level": 180, "iris_level": 110, "pupil_level": 35,
        "iris_radius_px": 10, "pupil_radius_px": 5, "background_level": 120
    }},
    "model": {"hidden": [128, 128]},
    "train": {"epochs": 30}
}"#;

fn c9_finetune(run: &mut Run) -> Outcome {
    ensure(run.pretrained.len() == 3, "pretrained models unavailable")?;
    let (mut zero, mut f20, mut f50) = (0.0, 0.0, 0.0);
    for p in &run.pretrained {
        // A different seed gives dataset B its own schedule and sensor noise.
        let seed = p.seed + 100;
        let data = cmd_gen(&config(SHIFTED, seed, &run.dir(&format!("b{}", p.seed))))
            .map_err(|e| e.to_string())?;
        for (fraction, acc) in [(0.2, &mut f20), (0.5, &mut f50)] {
            let mut cfg = config(SHIFTED, seed, &run.dir(&format!("b{}-{fraction}", p.seed)));
            cfg.dataset = Some(data.dir.clone());
            cfg.checkpoint = Some(p.checkpoint.clone());
            cfg.finetune.fraction = fraction;
            let s = cmd_finetune(&cfg).map_err(|e| e.to_string())?;
            if fraction == 0.2 {
                zero += s.zero_shot.metrics.accuracy / 3.0;
            }
            *acc += s.report.metrics.accuracy / 3.0;
        }
    }
    let summary = format!("zero-shot {zero:.4}, 20% {f20:.4}, 50% {f50:.4}");
    ensure(f50 >= f20 && f20 >= zero - 0.02, summary.clone())?;
    Ok(summary)
}

fn c10_metrics(_: &mut Run) -> Outcome {
    let m = metrics(&Confusion {
        tp: 3,
        tn: 2,
        fp: 1,
        fn_: 1,
    })
    .map_err(|e| e.to_string())?;
    ensure(
        m.accuracy == 5.0 / 7.0 && m.precision == 0.75 && m.recall == 0.75 && m.f1 == 0.75,
        format!("{m:?}"),
    )?;
    let z = metrics(&Confusion {
        tp: 0,
        tn: 4,
        fp: 0,
        fn_: 0,
    })
    .map_err(|e| e.to_string())?;
    ensure(
        z.precision == 0.0 && z.recall == 0.0 && z.f1 == 0.0,
        format!("{z:?}"),
    )?;
    ensure(
        z.precision_undefined && z.recall_undefined && z.f1_undefined,
        "zero denominators not flagged",
    )?;
    Ok("(5/7, 0.75, 0.75, 0.75); zero denominators give flagged 0".into())
}

fn c11_round_trips(run: &mut Run) -> Outcome {
    let data = run.dir("a1");
    let events = fs::read(data.join(EVENTS_FILE)).map_err(|e| e.to_string())?;
    let stream: EventStream = decode_evb1(&events, &data).map_err(|e| e.to_string())?;
    ensure(encode_evb1(&stream) == events, "EVB1 re-encode differs")?;

    let p = run
        .pretrained
        .first()
        .ok_or("pretrained model unavailable")?;
    let model = load_checkpoint(&p.checkpoint).map_err(|e| e.to_string())?;
    let copy = run.dir("copy.snn");
    save_checkpoint(&model, &copy).map_err(|e| e.to_string())?;
    ensure(
        fs::read(&copy).unwrap() == fs::read(&p.checkpoint).unwrap(),
        "checkpoint re-save differs",
    )?;
    let test = load_dataset(&data).map_err(|e| e.to_string())?.test;
    let reloaded = evaluate(&load_checkpoint(&copy).map_err(|e| e.to_string())?, &test)
        .map_err(|e| e.to_string())?;
    let direct = evaluate(&model, &test).map_err(|e| e.to_string())?;
    ensure(reloaded == direct, "evaluation after reload differs")?;
    ensure(
        direct.metrics.accuracy == p.accuracy,
        "accuracy differs from the training run",
    )?;

    let manifest = read_manifest(&data.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let path = data.join("manifest-copy.json");
    write_manifest(&path, &manifest).map_err(|e| e.to_string())?;
    ensure(
        read_manifest(&path).map_err(|e| e.to_string())? == manifest,
        "manifest differs after round trip",
    )?;
    Ok(format!(
        "{} events, {} test windows, {} manifest entries",
        stream.len(),
        test.len(),
        manifest.entries.len()
    ))
}

const SMALL: &str = r#"{
    "kinematics": {"duration_ms": 8000},
    "model": {"hidden": [32]},
    "train": {"epochs": 3}
}"#;

fn c12_determinism(run: &mut Run) -> Outcome {
    let mut files: Vec<Vec<Vec<u8>>> = Vec::new();
    for k in 0..2 {
        let gen =
            cmd_gen(&config(SMALL, 11, &run.dir(&format!("d{k}")))).map_err(|e| e.to_string())?;
        let mut cfg = config(SMALL, 11, &run.dir(&format!("d{k}-train")));
        cfg.dataset = Some(gen.dir.clone());
        let t = cmd_train(&cfg).map_err(|e| e.to_string())?;
        let mut cfg = config(SMALL, 11, &run.dir(&format!("d{k}-eval")));
        cfg.dataset = Some(gen.dir.clone());
        cfg.checkpoint = Some(t.dir.join(FINAL_CHECKPOINT));
        let e = cmd_eval(&cfg).map_err(|e| e.to_string())?;
        let read = |p: PathBuf| fs::read(p).unwrap();
        files.push(vec![
            read(gen.dir.join(EVENTS_FILE)),
            read(gen.dir.join(MANIFEST_FILE)),
            read(t.dir.join(HISTORY_FILE)),
            read(t.dir.join(FINAL_CHECKPOINT)),
            read(cfg.out.join("report.json")),
        ]);
        ensure(e.samples > 0, "empty test split")?;
    }
    let names = ["events", "manifest", "history", "checkpoint", "report"];
    for (i, name) in names.iter().enumerate() {
        ensure(
            files[0][i] == files[1][i],
            format!("{name} differs between reruns"),
        )?;
    }
    Ok(format!("{} identical across reruns", names.join(", ")))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("1 dense MAC table", c1_table_macs),
        ("2 synaptic-op formula", c2_synaptic_ops),
        ("3 CUBA-LIF hand traces", c3_hand_traces),
        ("4 event-count oracle", c4_event_counts),
        ("5 noise-rate statistics", c5_noise_rate),
        ("6 gradient check", c6_gradient_check),
        ("7 desk-scale training", c7_desk_training),
        ("8 temporal-resolution trend", c8_window_trend),
        ("9 finetune protocol", c9_finetune),
        ("10 metric formulas", c10_metrics),
        ("11 format round trips", c11_round_trips),
        ("12 determinism", c12_determinism),
    ];
    let mut run = Run {
        root: tempfile::tempdir().unwrap(),
        pretrained: Vec::new(),
    };
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut run))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 12 criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
