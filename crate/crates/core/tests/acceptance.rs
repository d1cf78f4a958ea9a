//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fail.

#![allow(clippy::needless_range_loop)]

mod common;

use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;
use simd2nn::channel::{fspl_db, small_scale_rician};
use simd2nn::data::{
    dataset_from_bytes, dataset_to_bytes, scene_from_bytes, scene_to_bytes, IqPatch, IqScene,
};
use simd2nn::experiment::{self, quick_config, run_experiment, run_on_encoded, run_on_scene};
use simd2nn::metrics::{export_class_map, read_pgm};
use simd2nn::network::{classify, ModelKind, System};
use simd2nn::propagation::diffraction_coefficient;
use simd2nn::rng::{stream, Purpose, StreamRng};
use simd2nn::training::{backward, loss};
use simd2nn::C64;

use common::{oracle_output, random_instance, relative_error, small_end_to_end};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(case: u64) -> StreamRng {
    stream(0xACCE, Purpose::Test, case, 0)
}

fn diffraction() -> Outcome {
    let w =
        diffraction_coefficient(0.0125, 1.0, 0.0125, 0.0125, 0.025).map_err(|e| e.to_string())?;
    let (er, ei) = ((w.re + 0.1591549).abs(), (w.im - 0.5).abs());
    check(
        er < 1e-6 && ei < 1e-6,
        format!("w = {:.7}{:+.7}j", w.re, w.im),
    )
}

fn fspl() -> Outcome {
    let a = fspl_db(1.0, 1.0).map_err(|e| e.to_string())?;
    let b = fspl_db(1000.0, 12e9).map_err(|e| e.to_string())?;
    check(
        a == -147.55 && (b - 114.03).abs() <= 0.01,
        format!("fspl(1,1) = {a}, fspl(1000 m, 12 GHz) = {b:.4} dB"),
    )
}

fn forward_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let mut r = rng(case);
        let inst = random_instance(&mut r, 16, 3, 2, ModelKind::Sim);
        let cache = inst
            .system
            .forward::<StreamRng>(&inst.params, &inst.input, None)
            .unwrap();
        let dense = oracle_output(&inst);
        worst = worst.max(relative_error(&cache.y, dense.as_slice()));
    }
    check(
        worst <= 1e-12,
        format!("100 instances, worst relative error {worst:.2e}"),
    )
}

fn gradient_oracle() -> Outcome {
    let h = 1e-5;
    let eps = 1e-12;
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let mut r = rng(1000 + case);
        let mut inst = random_instance(&mut r, 8, 3, 2, ModelKind::Sim);
        let noise_seed = r.random::<u64>();
        let with_noise = case % 2 == 1;
        let run = |inst: &common::Instance| {
            let mut n = stream(noise_seed, Purpose::Test, 0, 0);
            let noise = with_noise.then_some(&mut n);
            inst.system
                .forward(&inst.params, &inst.input, noise)
                .unwrap()
        };
        let cache = run(&inst);
        let grad = backward(&cache, &inst.params, &inst.system, inst.label, eps).unwrap();
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        for i in 0..grad.len() {
            let base = inst.params.values()[i];
            inst.params.values_mut()[i] = base + h;
            let lp = loss(&run(&inst).y, inst.label, eps);
            inst.params.values_mut()[i] = base - h;
            let lm = loss(&run(&inst).y, inst.label, eps);
            inst.params.values_mut()[i] = base;
            let fd = (lp - lm) / (2.0 * h);
            let denom = grad[i].abs().max(fd.abs()).max(1e-3 * scale).max(1e-4);
            worst = worst.max((grad[i] - fd).abs() / denom);
        }
    }
    check(
        worst < 1e-5,
        format!("50 instances, worst relative component error {worst:.2e}"),
    )
}

fn channel_statistics() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, k_db) in [-300.0, 0.0, 20.0, 300.0].into_iter().enumerate() {
        let draws = small_scale_rician(k_db, 100_000, &mut rng(2000 + i as u64));
        let power = draws.iter().map(|h| h.norm_sqr()).sum::<f64>() / draws.len() as f64;
        ok &= (power - 1.0).abs() <= 0.02;
        parts.push(format!("K={k_db} dB: {power:.4}"));
    }
    let los = small_scale_rician(300.0, 1000, &mut rng(2100));
    let collapse = los
        .iter()
        .fold(0.0f64, |a, h| a.max((h - C64::new(1.0, 0.0)).norm()));
    ok &= collapse < 1e-12;
    parts.push(format!("K=300 dB max |h-1| {collapse:.1e}"));
    check(ok, parts.join(", "))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = small_end_to_end(dir.path().join("sim"));
    let scene = experiment::load_or_synthesize_scene(&base).map_err(|e| e.to_string())?;
    let encoded = experiment::encode(&base, &scene).map_err(|e| e.to_string())?;
    let sim = run_on_encoded(&base, &encoded).map_err(|e| e.to_string())?;
    let mut digital_cfg = base.clone();
    digital_cfg.model = ModelKind::Digital;
    digital_cfg.out_dir = dir.path().join("digital");
    let digital = run_on_encoded(&digital_cfg, &encoded).map_err(|e| e.to_string())?;
    let (a_sim, a_dig) = (
        sim.metrics.overall_accuracy,
        digital.metrics.overall_accuracy,
    );
    let n = encoded.samples.len();
    check(
        n >= 2000 && a_sim >= 0.95 && a_dig >= a_sim,
        format!("{n} patches, SIM accuracy {a_sim:.4}, digital accuracy {a_dig:.4}"),
    )
}

fn augmentation_ablation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut base = small_end_to_end(dir.path().join("rot"));
    base.synth.land_phase_texture = true;
    let scene = experiment::load_or_synthesize_scene(&base).map_err(|e| e.to_string())?;
    let with = run_on_scene(&base, &scene).map_err(|e| e.to_string())?;
    let mut off = base.clone();
    off.phase_rotation = false;
    off.out_dir = dir.path().join("norot");
    let without = run_on_scene(&off, &scene).map_err(|e| e.to_string())?;
    let (f_on, f_off) = (
        with.metrics.f1.unwrap_or(0.0),
        without.metrics.f1.unwrap_or(0.0),
    );
    check(
        f_on - f_off >= 0.05,
        format!(
            "F1 with rotation {f_on:.4}, without {f_off:.4}, drop {:.4}",
            f_on - f_off
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let a = quick_config(dir.path().join("a"));
    let b = quick_config(dir.path().join("b"));
    run_experiment(&a).map_err(|e| e.to_string())?;
    run_experiment(&b).map_err(|e| e.to_string())?;
    let mut same = Vec::new();
    for name in [
        experiment::METRICS_FILE,
        experiment::HISTORY_FILE,
        experiment::PARAMS_FILE,
        experiment::CLASS_MAP_FILE,
    ] {
        let x = std::fs::read(a.out_dir.join(name)).unwrap();
        let y = std::fs::read(b.out_dir.join(name)).unwrap();
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
        same.push(name);
    }
    Ok(format!("byte-identical {}", same.join(", ")))
}

fn round_trips() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sample = || {
        (-1e30f32..1e30f32, -1e30f32..1e30f32).prop_map(|(a, b)| num_complex::Complex32::new(a, b))
    };
    let mut runner = TestRunner::new(PropConfig {
        failure_persistence: None,
        ..PropConfig::with_cases(100)
    });

    let scenes = (1usize..24, 1usize..24, any::<bool>()).prop_flat_map(move |(h, w, masked)| {
        (
            Just((h, w)),
            proptest::collection::vec(sample(), h * w),
            proptest::option::of(proptest::collection::vec(0u8..2, h * w))
                .prop_map(move |m| m.filter(|_| masked)),
        )
    });
    runner
        .run(&scenes, |((h, w), samples, mask)| {
            let scene = IqScene::new(h, w, samples, mask).unwrap();
            let back = scene_from_bytes(&scene_to_bytes(&scene)).unwrap();
            prop_assert_eq!(back, scene);
            Ok(())
        })
        .map_err(|e| format!("SIMSC1: {e}"))?;

    let datasets = (1usize..9).prop_flat_map(move |side| {
        (
            Just(side),
            proptest::collection::vec(
                (
                    0usize..2,
                    0usize..100_000,
                    0usize..100_000,
                    proptest::collection::vec(sample(), side * side),
                ),
                0..6,
            ),
        )
    });
    runner
        .run(&datasets, |(side, raw)| {
            let patches: Vec<IqPatch> = raw
                .into_iter()
                .map(|(label, r, c, samples)| IqPatch {
                    side,
                    origin: (r, c),
                    label,
                    samples,
                })
                .collect();
            let (back_side, back) =
                dataset_from_bytes(&dataset_to_bytes(&patches, side).unwrap()).unwrap();
            prop_assert_eq!(back_side, side);
            prop_assert_eq!(back, patches);
            Ok(())
        })
        .map_err(|e| format!("SIMIQ1: {e}"))?;

    let maps = (2usize..6, 1usize..20, 1usize..20).prop_flat_map(|(k, rows, cols)| {
        (
            Just((k, rows, cols)),
            proptest::collection::vec(0..k, rows * cols),
        )
    });
    let path = dir.path().join("map.pgm");
    runner
        .run(&maps, |((k, rows, cols), preds)| {
            export_class_map(&preds, rows, cols, k, &path).unwrap();
            let img = read_pgm(&path).unwrap();
            prop_assert_eq!((img.rows, img.cols), (rows, cols));
            prop_assert_eq!(img.classes(k).unwrap(), preds);
            Ok(())
        })
        .map_err(|e| format!("PGM: {e}"))?;
    Ok("SIMSC1, SIMIQ1 and PGM identities hold on 100 random cases each".into())
}

fn invariances() -> Outcome {
    let mut worst_loss: f64 = 0.0;
    let mut worst_power: f64 = 0.0;
    let mut worst_null: f64 = 0.0;
    let mut worst_phase: f64 = 0.0;
    for case in 0..200 {
        let mut r = rng(3000 + case);
        let k = r.random_range(2..5);
        let y: Vec<C64> = (0..k)
            .map(|_| C64::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)))
            .collect();
        let label = r.random_range(0..k);
        let c: f64 = 10f64.powf(r.random_range(-3.0..3.0));
        let scaled: Vec<C64> = y.iter().map(|v| v * c).collect();
        let (l0, l1) = (loss(&y, label, 1e-300), loss(&scaled, label, 1e-300));
        worst_loss = worst_loss.max((l0 - l1).abs() / (1.0 + l0.abs()));

        let inst = random_instance(&mut r, 16, 3, k, ModelKind::Sim);
        let base = inst
            .system
            .forward::<StreamRng>(&inst.params, &inst.input, None)
            .unwrap();
        let louder = System {
            tx_amplitude: inst.system.tx_amplitude * c,
            ..inst.system.clone()
        };
        let up = louder
            .forward::<StreamRng>(&inst.params, &inst.input, None)
            .unwrap();
        for (a, b) in base.y.iter().zip(&up.y) {
            worst_power =
                worst_power.max((b.norm_sqr() / (c * c) - a.norm_sqr()).abs() / a.norm_sqr());
        }
        if classify(&base.y).unwrap() != classify(&up.y).unwrap() {
            return Err(format!(
                "classify changed under power scaling (case {case})"
            ));
        }

        let grad = backward(
            &base,
            &inst.params,
            &inst.system,
            inst.label.min(k - 1),
            1e-12,
        )
        .unwrap();
        let m = inst.system.atoms();
        let scale: f64 = grad.iter().map(|g| g.abs()).sum::<f64>().max(1.0);
        for layer in grad.chunks(m) {
            worst_null = worst_null.max(layer.iter().sum::<f64>().abs() / scale);
        }

        let phi = r.random_range(0.0..TAU);
        let layer = r.random_range(0..inst.params.layers());
        let mut shifted = inst.params.clone();
        shifted.values_mut()[layer * m..(layer + 1) * m]
            .iter_mut()
            .for_each(|t| *t += phi);
        let rotated = inst
            .system
            .forward::<StreamRng>(&shifted, &inst.input, None)
            .unwrap();
        let expect: Vec<C64> = base
            .y
            .iter()
            .map(|v| v * C64::from_polar(1.0, phi))
            .collect();
        worst_phase = worst_phase.max(relative_error(&rotated.y, &expect));
        if classify(&rotated.y).unwrap() != classify(&base.y).unwrap() && worst_phase > 0.0 {
            let p: Vec<f64> = base.y.iter().map(|v| v.norm_sqr()).collect();
            let mut sorted = p.clone();
            sorted.sort_by(f64::total_cmp);
            let gap = sorted[k - 1] - sorted[k - 2];
            if gap > 1e-9 * sorted[k - 1] {
                return Err(format!(
                    "classify changed under a global layer phase (case {case})"
                ));
            }
        }
    }
    check(
        worst_loss < 1e-12 && worst_power < 1e-12 && worst_null < 1e-10 && worst_phase < 1e-12,
        format!(
            "loss scale {worst_loss:.1e}, power scale {worst_power:.1e}, \
             phase-gradient null {worst_null:.1e}, layer phase covariance {worst_phase:.1e}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("diffraction coefficient reference value", diffraction),
        ("free-space path loss reference values", fspl),
        ("forward pass equals dense product", forward_oracle),
        (
            "analytic gradient equals finite differences",
            gradient_oracle,
        ),
        ("Rician small-scale statistics", channel_statistics),
        ("synthetic end-to-end accuracy", end_to_end),
        ("phase-rotation ablation direction", augmentation_ablation),
        ("run determinism", determinism),
        ("file format round-trips", round_trips),
        ("invariance suite", invariances),
    ];
    // Numeric arguments select criteria; anything else (libtest flags) is ignored.
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name} ({secs:.1}s): {detail}", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
