//! One PASS/FAIL line per acceptance criterion. Criteria 3, 5 and 6 share a
//! single default desk-scale run (three replicas), written under the cargo
//! target tmp dir for inspection.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use shapeshift::adversarial::{fgsm, pgd_attack, project, AttackConfig, Norm};
use shapeshift::dataset::{Dataset, LabeledSample};
use shapeshift::distortions::{
    amplitude_spectrum, condition_sweep, phase_scramble_raw, power_equalise_raw, rotate90, DistortionKind, Distorter,
};
use shapeshift::metrics::{condition_filtered_mean, consistency};
use shapeshift::model::{load_checkpoint, loss_and_grads, per_sample_loss, predict, GradRequest, ModelParams, ModelShape};
use shapeshift::numerics::{fft2, ifft2, Complex64, Grid2D, RandomStream};
use shapeshift::runner::{
    check_trend_input, check_trends, emit_report, generate_dataset, reference_table, run, ExperimentConfig,
    ExperimentResult, MetricsConfig, TrendInput, TrendReport, TrendStatus,
};
use shapeshift::spectrum::{image_profile, ProfileMode};
use shapeshift::Image;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random_grid(rs: &mut RandomStream, h: usize, w: usize) -> Grid2D<f64> {
    Grid2D::from_fn(h, w, |_, _| rs.uniform(-1.0, 1.0))
}

fn numerical_core() -> Check {
    let mut rs = RandomStream::new(1).derive("fft");
    let (mut dft, mut parseval, mut round) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let g = random_grid(&mut rs, 8, 8);
        let f = fft2(&g).map_err(err)?;
        for k in 0..8 {
            for l in 0..8 {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..8 {
                    for x in 0..8 {
                        let phase = -2.0 * std::f64::consts::PI * ((k * y + l * x) as f64) / 8.0;
                        acc += Complex64::from_polar(g.get(y, x), phase);
                    }
                }
                dft = dft.max((f.get(k, l) - acc).norm());
            }
        }
        let energy: f64 = f.values().iter().map(|v| v.norm_sqr()).sum();
        let direct = 64.0 * g.values().iter().map(|v| v * v).sum::<f64>();
        parseval = parseval.max((energy - direct).abs() / direct);
        let back = ifft2(&f).map_err(err)?;
        round = round.max(back.values().iter().zip(g.values()).map(|(b, v)| (b - v).norm()).fold(0.0, f64::max));
    }
    ensure(dft < 1e-9 && parseval < 1e-9 && round < 1e-9, || {
        format!("dft {dft:.2e}, parseval {parseval:.2e}, round trip {round:.2e}")
    })?;
    Ok(format!("50 grids: dft {dft:.1e}, parseval {parseval:.1e}, round trip {round:.1e}"))
}

fn gradient_suite() -> Check {
    const H: f64 = 1e-5;
    let shape = ModelShape {
        channels: 3,
        image_size: 8,
        f1: 4,
        f2: 6,
        num_classes: 5,
    };
    // differences resolve ~1e-10 absolute, so tiny gradients are compared at 1e-5 scale
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-5);
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for draw in 0..5u64 {
        let rs = RandomStream::new(draw).derive("grad");
        let mut p = ModelParams::<f64>::init(shape, &rs.derive("params")).map_err(err)?;
        let mut brs = rs.derive("bias");
        for b in [&mut p.conv1_b, &mut p.conv2_b, &mut p.dense_b] {
            b.iter_mut().for_each(|v| *v = 0.1 * brs.normal());
        }
        let mut xrs = rs.derive("x");
        let x: Vec<f64> = (0..2 * shape.input_len()).map(|_| xrs.unit()).collect();
        let y: Vec<usize> = (0..2).map(|_| xrs.below(shape.num_classes)).collect();
        let mean = |p: &ModelParams<f64>, x: &[f64]| {
            let l = per_sample_loss(p, x, &y).expect("valid batch");
            l.iter().sum::<f64>() / l.len() as f64
        };
        let g = loss_and_grads(&p, &x, &y, GradRequest::ALL).map_err(err)?;
        let (gp, gx) = (g.params.expect("requested"), g.inputs.expect("requested"));
        let mut q = p.clone();
        for i in 0..p.num_params() {
            let v = p.flat_get(i);
            q.flat_set(i, v + H);
            let up = mean(&q, &x);
            q.flat_set(i, v - H);
            let down = mean(&q, &x);
            q.flat_set(i, v);
            worst = worst.max(rel(gp.flat_get(i), (up - down) / (2.0 * H)));
            count += 1;
        }
        let mut xp = x.clone();
        for i in 0..x.len() {
            xp[i] = x[i] + H;
            let up = mean(&p, &xp);
            xp[i] = x[i] - H;
            let down = mean(&p, &xp);
            xp[i] = x[i];
            worst = worst.max(rel(gx[i], (up - down) / (2.0 * H)));
            count += 1;
        }
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:.2e}"))?;
    Ok(format!("{count} coordinates over 5 draws, worst relative error {worst:.1e}"))
}

fn linf(d: &[f64]) -> f64 {
    d.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn l2(d: &[f64]) -> f64 {
    d.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Attacks `samples` in chunks, checking the budget on every output; returns accuracy.
fn attacked_accuracy(p: &ModelParams<f32>, samples: &[LabeledSample], cfg: &AttackConfig) -> Result<f64, String> {
    let mut correct = 0usize;
    for chunk in samples.chunks(64) {
        let x: Vec<&Image> = chunk.iter().map(|s| &s.image).collect();
        let y: Vec<usize> = chunk.iter().map(|s| s.shape_label).collect();
        let adv = pgd_attack(p, &x, &y, cfg).map_err(err)?;
        for (a, o) in adv.iter().zip(&x) {
            let d: Vec<f64> = a.data().iter().zip(o.data()).map(|(a, o)| a - o).collect();
            let size = if cfg.norm == Norm::L2 { l2(&d) } else { linf(&d) };
            ensure(size <= cfg.epsilon + 1e-9, || format!("{} budget exceeded: {size}", cfg.label()))?;
            ensure(a.data().iter().all(|v| (0.0..=1.0).contains(v)), || "pixel outside [0, 1]".into())?;
        }
        let refs: Vec<&Image> = adv.iter().collect();
        correct += predict(p, &refs).map_err(err)?.iter().zip(&y).filter(|(a, b)| a == b).count();
    }
    Ok(correct as f64 / samples.len() as f64)
}

fn attack_suite(desk: &Desk) -> Check {
    let test = &desk.dataset.test[..desk.dataset.test.len().min(256)];
    let mut notes = Vec::new();

    let mut rs = RandomStream::new(3).derive("projection");
    for i in 0..200 {
        let d: Vec<f64> = (0..64).map(|_| rs.uniform(-1.0, 1.0)).collect();
        let norm = if i % 2 == 0 { Norm::L2 } else { Norm::Linf };
        let eps = rs.uniform(0.0, 2.0);
        let once = project(&d, norm, eps).map_err(err)?;
        ensure(project(&once, norm, eps).map_err(err)? == once, || format!("{norm} projection not idempotent"))?;
    }
    notes.push("projection idempotent".to_string());

    for entry in ["clean", "linf-8"] {
        let p = desk.model(entry)?;
        let x: Vec<&Image> = test[..32].iter().map(|s| &s.image).collect();
        let y: Vec<usize> = test[..32].iter().map(|s| s.shape_label).collect();
        let eps = 8.0 / 255.0;
        let one = AttackConfig {
            step_size: Some(eps),
            ..AttackConfig::new(Norm::Linf, eps, 1)
        };
        ensure(pgd_attack(&p, &x, &y, &one).map_err(err)? == fgsm(&p, &x, &y, eps).map_err(err)?, || {
            format!("{entry}: 1-step PGD differs from FGSM")
        })?;

        let l2_budget = desk.l2_budget();
        let random = AttackConfig {
            random_start: true,
            seed: 9,
            ..AttackConfig::new(Norm::L2, l2_budget, 20)
        };
        attacked_accuracy(&p, test, &random)?;

        let mut accs = Vec::new();
        for k in [0.0, 2.0, 4.0, 8.0] {
            accs.push(attacked_accuracy(&p, test, &AttackConfig::new(Norm::Linf, k / 255.0, 20))?);
        }
        let monotone = accs.windows(2).all(|w| w[1] <= w[0] + 0.01);
        let shown: Vec<String> = accs.iter().map(|a| format!("{a:.3}")).collect();
        ensure(monotone, || format!("{entry} ladder not non-increasing: {}", shown.join(" ")))?;
        notes.push(format!("{entry} ladder {}", shown.join(" ")));
    }
    Ok(format!("{} samples, budgets held; {}", test.len(), notes.join("; ")))
}

fn power(img: &Image) -> Vec<f64> {
    img.planes().iter().flat_map(|p| fft2(p).expect("power-of-two image").norm_sqr().into_values()).collect()
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn distortion_suite(dataset: &Dataset) -> Check {
    let images: Vec<&Image> = dataset.test.iter().take(16).map(|s| &s.image).collect();
    let distorter = Distorter::with_target(shapeshift::distortions::mean_amplitude_spectrum(images.iter().copied()).map_err(err)?);
    let target = amplitude_spectrum(images[0]).map_err(err)?;
    let (mut phase, mut equal, mut ident, mut rot) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (i, img) in images.iter().enumerate().skip(1) {
        let mut rs = RandomStream::new(i as u64);
        phase = phase.max(rel_gap(&power(&phase_scramble_raw(img, 0.9, &mut rs).map_err(err)?), &power(img)));
        let eq = amplitude_spectrum(&power_equalise_raw(img, &target).map_err(err)?).map_err(err)?;
        for (t, o) in target.iter().zip(&eq) {
            equal = equal.max(rel_gap(t.values(), o.values()));
        }
        for kind in DistortionKind::ALL {
            for cond in condition_sweep(kind).into_iter().filter(|c| c.is_identity()) {
                let out = distorter.apply(img, &cond, i as u64).map_err(err)?;
                ident = ident.max(out.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        let base = image_profile(img, ProfileMode::PerRadius).map_err(err)?;
        for k in 1..4 {
            let r = image_profile(&rotate90(img, k).map_err(err)?, ProfileMode::PerRadius).map_err(err)?;
            rot = rot.max(base.bins.iter().zip(&r.bins).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    ensure(phase < 1e-9 && equal < 1e-9 && ident <= 1e-9 && rot < 1e-9, || {
        format!("phase {phase:.2e}, equalise {equal:.2e}, identity {ident:.2e}, rotation {rot:.2e}")
    })?;
    Ok(format!(
        "{} images: phase {phase:.1e}, equalise {equal:.1e}, identity {ident:.1e}, rotation {rot:.1e}",
        images.len() - 1
    ))
}

fn trend_lines(report: &TrendReport, check: char) -> String {
    report
        .checks
        .iter()
        .filter(|c| c.check == check)
        .map(|c| format!("[{} {}: {}]", c.status, c.subject, c.detail))
        .collect::<Vec<_>>()
        .join(" ")
}

fn shape_bias_trend(report: &TrendReport) -> Check {
    let wanted = ["linf-8", "l2-8"];
    let mut ok = report.status('b') == TrendStatus::Pass;
    for w in wanted {
        ok &= report.find('a', w).is_some_and(|c| c.status == TrendStatus::Pass);
    }
    let text = format!("{} {}", trend_lines(report, 'a'), trend_lines(report, 'b'));
    ensure(ok, || text.clone())?;
    Ok(text)
}

fn divergence_trend(report: &TrendReport) -> Check {
    let text = trend_lines(report, 'c');
    ensure(report.status('c') == TrendStatus::Pass, || text.clone())?;
    Ok(text)
}

fn metrics_suite() -> Check {
    // 11 both right, 5 only a, 1 only b, 3 neither: p_a 0.8, p_b 0.6, observed 0.7
    let a: Vec<bool> = [vec![true; 16], vec![false; 4]].concat();
    let b: Vec<bool> = [vec![true; 11], vec![false; 5], vec![true], vec![false; 3]].concat();
    let k = consistency(&a, &b).map_err(err)?;
    let expected = (0.7 - 0.56) / (1.0 - 0.56);
    ensure((k.kappa - expected).abs() < 1e-9 && (k.kappa - 0.31818).abs() < 1e-5, || format!("kappa {}", k.kappa))?;

    let mut rs = RandomStream::new(5).derive("independent");
    let n = 100_000;
    let xa: Vec<bool> = (0..n).map(|_| rs.unit() < 0.7).collect();
    let xb: Vec<bool> = (0..n).map(|_| rs.unit() < 0.7).collect();
    let sim = consistency(&xa, &xb).map_err(err)?.kappa;
    ensure(sim.abs() <= 0.02, || format!("independent kappa {sim}"))?;

    let human: BTreeMap<String, f64> =
        [("a", 0.9), ("b", 0.2), ("c", 0.21), ("d", 0.05), ("e", 0.6)].map(|(k, v)| (k.to_string(), v)).into();
    let model: BTreeMap<String, f64> =
        [("a", 0.8), ("b", 0.1), ("c", 0.4), ("d", 0.0), ("e", 0.3)].map(|(k, v)| (k.to_string(), v)).into();
    let got = condition_filtered_mean(&model, &human, 0.2).map_err(err)?;
    let want = (0.8 + 0.4 + 0.3) / 3.0;
    ensure((got - want).abs() < 1e-12, || format!("filtered mean {got}, expected {want}"))?;
    Ok(format!("kappa {:.5}, independent kappa {sim:+.4}, filter kept a/c/e", k.kappa))
}

fn fixture_integrity() -> Check {
    let t = reference_table();
    let spot = [("R50", "mean", 54.50), ("XCiT-S12", "mean", 68.90), ("Humans", "cue_conflict", 77.55)];
    for (model, col, v) in spot {
        let got = t.row(model).and_then(|r| r.get(col));
        ensure(got == Some(v), || format!("{model} {col}: {got:?}"))?;
    }
    let report = check_trend_input(&TrendInput::from_reference(&t, "R50").map_err(err)?, &MetricsConfig::default())
        .map_err(err)?;
    ensure(report.find('a', "R50 (linf)").is_some_and(|c| c.status == TrendStatus::Pass), || {
        trend_lines(&report, 'a')
    })?;
    Ok(format!("spot rows exact; {}", trend_lines(&report, 'a')))
}

const SMALL: &str = r#"
schema_version = 1
seed = 21
replicas = 2
output_dir = "unused"

[dataset]
train_per_class = 16
test_per_class = 4
cue_conflict_count = 32

[[training]]
name = "clean"
epochs = 2

[[training]]
name = "l2"
epochs = 1
attack = { norm = "l2", epsilon = 0.25 }

[[distortions]]
kind = "phase_scrambling"
levels = [0.0, 0.6]

[[distortions]]
kind = "rotation"

[robust]
samples = 16
steps = 3
"#;

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable output dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).expect("inside dir").to_path_buf(), fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn determinism(root: &Path) -> Check {
    // same config (output_dir included), different worker counts
    let mut cfg = ExperimentConfig::from_toml(SMALL).map_err(err)?;
    cfg.output_dir = root.join("determinism");
    let mut snapshots = Vec::new();
    for workers in [1usize, 2] {
        let _ = fs::remove_dir_all(&cfg.output_dir);
        let result = run(&cfg, workers).map_err(err)?;
        emit_report(&result, &cfg.output_dir).map_err(err)?;
        snapshots.push(files(&cfg.output_dir));
    }
    let (a, b) = (&snapshots[0], &snapshots[1]);
    let differing: Vec<String> =
        a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).map(|k| k.display().to_string()).collect();
    ensure(differing.is_empty(), || format!("differing files: {}", differing.join(", ")))?;
    let count = |ext: &str| a.keys().filter(|k| k.extension().is_some_and(|e| e == ext)).count();
    Ok(format!("{} files identical ({} csv, {} checkpoints)", a.len(), count("csv"), count("ckpt")))
}

struct Desk {
    cfg: ExperimentConfig,
    result: ExperimentResult,
    dataset: Dataset,
}

impl Desk {
    fn model(&self, entry: &str) -> Result<ModelParams<f32>, String> {
        let m = self
            .result
            .models
            .iter()
            .find(|m| m.entry == entry && m.replica == 0)
            .ok_or_else(|| format!("no model for {entry}"))?;
        load_checkpoint(&self.cfg.output_dir.join(&m.checkpoint)).map_err(err)
    }

    fn l2_budget(&self) -> f64 {
        self.cfg
            .training
            .iter()
            .filter_map(|e| e.train.attack.as_ref())
            .find(|a| a.norm == Norm::L2)
            .map_or(0.5, |a| a.epsilon)
    }
}

fn desk_run(root: &Path) -> Result<Desk, String> {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.output_dir = root.join("desk");
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = run(&cfg, workers).map_err(err)?;
    emit_report(&result, &cfg.output_dir).map_err(err)?;
    let dataset = generate_dataset(&cfg).map_err(err)?;
    Ok(Desk { cfg, result, dataset })
}

fn main() -> ExitCode {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut failed = 0;
    let mut report = |id: u8, name: &str, started: Instant, outcome: Check| {
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name} ({secs:.1}s): {detail}");
            }
        }
    };

    let t = Instant::now();
    report(1, "numerical core", t, numerical_core());
    let t = Instant::now();
    report(2, "gradient suite", t, gradient_suite());

    let t = Instant::now();
    let desk = desk_run(&root);
    let desk_secs = t.elapsed().as_secs_f64();
    let trends = desk.as_ref().map_err(Clone::clone).and_then(|d| check_trends(&d.result).map_err(err));
    match &desk {
        Ok(d) => {
            let t = Instant::now();
            report(3, "attack suite", t, attack_suite(d));
            let t = Instant::now();
            report(4, "distortion suite", t, distortion_suite(&d.dataset));
        }
        Err(e) => {
            report(3, "attack suite", t, Err(format!("desk run failed: {e}")));
            report(4, "distortion suite", t, Err(format!("desk run failed: {e}")));
        }
    }
    println!("desk run: {desk_secs:.0}s, output in {}", root.join("desk").display());
    match &trends {
        Ok(r) => {
            report(5, "shape-bias trend", t, shape_bias_trend(r));
            report(6, "divergence trend", t, divergence_trend(r));
        }
        Err(e) => {
            report(5, "shape-bias trend", t, Err(e.clone()));
            report(6, "divergence trend", t, Err(e.clone()));
        }
    }

    let t = Instant::now();
    report(7, "metrics suite", t, metrics_suite());
    let t = Instant::now();
    report(8, "fixture integrity", t, fixture_integrity());
    let t = Instant::now();
    report(9, "determinism", t, determinism(&root));

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
