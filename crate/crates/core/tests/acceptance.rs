//! Acceptance gate: one PASS/FAIL/SKIP line per criterion, nonzero exit on
//! any failure. Criteria needing the ICBHI corpus read `ICBHI_DIR` (and
//! optionally `ICBHI_SPLIT`); the full training run also needs `LUNGNET_FULL=1`.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{kl_error, l2_error, layer_error, mse_error, rng, uniform, F32, F64, LAYERS};
use lungnet_core::augment::{mixup_pair, MixupDraw, SoftLabel};
use lungnet_core::dsp::{
    apply_weights, erb_bandwidth, gam_spectrogram, gammatone_weight_matrix, stft, FrontEnd,
};
use lungnet_core::eval::{
    confusion, decide, fuse, icbhi_scores, CycleProbability, Fusion, IcbhiScores, Source,
};
use lungnet_core::ingest::NUM_CLASSES;
use lungnet_core::ingest::{class_counts, load_split_dataset, write_manifest, ManifestRow};
use lungnet_core::models::{
    accuracy, embed, predict_cycles, train_autoencoder, train_cdnn, train_mlp_head, ArchConfig,
    Classifier, LabeledSet, Network, TrainConfig,
};
use lungnet_core::neural::{conv2d_stride2, softmax, transposed_conv2d, Tensor};
use lungnet_core::{AudioCycle, CycleLabel, FrontEndConfig};
use rand::Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn run(
        &mut self,
        id: u32,
        title: &str,
        budget: Option<Duration>,
        body: impl FnOnce() -> Outcome,
    ) {
        let start = Instant::now();
        let mut outcome = body();
        let elapsed = start.elapsed();
        if let (Outcome::Pass(detail), Some(limit)) = (&outcome, budget) {
            if elapsed > limit {
                outcome =
                    Outcome::Fail(format!("{detail}; took {elapsed:.1?}, budget {limit:.0?}"));
            }
        }
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {id}. {title}: {detail} ({elapsed:.2?})");
    }
}

fn main() -> ExitCode {
    let mut r = Runner { failures: 0 };
    r.run(
        1,
        "numerical core",
        Some(Duration::from_secs(120)),
        numerical_core,
    );
    r.run(2, "dsp oracles", Some(Duration::from_secs(60)), dsp_oracles);
    r.run(
        3,
        "metric consistency",
        Some(Duration::from_secs(1)),
        metric_consistency,
    );
    r.run(
        4,
        "mixup and fusion invariants",
        Some(Duration::from_secs(10)),
        invariants,
    );
    r.run(5, "ingestion census", None, census);
    r.run(
        6,
        "learning smoke tests",
        Some(Duration::from_secs(600)),
        smoke,
    );
    r.run(7, "full ICBHI run", None, full_icbhi_run);
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criterion(s) failed", r.failures);
        ExitCode::FAILURE
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn numerical_core() -> Outcome {
    let mut problems = Vec::new();
    let mut worst32: f64 = 0.0;
    let mut worst64: f64 = 0.0;
    for name in LAYERS {
        let (e32, e64) = (
            layer_error::<f32>(name, &F32),
            layer_error::<f64>(name, &F64),
        );
        worst32 = worst32.max(e32);
        worst64 = worst64.max(e64);
        if e32 >= F32.tol || e64 >= F64.tol {
            problems.push(format!("{name} f32 {e32:.1e} f64 {e64:.1e}"));
        }
    }
    for (name, e32, e64) in [
        ("kl", kl_error::<f32>(&F32), kl_error::<f64>(&F64)),
        ("l2", l2_error::<f32>(&F32), l2_error::<f64>(&F64)),
        ("mse", mse_error::<f32>(&F32), mse_error::<f64>(&F64)),
    ] {
        worst32 = worst32.max(e32);
        worst64 = worst64.max(e64);
        if e32 >= F32.tol || e64 >= F64.tol {
            problems.push(format!("{name} f32 {e32:.1e} f64 {e64:.1e}"));
        }
    }

    let mut adjoint: f64 = 0.0;
    for seed in 0..5 {
        let mut g = rng(100 + seed);
        let (h, w, c, d) = (3 + seed as usize % 3, 4, 2 + seed as usize % 2, 3);
        let x: Tensor<f64> = uniform(&[2 * h, 2 * w, c], -1.0, 1.0, &mut g);
        let y: Tensor<f64> = uniform(&[h, w, d], -1.0, 1.0, &mut g);
        let k: Tensor<f64> = uniform(&[3, 3, c, d], -1.0, 1.0, &mut g);
        let lhs = conv2d_stride2(&x, &k).unwrap().dot(&y);
        let rhs = x.dot(&transposed_conv2d(&y, &k).unwrap());
        adjoint = adjoint.max(rel_diff(lhs, rhs));
    }
    if adjoint >= 1e-5 {
        problems.push(format!("adjoint {adjoint:.1e}"));
    }

    let mut shift: f64 = 0.0;
    for seed in 0..20 {
        let mut g = rng(200 + seed);
        let x: Tensor<f64> = uniform(&[4, 4], -5.0, 5.0, &mut g);
        let c = g.gen_range(-50.0..50.0);
        let a = softmax(&x);
        let b = softmax(&x.map(|v| v + c));
        shift = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q).abs())
            .fold(shift, f64::max);
        let x32: Tensor<f32> = x.cast();
        let c32 = g.gen_range(-5.0f32..5.0);
        let a = softmax(&x32);
        let b = softmax(&x32.map(|v| v + c32));
        shift = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q).abs() as f64)
            .fold(shift, f64::max);
    }
    if shift >= 1e-6 {
        problems.push(format!("softmax shift {shift:.1e}"));
    }

    let detail = format!(
        "{} layers + 3 losses x 5 seeds, worst f32 {worst32:.1e}, f64 {worst64:.1e}; adjoint {adjoint:.1e}; shift {shift:.1e}",
        LAYERS.len()
    );
    if problems.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; {}", problems.join(", ")))
    }
}

fn dsp_oracles() -> Outcome {
    let cfg = FrontEndConfig::default();
    let mut g = rng(7);
    let signal: Vec<f32> = (0..cfg.cycle_len())
        .map(|_| g.gen_range(-1.0..1.0))
        .collect();
    let spec = stft(&signal, &cfg).unwrap();
    let (win, hop, n_fft) = (cfg.window_len(), cfg.hop_len(), cfg.fft_size);
    let bins = n_fft / 2 + 1;
    let frames = spec.magnitudes.cols();

    let mut stft_err: f64 = 0.0;
    for _ in 0..10 {
        let t = g.gen_range(0..frames);
        for f in 0..bins {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for n in 0..win {
                let w =
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (win - 1) as f64).cos();
                let phase = -2.0 * std::f64::consts::PI * (f * n) as f64 / n_fft as f64;
                let v = signal[t * hop + n] as f64 * w;
                re += v * phase.cos();
                im += v * phase.sin();
            }
            let direct = (re * re + im * im).sqrt();
            let got = spec.magnitudes.get(f, t);
            stft_err = stft_err.max((got - direct).abs() / direct.max(1e-3));
        }
    }

    let weights = gammatone_weight_matrix(&cfg).unwrap();
    let raw = apply_weights(&spec, &weights).unwrap();
    let mut loops = vec![0.0f64; cfg.n_gammatone * frames];
    for c in 0..cfg.n_gammatone {
        for t in 0..frames {
            let mut acc = 0.0;
            for f in 0..bins {
                acc += weights.coe.get(c, f) * spec.magnitudes.get(f, t);
            }
            loops[c * frames + t] = acc;
        }
    }
    let product_err = raw
        .data()
        .iter()
        .zip(&loops)
        .map(|(a, b)| rel_diff(*a, *b))
        .fold(0.0, f64::max);
    let logs: Vec<f64> = loops.iter().map(|v| (v + 1e-6).ln()).collect();
    let (lo, hi) = logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let gam = gam_spectrogram(&spec, &weights).unwrap();
    let gam_err = gam
        .data()
        .iter()
        .zip(&logs)
        .map(|(a, v)| (a - (v - lo) / (hi - lo)).abs())
        .fold(0.0, f64::max);

    let erb0 = erb_bandwidth(0.0);
    let erb1k = erb_bandwidth(1000.0);
    let detail = format!(
        "stft {stft_err:.1e}, weights product {product_err:.1e}, gam {gam_err:.1e}, erb(0)={erb0}, erb(1000)={erb1k:.9}"
    );
    verdict(
        stft_err < 1e-6
            && product_err < 1e-6
            && gam_err < 1e-6
            && erb0 == 24.7
            && (erb1k - 132.639).abs() <= 1e-9,
        detail,
    )
}

fn metric_consistency() -> Outcome {
    let rows = [
        ("C-DNN", 0.63, 0.31, 0.47, 0.41),
        ("Autoencoder", 0.62, 0.33, 0.47, 0.43),
        ("Max", 0.67, 0.30, 0.48, 0.42),
        ("Mean", 0.69, 0.30, 0.49, 0.42),
        ("Mul", 0.69, 0.29, 0.49, 0.41),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, sp, se, as_printed, hs_printed) in rows {
        let s = IcbhiScores::from_se_sp(se, sp);
        worst = worst
            .max((s.as_score - as_printed).abs())
            .max((s.hs - hs_printed).abs());
        parts.push(format!("{name} {:.4}/{:.4}", s.as_score, s.hs));
    }
    verdict(
        worst <= 0.01 + 1e-12,
        format!("{}; worst gap {worst:.4}", parts.join(", ")),
    )
}

fn random_simplex(g: &mut impl Rng) -> [f64; NUM_CLASSES] {
    let mut p = [0.0; NUM_CLASSES];
    p.iter_mut().for_each(|v| *v = g.gen_range(1e-3..1.0));
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

fn invariants() -> Outcome {
    let mut g = rng(11);
    let mut mass: f64 = 0.0;
    for _ in 0..1000 {
        let x1: Vec<f32> = (0..64).map(|_| g.gen_range(0.0..1.0)).collect();
        let x2: Vec<f32> = (0..64).map(|_| g.gen_range(0.0..1.0)).collect();
        let y1 = SoftLabel::new(random_simplex(&mut g)).unwrap();
        let y2 = SoftLabel::one_hot(CycleLabel::ALL[g.gen_range(0..NUM_CLASSES)]);
        let gamma = MixupDraw::sample(0.4, &mut g).unwrap().gamma;
        let ((a, ya), (b, yb)) = mixup_pair(&x1, &y1, &x2, &y2, gamma);
        for i in 0..64 {
            mass = mass.max(((a[i] + b[i]) as f64 - (x1[i] + x2[i]) as f64).abs());
        }
        for k in 0..NUM_CLASSES {
            mass = mass.max((ya.probs[k] + yb.probs[k] - y1.probs[k] - y2.probs[k]).abs());
        }
        mass = mass.max((ya.probs.iter().sum::<f64>() - 1.0).abs());
        mass = mass.max((yb.probs.iter().sum::<f64>() - 1.0).abs());
    }

    let mut flips = 0;
    for i in 0..1000 {
        let cp = |p| CycleProbability {
            cycle_id: format!("c{i}"),
            probs: p,
            source: Source::Cdnn,
        };
        let (p1, p2) = (random_simplex(&mut g), random_simplex(&mut g));
        let fused = fuse(&cp(p1), &cp(p2), Fusion::Mul).unwrap();
        let mut product = [0.0; NUM_CLASSES];
        for k in 0..NUM_CLASSES {
            product[k] = p1[k] * p2[k];
        }
        if decide(&fused.probs).unwrap() != decide(&product).unwrap() {
            flips += 1;
        }
    }

    let mut hs_violations = 0;
    for i in 0..=100 {
        for j in 0..=100 {
            let s = IcbhiScores::from_se_sp(i as f64 / 100.0, j as f64 / 100.0);
            if s.hs > s.as_score + 1e-15 {
                hs_violations += 1;
            }
        }
    }
    verdict(
        mass < 1e-6 && flips == 0 && hs_violations == 0,
        format!("mass {mass:.1e} over 1000 pairs, {flips} mul argmax flips, {hs_violations} HS>AS on 101x101 grid"),
    )
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn manifest_bytes(train: &[AudioCycle], test: &[AudioCycle]) -> Vec<u8> {
    let mut rows: Vec<ManifestRow> = train
        .iter()
        .chain(test)
        .map(|c| ManifestRow::from_cycle(c).unwrap())
        .collect();
    rows.sort_by(|a, b| stem(&a.cycle_id).cmp(stem(&b.cycle_id)));
    let mut out = Vec::new();
    write_manifest(&mut out, &rows, &[]).unwrap();
    out
}

fn stem(id: &str) -> &str {
    id.rsplit_once('#').map_or(id, |(s, _)| s)
}

fn census() -> Outcome {
    let dir = fixture_dir();
    let fixture =
        match load_split_dataset(&dir.join("mini_icbhi"), &dir.join("mini_icbhi_split.txt")) {
            Ok((train, test)) => {
                let expected = std::fs::read(dir.join("mini_icbhi_manifest.csv")).unwrap();
                let got = manifest_bytes(&train, &test);
                (
                    got == expected,
                    format!("fixture manifest {} rows", train.len() + test.len()),
                )
            }
            Err(e) => (false, format!("fixture failed to load: {e}")),
        };
    let Some(icbhi) = std::env::var_os("ICBHI_DIR").map(PathBuf::from) else {
        return verdict(
            fixture.0,
            format!(
                "{} {}; full corpus not present (set ICBHI_DIR)",
                fixture.1,
                if fixture.0 {
                    "byte-identical"
                } else {
                    "differs"
                }
            ),
        );
    };
    let split = std::env::var_os("ICBHI_SPLIT")
        .map(PathBuf::from)
        .unwrap_or_else(|| icbhi.join("ICBHI_challenge_train_test.txt"));
    match load_split_dataset(&icbhi, &split) {
        Ok((train, test)) => {
            let tr = class_counts(train.iter().map(|c| &c.label));
            let te = class_counts(test.iter().map(|c| &c.label));
            let all: Vec<usize> = (0..NUM_CLASSES).map(|k| tr[k] + te[k]).collect();
            let ok = train.len() + test.len() == 6898
                && all == [1864, 886, 506, 3642]
                && tr == [1215, 501, 363, 2063]
                && te == [649, 385, 143, 1579];
            verdict(
                fixture.0 && ok,
                format!(
                    "{}; corpus {} cycles, train {tr:?}, test {te:?}",
                    fixture.1,
                    train.len() + test.len()
                ),
            )
        }
        Err(e) => Outcome::Fail(format!("{}; corpus failed to load: {e}", fixture.1)),
    }
}

fn smoke() -> Outcome {
    let (rows, cols) = (16, 16);
    let arch = ArchConfig::small(rows, cols);

    let data = common::quadrant_dataset(20, rows, cols, 3);
    let set = LabeledSet::from_patches(&data).unwrap();
    let mut cdnn = Network::cdnn(&arch, 1).unwrap();
    let mut cdnn_acc = 0.0;
    let mut cdnn_epochs = 0;
    let chunk = 10;
    while cdnn_epochs < 300 {
        let cfg = TrainConfig {
            lr: 1e-3,
            batch: 16,
            epochs: chunk,
            seed: cdnn_epochs as u64,
            ..TrainConfig::default()
        };
        train_cdnn(&mut cdnn, &data, &cfg, |_| {}).unwrap();
        cdnn_epochs += chunk;
        cdnn_acc = accuracy(&mut cdnn, &set).unwrap();
        if cdnn_acc >= 0.95 {
            break;
        }
    }

    let blobs = common::blob_patches(100, rows, cols, 5);
    let mut enc = Network::encoder(&arch, 2).unwrap();
    let mut dec = Network::decoder(&arch, 3).unwrap();
    let ae_cfg = TrainConfig {
        lr: 1e-3,
        batch: 20,
        epochs: 50,
        ..TrainConfig::default()
    };
    let log = train_autoencoder(&mut enc, &mut dec, &blobs, &ae_cfg, |_| {}).unwrap();
    let (mse1, mse50) = (log.epochs[0].loss, log.epochs[49].loss);

    let mut frozen = Network::encoder(&arch, 4).unwrap();
    let before = frozen.to_checkpoint();
    let quads = common::quadrant_dataset(25, rows, cols, 9);
    let plain: Vec<_> = quads.iter().map(|p| p.patch.clone()).collect();
    let emb = embed(&mut frozen, &plain).unwrap();
    let width = emb.shape()[1];
    let emb_set = LabeledSet::new(
        &[width],
        emb.into_vec(),
        quads.iter().map(|p| p.label).collect(),
    )
    .unwrap();
    let mut mlp = Network::mlp(&arch, 5).unwrap();
    let mut mlp_acc = 0.0;
    let mut mlp_epochs = 0;
    while mlp_epochs < 300 {
        let cfg = TrainConfig {
            lr: 1e-3,
            batch: 20,
            epochs: chunk,
            seed: mlp_epochs as u64,
            ..TrainConfig::default()
        };
        train_mlp_head(&mut mlp, &emb_set, &cfg, |_| {}).unwrap();
        mlp_epochs += chunk;
        mlp_acc = accuracy(&mut mlp, &emb_set).unwrap();
        if mlp_acc >= 0.99 {
            break;
        }
    }
    let encoder_frozen = frozen.to_checkpoint() == before;

    verdict(
        cdnn_acc >= 0.95 && mse50 <= 0.5 * mse1 && mlp_acc >= 0.99 && encoder_frozen,
        format!(
            "C-DNN acc {cdnn_acc:.3} after {cdnn_epochs} epochs; AE mse {mse1:.4} -> {mse50:.4} (ratio {:.3}); MLP acc {mlp_acc:.3} after {mlp_epochs} epochs, encoder {}",
            mse50 / mse1,
            if encoder_frozen { "unchanged" } else { "modified" }
        ),
    )
}

fn full_icbhi_run() -> Outcome {
    let Some(icbhi) = std::env::var_os("ICBHI_DIR").map(PathBuf::from) else {
        return Outcome::Skip("needs ICBHI_DIR and LUNGNET_FULL=1 (hours of CPU)".into());
    };
    if std::env::var("LUNGNET_FULL").as_deref() != Ok("1") {
        return Outcome::Skip("set LUNGNET_FULL=1 to run the full training (hours of CPU)".into());
    }
    let split = std::env::var_os("ICBHI_SPLIT")
        .map(PathBuf::from)
        .unwrap_or_else(|| icbhi.join("ICBHI_challenge_train_test.txt"));
    let result = (|| -> lungnet_core::Result<IcbhiScores> {
        let (train, test) = load_split_dataset(&icbhi, &split)?;
        let fe = FrontEnd::new(FrontEndConfig::default())?;
        let train_p = fe.extract_all(&train)?;
        let test_p = fe.extract_all(&test)?;
        let arch = ArchConfig::default();
        let cfg = TrainConfig::default();

        let mut cdnn = Network::cdnn(&arch, cfg.seed)?;
        train_cdnn(&mut cdnn, &train_p, &cfg, |_| {})?;
        let mut enc = Network::encoder(&arch, cfg.seed)?;
        let mut dec = Network::decoder(&arch, cfg.seed)?;
        let plain: Vec<_> = train_p.iter().map(|p| p.patch.clone()).collect();
        train_autoencoder(
            &mut enc,
            &mut dec,
            &plain,
            &TrainConfig {
                mixup_enabled: false,
                ..cfg.clone()
            },
            |_| {},
        )?;
        let emb = embed(&mut enc, &plain)?;
        let width = emb.shape()[1];
        let set = LabeledSet::new(
            &[width],
            emb.into_vec(),
            train_p.iter().map(|p| p.label).collect(),
        )?;
        let mut mlp = Network::mlp(&arch, cfg.seed)?;
        train_mlp_head(&mut mlp, &set, &cfg, |_| {})?;

        let test_plain: Vec<_> = test_p.iter().map(|p| p.patch.clone()).collect();
        let a = predict_cycles(&mut Classifier::Cdnn(cdnn), &test_plain)?;
        let b = predict_cycles(
            &mut Classifier::EncoderMlp { encoder: enc, mlp },
            &test_plain,
        )?;
        let mut pred = Vec::new();
        for ((id, p1), (_, p2)) in a.into_iter().zip(b) {
            let cp = |p, source| CycleProbability {
                cycle_id: id.clone(),
                probs: p,
                source,
            };
            let fused = fuse(&cp(p1, Source::Cdnn), &cp(p2, Source::Mlp), Fusion::Mean)?;
            pred.push((id.clone(), decide(&fused.probs)?));
        }
        let truth: Vec<(String, CycleLabel)> =
            test.iter().map(|c| (c.cycle_id.clone(), c.label)).collect();
        icbhi_scores(&confusion(&pred, &truth)?)
    })();
    match result {
        Ok(s) => verdict(
            (s.as_score - 0.49).abs() <= 0.04 && (s.hs - 0.42).abs() <= 0.04,
            format!(
                "mean fusion SE {:.4} SP {:.4} AS {:.4} HS {:.4}",
                s.se, s.sp, s.as_score, s.hs
            ),
        ),
        Err(e) => Outcome::Fail(format!("pipeline error: {e}")),
    }
}
