use criterion::{black_box, criterion_group, criterion_main, Criterion};
use lungnet_core::dsp::{gam_spectrogram, gammatone_weight_matrix, resample, stft, FrontEnd};
use lungnet_core::{AudioCycle, CycleLabel, FrontEndConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(n: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
}

fn frontend(c: &mut Criterion) {
    let cfg = FrontEndConfig::default();
    let cycle_at_target = noise(cfg.cycle_len());

    c.bench_function("resample 44.1k->4k, 3 s", |b| {
        let x = noise(44_100 * 3);
        b.iter(|| resample(black_box(&x), 44_100, 4_000))
    });

    c.bench_function("stft 10 s", |b| {
        b.iter(|| stft(black_box(&cycle_at_target), &cfg).unwrap())
    });

    let spec = stft(&cycle_at_target, &cfg).unwrap();
    let weights = gammatone_weight_matrix(&cfg).unwrap();
    c.bench_function("gammatone weighting", |b| {
        b.iter(|| gam_spectrogram(black_box(&spec), &weights).unwrap())
    });

    let fe = FrontEnd::new(cfg).unwrap();
    let cycle = AudioCycle {
        cycle_id: "bench#0".into(),
        recording_id: "bench".into(),
        samples: noise(44_100 * 3),
        sample_rate: 44_100,
        label: CycleLabel::Normal,
        subset: None,
    };
    c.bench_function("cycle to patches", |b| {
        b.iter(|| fe.patches(black_box(&cycle)).unwrap())
    });
}

criterion_group!(benches, frontend);
criterion_main!(benches);
