use std::path::Path;
use std::time::Instant;

use aasist3::dsp::{pre_emphasis, SAMPLE_RATE};
use aasist3::eval::Label;
use aasist3::model::{Aasist3Model, ModelConfig};
use aasist3::numerics::Tensor;
use aasist3::train::{
    crop_cyclic, load_split, make_toy_dataset, train_loop, train_step, write_toy_corpus, Adam, Example, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Mean over frames of the spectral flatness (geometric over arithmetic
/// mean of the power spectrum) restricted to 4–8 kHz.
fn high_band_flatness(x: &[f64]) -> f64 {
    const N: usize = 512;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(N);
    let lo = N * 4000 / SAMPLE_RATE as usize;
    let hi = N / 2;
    let mut total = 0.0;
    let mut frames = 0;
    for frame in x.chunks_exact(N) {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / N as f64).cos();
                Complex::new(v * w, 0.0)
            })
            .collect();
        fft.process(&mut buf);
        let power: Vec<f64> = buf[lo..hi].iter().map(|c| c.norm_sqr() + 1e-20).collect();
        let log_mean = power.iter().map(|p| p.ln()).sum::<f64>() / power.len() as f64;
        let mean = power.iter().sum::<f64>() / power.len() as f64;
        total += log_mean.exp() / mean;
        frames += 1;
    }
    total / frames as f64
}

#[test]
fn toy_dataset_is_balanced_and_in_range() {
    let data = make_toy_dataset(50, 3).unwrap();
    assert_eq!(data.len(), 100);
    assert_eq!(data.iter().filter(|u| u.label == Label::Bonafide).count(), 50);
    for u in &data {
        let secs = u.audio.duration_secs();
        assert!((4.0..=6.0).contains(&secs), "{secs}");
        assert!(u.audio.samples().iter().all(|s| s.abs() <= 1.0));
    }
    assert!(make_toy_dataset(0, 3).is_err());
}

#[test]
fn high_band_flatness_separates_toy_classes() {
    let data = make_toy_dataset(50, 7).unwrap();
    let mut feats: Vec<(f64, Label)> = data
        .iter()
        .map(|u| (high_band_flatness(u.audio.samples()), u.label))
        .collect();
    feats.sort_by(|a, b| a.0.total_cmp(&b.0));
    // best single threshold in either direction
    let n = feats.len();
    let mut best = 0usize;
    for cut in 0..=n {
        let below_spoof = feats[..cut].iter().filter(|f| f.1 == Label::Spoof).count();
        let above_bona = feats[cut..].iter().filter(|f| f.1 == Label::Bonafide).count();
        let correct = below_spoof + above_bona;
        best = best.max(correct).max(n - correct);
    }
    let accuracy = best as f64 / n as f64;
    assert!(accuracy >= 0.9, "oracle accuracy {accuracy}");
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn corpus_on_disk_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_toy_corpus(a.path(), 5, 11, false).unwrap();
    write_toy_corpus(b.path(), 5, 11, false).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.iter().filter(|(n, _)| n.ends_with(".wav")).count(), 10);
    assert!(ta == tb);
    assert!(write_toy_corpus(a.path(), 5, 11, false).is_err());
    write_toy_corpus(a.path(), 5, 11, true).unwrap();
    assert!(tree(a.path()) == tb);

    let mut total = 0;
    for split in ["train", "dev", "eval"] {
        let ex = load_split(&a.path().join(format!("{split}.txt"))).unwrap();
        total += ex.len();
    }
    assert_eq!(total, 10);
    let all = load_split(&a.path().join("protocol.txt")).unwrap();
    assert_eq!(all.len(), 10);
}

#[test]
fn cyclic_crop_wraps() {
    assert_eq!(crop_cyclic(&[1.0, 2.0, 3.0], 2, 5), vec![3.0, 1.0, 2.0, 3.0, 1.0]);
}

fn toy_examples(n: usize, seed: u64) -> Vec<Example> {
    make_toy_dataset(n, seed)
        .unwrap()
        .into_iter()
        .map(|u| Example {
            id: u.id,
            audio: u.audio,
            label: u.label,
        })
        .collect()
}

#[test]
fn frozen_batch_loss_decreases() {
    let mut model = Aasist3Model::new(&ModelConfig::pocket()).unwrap();
    let data = toy_examples(4, 1);
    let crops: Vec<Vec<f64>> = data
        .iter()
        .map(|e| crop_cyclic(pre_emphasis(&e.audio, 0.97).unwrap().samples(), 0, 4 * SAMPLE_RATE as usize))
        .collect();
    let waves: Vec<&[f64]> = crops.iter().map(Vec::as_slice).collect();
    let labels: Vec<usize> = data.iter().map(|e| e.label.class_index()).collect();
    let cfg = TrainConfig { lr: 1e-3, ..TrainConfig::default() };
    let mut adam = Adam::new(&cfg);
    let mut losses = Vec::new();
    let start = Instant::now();
    for _ in 0..21 {
        // fixed dropout masks keep the batch frozen
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        losses.push(train_step(&mut model, &mut adam, &waves, &labels, &cfg.class_weights, &mut rng).unwrap());
    }
    eprintln!("21 steps of batch 8: {:?}", start.elapsed());
    let decreases = losses.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(decreases >= 16, "{losses:?}");
}

#[test]
fn training_is_deterministic_and_rejects_empty_sets() {
    let train = toy_examples(3, 2);
    let dev = toy_examples(2, 3);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let run = || {
        let model = Aasist3Model::new(&ModelConfig::pocket()).unwrap();
        let mut seen = 0;
        let out = train_loop(model, &train, &dev, &cfg, |_, _| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 2);
        out
    };
    let a = run();
    let b = run();
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 2);
    assert!(a.history.iter().all(|m| m.dev_eer.is_some() && m.train_loss.is_finite()));
    let pa: Vec<&Tensor> = a.model.params().entries().iter().map(|e| &e.value).collect();
    let pb: Vec<&Tensor> = b.model.params().entries().iter().map(|e| &e.value).collect();
    assert!(pa == pb);

    let model = Aasist3Model::new(&ModelConfig::pocket()).unwrap();
    assert!(train_loop(model, &[], &dev, &cfg, |_, _| Ok(())).is_err());
}
