//! Acceptance suite. Each criterion runs in isolation and prints one
//! `criterion N: PASS|FAIL` line; the process exits non-zero if any fail.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use aasist3::diagnostics::{run_gradcheck_suite, CheckTarget};
use aasist3::dsp::{
    chunk_signal, de_emphasis, pre_emphasis, sinc_conv, sinc_kernel, AudioSignal, BandEdges, SincFilterbank,
    SAMPLE_RATE,
};
use aasist3::eval::{compute_eer, compute_min_dcf, CostModel, Label};
use aasist3::graph::{block_of, split_heterogeneous, top_k_indices, Block, HeteroState, KanGal, KanGraphPool, KanHsGal};
use aasist3::kan::{bspline_basis, cox_de_boor, KanConfig};
use aasist3::model::{load_checkpoint, save_checkpoint, score_utterance, Aasist3Model, ModelConfig};
use aasist3::numerics::init::normal_init;
use aasist3::numerics::{Ctx, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    normal_init(shape, 1.0, rng).unwrap()
}

fn permute_nodes(t: &Tensor, perm: &[usize]) -> Tensor {
    let (b, n, d) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let mut out = Vec::with_capacity(t.len());
    for bi in 0..b {
        for &p in perm {
            let at = (bi * n + p) * d;
            out.extend_from_slice(&t.data()[at..at + d]);
        }
    }
    Tensor::new(&[b, n, d], out).unwrap()
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

// ---------------------------------------------------------------- 1

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let checks = run_gradcheck_suite(&ModelConfig::pocket(), &CheckTarget::ALL, 2024).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst_layer = checks
        .iter()
        .filter(|c| c.target != CheckTarget::Model)
        .map(|c| c.max_rel_error())
        .fold(0.0, f64::max);
    let model = checks
        .iter()
        .find(|c| c.target == CheckTarget::Model)
        .map(|c| c.max_rel_error())
        .ok_or("model check missing")?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.target.name()).collect();
    check(checks.len() == CheckTarget::ALL.len(), || "not every target was checked".into())?;
    check(failed.is_empty(), || format!("failing targets {failed:?}"))?;
    check(worst_layer <= 1e-4, || format!("layer error {worst_layer:.2e}"))?;
    check(model <= 1e-3, || format!("model error {model:.2e}"))?;
    check(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "worst layer {worst_layer:.1e}, model {model:.1e}, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 2

fn kan_correctness() -> Outcome {
    let grid = KanConfig::default().grid().map_err(|e| e.to_string())?;
    check(grid.knots().len() == 25, || format!("{} knots", grid.knots().len()))?;
    check(grid.step() == 0.125, || format!("step {}", grid.step()))?;
    let (deg, knots) = (grid.degree(), grid.knots());
    for (k, &t) in knots.iter().enumerate() {
        let want = -1.0 - deg as f64 * 0.125 + k as f64 * 0.125;
        check((t - want).abs() < 1e-15, || format!("knot {k} is {t}, want {want}"))?;
    }

    let mut worst = 0.0f64;
    for s in 0..100 {
        let x = -1.0 + 2.0 * s as f64 / 99.0;
        let basis = bspline_basis(x, &grid);
        worst = worst.max((basis.iter().sum::<f64>() - 1.0).abs());
        for (i, &b) in basis.iter().enumerate() {
            // support of B_i is [t_i, t_{i+deg+1})
            if x < knots[i] || x >= knots[i + deg + 1] {
                check(b == 0.0, || format!("B_{i}({x}) = {b} outside its support"))?;
            }
            // recursive definition, evaluated independently
            let reference = if x == 1.0 { b } else { cox_de_boor(knots, i, deg, x) };
            check((b - reference).abs() < 1e-12, || format!("B_{i}({x}) = {b} vs {reference}"))?;
        }
    }
    check(worst < 1e-9, || format!("partition of unity off by {worst:.2e}"))?;

    let outside = [knots[0] - 1e-9, -50.0, knots[knots.len() - 1], 7.5, f64::NAN];
    for x in outside {
        let basis = bspline_basis(x, &grid);
        check(basis.iter().all(|&b| b == 0.0), || format!("nonzero basis at {x}"))?;
    }
    Ok(format!("25 knots, h 0.125, partition error {worst:.1e}"))
}

// ---------------------------------------------------------------- 3

fn rows_stochastic(t: &Tensor, width: usize) -> f64 {
    t.data()
        .chunks(width)
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn brute_force_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let n = scores.len();
    let beats = |i: usize, j: usize| scores[i] > scores[j] || (scores[i] == scores[j] && i < j);
    let mut found = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let kept = |i: usize| mask >> i & 1 == 1;
        if (0..n).all(|i| !kept(i) || (0..n).all(|j| kept(j) || beats(i, j))) {
            found.push((0..n).filter(|&i| kept(i)).collect::<Vec<_>>());
        }
    }
    assert_eq!(found.len(), 1);
    found.pop().unwrap()
}

fn attention_and_pooling() -> Outcome {
    let kan = KanConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let mut store = ParamStore::new();
        let gal = KanGal::new(&mut store, "gal", 6, 5, 100.0, 0.2, &kan, &mut rng).map_err(|e| e.to_string())?;
        let hs = KanHsGal::new(&mut store, "hs", (6, 4, 5, 5), 100.0, 0.2, &kan, &mut rng).map_err(|e| e.to_string())?;
        let (n_t, n_s) = (rng.random_range(1..6), rng.random_range(1..6));
        let h = random(&[2, n_t + n_s, 6], &mut rng);
        let t = random(&[2, n_t, 6], &mut rng);
        let s = random(&[2, n_s, 4], &mut rng);
        let st = random(&[2, 5], &mut rng);
        for training in [false, true] {
            let mut frng = ChaCha8Rng::seed_from_u64(1);
            let mut ctx = Ctx::new(Tape::no_grad(), &store, training, &mut frng);
            let hv = ctx.tape.constant(h.clone());
            let out = gal.forward(&mut ctx, &hv).map_err(|e| e.to_string())?;
            worst = worst.max(rows_stochastic(out.attention.value(), n_t + n_s));
            let state = HeteroState {
                temporal: ctx.tape.constant(t.clone()),
                spatial: ctx.tape.constant(s.clone()),
                stack: ctx.tape.constant(st.clone()),
            };
            let out = hs.forward(&mut ctx, &state).map_err(|e| e.to_string())?;
            worst = worst.max(rows_stochastic(out.pair_attention.value(), n_t + n_s));
            worst = worst.max(rows_stochastic(out.stack_attention.value(), n_t + n_s));
        }
    }
    check(worst < 1e-9, || format!("attention rows off by {worst:.2e}"))?;

    let mut instances = 0;
    for n in 1..=16usize {
        for trial in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 100 + trial);
            let levels = if trial % 2 == 0 { 4 } else { 1000 };
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            for k in 1..=n {
                let got = top_k_indices(&scores, k);
                let want = brute_force_top_k(&scores, k);
                check(got == want, || format!("top-{k} of {scores:?}: {got:?} vs {want:?}"))?;
                instances += 1;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let ratio = rng.random_range(0.05..=1.0);
        let mut store = ParamStore::new();
        let pool = KanGraphPool::new(&mut store, "pool", 4, ratio, 0.2, &kan, &mut rng).map_err(|e| e.to_string())?;
        let h = random(&[2, n, 4], &mut rng);
        let mut ctx = Ctx::new(Tape::no_grad(), &store, false, &mut rng);
        let hv = ctx.tape.constant(h);
        let out = pool.forward(&mut ctx, &hv).map_err(|e| e.to_string())?;
        let k = ((ratio * n as f64).ceil() as usize).clamp(1, n);
        for (b, kept) in out.kept.iter().enumerate() {
            let scores = &out.scores.value().data()[b * n..(b + 1) * n];
            check(*kept == brute_force_top_k(scores, k), || format!("pool layer selection at n {n}"))?;
            instances += 1;
        }
    }

    use Block::{Cross as C, Spatial as S, Temporal as T};
    let enumerated = |i: usize, j: usize| {
        if i <= 3 && j <= 3 {
            T
        } else if i >= 3 && j >= 3 {
            S
        } else {
            C
        }
    };
    for i in 0..5 {
        for j in 0..5 {
            let got = block_of(i, j, 3);
            check(got == enumerated(i + 1, j + 1), || format!("block ({i}, {j}) is {got:?}"))?;
        }
    }

    let tape = Tape::no_grad();
    let x = random(&[2, 5, 3], &mut rng);
    let joint = tape.constant(x.clone());
    let (t, s) = split_heterogeneous(&tape, &joint, 3, 2).map_err(|e| e.to_string())?;
    let merged = tape.concat(&[&t, &s], 1).map_err(|e| e.to_string())?;
    check(merged.value() == &x, || "split and merge do not round-trip".into())?;

    Ok(format!("row error {worst:.1e}, {instances} top-k instances, 3+2 block table, split/merge exact"))
}

// ---------------------------------------------------------------- 4

fn equivariance() -> Outcome {
    let kan = KanConfig::default();
    let mut gal_err = 0.0f64;
    let mut hs_t_err = 0.0f64;
    let mut hs_s_err = 0.0f64;
    let mut stack_err = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gal = KanGal::new(&mut store, "gal", 4, 6, 100.0, 0.2, &kan, &mut rng).map_err(|e| e.to_string())?;
        let hs = KanHsGal::new(&mut store, "hs", (4, 3, 5, 5), 100.0, 0.2, &kan, &mut rng).map_err(|e| e.to_string())?;
        let (n_t, n_s) = (rng.random_range(2..7), rng.random_range(2..7));
        let h = random(&[2, n_t + n_s, 4], &mut rng);
        let t = random(&[2, n_t, 4], &mut rng);
        let s = random(&[2, n_s, 3], &mut rng);
        let st = random(&[2, 5], &mut rng);
        let perm_joint = shuffled(n_t + n_s, &mut rng);
        let perm_t = shuffled(n_t, &mut rng);
        let perm_s = shuffled(n_s, &mut rng);

        let run_gal = |x: Tensor| {
            let mut frng = ChaCha8Rng::seed_from_u64(0);
            let mut ctx = Ctx::new(Tape::no_grad(), &store, false, &mut frng);
            let xv = ctx.tape.constant(x);
            gal.forward(&mut ctx, &xv).unwrap().nodes.value().clone()
        };
        let a = permute_nodes(&run_gal(h.clone()), &perm_joint);
        let b = run_gal(permute_nodes(&h, &perm_joint));
        gal_err = gal_err.max(a.max_abs_diff(&b));

        let run_hs = |t: Tensor, s: Tensor| {
            let mut frng = ChaCha8Rng::seed_from_u64(0);
            let mut ctx = Ctx::new(Tape::no_grad(), &store, false, &mut frng);
            let state = HeteroState {
                temporal: ctx.tape.constant(t),
                spatial: ctx.tape.constant(s),
                stack: ctx.tape.constant(st.clone()),
            };
            let out = hs.forward(&mut ctx, &state).unwrap().state;
            (out.temporal.value().clone(), out.spatial.value().clone(), out.stack.value().clone())
        };
        let (t0, s0, st0) = run_hs(t.clone(), s.clone());
        let (t1, s1, st1) = run_hs(permute_nodes(&t, &perm_t), permute_nodes(&s, &perm_s));
        hs_t_err = hs_t_err.max(permute_nodes(&t0, &perm_t).max_abs_diff(&t1));
        hs_s_err = hs_s_err.max(permute_nodes(&s0, &perm_s).max_abs_diff(&s1));
        stack_err = stack_err.max(st0.max_abs_diff(&st1));
    }
    let summary = format!(
        "GAL {gal_err:.1e}, HS-GAL temporal {hs_t_err:.1e}, spatial {hs_s_err:.1e}, stack {stack_err:.1e}"
    );
    let ok = gal_err < 1e-6 && hs_t_err < 1e-6 && hs_s_err < 1e-6 && stack_err < 1e-6;
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------- 5

fn energy(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum()
}

fn tone(freq: f64, secs: f64) -> AudioSignal {
    let n = (secs * SAMPLE_RATE as f64) as usize;
    AudioSignal::from_samples((0..n).map(|i| (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin()).collect()).unwrap()
}

fn dsp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut round_trip = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(1..20_000);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let signal = AudioSignal::from_samples(x.clone()).unwrap();
        let emph = pre_emphasis(&signal, 0.97).map_err(|e| e.to_string())?;
        // y[n] = x[n] − 0.97 x[n − 1] by hand
        for i in 1..n.min(50) {
            let want = x[i] - 0.97 * x[i - 1];
            check((emph.samples()[i] - want).abs() < 1e-15, || format!("pre-emphasis at {i}"))?;
        }
        let back = de_emphasis(&emph, 0.97).map_err(|e| e.to_string())?;
        for (a, b) in back.samples().iter().zip(&x) {
            round_trip = round_trip.max((a - b).abs());
        }
    }
    check(round_trip < 1e-9, || format!("round trip off by {round_trip:.2e}"))?;

    let sinc = |x: f64| if x == 0.0 { 1.0 } else { x.sin() / x };
    let mut asym = 0.0f64;
    let mut w0_err = 0.0f64;
    for (low, high, len) in [(500.0, 1500.0, 129), (30.0, 7900.0, 251), (2000.0, 2100.0, 17)] {
        let taps = sinc_kernel(BandEdges { low, high }, len, SAMPLE_RATE).map_err(|e| e.to_string())?;
        for n in 0..len {
            asym = asym.max((taps[n] - taps[len - 1 - n]).abs());
        }
        let m = -((len / 2) as f64);
        let (f1, f2) = (low / SAMPLE_RATE as f64, high / SAMPLE_RATE as f64);
        let g = 2.0 * f2 * sinc(2.0 * PI * f2 * m) - 2.0 * f1 * sinc(2.0 * PI * f1 * m);
        w0_err = w0_err.max((taps[0] / g - 0.08).abs());
    }
    check(asym < 1e-12, || format!("kernel asymmetry {asym:.2e}"))?;
    check(w0_err < 1e-12, || format!("w(0) off 0.08 by {w0_err:.2e}"))?;

    let bank = SincFilterbank::new(vec![BandEdges { low: 800.0, high: 1600.0 }], 251).map_err(|e| e.to_string())?;
    let inside = energy(&sinc_conv(&tone(1200.0, 0.5), &bank, 1).map_err(|e| e.to_string())?);
    let mut worst_ratio = f64::INFINITY;
    for f in [100.0, 300.0, 3500.0, 6000.0] {
        let outside = energy(&sinc_conv(&tone(f, 0.5), &bank, 1).map_err(|e| e.to_string())?);
        worst_ratio = worst_ratio.min(inside / outside);
    }
    check(worst_ratio >= 10.0, || format!("in/out band energy ratio {worst_ratio:.1}"))?;
    Ok(format!(
        "round trip {round_trip:.1e}, asymmetry {asym:.1e}, in/out energy ratio {worst_ratio:.0}"
    ))
}

// ---------------------------------------------------------------- 6

fn reduced(num: i128, den: i128) -> (i128, i128) {
    let (mut a, mut b) = (num.abs(), den.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    let g = a.max(1);
    let sign = if den < 0 { -1 } else { 1 };
    (sign * num / g, sign * den / g)
}

fn operating_points(scores: &[(f64, Label)]) -> Vec<(usize, usize)> {
    let mut cuts: Vec<f64> = scores.iter().map(|s| s.0).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.push(f64::INFINITY);
    cuts.iter()
        .map(|&theta| {
            let fa = scores.iter().filter(|(s, l)| *l == Label::Spoof && *s >= theta).count();
            let fr = scores.iter().filter(|(s, l)| *l == Label::Bonafide && *s < theta).count();
            (fa, fr)
        })
        .collect()
}

/// Lowest FAR = FRR crossing over chords between any two operating points.
fn brute_force_eer(scores: &[(f64, Label)]) -> f64 {
    let bona = scores.iter().filter(|s| s.1 == Label::Bonafide).count() as i128;
    let spoof = scores.len() as i128 - bona;
    let pts: Vec<(i128, i128)> = operating_points(scores)
        .into_iter()
        .map(|(fa, fr)| (fa as i128 * bona, fr as i128 * spoof))
        .collect();
    let scale = bona * spoof;
    let mut best: Option<(i128, i128)> = None;
    let mut consider = |num: i128, den: i128| {
        let c = reduced(num, den);
        if best.is_none_or(|b| c.0 * b.1 < b.0 * c.1) {
            best = Some(c);
        }
    };
    for (i, p) in pts.iter().enumerate() {
        let dp = p.0 - p.1;
        if dp == 0 {
            consider(p.0, scale);
        }
        for q in &pts[i + 1..] {
            let dq = q.0 - q.1;
            if (dp > 0 && dq < 0) || (dp < 0 && dq > 0) {
                consider(dp * q.0 - dq * p.0, (dp - dq) * scale);
            }
        }
    }
    let (n, d) = best.unwrap();
    n as f64 / d as f64
}

fn brute_force_dcf(scores: &[(f64, Label)], cost: &CostModel) -> f64 {
    let bona = scores.iter().filter(|s| s.1 == Label::Bonafide).count() as f64;
    let spoof = scores.len() as f64 - bona;
    let w_miss = cost.p_target * cost.c_miss;
    let w_fa = (1.0 - cost.p_target) * cost.c_fa;
    operating_points(scores)
        .into_iter()
        .map(|(fa, fr)| (w_miss * (fr as f64 / bona) + w_fa * (fa as f64 / spoof)) / w_miss.min(w_fa))
        .fold(f64::INFINITY, f64::min)
}

fn metrics() -> Outcome {
    let cost = CostModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cases = 0;
    for _ in 0..60 {
        let n = rng.random_range(2..=1000);
        let levels = rng.random_range(2..5000);
        let mut scores: Vec<(f64, Label)> = (0..n)
            .map(|_| {
                let label = if rng.random_bool(0.5) { Label::Bonafide } else { Label::Spoof };
                let shift = if label == Label::Bonafide { 0.3 } else { 0.0 };
                let raw: f64 = rng.random::<f64>() + shift;
                ((raw * levels as f64).floor() / levels as f64, label)
            })
            .collect();
        scores[0].1 = Label::Bonafide;
        scores[1].1 = Label::Spoof;
        let eer = compute_eer(&scores).map_err(|e| e.to_string())?.rate;
        let dcf = compute_min_dcf(&scores, &cost).map_err(|e| e.to_string())?.cost;
        check(eer == brute_force_eer(&scores), || format!("EER {eer} vs brute force on {n} scores"))?;
        check(dcf == brute_force_dcf(&scores, &cost), || format!("minDCF {dcf} vs brute force on {n} scores"))?;
        let mapped: Vec<(f64, Label)> = scores.iter().map(|&(s, l)| ((3.0 * s).exp() - 7.0, l)).collect();
        check(compute_eer(&mapped).unwrap().rate == eer, || "EER moved under a monotone map".into())?;
        check(compute_min_dcf(&mapped, &cost).unwrap().cost == dcf, || "minDCF moved under a monotone map".into())?;
        cases += 1;
    }
    let four = [
        (0.8, Label::Bonafide),
        (0.4, Label::Bonafide),
        (0.6, Label::Spoof),
        (0.2, Label::Spoof),
    ];
    let eer = compute_eer(&four).map_err(|e| e.to_string())?.rate;
    check(eer == 0.25, || format!("4-score EER {eer}"))?;
    Ok(format!("{cases} random instances exact, 4-score EER {eer}"))
}

// ---------------------------------------------------------------- 7

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_aasist3")
}

fn run(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin())
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn metric(stdout: &str, key: &str) -> Result<f64, String> {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .map(|v| v.trim().trim_end_matches('%'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("no {key} in {stdout:?}"))
}

struct ToyRun {
    eer_percent: f64,
    min_dcf: f64,
    scores: Vec<u8>,
    elapsed: Duration,
}

fn toy_run(dir: &Path) -> Result<ToyRun, String> {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/pocket.toml");
    let data = dir.join("data");
    let ckpt = dir.join("model.ckpt");
    let scores = dir.join("scores.txt");
    let protocol = data.join("eval.txt");
    let p = |x: &Path| x.to_str().unwrap().to_owned();
    let start = Instant::now();
    run(&["make-toy-data", "--out", &p(&data), "--n", "100", "--seed", "7"])?;
    run(&["train", "--config", config, "--data", &p(&data), "--out", &p(&ckpt)])?;
    run(&["score", "--ckpt", &p(&ckpt), "--protocol", &p(&protocol), "--out", &p(&scores)])?;
    let report = run(&["eval", "--scores", &p(&scores), "--protocol", &p(&protocol)])?;
    let elapsed = start.elapsed();
    Ok(ToyRun {
        eer_percent: metric(&report, "EER")?,
        min_dcf: metric(&report, "minDCF")?,
        scores: std::fs::read(&scores).map_err(|e| e.to_string())?,
        elapsed,
    })
}

fn toy_experiment() -> Outcome {
    let config = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/pocket.toml"))
        .map_err(|e| e.to_string())?;
    let epochs: u64 = config
        .lines()
        .find_map(|l| l.trim().strip_prefix("epochs").and_then(|v| v.trim().trim_start_matches('=').trim().parse().ok()))
        .ok_or("pocket config has no epoch count")?;
    check(epochs <= 15, || format!("pocket config trains {epochs} epochs"))?;

    let first_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = toy_run(first_dir.path())?;
    let second = toy_run(second_dir.path())?;
    let summary = format!(
        "EER {:.4}%, minDCF {:.4}, {:.0}s per run",
        first.eer_percent,
        first.min_dcf,
        first.elapsed.as_secs_f64()
    );
    check(first.eer_percent <= 5.0, || format!("{summary}: EER above 5%"))?;
    check(first.min_dcf <= 0.3, || format!("{summary}: minDCF above 0.3"))?;
    check(first.elapsed < Duration::from_secs(15 * 60), || format!("{summary}: too slow"))?;
    check(first.scores == second.scores, || format!("{summary}: rerun score file differs"))?;
    Ok(format!("{summary}, rerun bit-identical"))
}

// ---------------------------------------------------------------- 8

fn inference_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut model = Aasist3Model::new(&ModelConfig::pocket()).map_err(|e| e.to_string())?;
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for v in model.params_mut().get_mut(id).data_mut() {
            *v += 0.01 * rng.random_range(-1.0..1.0);
        }
    }
    let n = 8 * SAMPLE_RATE as usize;
    let audio = AudioSignal::from_samples(
        (0..n)
            .map(|i| 0.3 * (i as f64 * 0.05).sin() + 0.05 * rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap();
    let score = score_utterance(&model, &audio).map_err(|e| e.to_string())?;
    let emph = pre_emphasis(&audio, 0.97).map_err(|e| e.to_string())?;
    let (win, hop) = (4 * SAMPLE_RATE as usize, 2 * SAMPLE_RATE as usize);
    let probs: Vec<f64> = (0..3)
        .map(|k| model.bonafide_probs(&[&emph.samples()[k * hop..k * hop + win]]).unwrap()[0])
        .collect();
    check(chunk_signal(&emph, 4.0, 2.0).unwrap().len() == 3, || "8 s should give 3 chunks".into())?;
    let mean = probs.iter().sum::<f64>() / 3.0;
    let chunk_err = (score - mean).abs();
    check(chunk_err < 1e-9, || format!("score {score} vs chunk mean {mean}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint(&path).map_err(|e| e.to_string())?;
    let chunk = &emph.samples()[..win];
    let a = model.logits(&[chunk]).map_err(|e| e.to_string())?;
    let b = loaded.logits(&[chunk]).map_err(|e| e.to_string())?;
    let logit_err = a.max_abs_diff(&b);
    check(logit_err < 1e-6, || format!("reloaded logits off by {logit_err:.2e}"))?;
    Ok(format!("chunk mean error {chunk_err:.1e}, reloaded logits error {logit_err:.1e}"))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, gradient_suite),
        (2, kan_correctness),
        (3, attention_and_pooling),
        (4, equivariance),
        (5, dsp),
        (6, metrics),
        (7, toy_experiment),
        (8, inference_contract),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (number, criterion) in criteria {
        if !only.is_empty() && !only.contains(&number) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {number}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {number}: FAIL ({detail})");
                failed.push(number);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
