//! Independent reference implementations used as test oracles. Written
//! from the definitions with no shared code: a direct O(N²) DFT instead of
//! an FFT, filter weights recomputed from the mel formula, and brute-force
//! sorting instead of a running minimum.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::Rng;

pub const SR: f64 = 16_000.0;
pub const WIN: usize = 400;
pub const HOP: usize = 160;
pub const NFFT: usize = 512;
pub const FRAMES: usize = 100;
pub const MELS: usize = 64;

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangle weight of mel filter `m` at frequency `f`, HTK style, with
/// edges at 66 equally spaced mel points over [20, 8000] Hz.
pub fn mel_weight(m: usize, f: f64) -> f64 {
    let edge = |i: usize| match i {
        0 => 20.0,
        i if i == MELS + 1 => 8000.0,
        i => inv_mel(mel(20.0) + (mel(8000.0) - mel(20.0)) * i as f64 / (MELS + 1) as f64),
    };
    let (l, c, r) = (edge(m), edge(m + 1), edge(m + 2));
    if f > l && f <= c {
        (f - l) / (c - l)
    } else if f > c && f < r {
        (r - f) / (r - c)
    } else {
        0.0
    }
}

/// Power spectrum of each frame by direct DFT: centered frames with
/// reflect padding, periodic Hann, zero-padded to 512.
pub fn power_spectrogram(x: &[f32]) -> Vec<Vec<f64>> {
    let n = x.len() as isize;
    let reflect = |i: isize| -> f64 {
        let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
        x[j as usize] as f64
    };
    (0..FRAMES)
        .map(|t| {
            let frame: Vec<f64> = (0..WIN)
                .map(|k| {
                    let w = 0.5 * (1.0 - (2.0 * PI * k as f64 / WIN as f64).cos());
                    w * reflect((t * HOP) as isize - (WIN / 2) as isize + k as isize)
                })
                .collect();
            (0..=NFFT / 2)
                .map(|bin| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (k, &v) in frame.iter().enumerate() {
                        let phase = -2.0 * PI * (bin * k % NFFT) as f64 / NFFT as f64;
                        re += v * phase.cos();
                        im += v * phase.sin();
                    }
                    re * re + im * im
                })
                .collect()
        })
        .collect()
}

/// `ln(Σ w · P + 1e-6)`, frames × mels, row-major.
pub fn log_mel(x: &[f32]) -> Vec<f64> {
    let weights: Vec<Vec<f64>> = (0..MELS)
        .map(|m| (0..=NFFT / 2).map(|b| mel_weight(m, b as f64 * SR / NFFT as f64)).collect())
        .collect();
    let mut out = Vec::with_capacity(FRAMES * MELS);
    for frame in power_spectrogram(x) {
        for w in &weights {
            let e: f64 = w.iter().zip(&frame).map(|(a, b)| a * b).sum();
            out.push((e + 1e-6).ln());
        }
    }
    out
}

/// Per-mel-bin standardization with the n−1 deviation floored at 1e-4.
pub fn cmvn(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for m in 0..MELS {
        let col: Vec<f64> = (0..FRAMES).map(|t| v[t * MELS + m]).collect();
        let mean = col.iter().sum::<f64>() / FRAMES as f64;
        let sd = (col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (FRAMES - 1) as f64)
            .sqrt()
            .max(1e-4);
        for t in 0..FRAMES {
            out[t * MELS + m] = (col[t] - mean) / sd;
        }
    }
    out
}

/// Relative error with a unit floor on the denominator, so values near
/// zero are compared absolutely.
pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

/// A varied one-second test signal: tones, a chirp, noise, gaps and level
/// changes, chosen by the RNG.
pub fn random_signal<R: Rng>(rng: &mut R) -> Vec<f32> {
    let amp = 10f64.powf(rng.gen_range(-2.5..-0.3));
    let f0 = rng.gen_range(80.0..6000.0);
    let f1 = rng.gen_range(80.0..7800.0);
    let noise = rng.gen_range(0.0..0.3);
    let kind = rng.gen_range(0..4);
    let gap = rng.gen_range(0..16_000usize);
    (0..16_000)
        .map(|n| {
            let t = n as f64 / SR;
            let tonal = match kind {
                0 => (2.0 * PI * f0 * t).sin(),
                1 => (2.0 * PI * (f0 * t + (f1 - f0) * t * t / 2.0)).sin(),
                2 => 0.5 * (2.0 * PI * f0 * t).sin() + 0.5 * (2.0 * PI * f1 * t).sin(),
                _ => 0.0,
            };
            let env = if kind == 3 || n < gap { 1.0 } else { 0.1 };
            let v = amp * env * (tonal + noise * rng.gen_range(-1.0..1.0));
            v.clamp(-1.0, 1.0) as f32
        })
        .collect()
}

fn distance(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        s += d * d;
    }
    s.sqrt()
}

/// Nearest index, d1, d2 and d1/d2 by sorting every (distance, index) pair.
pub fn brute_nearest(query: &[f32], prototypes: &[Vec<f32>]) -> (usize, f64, f64, f64) {
    let mut all: Vec<(f64, usize)> = prototypes.iter().enumerate().map(|(i, p)| (distance(query, p), i)).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (d1, nearest) = all[0];
    let d2 = all.get(1).map_or(f64::INFINITY, |p| p.0);
    let ratio = if d2 == 0.0 || d2.is_infinite() { 0.0 } else { d1 / d2 };
    (nearest, d1, d2, ratio)
}

/// Random prototypes and a query, with duplicated prototypes and queries
/// placed exactly on a prototype in some cases to exercise ties.
pub fn random_nn_case<R: Rng>(rng: &mut R) -> (Vec<f32>, Vec<Vec<f32>>) {
    let n = rng.gen_range(2..12);
    let d = rng.gen_range(1..80);
    let grid = rng.gen_bool(0.3);
    let value = |rng: &mut R| -> f32 {
        if grid {
            rng.gen_range(-2i32..3) as f32
        } else {
            rng.gen_range(-3.0f32..3.0)
        }
    };
    let mut protos: Vec<Vec<f32>> = (0..n).map(|_| (0..d).map(|_| value(rng)).collect()).collect();
    if rng.gen_bool(0.2) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        protos[b] = protos[a].clone();
    }
    let query = if rng.gen_bool(0.1) {
        protos[rng.gen_range(0..n)].clone()
    } else {
        (0..d).map(|_| value(rng)).collect()
    };
    (query, protos)
}

/// Analytic gradients of an affine-only embedder plus head against central
/// differences of the linear functional `c · logits`. The functional is
/// affine in every single parameter, so the difference quotient carries no
/// truncation error and the check isolates the layers' backward passes.
/// Returns the max relative error over all head parameters and up to
/// `max_params` projection parameters.
pub fn exact_layer_check(
    model: &earshot_core::EmbedderModel,
    head: &earshot_core::ClassifierHead,
    patch: &earshot_core::LogMelPatch,
    max_params: usize,
    step: f64,
) -> f64 {
    use earshot_core::nn::layers::Dense;
    assert!(model.config.conv_channels.is_empty() && !model.config.normalize, "affine-only model expected");
    let x: Vec<f64> = patch.values().iter().map(|&v| v as f64).collect();
    let proj: Dense<f64> = model.net.proj.cast();
    let out: Dense<f64> = head.layer.cast();
    let c: Vec<f64> = (0..out.out_dim).map(|i| 1.0 - 0.37 * i as f64).collect();
    let value = |p: &Dense<f64>, o: &Dense<f64>| -> f64 { o.forward(&p.forward(&x)).iter().zip(&c).map(|(a, b)| a * b).sum() };

    let e = proj.forward(&x);
    let mut g_out = Dense::zeros(out.in_dim, out.out_dim);
    let d_e = out.backward(&e, &c, &mut g_out);
    let mut g_proj = Dense::zeros(proj.in_dim, proj.out_dim);
    proj.backward(&x, &d_e, &mut g_proj);

    let rel = |a: f64, n: f64| if a.abs().max(n.abs()) < 1e-10 { 0.0 } else { (a - n).abs() / a.abs().max(n.abs()) };
    let mut worst = 0.0f64;
    let stride = (proj.weight.len() / max_params.max(1)).max(1);
    for i in (0..proj.weight.len()).step_by(stride) {
        let (mut plus, mut minus) = (proj.clone(), proj.clone());
        plus.weight[i] += step;
        minus.weight[i] -= step;
        let numeric = (value(&plus, &out) - value(&minus, &out)) / (2.0 * step);
        worst = worst.max(rel(g_proj.weight[i], numeric));
    }
    for i in 0..proj.bias.len() {
        let (mut plus, mut minus) = (proj.clone(), proj.clone());
        plus.bias[i] += step;
        minus.bias[i] -= step;
        worst = worst.max(rel(g_proj.bias[i], (value(&plus, &out) - value(&minus, &out)) / (2.0 * step)));
    }
    for i in 0..out.weight.len() {
        let (mut plus, mut minus) = (out.clone(), out.clone());
        plus.weight[i] += step;
        minus.weight[i] -= step;
        worst = worst.max(rel(g_out.weight[i], (value(&proj, &plus) - value(&proj, &minus)) / (2.0 * step)));
    }
    worst
}
