//! Seeded synthetic sound corpora: parameterized class signatures mixed
//! with context-specific background processes at a chosen SNR.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, EvalError, LabeledClip};
use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::sampling::{normal, uniform_in};

/// RMS of every class signature before the per-clip gain jitter.
pub const SIGNAL_RMS: f64 = 0.1;

const SR: f64 = SAMPLE_RATE as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignatureKind {
    Tone,
    Chord,
    Chirp,
    NoiseBand,
}

impl SignatureKind {
    const ALL: [SignatureKind; 4] = [Self::Tone, Self::Chord, Self::Chirp, Self::NoiseBand];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tone => "tone",
            Self::Chord => "chord",
            Self::Chirp => "chirp",
            Self::NoiseBand => "noiseband",
        }
    }
}

/// Parameters of one sound class. Per-clip jitter is applied on top.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSignature {
    pub id: u64,
    pub kind: SignatureKind,
    /// Base frequency in Hz.
    pub f0: f64,
    /// Frequency ratios of the partials (tone harmonics, chord notes) or the
    /// sweep end ratio (chirp) or relative bandwidth (noise band).
    pub ratios: Vec<f64>,
    /// Temporal modulation rate in Hz (pulses, sweep repetitions, AM).
    pub rate: f64,
    /// Fraction of each modulation period the sound is on.
    pub duty: f64,
}

fn class_rng(id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(id.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5eed_c1a5)
}

impl ClassSignature {
    pub fn for_id(id: u64) -> Self {
        let mut rng = class_rng(id);
        let kind = SignatureKind::ALL[(id % 4) as usize];
        let f0 = (uniform_in(&mut rng, 250f64.ln(), 3500f64.ln())).exp();
        let ratios = match kind {
            SignatureKind::Tone => {
                let n = rng.gen_range(1..=3);
                (1..=n).map(|h| h as f64).collect()
            }
            SignatureKind::Chord => {
                const INTERVALS: [f64; 6] = [1.2, 1.25, 1.333, 1.5, 1.6, 1.875];
                let a = INTERVALS[rng.gen_range(0..INTERVALS.len())];
                let b = INTERVALS[rng.gen_range(0..INTERVALS.len())];
                vec![1.0, a, a * b]
            }
            SignatureKind::Chirp => {
                let up = rng.gen_bool(0.5);
                let span = uniform_in(&mut rng, 1.5, 2.5);
                vec![if up { span } else { 1.0 / span }]
            }
            SignatureKind::NoiseBand => vec![uniform_in(&mut rng, 0.15, 0.4)],
        };
        let f0 = match kind {
            // Keep chord tops and upward sweeps under ~6 kHz.
            SignatureKind::Chord | SignatureKind::Chirp => f0.min(6000.0 / ratios.iter().cloned().fold(1.0, f64::max)),
            _ => f0,
        };
        Self {
            id,
            kind,
            f0,
            ratios,
            rate: uniform_in(&mut rng, 2.0, 8.0),
            duty: uniform_in(&mut rng, 0.4, 0.8),
        }
    }

    pub fn name(&self) -> String {
        format!("{}-{:04}", self.kind.as_str(), self.id)
    }

    /// One rendition of the class: frequency jittered by ±5%, gain by ±20%,
    /// random phases and modulation offset. RMS is `SIGNAL_RMS · gain`.
    pub fn render<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<f32> {
        let fj = uniform_in(rng, 0.95, 1.05);
        let gain = uniform_in(rng, 0.8, 1.2);
        let offset = uniform_in(rng, 0.0, 1.0);
        let f0 = self.f0 * fj;
        let envelope = |t: f64| -> f64 {
            let phase = (t * self.rate + offset).fract();
            if phase < self.duty {
                // Raised-cosine edges over the first and last 10% of the pulse.
                let p = phase / self.duty;
                let edge = 0.1;
                if p < edge {
                    0.5 - 0.5 * (PI * p / edge).cos()
                } else if p > 1.0 - edge {
                    0.5 - 0.5 * (PI * (1.0 - p) / edge).cos()
                } else {
                    1.0
                }
            } else {
                0.0
            }
        };
        let mut out = vec![0.0f64; len];
        match self.kind {
            SignatureKind::Tone | SignatureKind::Chord => {
                let partials: Vec<(f64, f64, f64)> = self
                    .ratios
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| {
                        let amp = if self.kind == SignatureKind::Tone { 1.0 / (i + 1) as f64 } else { 1.0 };
                        (f0 * r, amp, uniform_in(rng, 0.0, 2.0 * PI))
                    })
                    .collect();
                for (n, v) in out.iter_mut().enumerate() {
                    let t = n as f64 / SR;
                    let s: f64 = partials.iter().map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin()).sum();
                    *v = s * envelope(t);
                }
            }
            SignatureKind::Chirp => {
                // Log sweep from f0 to f0·ratio, restarting every period.
                let ratio = self.ratios[0];
                let mut phase = uniform_in(rng, 0.0, 2.0 * PI);
                for (n, v) in out.iter_mut().enumerate() {
                    let t = n as f64 / SR;
                    let p = (t * self.rate + offset).fract();
                    let f = f0 * ratio.powf((p / self.duty).min(1.0));
                    phase += 2.0 * PI * f / SR;
                    *v = phase.sin() * envelope(t);
                }
            }
            SignatureKind::NoiseBand => {
                // Band-limited noise as a sum of random-phase sinusoids.
                let bw = self.ratios[0] * f0;
                let comps: Vec<(f64, f64)> = (0..48)
                    .map(|_| (f0 + uniform_in(rng, -0.5, 0.5) * bw, uniform_in(rng, 0.0, 2.0 * PI)))
                    .collect();
                for (n, v) in out.iter_mut().enumerate() {
                    let t = n as f64 / SR;
                    let s: f64 = comps.iter().map(|&(f, ph)| (2.0 * PI * f * t + ph).sin()).sum();
                    *v = s * envelope(t);
                }
            }
        }
        scale_to_rms(&mut out, SIGNAL_RMS * gain);
        out.into_iter().map(|v| v as f32).collect()
    }
}

/// Background process of a context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// No background at all.
    Silent,
    White,
    Pink,
    /// Integrated white noise: traffic-like rumble.
    Brown,
    /// Overlapping harmonic "voices" with syllable-rate envelopes.
    Babble,
    /// Mains hum with harmonics over a faint noise floor.
    Hum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSpec {
    pub name: String,
    pub noise: NoiseKind,
    /// Signal-to-background ratio relative to [`SIGNAL_RMS`]; infinite
    /// means no background. Serialized as a number or `"inf"`.
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
}

mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl ContextSpec {
    pub fn new(name: &str, noise: NoiseKind, snr_db: f64) -> Self {
        Self { name: name.to_string(), noise, snr_db }
    }

    pub fn background_rms(&self) -> f64 {
        if self.noise == NoiseKind::Silent || self.snr_db.is_infinite() {
            0.0
        } else {
            SIGNAL_RMS / 10f64.powf(self.snr_db / 20.0)
        }
    }

    /// A fresh stretch of this context's background at its level.
    pub fn background<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let rms = self.background_rms();
        if rms == 0.0 {
            return vec![0.0; len];
        }
        let mut x = match self.noise {
            NoiseKind::Silent => vec![0.0; len],
            NoiseKind::White => (0..len).map(|_| normal(rng)).collect(),
            NoiseKind::Pink => pink(len, rng),
            NoiseKind::Brown => brown(len, rng),
            NoiseKind::Babble => babble(len, rng),
            NoiseKind::Hum => hum(len, rng),
        };
        scale_to_rms(&mut x, rms);
        x
    }
}

fn scale_to_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = target / rms;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

/// White noise through a fixed 1/f shaping filter (Kellet's "economy" bank).
fn pink<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    (0..len)
        .map(|_| {
            let w = normal(rng);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

fn brown<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut acc = 0.0;
    (0..len)
        .map(|_| {
            // Leaky integrator keeps the walk bounded.
            acc = 0.995 * acc + normal(rng) * 0.1;
            acc
        })
        .collect()
}

fn babble<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for _ in 0..6 {
        let f0 = uniform_in(rng, 100.0, 240.0);
        let syll = uniform_in(rng, 3.0, 6.0);
        let syll_phase = uniform_in(rng, 0.0, 1.0);
        let formant = uniform_in(rng, 500.0, 2500.0);
        let vib = uniform_in(rng, 4.0, 7.0);
        let mut phase = 0.0f64;
        let harmonics: Vec<(f64, f64)> = (1..=20)
            .map(|h| {
                let f = h as f64 * f0;
                let dist = (f - formant) / 600.0;
                (h as f64, (-(dist * dist)).exp() + 0.1 / h as f64)
            })
            .collect();
        for (n, v) in out.iter_mut().enumerate() {
            let t = n as f64 / SR;
            let f = f0 * (1.0 + 0.03 * (2.0 * PI * vib * t).sin());
            phase += 2.0 * PI * f / SR;
            let env = (0.5 - 0.5 * (2.0 * PI * (syll * t + syll_phase)).cos()).powi(2);
            let s: f64 = harmonics.iter().map(|&(h, a)| a * (h * phase).sin()).sum();
            *v += env * s;
        }
    }
    out
}

fn hum<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let phases: Vec<f64> = (0..5).map(|_| uniform_in(rng, 0.0, 2.0 * PI)).collect();
    (0..len)
        .map(|n| {
            let t = n as f64 / SR;
            let tonal: f64 = phases
                .iter()
                .enumerate()
                .map(|(i, ph)| (2.0 * PI * 60.0 * (i + 1) as f64 * t + ph).sin() / (i + 1) as f64)
                .sum();
            tonal + 0.05 * normal(rng)
        })
        .collect()
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    /// Clips per class in each context.
    pub clips_per_context: usize,
    pub contexts: Vec<ContextSpec>,
    pub clip_seconds: f64,
    /// Length of each context's separate ambient recording.
    pub ambient_seconds: f64,
    /// Class ids are `class_offset .. class_offset + classes`, so corpora
    /// with non-overlapping offsets have disjoint classes.
    pub class_offset: u64,
    pub seed: u64,
}

impl SynthSpec {
    /// No background: every clip is the bare class signature.
    pub fn clean(classes: usize, clips: usize, seed: u64) -> Self {
        Self {
            classes,
            clips_per_context: clips,
            contexts: vec![ContextSpec::new("clean", NoiseKind::Silent, f64::INFINITY)],
            clip_seconds: 2.0,
            ambient_seconds: 10.0,
            class_offset: 0,
            seed,
        }
    }

    /// A quiet room (pink noise, 30 dB) and a noisy street (babble, 10 dB).
    pub fn context_shift(classes: usize, clips: usize, seed: u64) -> Self {
        Self {
            contexts: vec![
                ContextSpec::new("quiet", NoiseKind::Pink, 30.0),
                ContextSpec::new("noisy", NoiseKind::Babble, 10.0),
            ],
            ..Self::clean(classes, clips, seed)
        }
    }

    /// Disjoint classes under backgrounds other than babble, for training
    /// the embedder.
    pub fn pretraining(classes: usize, clips: usize, seed: u64) -> Self {
        Self {
            contexts: vec![
                ContextSpec::new("clean", NoiseKind::Silent, f64::INFINITY),
                ContextSpec::new("pink", NoiseKind::Pink, 15.0),
                ContextSpec::new("brown", NoiseKind::Brown, 10.0),
                ContextSpec::new("hum", NoiseKind::Hum, 15.0),
            ],
            class_offset: 1000,
            ..Self::clean(classes, clips, seed)
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.classes == 0 || self.clips_per_context == 0 || self.contexts.is_empty() {
            return Err(EvalError::InvalidSpec("need at least one class, clip and context".into()));
        }
        if !(self.clip_seconds > 0.0 && self.ambient_seconds >= 0.0) {
            return Err(EvalError::InvalidSpec("durations must be positive".into()));
        }
        let mut names: Vec<&str> = self.contexts.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.contexts.len() {
            return Err(EvalError::InvalidSpec("context names must be unique".into()));
        }
        if self.contexts.iter().any(|c| c.snr_db.is_nan()) {
            return Err(EvalError::InvalidSpec("SNR is NaN".into()));
        }
        Ok(())
    }
}

fn derived_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut h = seed ^ 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0x1000_0000_01b3).rotate_left(17) ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Generates the corpus. Each clip draws from its own RNG stream, so the
/// output is identical for identical specs regardless of generation order.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<Corpus, EvalError> {
    spec.validate()?;
    let len = (spec.clip_seconds * SR).round() as usize;
    let mut clips = Vec::with_capacity(spec.classes * spec.clips_per_context * spec.contexts.len());
    for c in 0..spec.classes {
        let sig = ClassSignature::for_id(spec.class_offset + c as u64);
        let name = sig.name();
        for (ci, ctx) in spec.contexts.iter().enumerate() {
            for k in 0..spec.clips_per_context {
                let mut rng = derived_rng(spec.seed, &[sig.id, ci as u64, k as u64]);
                let signal = sig.render(len, &mut rng);
                let bg = ctx.background(len, &mut rng);
                let samples = signal
                    .iter()
                    .zip(&bg)
                    .map(|(&s, &b)| (s as f64 + b).clamp(-1.0, 1.0) as f32)
                    .collect();
                clips.push(LabeledClip {
                    clip: AudioClip::canonical(samples, format!("{name}/{}-{k:03}", ctx.name)),
                    class: name.clone(),
                    context: ctx.name.clone(),
                    snr_db: ctx.snr_db,
                });
            }
        }
    }
    let ambient_len = (spec.ambient_seconds * SR).round() as usize;
    let ambients = spec
        .contexts
        .iter()
        .enumerate()
        .map(|(ci, ctx)| {
            let mut rng = derived_rng(spec.seed, &[u64::MAX, ci as u64]);
            let samples = ctx.background(ambient_len, &mut rng).into_iter().map(|v| v.clamp(-1.0, 1.0) as f32).collect();
            (ctx.name.clone(), AudioClip::canonical(samples, format!("ambient/{}", ctx.name)))
        })
        .collect();
    Ok(Corpus { clips, ambients })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::rms_dbfs;

    #[test]
    fn infinite_snr_survives_json() {
        let spec = SynthSpec::clean(3, 2, 0);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"snr_db\":\"inf\""), "{json}");
        assert_eq!(serde_json::from_str::<SynthSpec>(&json).unwrap(), spec);
        let shift = SynthSpec::context_shift(3, 2, 0);
        assert_eq!(serde_json::from_str::<SynthSpec>(&serde_json::to_string(&shift).unwrap()).unwrap(), shift);
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec::context_shift(3, 2, 9);
        let a = generate_synthetic_corpus(&spec).unwrap();
        let b = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&SynthSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.clips[0].clip, c.clips[0].clip);
    }

    #[test]
    fn clean_clips_are_pure_signatures() {
        let spec = SynthSpec::clean(4, 2, 1);
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        let len = 32_000;
        for (i, lc) in corpus.clips.iter().enumerate() {
            let class = i / 2;
            let k = i % 2;
            let sig = ClassSignature::for_id(class as u64);
            let mut rng = derived_rng(1, &[sig.id, 0, k as u64]);
            assert_eq!(lc.clip.samples, sig.render(len, &mut rng));
            assert!(lc.snr_db.is_infinite());
        }
        assert!(corpus.ambients["clean"].samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn background_level_matches_snr() {
        let ctx = ContextSpec::new("n", NoiseKind::Babble, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bg: Vec<f32> = ctx.background(32_000, &mut rng).into_iter().map(|v| v as f32).collect();
        let expected = 20.0 * (SIGNAL_RMS / 10f64.powf(0.5)).log10();
        assert!((rms_dbfs(&bg) - expected).abs() < 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in SignatureKind::ALL {
            let sig = ClassSignature { kind, ..ClassSignature::for_id(kind as u64) };
            let s = sig.render(16_000, &mut rng);
            let db = rms_dbfs(&s);
            assert!(db > 20.0 * (0.08f64).log10() - 0.01 && db < 20.0 * (0.12f64).log10() + 0.01, "{kind:?}: {db}");
        }
    }

    #[test]
    fn class_offsets_are_disjoint() {
        let a = generate_synthetic_corpus(&SynthSpec::clean(5, 1, 0)).unwrap();
        let b = generate_synthetic_corpus(&SynthSpec::pretraining(5, 1, 0)).unwrap();
        for x in a.class_names() {
            assert!(!b.class_names().contains(&x));
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic_corpus(&SynthSpec::clean(0, 1, 0)).is_err());
        let mut s = SynthSpec::context_shift(2, 1, 0);
        s.contexts[1].name = "quiet".into();
        assert!(matches!(generate_synthetic_corpus(&s), Err(EvalError::InvalidSpec(_))));
    }
}
