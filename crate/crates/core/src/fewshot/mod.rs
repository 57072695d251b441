//! Personalization and prediction: soundscape augmentation, class
//! prototypes, nearest-prototype classification with the distance-ratio
//! open-set test, loudness gating and clip-level aggregation.

mod finetune;
mod library;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{loudness_db, segment_one_second, AudioClip, AudioError, Segment, SAMPLE_RATE, SEGMENT_LEN};
use crate::container::{Container, ContainerError, TensorEntry};
use crate::dsp::{FeatureExtractor, LogMelPatch};
use crate::nn::{softmax, EmbedderModel, ModelError};

pub use finetune::{finetune_baseline, finetune_on_patches, FinetuneConfig, FinetunedClassifier};
pub use library::{normalize_class_name, SoundLibrary};

pub const LOCATION_KIND: &str = "location";
pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_RATIO_THRESHOLD: f64 = 0.6;
/// Default loudness gate in dBFS (stands in for a ~45 dB SPL room hum).
pub const DEFAULT_LOUDNESS_GATE_DBFS: f64 = -50.0;
/// Samples drawn per predefined library class.
pub const LIBRARY_SAMPLES: usize = 5;
/// Minimum ambient recording length for training.
pub const MIN_SOUNDSCAPE_S: f64 = 2.0;
/// How much ambient audio a location model keeps.
pub const STORED_SOUNDSCAPE_S: usize = 10;

#[derive(Debug, Error)]
pub enum FewShotError {
    #[error("missing soundscape: {0}")]
    MissingSoundscape(String),
    #[error("class {0:?} has no samples")]
    EmptyClass(String),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {class:?} has {got} samples, expected {expected}")]
    UnevenClass { class: String, got: usize, expected: usize },
    #[error("query has dimension {got}, prototypes have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedder version mismatch: model expects {expected}, got {got}")]
    VersionMismatch { expected: String, got: String },
    #[error("clip is empty")]
    EmptyClip,
    #[error("unknown library class {0:?}")]
    UnknownLibraryClass(String),
    #[error("library class {class:?} has {available} segments, need {needed}")]
    InsufficientLibrary { class: String, available: usize, needed: usize },
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// Where a support class's recordings came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    User,
    Library,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportClass {
    pub name: String,
    pub origin: Origin,
    pub segments: Vec<Segment>,
}

/// Labeled one-second recordings for N classes, plus the ambient recording
/// of the place where the user recordings were made (if known).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupportSet {
    pub classes: Vec<SupportClass>,
    pub source_soundscape: Option<AudioClip>,
}

impl SupportSet {
    pub fn new(source_soundscape: Option<AudioClip>) -> Self {
        Self {
            classes: Vec::new(),
            source_soundscape,
        }
    }

    pub fn add_class(&mut self, name: impl Into<String>, origin: Origin, segments: Vec<Segment>) {
        self.classes.push(SupportClass {
            name: name.into(),
            origin,
            segments,
        });
    }

    /// Adds a predefined class with [`LIBRARY_SAMPLES`] segments drawn at
    /// random (seeded) from the library.
    pub fn add_library_class(
        &mut self,
        library: &SoundLibrary,
        class: &str,
        seed: u64,
    ) -> Result<(), FewShotError> {
        let segments = library.sample(class, LIBRARY_SAMPLES, seed)?;
        self.add_class(library.canonical_name(class)?, Origin::Library, segments);
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Checks N ≥ 2, no empty class, and (when `k` is given) exactly `k`
    /// segments per class.
    pub fn validate(&self, k: Option<usize>) -> Result<(), FewShotError> {
        if self.classes.len() < 2 {
            return Err(FewShotError::TooFewClasses(self.classes.len()));
        }
        for c in &self.classes {
            if c.segments.is_empty() {
                return Err(FewShotError::EmptyClass(c.name.clone()));
            }
            if let Some(k) = k {
                if c.segments.len() != k {
                    return Err(FewShotError::UnevenClass {
                        class: c.name.clone(),
                        got: c.segments.len(),
                        expected: k,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Feature extraction plus the embedder, identified by the embedder's
/// content hash. Counts how many segments it has actually embedded.
#[derive(Debug)]
pub struct Encoder {
    features: FeatureExtractor,
    model: EmbedderModel,
    version: String,
    calls: AtomicU64,
    cache: Option<Mutex<HashMap<u64, Vec<f32>>>>,
}

impl Clone for Encoder {
    fn clone(&self) -> Self {
        Self {
            features: self.features.clone(),
            model: self.model.clone(),
            version: self.version.clone(),
            calls: AtomicU64::new(0),
            cache: self.cache.as_ref().map(|_| Mutex::new(HashMap::new())),
        }
    }
}

impl Encoder {
    pub fn new(model: EmbedderModel) -> Self {
        let version = model.version_hash();
        Self {
            features: FeatureExtractor::default(),
            model,
            version,
            calls: AtomicU64::new(0),
            cache: None,
        }
    }

    /// Memoizes embeddings by segment content. Meant for evaluation runs
    /// that embed the same clips many times.
    pub fn with_cache(mut self) -> Self {
        self.cache = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn model(&self) -> &EmbedderModel {
        &self.model
    }

    pub fn features(&self) -> &FeatureExtractor {
        &self.features
    }

    pub fn embed_dim(&self) -> usize {
        self.model.embed_dim()
    }

    pub fn patch(&self, segment: &Segment) -> LogMelPatch {
        self.features.extract(segment)
    }

    pub fn embed(&self, segment: &Segment) -> Vec<f32> {
        let Some(cache) = &self.cache else {
            self.calls.fetch_add(1, Ordering::Relaxed);
            return self.model.forward(&self.patch(segment));
        };
        let key = content_hash(segment.samples());
        if let Some(e) = cache.lock().expect("cache lock").get(&key) {
            return e.clone();
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let e = self.model.forward(&self.patch(segment));
        cache.lock().expect("cache lock").insert(key, e.clone());
        e
    }

    /// Number of segments embedded so far.
    pub fn embed_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Per-sample waveform mix `(1−α)·source + α·(target − source_soundscape)`,
/// hard-clipped to `[-1, 1]`.
pub fn augment_with_soundscape(
    source: &Segment,
    source_soundscape: &Segment,
    target_soundscape: &Segment,
    alpha: f64,
) -> Segment {
    let keep = 1.0 - alpha;
    let mixed = source
        .samples()
        .iter()
        .zip(source_soundscape.samples())
        .zip(target_soundscape.samples())
        .map(|((&s, &src), &tgt)| {
            let v = keep * s as f64 + alpha * (tgt as f64 - src as f64);
            v.clamp(-1.0, 1.0) as f32
        })
        .collect();
    Segment::new(mixed, source.parent_id.clone(), source.offset_s)
}

/// One-second window of `clip` starting at a random offset. Clips shorter
/// than a second are zero-padded.
pub fn random_crop<R: Rng>(clip: &AudioClip, rng: &mut R) -> Segment {
    let len = clip.samples.len();
    if len <= SEGMENT_LEN {
        return Segment::new(clip.samples.clone(), clip.source_id.clone(), 0.0);
    }
    let start = rng.gen_range(0..=len - SEGMENT_LEN);
    Segment::new(
        clip.samples[start..start + SEGMENT_LEN].to_vec(),
        clip.source_id.clone(),
        start as f64 / SAMPLE_RATE as f64,
    )
}

/// Arithmetic mean of each class's embeddings. The sum runs in f64 so the
/// result does not depend on the order of a class's embeddings.
pub fn compute_prototypes(embeddings: &[Vec<Vec<f32>>]) -> Result<Vec<Vec<f32>>, FewShotError> {
    embeddings
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let first = class
                .first()
                .ok_or_else(|| FewShotError::EmptyClass(format!("#{i}")))?;
            let dim = first.len();
            let mut sum = vec![0.0f64; dim];
            for e in class {
                if e.len() != dim {
                    return Err(FewShotError::DimensionMismatch {
                        expected: dim,
                        got: e.len(),
                    });
                }
                for (s, &v) in sum.iter_mut().zip(e) {
                    *s += v as f64;
                }
            }
            Ok(sum.into_iter().map(|s| (s / class.len() as f64) as f32).collect())
        })
        .collect()
}

/// Outcome for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "class")]
pub enum Verdict {
    Class(usize),
    Unknown,
    Quiet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryDecision {
    /// Euclidean distance to each prototype; empty when gated as quiet.
    pub distances: Vec<f64>,
    pub nearest: usize,
    pub d1: f64,
    pub d2: f64,
    /// `d1 / d2`, defined as 0 when `d2 == 0`.
    pub ratio: f64,
    /// Softmax over negative distances.
    pub probabilities: Vec<f64>,
    pub verdict: Option<Verdict>,
}

impl QueryDecision {
    fn quiet() -> Self {
        Self {
            distances: Vec::new(),
            nearest: 0,
            d1: 0.0,
            d2: 0.0,
            ratio: 0.0,
            probabilities: Vec::new(),
            verdict: Some(Verdict::Quiet),
        }
    }
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Distances from `query` to every prototype with the nearest and
/// second-nearest extracted. Ties resolve to the lowest class index.
pub fn nearest_prototypes(query: &[f32], prototypes: &[Vec<f32>]) -> Result<QueryDecision, FewShotError> {
    if prototypes.is_empty() {
        return Err(FewShotError::TooFewClasses(0));
    }
    let dim = prototypes[0].len();
    if query.len() != dim {
        return Err(FewShotError::DimensionMismatch {
            expected: dim,
            got: query.len(),
        });
    }
    let distances: Vec<f64> = prototypes.iter().map(|p| euclidean(query, p)).collect();
    let mut nearest = 0;
    for (i, &d) in distances.iter().enumerate() {
        if d < distances[nearest] {
            nearest = i;
        }
    }
    let d1 = distances[nearest];
    let d2 = distances
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != nearest)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let ratio = if d2 == 0.0 || !d2.is_finite() { 0.0 } else { d1 / d2 };
    let neg: Vec<f64> = distances.iter().map(|d| -d).collect();
    Ok(QueryDecision {
        probabilities: softmax(&neg),
        distances,
        nearest,
        d1,
        d2,
        ratio,
        verdict: None,
    })
}

/// Accepts the nearest class when `R ≤ T`, otherwise answers unknown.
pub fn open_set_decision(decision: &QueryDecision, threshold: f64) -> Verdict {
    if decision.ratio <= threshold {
        Verdict::Class(decision.nearest)
    } else {
        Verdict::Unknown
    }
}

/// Whether the open-set and loudness gates apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    OpenSet,
    /// Always answer one of the N classes; used for episodic accuracy.
    ClosedSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocationConfig {
    pub alpha: f64,
    /// Mixing coefficient overrides keyed by the source soundscape's id.
    #[serde(default)]
    pub context_alpha: BTreeMap<String, f64>,
    pub ratio_threshold: f64,
    pub loudness_gate_dbfs: f64,
    pub seed: u64,
}

impl Default for LocationConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            context_alpha: BTreeMap::new(),
            ratio_threshold: DEFAULT_RATIO_THRESHOLD,
            loudness_gate_dbfs: DEFAULT_LOUDNESS_GATE_DBFS,
            seed: 0,
        }
    }
}

impl LocationConfig {
    pub fn validate(&self) -> Result<(), FewShotError> {
        let alphas = std::iter::once(self.alpha).chain(self.context_alpha.values().copied());
        for a in alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(FewShotError::InvalidThreshold(format!("alpha {a} outside [0, 1]")));
            }
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return Err(FewShotError::InvalidThreshold(format!(
                "ratio threshold {} outside (0, 1]",
                self.ratio_threshold
            )));
        }
        if !self.loudness_gate_dbfs.is_finite() {
            return Err(FewShotError::InvalidThreshold("loudness gate must be finite".into()));
        }
        Ok(())
    }
}

/// A personalized recognizer for one place.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationModel {
    pub location_name: String,
    pub class_names: Vec<String>,
    /// N × D.
    pub prototypes: Vec<Vec<f32>>,
    pub embedder_ref: String,
    pub alpha: f64,
    pub ratio_threshold: f64,
    pub loudness_gate_dbfs: f64,
    /// Ambient recording of the location (up to ten seconds).
    pub soundscape: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct LocationManifest {
    kind: String,
    location_name: String,
    class_names: Vec<String>,
    embedder_ref: String,
    embed_dim: usize,
    alpha: f64,
    ratio_threshold: f64,
    loudness_gate_dbfs: f64,
}

impl LocationModel {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.prototypes.first().map_or(0, Vec::len)
    }

    pub fn class_name(&self, verdict: Verdict) -> &str {
        match verdict {
            Verdict::Class(i) => &self.class_names[i],
            Verdict::Unknown => "unknown",
            Verdict::Quiet => "quiet",
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = LocationManifest {
            kind: LOCATION_KIND.into(),
            location_name: self.location_name.clone(),
            class_names: self.class_names.clone(),
            embedder_ref: self.embedder_ref.clone(),
            embed_dim: self.embed_dim(),
            alpha: self.alpha,
            ratio_threshold: self.ratio_threshold,
            loudness_gate_dbfs: self.loudness_gate_dbfs,
        };
        let tensors = vec![
            TensorEntry {
                name: "prototypes".into(),
                shape: vec![self.num_classes(), self.embed_dim()],
                data: self.prototypes.concat(),
            },
            TensorEntry {
                name: "soundscape".into(),
                shape: vec![self.soundscape.len()],
                data: self.soundscape.clone(),
            },
        ];
        Container::new(serde_json::to_value(manifest).expect("manifest serializes"), tensors).encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FewShotError> {
        let container = Container::decode(bytes)?;
        container.expect_kind(LOCATION_KIND)?;
        let manifest: LocationManifest =
            serde_json::from_value(serde_json::Value::Object(container.manifest.clone()))
                .map_err(|e| ContainerError::Corrupt(format!("location manifest: {e}")))?;
        let flat = container.tensor("prototypes")?;
        let dim = manifest.embed_dim;
        if dim == 0 || flat.len() != manifest.class_names.len() * dim {
            return Err(ContainerError::Corrupt("prototype tensor does not match class list".into()).into());
        }
        let model = Self {
            location_name: manifest.location_name,
            class_names: manifest.class_names,
            prototypes: flat.chunks(dim).map(<[f32]>::to_vec).collect(),
            embedder_ref: manifest.embedder_ref,
            alpha: manifest.alpha,
            ratio_threshold: manifest.ratio_threshold,
            loudness_gate_dbfs: manifest.loudness_gate_dbfs,
            soundscape: container.tensor("soundscape")?.to_vec(),
        };
        if model.prototypes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ContainerError::Corrupt("non-finite prototype".into()).into());
        }
        Ok(model)
    }

    fn check_encoder(&self, encoder: &Encoder) -> Result<(), FewShotError> {
        if encoder.version() != self.embedder_ref {
            return Err(FewShotError::VersionMismatch {
                expected: self.embedder_ref.clone(),
                got: encoder.version().to_string(),
            });
        }
        Ok(())
    }

    /// Classifies an already computed embedding.
    pub fn classify_embedding(&self, embedding: &[f32], scoring: Scoring) -> Result<QueryDecision, FewShotError> {
        let mut decision = nearest_prototypes(embedding, &self.prototypes)?;
        decision.verdict = Some(match scoring {
            Scoring::OpenSet => open_set_decision(&decision, self.ratio_threshold),
            Scoring::ClosedSet => Verdict::Class(decision.nearest),
        });
        Ok(decision)
    }

    /// Gate, embed and classify one segment. Segments quieter than the
    /// loudness gate are never embedded.
    pub fn predict_segment(&self, encoder: &Encoder, segment: &Segment) -> Result<QueryDecision, FewShotError> {
        self.predict_segment_with(encoder, segment, Scoring::OpenSet)
    }

    pub fn predict_segment_with(
        &self,
        encoder: &Encoder,
        segment: &Segment,
        scoring: Scoring,
    ) -> Result<QueryDecision, FewShotError> {
        self.check_encoder(encoder)?;
        if scoring == Scoring::OpenSet && loudness_db(segment) < self.loudness_gate_dbfs {
            return Ok(QueryDecision::quiet());
        }
        self.classify_embedding(&encoder.embed(segment), scoring)
    }

    pub fn predict_clip(&self, encoder: &Encoder, clip: &AudioClip) -> Result<ClipPrediction, FewShotError> {
        self.predict_clip_with(encoder, clip, Scoring::OpenSet)
    }

    /// Segments the clip, classifies each second and aggregates.
    pub fn predict_clip_with(
        &self,
        encoder: &Encoder,
        clip: &AudioClip,
        scoring: Scoring,
    ) -> Result<ClipPrediction, FewShotError> {
        self.check_encoder(encoder)?;
        let segments = segment_one_second(clip).map_err(|e| match e {
            AudioError::EmptyClip => FewShotError::EmptyClip,
            other => other.into(),
        })?;
        let decisions = segments
            .iter()
            .map(|s| self.predict_segment_with(encoder, s, scoring))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(aggregate_clip(decisions))
    }
}

/// Clip-level result: the mean of the probability vectors of segments whose
/// verdict was a class, then argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrediction {
    /// `Class` or `Unknown`; never `Quiet`.
    pub verdict: Verdict,
    pub mean_probabilities: Option<Vec<f64>>,
    /// Every segment was below the loudness gate.
    pub all_quiet: bool,
    pub segments: Vec<QueryDecision>,
}

pub fn aggregate_clip(segments: Vec<QueryDecision>) -> ClipPrediction {
    let accepted: Vec<&QueryDecision> = segments
        .iter()
        .filter(|d| matches!(d.verdict, Some(Verdict::Class(_))))
        .collect();
    let all_quiet = !segments.is_empty() && segments.iter().all(|d| d.verdict == Some(Verdict::Quiet));
    let mean = (!accepted.is_empty()).then(|| {
        let n = accepted[0].probabilities.len();
        let mut sum = vec![0.0; n];
        for d in &accepted {
            for (s, p) in sum.iter_mut().zip(&d.probabilities) {
                *s += p;
            }
        }
        sum.into_iter().map(|s| s / accepted.len() as f64).collect::<Vec<f64>>()
    });
    let verdict = match &mean {
        Some(p) => {
            let mut best = 0;
            for (i, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = i;
                }
            }
            Verdict::Class(best)
        }
        None => Verdict::Unknown,
    };
    ClipPrediction {
        verdict,
        mean_probabilities: mean,
        all_quiet,
        segments,
    }
}

/// FNV-1a over sample bits; keys per-recording randomness so augmentation
/// does not depend on the order recordings were supplied in.
pub(crate) fn content_hash(samples: &[f32]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for s in samples {
        for b in s.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLocation {
    pub model: LocationModel,
    pub training_time: Duration,
    /// Number of support segments that were soundscape-augmented.
    pub augmented: usize,
}

/// Builds a location model: augments library classes (always) and user
/// recordings made in a different soundscape, embeds everything and
/// averages per class.
pub fn train_location(
    name: &str,
    support: &SupportSet,
    target_soundscape: &AudioClip,
    encoder: &Encoder,
    config: &LocationConfig,
) -> Result<TrainedLocation, FewShotError> {
    let started = Instant::now();
    config.validate()?;
    support.validate(None)?;
    if target_soundscape.duration_s() < MIN_SOUNDSCAPE_S {
        return Err(FewShotError::MissingSoundscape(format!(
            "ambient recording is {:.2} s, need at least {MIN_SOUNDSCAPE_S} s",
            target_soundscape.duration_s()
        )));
    }
    let silence = AudioClip::canonical(vec![0.0; SEGMENT_LEN], "silence");
    let user_source = support
        .source_soundscape
        .as_ref()
        .filter(|s| s.samples != target_soundscape.samples);

    let mut augmented = 0;
    let mut embeddings = Vec::with_capacity(support.classes.len());
    for class in &support.classes {
        let (source_ss, alpha) = match (class.origin, user_source) {
            (Origin::Library, _) => (Some(&silence), config.alpha),
            (Origin::User, Some(src)) => (
                Some(src),
                config.context_alpha.get(&src.source_id).copied().unwrap_or(config.alpha),
            ),
            (Origin::User, None) => (None, config.alpha),
        };
        let mut class_embeddings = Vec::with_capacity(class.segments.len());
        for seg in &class.segments {
            let input = match source_ss {
                Some(src) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ content_hash(seg.samples()));
                    let src_crop = random_crop(src, &mut rng);
                    let tgt_crop = random_crop(target_soundscape, &mut rng);
                    augmented += 1;
                    augment_with_soundscape(seg, &src_crop, &tgt_crop, alpha)
                }
                None => seg.clone(),
            };
            class_embeddings.push(encoder.embed(&input));
        }
        embeddings.push(class_embeddings);
    }
    let prototypes = compute_prototypes(&embeddings)?;
    let keep = target_soundscape.samples.len().min(STORED_SOUNDSCAPE_S * SEGMENT_LEN);
    let model = LocationModel {
        location_name: name.to_string(),
        class_names: support.class_names(),
        prototypes,
        embedder_ref: encoder.version().to_string(),
        alpha: config.alpha,
        ratio_threshold: config.ratio_threshold,
        loudness_gate_dbfs: config.loudness_gate_dbfs,
        soundscape: target_soundscape.samples[..keep].to_vec(),
    };
    Ok(TrainedLocation {
        model,
        training_time: started.elapsed(),
        augmented,
    })
}
