//! Episodic N-way K-shot evaluation: corpora, seeded episode sampling,
//! the three personalization methods, open-set sweeps, pre-training and
//! reports.

mod corpus;
pub mod stats;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{AMBIENT_DIR, MANIFEST};
pub use stats::{paired_t_test, summarize, Summary, TTest};
pub use synth::{generate_synthetic_corpus, ContextSpec, NoiseKind, SynthSpec};

use crate::audio::{segment_one_second, AudioClip, AudioError, Segment};
use crate::fewshot::{
    finetune_on_patches, train_location, Encoder, FewShotError, FinetuneConfig, LocationConfig, Origin, Scoring,
    SupportSet, Verdict,
};
use crate::nn::{train_supervised, AdamState, ClassifierHead, EmbedderConfig, EmbedderModel, ModelError, TrainConfig, TrainReport, TrainScope};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("need at least 2 tasks, got {0}")]
    TooFewTasks(usize),
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("episode class {0:?} was seen in pre-training")]
    ClassOverlap(String),
    #[error("no ambient recording for context {0:?}")]
    MissingAmbient(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    FewShot(#[from] FewShotError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One labeled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub clip: AudioClip,
    pub class: String,
    pub context: String,
    /// `inf` for clean recordings.
    pub snr_db: f64,
}

/// Labeled clips plus one ambient recording per context.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub clips: Vec<LabeledClip>,
    pub ambients: BTreeMap<String, AudioClip>,
}

impl Corpus {
    /// Sorted, deduplicated.
    pub fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.clips.iter().map(|c| c.class.clone()).collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn contexts(&self) -> Vec<String> {
        let mut names: Vec<String> = self.clips.iter().map(|c| c.context.clone()).collect();
        names.sort();
        names.dedup();
        names
    }

    /// Clip indices per class, in corpus order.
    pub fn by_class(&self) -> BTreeMap<String, Vec<usize>> {
        let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.clips.iter().enumerate() {
            map.entry(c.class.clone()).or_default().push(i);
        }
        map
    }
}

/// The personalization methods under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Prototypes from soundscape-augmented support.
    #[serde(alias = "protosound")]
    Augmented,
    /// Prototypes from the raw support set.
    #[serde(alias = "vanilla_protonet")]
    Vanilla,
    /// Pre-trained embedder plus a new linear head, fine-tuned on the support.
    Finetune,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Augmented, Method::Vanilla, Method::Finetune];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Augmented => "augmented",
            Method::Vanilla => "vanilla",
            Method::Finetune => "finetune",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "augmented" | "protosound" => Ok(Method::Augmented),
            "vanilla" | "vanilla_protonet" | "protonet" => Ok(Method::Vanilla),
            "finetune" | "fine_tune" => Ok(Method::Finetune),
            other => Err(EvalError::InvalidSpec(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub queries_per_way: usize,
    pub n_tasks: usize,
    pub seed: u64,
    /// Draw support clips only from this context (queries may come from
    /// any context). `None` draws both from the whole class pool.
    #[serde(default)]
    pub support_context: Option<String>,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            n_way: 5,
            k_shot: 5,
            queries_per_way: 15,
            n_tasks: 100,
            seed: 0,
            support_context: None,
        }
    }
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.n_way < 2 || self.k_shot < 1 || self.queries_per_way < 1 || self.n_tasks < 1 {
            return Err(EvalError::InvalidSpec(format!(
                "need n_way ≥ 2, k_shot ≥ 1, queries ≥ 1, tasks ≥ 1 (got {}, {}, {}, {})",
                self.n_way, self.k_shot, self.queries_per_way, self.n_tasks
            )));
        }
        Ok(())
    }
}

/// One task: clip indices into the corpus, per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub task: usize,
    pub classes: Vec<String>,
    pub support: Vec<Vec<usize>>,
    pub queries: Vec<Vec<usize>>,
}

impl Episode {
    pub fn support_len(&self) -> usize {
        self.support.iter().map(Vec::len).sum()
    }

    pub fn query_len(&self) -> usize {
        self.queries.iter().map(Vec::len).sum()
    }
}

fn task_rng(seed: u64, task: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task as u64 + 1);
    rng
}

/// Samples `n_tasks` episodes. Each task has its own RNG stream derived from
/// `(seed, task)`, so any task can be regenerated independently.
pub fn sample_episodes(corpus: &Corpus, spec: &EpisodeSpec) -> Result<Vec<Episode>, EvalError> {
    sample_episodes_excluding(corpus, spec, &[])
}

/// As [`sample_episodes`], never drawing the `excluded` classes. Clip
/// indices still refer to the whole corpus.
pub fn sample_episodes_excluding(corpus: &Corpus, spec: &EpisodeSpec, excluded: &[String]) -> Result<Vec<Episode>, EvalError> {
    spec.validate()?;
    let by_class = corpus.by_class();
    let pools: Vec<(String, Vec<usize>, Vec<usize>)> = by_class
        .into_iter()
        .filter(|(class, _)| !excluded.contains(class))
        .map(|(class, idx)| {
            let (sup, rest): (Vec<usize>, Vec<usize>) = match &spec.support_context {
                Some(ctx) => idx.iter().partition(|&&i| &corpus.clips[i].context == ctx),
                None => (idx.clone(), Vec::new()),
            };
            (class, sup, rest)
        })
        .filter(|(_, sup, rest)| sup.len() >= spec.k_shot && sup.len() + rest.len() >= spec.k_shot + spec.queries_per_way)
        .collect();
    if pools.len() < spec.n_way {
        return Err(EvalError::InsufficientData(format!(
            "{} classes have ≥ {} support and ≥ {} query clips; need {}",
            pools.len(),
            spec.k_shot,
            spec.queries_per_way,
            spec.n_way
        )));
    }
    let mut episodes = Vec::with_capacity(spec.n_tasks);
    for task in 0..spec.n_tasks {
        let mut rng = task_rng(spec.seed, task);
        let mut chosen = sample(&mut rng, pools.len(), spec.n_way).into_vec();
        chosen.sort_unstable();
        let mut classes = Vec::new();
        let mut support = Vec::new();
        let mut queries = Vec::new();
        for c in chosen {
            let (name, sup_pool, rest) = &pools[c];
            let picks = sample(&mut rng, sup_pool.len(), spec.k_shot).into_vec();
            let s: Vec<usize> = picks.iter().map(|&i| sup_pool[i]).collect();
            let remaining: Vec<usize> = sup_pool
                .iter()
                .chain(rest)
                .copied()
                .filter(|i| !s.contains(i))
                .collect();
            let q: Vec<usize> = sample(&mut rng, remaining.len(), spec.queries_per_way)
                .into_iter()
                .map(|i| remaining[i])
                .collect();
            classes.push(name.clone());
            support.push(s);
            queries.push(q);
        }
        episodes.push(Episode { task, classes, support, queries });
    }
    Ok(episodes)
}

/// Splits off the last `count` classes by name for open-set evaluation:
/// returns their names and the indices of all their clips.
pub fn held_out_classes(corpus: &Corpus, count: usize) -> Result<(Vec<String>, Vec<usize>), EvalError> {
    let names = corpus.class_names();
    if count >= names.len() {
        return Err(EvalError::InsufficientData(format!(
            "cannot hold out {count} of {} classes",
            names.len()
        )));
    }
    let held = names[names.len() - count..].to_vec();
    let idx = (0..corpus.clips.len()).filter(|&i| held.contains(&corpus.clips[i].class)).collect();
    Ok((held, idx))
}

/// Correct/total query counts for one context.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: usize,
    pub accuracy: f64,
    pub per_context: BTreeMap<String, Tally>,
}

/// Settings shared by every task of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub location: LocationConfig,
    pub finetune: FinetuneConfig,
    /// Refuse episodes whose classes appear in this list.
    #[serde(default)]
    pub pretraining_classes: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            location: LocationConfig::default(),
            finetune: FinetuneConfig::default(),
            pretraining_classes: Vec::new(),
        }
    }
}

/// Runs episodes against one embedder. Query and support embeddings are
/// memoized by content, so methods sharing an episode reuse them.
pub struct Evaluator<'a> {
    corpus: &'a Corpus,
    encoder: Encoder,
    config: RunConfig,
}

/// The first one-second segment of a clip, used as the support recording.
fn support_segment(clip: &AudioClip) -> Result<Segment, EvalError> {
    Ok(segment_one_second(clip)?.swap_remove(0))
}

impl<'a> Evaluator<'a> {
    pub fn new(corpus: &'a Corpus, embedder: EmbedderModel, config: RunConfig) -> Self {
        Self {
            corpus,
            encoder: Encoder::new(embedder).with_cache(),
            config,
        }
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    fn check_disjoint(&self, episode: &Episode) -> Result<(), EvalError> {
        for c in &episode.classes {
            if self.config.pretraining_classes.contains(c) {
                return Err(EvalError::ClassOverlap(c.clone()));
            }
        }
        Ok(())
    }

    fn support_set(&self, episode: &Episode) -> Result<SupportSet, EvalError> {
        // A single source soundscape is known only when every support clip
        // comes from the same context.
        let contexts: Vec<&str> = episode
            .support
            .iter()
            .flatten()
            .map(|&i| self.corpus.clips[i].context.as_str())
            .collect();
        let source = match contexts.first() {
            Some(first) if contexts.iter().all(|c| c == first) => self.corpus.ambients.get(*first).cloned(),
            _ => None,
        };
        let mut set = SupportSet::new(source);
        for (name, idx) in episode.classes.iter().zip(&episode.support) {
            let segments = idx
                .iter()
                .map(|&i| support_segment(&self.corpus.clips[i].clip))
                .collect::<Result<Vec<_>, _>>()?;
            set.add_class(name.clone(), Origin::User, segments);
        }
        Ok(set)
    }

    /// Closed-set clip accuracy of one method on one episode.
    pub fn run_episode(&self, method: Method, episode: &Episode) -> Result<TaskResult, EvalError> {
        self.check_disjoint(episode)?;
        let support = self.support_set(episode)?;
        let mut per_context: BTreeMap<String, Tally> = BTreeMap::new();
        let queries: Vec<(usize, &LabeledClip)> = episode
            .queries
            .iter()
            .enumerate()
            .flat_map(|(label, idx)| idx.iter().map(move |&i| (label, &self.corpus.clips[i])))
            .collect();
        let mut record = |label: usize, clip: &LabeledClip, verdict: Verdict| {
            let t = per_context.entry(clip.context.clone()).or_default();
            t.total += 1;
            if verdict == Verdict::Class(label) {
                t.correct += 1;
            }
        };
        match method {
            Method::Vanilla | Method::Augmented => {
                let mut models = BTreeMap::new();
                for &(label, q) in &queries {
                    let model = match models.get(&q.context) {
                        Some(m) => m,
                        None => {
                            let target = match method {
                                // Vanilla never mixes: use the support's own
                                // soundscape (or none) as the target.
                                Method::Vanilla => support.source_soundscape.clone(),
                                _ => Some(
                                    self.corpus
                                        .ambients
                                        .get(&q.context)
                                        .cloned()
                                        .ok_or_else(|| EvalError::MissingAmbient(q.context.clone()))?,
                                ),
                            };
                            let built = self.build_prototypes(&support, target, method)?;
                            models.entry(q.context.clone()).or_insert(built)
                        }
                    };
                    let pred = model.predict_clip_with(&self.encoder, &q.clip, Scoring::ClosedSet)?;
                    record(label, q, pred.verdict);
                }
            }
            Method::Finetune => {
                let data = support
                    .classes
                    .iter()
                    .enumerate()
                    .flat_map(|(label, c)| c.segments.iter().map(move |s| (self.encoder.patch(s), label)))
                    .collect();
                let cfg = FinetuneConfig {
                    seed: self.config.finetune.seed ^ episode.task as u64,
                    ..self.config.finetune.clone()
                };
                let classifier = finetune_on_patches(self.encoder.model(), data, episode.classes.clone(), &cfg)?;
                for &(label, q) in &queries {
                    let pred = classifier.predict_clip(&q.clip)?;
                    record(label, q, pred.verdict);
                }
            }
        }
        let (correct, total) = per_context
            .values()
            .fold((0, 0), |(c, t), tally| (c + tally.correct, t + tally.total));
        Ok(TaskResult {
            task: episode.task,
            accuracy: correct as f64 / total.max(1) as f64,
            per_context,
        })
    }

    fn build_prototypes(
        &self,
        support: &SupportSet,
        target: Option<AudioClip>,
        method: Method,
    ) -> Result<crate::fewshot::LocationModel, EvalError> {
        let mut support = support.clone();
        let target = match (method, target) {
            (Method::Augmented, Some(t)) => t,
            // No mixing: make the target identical to the source so
            // train_location leaves recordings untouched.
            (_, t) => {
                let t = t.unwrap_or_else(|| AudioClip::canonical(vec![0.0; 2 * crate::audio::SEGMENT_LEN], "none"));
                support.source_soundscape = Some(t.clone());
                t
            }
        };
        Ok(train_location("episode", &support, &target, &self.encoder, &self.config.location)?.model)
    }

    /// Every method on every episode, paired by task.
    pub fn run(&self, methods: &[Method], episodes: &[Episode]) -> Result<BTreeMap<Method, Vec<TaskResult>>, EvalError> {
        let mut out: BTreeMap<Method, Vec<TaskResult>> = BTreeMap::new();
        for ep in episodes {
            for &m in methods {
                out.entry(m).or_default().push(self.run_episode(m, ep)?);
            }
        }
        Ok(out)
    }

    /// Fraction of query clips answered "unknown" at each threshold, for
    /// queries from the episode's own classes and from `held_out` classes
    /// never in the support set. Uses open-set scoring with the loudness
    /// gate disabled.
    pub fn open_set_sweep(
        &self,
        episodes: &[Episode],
        held_out: &[usize],
        thresholds: &[f64],
    ) -> Result<Vec<OpenSetPoint>, EvalError> {
        let mut in_set = vec![Tally::default(); thresholds.len()];
        let mut out_set = vec![Tally::default(); thresholds.len()];
        for ep in episodes {
            let support = self.support_set(ep)?;
            let target = support.source_soundscape.clone();
            let base = self.build_prototypes(&support, target, Method::Vanilla)?;
            let eval = |clip: &AudioClip, tallies: &mut [Tally]| -> Result<(), EvalError> {
                let segments = segment_one_second(clip)?;
                let decisions: Vec<_> = segments
                    .iter()
                    .map(|s| base.classify_embedding(&self.encoder.embed(s), Scoring::ClosedSet))
                    .collect::<Result<_, _>>()?;
                for (tally, &t) in tallies.iter_mut().zip(thresholds) {
                    let gated = decisions
                        .iter()
                        .cloned()
                        .map(|mut d| {
                            d.verdict = Some(crate::fewshot::open_set_decision(&d, t));
                            d
                        })
                        .collect();
                    tally.total += 1;
                    if crate::fewshot::aggregate_clip(gated).verdict == Verdict::Unknown {
                        tally.correct += 1;
                    }
                }
                Ok(())
            };
            for &i in ep.queries.iter().flatten() {
                eval(&self.corpus.clips[i].clip, &mut in_set)?;
            }
            for &i in held_out {
                if !ep.classes.contains(&self.corpus.clips[i].class) {
                    eval(&self.corpus.clips[i].clip, &mut out_set)?;
                }
            }
        }
        Ok(thresholds
            .iter()
            .zip(in_set.iter().zip(&out_set))
            .map(|(&threshold, (i, o))| OpenSetPoint {
                threshold,
                in_set_rejection: i.accuracy(),
                held_out_rejection: o.accuracy(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetPoint {
    pub threshold: f64,
    pub in_set_rejection: f64,
    pub held_out_rejection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub context: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    /// Scope label for the fine-tuning baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<TrainScope>,
    pub accuracies: Vec<f64>,
    pub summary: Summary,
    pub per_context: Vec<ContextSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: Method,
    pub b: Method,
    pub mean_difference: f64,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub embedder: String,
    pub episodes: EpisodeSpec,
    pub support_per_task: usize,
    pub queries_per_task: usize,
    pub methods: Vec<MethodReport>,
    pub comparisons: Vec<Comparison>,
}

impl EvalReport {
    pub fn build(
        embedder: &str,
        spec: &EpisodeSpec,
        episodes: &[Episode],
        results: &BTreeMap<Method, Vec<TaskResult>>,
        finetune_scope: TrainScope,
    ) -> Result<Self, EvalError> {
        let mut methods = Vec::new();
        for (&method, tasks) in results {
            let accuracies: Vec<f64> = tasks.iter().map(|t| t.accuracy).collect();
            let mut pooled: BTreeMap<String, Tally> = BTreeMap::new();
            for t in tasks {
                for (ctx, tally) in &t.per_context {
                    let p = pooled.entry(ctx.clone()).or_default();
                    p.correct += tally.correct;
                    p.total += tally.total;
                }
            }
            methods.push(MethodReport {
                method,
                scope: (method == Method::Finetune).then_some(finetune_scope),
                summary: summarize(&accuracies)?,
                accuracies,
                per_context: pooled
                    .into_iter()
                    .map(|(context, t)| ContextSummary { context, correct: t.correct, total: t.total, accuracy: t.accuracy() })
                    .collect(),
            });
        }
        let mut comparisons = Vec::new();
        for i in 0..methods.len() {
            for j in i + 1..methods.len() {
                let (a, b) = (&methods[i], &methods[j]);
                comparisons.push(Comparison {
                    a: a.method,
                    b: b.method,
                    mean_difference: a.summary.mean - b.summary.mean,
                    test: paired_t_test(&a.accuracies, &b.accuracies)?,
                });
            }
        }
        Ok(Self {
            embedder: embedder.to_string(),
            episodes: spec.clone(),
            support_per_task: episodes.first().map_or(0, Episode::support_len),
            queries_per_task: episodes.first().map_or(0, Episode::query_len),
            methods,
            comparisons,
        })
    }

    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn comparison(&self, a: Method, b: Method) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| (c.a, c.b) == (a, b) || (c.a, c.b) == (b, a))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let e = &self.episodes;
        let _ = writeln!(s, "embedder        {}", self.embedder);
        let _ = writeln!(
            s,
            "episodes        {} tasks, {}-way {}-shot, {} queries/way, seed {}",
            e.n_tasks, e.n_way, e.k_shot, e.queries_per_way, e.seed
        );
        if let Some(ctx) = &e.support_context {
            let _ = writeln!(s, "support context {ctx}");
        }
        let _ = writeln!(s, "per task        {} support + {} query clips", self.support_per_task, self.queries_per_task);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>17}  per-context", "method", "mean", "sd", "95% ci");
        for m in &self.methods {
            let label = match m.scope {
                Some(TrainScope::Full) => format!("{} (full)", m.method),
                Some(TrainScope::HeadOnly) => format!("{} (head)", m.method),
                None => m.method.to_string(),
            };
            let ctx: Vec<String> = m
                .per_context
                .iter()
                .map(|c| format!("{}={:.4} ({}/{})", c.context, c.accuracy, c.correct, c.total))
                .collect();
            let _ = writeln!(
                s,
                "{:<10} {:>8.4} {:>8.4} [{:.4}, {:.4}]  {}",
                label,
                m.summary.mean,
                m.summary.sd,
                m.summary.ci95_low,
                m.summary.ci95_high,
                ctx.join(" ")
            );
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(s);
            for c in &self.comparisons {
                let _ = writeln!(
                    s,
                    "{} vs {}: diff {:+.4}, t({}) = {:.4}, p = {:.3e}{}",
                    c.a,
                    c.b,
                    c.mean_difference,
                    c.test.df,
                    c.test.t,
                    c.test.p,
                    if c.test.degenerate { " (degenerate)" } else { "" }
                );
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub embedder: EmbedderConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            embedder: EmbedderConfig::default(),
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Supervised pre-training on every one-second segment of the corpus with a
/// softmax head over its classes (the head is discarded).
pub fn pretrain(corpus: &Corpus, config: &PretrainConfig) -> Result<(EmbedderModel, TrainReport), EvalError> {
    let classes = corpus.class_names();
    if classes.len() < 2 {
        return Err(EvalError::InsufficientData("pre-training needs at least 2 classes".into()));
    }
    let features = crate::dsp::FeatureExtractor::default();
    let mut data = Vec::new();
    for lc in &corpus.clips {
        let label = classes.binary_search(&lc.class).expect("class listed");
        for seg in segment_one_second(&lc.clip)? {
            data.push((features.extract(&seg), label));
        }
    }
    let mut model = EmbedderModel::init(config.embedder.clone())?;
    let mut head = ClassifierHead::new(classes.len(), model.embed_dim(), config.seed.wrapping_add(1));
    let train = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: config.seed,
        scope: TrainScope::Full,
    };
    let report = train_supervised(&mut model, &mut head, &data, &train, &mut AdamState::new(config.lr))?;
    Ok((model, report))
}
