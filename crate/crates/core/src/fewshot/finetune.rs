use serde::{Deserialize, Serialize};

use super::{ClipPrediction, FewShotError, QueryDecision, SupportSet, Verdict};
use crate::audio::{segment_one_second, AudioClip, AudioError, Segment};
use crate::dsp::{FeatureExtractor, LogMelPatch};
use crate::nn::{softmax, train_supervised, AdamState, ClassifierHead, EmbedderModel, TrainConfig, TrainScope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub epochs: usize,
    pub scope: TrainScope,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 20,
            scope: TrainScope::Full,
            seed: 0,
        }
    }
}

/// Pretrained embedder plus a new linear head, trained on the support set
/// with cross-entropy. Always closed-set.
#[derive(Debug, Clone)]
pub struct FinetunedClassifier {
    pub model: EmbedderModel,
    pub head: ClassifierHead,
    pub class_names: Vec<String>,
    features: FeatureExtractor,
}

/// Full-batch fine-tuning on the raw (unaugmented) support segments.
pub fn finetune_baseline(
    pretrained: &EmbedderModel,
    support: &SupportSet,
    config: &FinetuneConfig,
) -> Result<FinetunedClassifier, FewShotError> {
    support.validate(None)?;
    let features = FeatureExtractor::default();
    let data: Vec<(LogMelPatch, usize)> = support
        .classes
        .iter()
        .enumerate()
        .flat_map(|(label, c)| c.segments.iter().map(move |s| (s, label)))
        .map(|(s, label)| (features.extract(s), label))
        .collect();
    finetune_on_patches(pretrained, data, support.class_names(), config)
}

/// As [`finetune_baseline`], on precomputed patches labeled `0..names.len()`.
pub fn finetune_on_patches(
    pretrained: &EmbedderModel,
    data: Vec<(LogMelPatch, usize)>,
    class_names: Vec<String>,
    config: &FinetuneConfig,
) -> Result<FinetunedClassifier, FewShotError> {
    let mut model = pretrained.clone();
    let mut head = ClassifierHead::new(class_names.len(), model.embed_dim(), config.seed);
    let train = TrainConfig {
        epochs: config.epochs,
        batch_size: data.len().max(1),
        seed: config.seed,
        scope: config.scope,
    };
    train_supervised(&mut model, &mut head, &data, &train, &mut AdamState::new(config.lr))?;
    Ok(FinetunedClassifier {
        model,
        head,
        class_names,
        features: FeatureExtractor::default(),
    })
}

impl FinetunedClassifier {
    pub fn probabilities_for_patch(&self, patch: &LogMelPatch) -> Vec<f64> {
        let logits: Vec<f64> = self
            .head
            .logits(&self.model.forward(patch))
            .iter()
            .map(|&v| v as f64)
            .collect();
        softmax(&logits)
    }

    pub fn predict_segment(&self, segment: &Segment) -> QueryDecision {
        decision(self.probabilities_for_patch(&self.features.extract(segment)))
    }

    pub fn predict_clip(&self, clip: &AudioClip) -> Result<ClipPrediction, FewShotError> {
        let segments = segment_one_second(clip).map_err(|e| match e {
            AudioError::EmptyClip => FewShotError::EmptyClip,
            other => other.into(),
        })?;
        Ok(super::aggregate_clip(
            segments.iter().map(|s| self.predict_segment(s)).collect(),
        ))
    }
}

fn decision(probabilities: Vec<f64>) -> QueryDecision {
    let mut nearest = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > probabilities[nearest] {
            nearest = i;
        }
    }
    QueryDecision {
        distances: Vec::new(),
        nearest,
        d1: 0.0,
        d2: 0.0,
        ratio: 0.0,
        probabilities,
        verdict: Some(Verdict::Class(nearest)),
    }
}
