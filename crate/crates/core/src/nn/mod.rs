//! The CNN embedder: a stack of conv blocks, global average pooling and a
//! linear projection to a D-dimensional embedding, plus a detachable
//! classification head for supervised training.

mod adam;
mod gradcheck;
pub mod layers;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use crate::sampling::{normal, uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::container::{Container, ContainerError, TensorEntry};
use crate::dsp::{LogMelPatch, N_FRAMES, N_MELS};
use layers::{Conv, Dense, Real};

pub use adam::AdamState;
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckConfig};
pub use train::{accuracy, cross_entropy, softmax, train_supervised, TrainConfig, TrainReport, TrainScope};

/// Tag stored in the model container manifest.
pub const EMBEDDER_KIND: &str = "embedder";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("input shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("head expects {expected}-dimensional embeddings, model produces {got}")]
    HeadMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    /// Output channels of each 3×3 conv → ReLU → 2×2 max-pool block. An empty
    /// list yields a purely affine model over the flattened patch.
    pub conv_channels: Vec<usize>,
    pub embed_dim: usize,
    /// Scale embeddings to unit L2 norm.
    #[serde(default)]
    pub normalize: bool,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            conv_channels: vec![16, 32, 64, 64],
            embed_dim: 64,
            normalize: false,
            seed: 0,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "embed_dim must be >= 2, got {}",
                self.embed_dim
            )));
        }
        if self.conv_channels.iter().any(|&c| c == 0) {
            return Err(ModelError::InvalidConfig("zero-width conv block".into()));
        }
        let (h, w) = self.pooled_shape();
        if h == 0 || w == 0 {
            return Err(ModelError::InvalidConfig(format!(
                "{} pooling stages collapse the {N_FRAMES}x{N_MELS} input",
                self.conv_channels.len()
            )));
        }
        Ok(())
    }

    fn pooled_shape(&self) -> (usize, usize) {
        self.conv_channels
            .iter()
            .fold((N_FRAMES, N_MELS), |(h, w), _| (h / 2, w / 2))
    }

    /// Input width of the final projection.
    pub fn feature_dim(&self) -> usize {
        match self.conv_channels.last() {
            Some(&c) => c,
            None => N_FRAMES * N_MELS,
        }
    }
}

/// Network parameters in a given precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub convs: Vec<Conv<T>>,
    pub proj: Dense<T>,
}

impl<T: Real> Network<T> {
    pub fn zeros_like<U>(other: &Network<U>) -> Self {
        Self {
            convs: other
                .convs
                .iter()
                .map(|c| Conv::zeros(c.in_ch, c.out_ch))
                .collect(),
            proj: Dense::zeros(other.proj.in_dim, other.proj.out_dim),
        }
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            convs: self.convs.iter().map(Conv::cast).collect(),
            proj: self.proj.cast(),
        }
    }

    /// Parameter tensors in canonical order: per block weight then bias,
    /// then the projection weight and bias.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![c.out_ch, c.in_ch, 3, 3], &c.weight[..]));
            out.push((format!("conv{i}.bias"), vec![c.out_ch], &c.bias[..]));
        }
        out.push((
            "proj.weight".into(),
            vec![self.proj.out_dim, self.proj.in_dim],
            &self.proj.weight[..],
        ));
        out.push(("proj.bias".into(), vec![self.proj.out_dim], &self.proj.bias[..]));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for c in self.convs.iter_mut() {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.proj.weight);
        out.push(&mut self.proj.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        self.forward_traced(input).embedding
    }

    pub(crate) fn forward_traced(&self, input: &[T]) -> Trace<T> {
        self.forward_gated(input, None)
    }

    /// Forward pass; with `gate`, every block reuses that trace's ReLU
    /// pattern and pooling winners.
    pub(crate) fn forward_gated(&self, input: &[T], gate: Option<&Trace<T>>) -> Trace<T> {
        let (mut h, mut w) = (N_FRAMES, N_MELS);
        let mut x = input.to_vec();
        let mut blocks = Vec::with_capacity(self.convs.len());
        for (i, conv) in self.convs.iter().enumerate() {
            let (pooled, trace) = conv.forward_block_gated(&x, h, w, gate.map(|g| &g.blocks[i]));
            blocks.push(trace);
            x = pooled;
            h /= 2;
            w /= 2;
        }
        let features = if self.convs.is_empty() {
            x
        } else {
            let hw = h * w;
            let inv = T::from_f64(1.0 / hw as f64);
            x.chunks(hw)
                .map(|plane| {
                    let mut s = T::ZERO;
                    for &v in plane {
                        s += v;
                    }
                    s * inv
                })
                .collect()
        };
        let embedding = self.proj.forward(&features);
        Trace {
            blocks,
            pooled_hw: (h, w),
            features,
            embedding,
        }
    }

    /// Accumulates `dL/dθ` into `grad` given `dL/d(embedding)`.
    pub(crate) fn backward(&self, trace: &Trace<T>, d_embedding: &[T], grad: &mut Network<T>) {
        let d_features = self.proj.backward(&trace.features, d_embedding, &mut grad.proj);
        if self.convs.is_empty() {
            return;
        }
        let (h, w) = trace.pooled_hw;
        let hw = h * w;
        let inv = T::from_f64(1.0 / hw as f64);
        let mut d_x: Vec<T> = d_features
            .iter()
            .flat_map(|&d| std::iter::repeat(d * inv).take(hw))
            .collect();
        for i in (0..self.convs.len()).rev() {
            let need_input = i > 0;
            if let Some(d) =
                self.convs[i].backward_block(&trace.blocks[i], &d_x, &mut grad.convs[i], need_input)
            {
                d_x = d;
            }
        }
    }
}

pub(crate) struct Trace<T> {
    blocks: Vec<layers::BlockTrace<T>>,
    pooled_hw: (usize, usize),
    features: Vec<T>,
    pub embedding: Vec<T>,
}

/// A trained or freshly initialized embedding network.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderModel {
    pub config: EmbedderConfig,
    pub net: Network<f32>,
}

impl EmbedderModel {
    /// He-initialized model, deterministic in `(config, config.seed)`.
    pub fn init(config: EmbedderConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut convs = Vec::with_capacity(config.conv_channels.len());
        let mut in_ch = 1;
        for &out_ch in &config.conv_channels {
            let mut conv = Conv::zeros(in_ch, out_ch);
            let std = (2.0 / (in_ch * 9) as f64).sqrt();
            conv.weight.iter_mut().for_each(|w| *w = (normal(&mut rng) * std) as f32);
            convs.push(conv);
            in_ch = out_ch;
        }
        let in_dim = config.feature_dim();
        let mut proj = Dense::zeros(in_dim, config.embed_dim);
        let std = (2.0 / in_dim as f64).sqrt();
        proj.weight.iter_mut().for_each(|w| *w = (normal(&mut rng) * std) as f32);
        Ok(Self {
            config,
            net: Network { convs, proj },
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    /// Embeds one CMVN-normalized patch.
    pub fn forward(&self, patch: &LogMelPatch) -> Vec<f32> {
        let mut e = self.net.forward(patch.values());
        if self.config.normalize {
            normalize(&mut e);
        }
        e
    }

    /// Embeds raw patch values, checking the shape.
    pub fn forward_values(&self, values: &[f32]) -> Result<Vec<f32>, ModelError> {
        if values.len() != LogMelPatch::LEN {
            return Err(ModelError::ShapeMismatch {
                expected: LogMelPatch::LEN,
                got: values.len(),
            });
        }
        let mut e = self.net.forward(values);
        if self.config.normalize {
            normalize(&mut e);
        }
        Ok(e)
    }

    pub fn all_finite(&self) -> bool {
        self.net
            .tensors()
            .iter()
            .all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn to_container(&self) -> Container {
        let tensors = self
            .net
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| TensorEntry {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        Container::new(
            serde_json::json!({
                "kind": EMBEDDER_KIND,
                "architecture": self.config,
            }),
            tensors,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let container = Container::decode(bytes)?;
        container.expect_kind(EMBEDDER_KIND)?;
        let config: EmbedderConfig = container.manifest_field("architecture")?;
        let mut model = Self::init(config)?;
        let names: Vec<String> = model.net.tensors().into_iter().map(|(n, _, _)| n).collect();
        for (name, slot) in names.iter().zip(model.net.tensors_mut()) {
            let data = container.tensor(name)?;
            if data.len() != slot.len() {
                return Err(ContainerError::Corrupt(format!("tensor {name} has wrong length")).into());
            }
            slot.copy_from_slice(data);
        }
        Ok(model)
    }

    /// Content hash identifying these exact weights and architecture.
    pub fn version_hash(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        hex::encode(&digest[..8])
    }
}

fn normalize(e: &mut [f32]) {
    let norm = e.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 {
        e.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
    }
}

/// Linear classifier on top of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub layer: Dense<f32>,
}

impl ClassifierHead {
    /// Uniform init in `±1/√D`, seeded.
    pub fn new(classes: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (embed_dim as f64).sqrt();
        let mut layer = Dense::zeros(embed_dim, classes);
        layer
            .weight
            .iter_mut()
            .for_each(|w| *w = (uniform(&mut rng) * 2.0 - 1.0) as f32 * bound as f32);
        layer
            .bias
            .iter_mut()
            .for_each(|b| *b = (uniform(&mut rng) * 2.0 - 1.0) as f32 * bound as f32);
        Self { layer }
    }

    pub fn classes(&self) -> usize {
        self.layer.out_dim
    }

    pub fn logits(&self, embedding: &[f32]) -> Vec<f32> {
        self.layer.forward(embedding)
    }
}
