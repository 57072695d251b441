use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Dense, Real};
use super::{AdamState, ClassifierHead, EmbedderModel, ModelError, Network, Trace};
use crate::dsp::LogMelPatch;

/// Which parameters a training run may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainScope {
    Full,
    HeadOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub scope: TrainScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            seed: 0,
            scope: TrainScope::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
    /// Fraction of samples classified correctly during each epoch.
    pub epoch_accuracy: Vec<f64>,
}

/// Numerically stable softmax in f64.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy: returns the loss and `dL/dlogits`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let loss = -(p[label].max(1e-300)).ln();
    p[label] -= 1.0;
    (loss, p)
}

/// Forward and backward for one sample in precision `T`. Returns the loss,
/// the logits and fills the gradient buffers.
pub(crate) fn sample_gradients<T: Real>(
    net: &Network<T>,
    head: &Dense<T>,
    normalize: bool,
    input: &[T],
    label: usize,
    net_grad: Option<&mut Network<T>>,
    head_grad: &mut Dense<T>,
) -> (f64, Vec<f64>) {
    let trace = net.forward_traced(input);
    gradients_from_trace(trace, net, head, normalize, label, net_grad, head_grad)
}

pub(crate) fn gradients_from_trace<T: Real>(
    trace: Trace<T>,
    net: &Network<T>,
    head: &Dense<T>,
    normalize: bool,
    label: usize,
    net_grad: Option<&mut Network<T>>,
    head_grad: &mut Dense<T>,
) -> (f64, Vec<f64>) {
    let raw = &trace.embedding;
    let (embedding, norm) = if normalize {
        let norm = raw.iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        (raw.iter().map(|&v| T::from_f64(v.to_f64() * scale)).collect::<Vec<T>>(), norm)
    } else {
        (raw.clone(), 0.0)
    };
    let logits: Vec<f64> = head.forward(&embedding).iter().map(|v| v.to_f64()).collect();
    let (loss, d_logits) = cross_entropy(&logits, label);
    let d_logits: Vec<T> = d_logits.iter().map(|&d| T::from_f64(d)).collect();
    let mut d_embedding = head.backward(&embedding, &d_logits, head_grad);
    if let Some(net_grad) = net_grad {
        if normalize && norm > 0.0 {
            // d(e/|e|) = (I - ê êᵀ) / |e|
            let dot: f64 = embedding
                .iter()
                .zip(&d_embedding)
                .map(|(e, d)| e.to_f64() * d.to_f64())
                .sum();
            d_embedding = embedding
                .iter()
                .zip(&d_embedding)
                .map(|(e, d)| T::from_f64((d.to_f64() - e.to_f64() * dot) / norm))
                .collect();
        }
        net.backward(&trace, &d_embedding, net_grad);
    }
    (loss, logits)
}

fn accumulate<T: Real>(acc: &mut [Vec<f64>], grads: &[&[T]]) {
    for (a, g) in acc.iter_mut().zip(grads) {
        for (x, &y) in a.iter_mut().zip(g.iter()) {
            *x += y.to_f64();
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch Adam on softmax cross-entropy. Batches are visited in a
/// seeded shuffle order; per-sample gradients are summed in f64 in batch
/// order, so a run is reproducible bit-for-bit.
pub fn train_supervised(
    model: &mut EmbedderModel,
    head: &mut ClassifierHead,
    dataset: &[(LogMelPatch, usize)],
    config: &TrainConfig,
    adam: &mut AdamState,
) -> Result<TrainReport, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if head.layer.in_dim != model.embed_dim() {
        return Err(ModelError::HeadMismatch {
            expected: head.layer.in_dim,
            got: model.embed_dim(),
        });
    }
    let classes = head.classes();
    if let Some(&(_, label)) = dataset.iter().find(|(_, l)| *l >= classes) {
        return Err(ModelError::LabelOutOfRange { label, classes });
    }
    let batch_size = config.batch_size.max(1);
    let full = config.scope == TrainScope::Full;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = TrainReport::default();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(batch_size) {
            let mut net_acc: Vec<Vec<f64>> = if full {
                model.net.tensors().iter().map(|(_, _, t)| vec![0.0; t.len()]).collect()
            } else {
                Vec::new()
            };
            let mut head_acc = vec![vec![0.0; head.layer.weight.len()], vec![0.0; head.layer.bias.len()]];
            for &i in batch {
                let (patch, label) = &dataset[i];
                let mut net_grad = full.then(|| Network::<f32>::zeros_like(&model.net));
                let mut head_grad = Dense::zeros(head.layer.in_dim, head.layer.out_dim);
                let (loss, logits) = sample_gradients(
                    &model.net,
                    &head.layer,
                    model.config.normalize,
                    patch.values(),
                    *label,
                    net_grad.as_mut(),
                    &mut head_grad,
                );
                epoch_loss += loss;
                if argmax(&logits) == *label {
                    correct += 1;
                }
                if let Some(g) = &net_grad {
                    let views: Vec<&[f32]> = g.tensors().into_iter().map(|(_, _, t)| t).collect();
                    accumulate(&mut net_acc, &views);
                }
                accumulate(&mut head_acc, &[&head_grad.weight, &head_grad.bias]);
            }
            let inv = 1.0 / batch.len() as f64;
            let mut grads: Vec<Vec<f64>> = net_acc;
            grads.extend(head_acc);
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            let mut params: Vec<&mut Vec<f32>> = if full { model.net.tensors_mut() } else { Vec::new() };
            params.push(&mut head.layer.weight);
            params.push(&mut head.layer.bias);
            adam.update(params, &grads);
        }
        report.epoch_losses.push(epoch_loss / dataset.len() as f64);
        report.epoch_accuracy.push(correct as f64 / dataset.len() as f64);
    }
    Ok(report)
}

/// Fraction of `dataset` the model + head classify correctly.
pub fn accuracy(model: &EmbedderModel, head: &ClassifierHead, dataset: &[(LogMelPatch, usize)]) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let correct = dataset
        .iter()
        .filter(|(p, label)| {
            let logits: Vec<f64> = head.logits(&model.forward(p)).iter().map(|&v| v as f64).collect();
            argmax(&logits) == *label
        })
        .count();
    correct as f64 / dataset.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::EmbedderConfig;

    fn striped_patch(class: usize, jitter: u64) -> LogMelPatch {
        let mut s = jitter.wrapping_mul(2654435761).wrapping_add(17);
        let values = (0..LogMelPatch::LEN)
            .map(|i| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                let noise = ((s % 1000) as f32 / 1000.0 - 0.5) * 0.3;
                let mel = i % 64;
                let on = mel / 16 == class;
                if on { 1.5 + noise } else { -0.5 + noise }
            })
            .collect();
        LogMelPatch::from_values(values).unwrap()
    }

    fn small_config(seed: u64) -> EmbedderConfig {
        EmbedderConfig { conv_channels: vec![4, 8], embed_dim: 8, normalize: false, seed }
    }

    #[test]
    fn softmax_and_ce() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let (loss, d) = cross_entropy(&[0.0, 0.0], 1);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(d, vec![0.5, -0.5]);
    }

    #[test]
    fn memorizes_single_sample() {
        let mut model = EmbedderModel::init(small_config(1)).unwrap();
        let mut head = ClassifierHead::new(3, 8, 2);
        let data = vec![(striped_patch(1, 0), 1)];
        let mut adam = AdamState::new(1e-2);
        let cfg = TrainConfig { epochs: 200, batch_size: 32, seed: 0, scope: TrainScope::Full };
        let report = train_supervised(&mut model, &mut head, &data, &cfg, &mut adam).unwrap();
        assert!(*report.epoch_losses.last().unwrap() < 0.01, "{:?}", report.epoch_losses.last());
        assert!(model.all_finite());
    }

    #[test]
    fn zero_lr_leaves_weights_untouched() {
        let mut model = EmbedderModel::init(small_config(3)).unwrap();
        let mut head = ClassifierHead::new(4, 8, 3);
        let (m0, h0) = (model.clone(), head.clone());
        let data: Vec<_> = (0..8).map(|i| (striped_patch(i % 4, i as u64), i % 4)).collect();
        let mut adam = AdamState::new(0.0);
        train_supervised(&mut model, &mut head, &data, &TrainConfig { epochs: 3, ..Default::default() }, &mut adam).unwrap();
        assert_eq!(model, m0);
        assert_eq!(head, h0);
    }

    #[test]
    fn head_only_freezes_backbone() {
        let mut model = EmbedderModel::init(small_config(4)).unwrap();
        let mut head = ClassifierHead::new(4, 8, 4);
        let (m0, h0) = (model.clone(), head.clone());
        let data: Vec<_> = (0..8).map(|i| (striped_patch(i % 4, i as u64), i % 4)).collect();
        let cfg = TrainConfig { epochs: 2, scope: TrainScope::HeadOnly, ..Default::default() };
        train_supervised(&mut model, &mut head, &data, &cfg, &mut AdamState::new(1e-2)).unwrap();
        assert_eq!(model, m0);
        assert_ne!(head, h0);
    }

    #[test]
    fn loss_decreases_for_every_seed() {
        let data: Vec<_> = (0..32).map(|i| (striped_patch(i % 4, i as u64 + 100), i % 4)).collect();
        for seed in 0..5 {
            let mut model = EmbedderModel::init(small_config(seed)).unwrap();
            let mut head = ClassifierHead::new(4, 8, seed + 10);
            let cfg = TrainConfig { epochs: 11, batch_size: 8, seed, scope: TrainScope::Full };
            let r = train_supervised(&mut model, &mut head, &data, &cfg, &mut AdamState::new(3e-3)).unwrap();
            assert!(r.epoch_losses[10] < r.epoch_losses[0], "seed {seed}: {:?}", r.epoch_losses);
            assert!(model.all_finite());
        }
    }

    #[test]
    fn training_is_reproducible() {
        let data: Vec<_> = (0..12).map(|i| (striped_patch(i % 3, i as u64), i % 3)).collect();
        let run = || {
            let mut model = EmbedderModel::init(small_config(9)).unwrap();
            let mut head = ClassifierHead::new(3, 8, 9);
            let cfg = TrainConfig { epochs: 3, batch_size: 5, seed: 42, scope: TrainScope::Full };
            let r = train_supervised(&mut model, &mut head, &data, &cfg, &mut AdamState::default()).unwrap();
            (model, head, r)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dataset_errors() {
        let mut model = EmbedderModel::init(small_config(0)).unwrap();
        let mut head = ClassifierHead::new(2, 8, 0);
        let cfg = TrainConfig::default();
        assert!(matches!(train_supervised(&mut model, &mut head, &[], &cfg, &mut AdamState::default()), Err(ModelError::EmptyDataset)));
        let data = vec![(striped_patch(0, 0), 2)];
        assert!(matches!(
            train_supervised(&mut model, &mut head, &data, &cfg, &mut AdamState::default()),
            Err(ModelError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }
}
