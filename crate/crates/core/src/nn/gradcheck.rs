//! Analytic-vs-finite-difference gradient verification, run in f64.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Dense;
use super::train::gradients_from_trace;
use super::{ClassifierHead, EmbedderModel, Network};
use crate::dsp::LogMelPatch;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    /// Upper bound on the number of parameters probed.
    pub max_params: usize,
    /// Central-difference step.
    pub step: f64,
    /// Seeds the parameter subsample.
    pub seed: u64,
    /// Negates the analytic gradient before comparison. Only useful as a
    /// negative control for the checker itself.
    pub corrupt_backward: bool,
    /// Evaluate the perturbed losses with the ReLU pattern and pooling
    /// winners of the unperturbed pass. Without this a step of 1e-3 on an
    /// early-layer weight flips many ReLUs and the difference quotient no
    /// longer estimates the derivative at the base point.
    pub freeze_gating: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            max_params: 500,
            step: 1e-3,
            seed: 0,
            corrupt_backward: false,
            freeze_gating: true,
        }
    }
}

pub fn gradient_check(model: &EmbedderModel, head: &ClassifierHead, patch: &LogMelPatch, label: usize) -> f64 {
    gradient_check_with(model, head, patch, label, &GradCheckConfig::default())
}

/// Maximum relative error `|a − n| / max(|a|, |n|)` between analytic and
/// central-difference gradients over a sampled subset of parameters
/// (network and head). Pairs where both magnitudes are below 1e-10 count as
/// exact.
pub fn gradient_check_with(
    model: &EmbedderModel,
    head: &ClassifierHead,
    patch: &LogMelPatch,
    label: usize,
    config: &GradCheckConfig,
) -> f64 {
    let mut net: Network<f64> = model.net.cast();
    let mut head_layer: Dense<f64> = head.layer.cast();
    let input: Vec<f64> = patch.values().iter().map(|&v| v as f64).collect();
    let normalize = model.config.normalize;

    let mut net_grad = Network::<f64>::zeros_like(&net);
    let mut head_grad = Dense::<f64>::zeros(head_layer.in_dim, head_layer.out_dim);
    let base = net.forward_traced(&input);
    let gate = config.freeze_gating.then(|| net.forward_traced(&input));
    gradients_from_trace(base, &net, &head_layer, normalize, label, Some(&mut net_grad), &mut head_grad);
    let mut analytic: Vec<Vec<f64>> = net_grad.tensors().into_iter().map(|(_, _, t)| t.to_vec()).collect();
    analytic.push(head_grad.weight.clone());
    analytic.push(head_grad.bias.clone());

    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picks: Vec<usize> = if total <= config.max_params {
        (0..total).collect()
    } else {
        sample(&mut rng, total, config.max_params).into_vec()
    };
    picks.sort_unstable();

    let loss_at = |net: &Network<f64>, head: &Dense<f64>| -> f64 {
        let mut scratch = Dense::<f64>::zeros(head.in_dim, head.out_dim);
        let trace = net.forward_gated(&input, gate.as_ref());
        gradients_from_trace(trace, net, head, normalize, label, None, &mut scratch).0
    };

    let n_net = analytic.len() - 2;
    let mut worst = 0.0f64;
    for flat in picks {
        let (mut tensor, mut idx) = (0, flat);
        while idx >= sizes[tensor] {
            idx -= sizes[tensor];
            tensor += 1;
        }
        let original = *param_slot(&mut net, &mut head_layer, n_net, tensor, idx);
        *param_slot(&mut net, &mut head_layer, n_net, tensor, idx) = original + config.step;
        let plus = loss_at(&net, &head_layer);
        *param_slot(&mut net, &mut head_layer, n_net, tensor, idx) = original - config.step;
        let minus = loss_at(&net, &head_layer);
        *param_slot(&mut net, &mut head_layer, n_net, tensor, idx) = original;
        let numeric = (plus - minus) / (2.0 * config.step);
        let mut a = analytic[tensor][idx];
        if config.corrupt_backward {
            a = -a;
        }
        let scale = a.abs().max(numeric.abs());
        if scale < 1e-10 {
            continue;
        }
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

fn param_slot<'a>(
    net: &'a mut Network<f64>,
    head: &'a mut Dense<f64>,
    n_net: usize,
    tensor: usize,
    idx: usize,
) -> &'a mut f64 {
    if tensor < n_net {
        net.tensors_mut().swap_remove(tensor).get_mut(idx).expect("index in range")
    } else if tensor == n_net {
        &mut head.weight[idx]
    } else {
        &mut head.bias[idx]
    }
}
