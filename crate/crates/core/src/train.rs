//! End-to-end training: encode a batch, propagate candidate labels over the
//! similarity graph, and descend the combined objective with Adam.
//!
//! The label posterior is recomputed every step but treated as a constant
//! during the backward pass; gradients reach the encoder only through the
//! classifier logits and the clustering term.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamState};
use crate::batch::{build_batch, Batch, MentionSample};
use crate::classifier::{classify, supervision_loss_grad};
use crate::clsc::clsc_backward_with;
use crate::dataset::Dataset;
use crate::encoder::{encode, encode_backward, EncodedBatch};
use crate::error::{Error, Result};
use crate::graph::{build_graph_with, propagate};
use crate::metrics::EvalResult;
use crate::model::ModelParams;
use crate::seeds::{derive, TAG_PARAMS, TAG_PROPAGATE, TAG_SHUFFLE, TAG_SPLIT};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Hard cap on label-propagation iterations per batch.
    pub s_lp: usize,
    /// Markov chain length for the clustering loss.
    pub s_m: usize,
    pub lambda_clsc: f64,
    pub lambda_l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub d_z: usize,
    pub n_hidden: usize,
    pub hidden_width: usize,
    /// Exclude self-transitions from the similarity graph.
    pub zero_diagonal: bool,
    /// Fraction of samples held out for per-epoch evaluation; 0 disables the
    /// split and the report carries the final parameters only.
    pub dev_fraction: f64,
    /// Reshuffle the training order every epoch. Leave on; the switch exists
    /// so equivalence tests can pin batch composition.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 6e-4,
            batch_size: 64,
            s_lp: 200,
            s_m: 8,
            lambda_clsc: 14.0,
            lambda_l2: 0.0,
            epochs: 150,
            seed: 42,
            d_z: 16,
            n_hidden: 1,
            hidden_width: 32,
            zero_diagonal: false,
            dev_fraction: 0.0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::validation("lr must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::validation("batch_size must be at least 2"));
        }
        if self.s_lp == 0 {
            return Err(Error::validation("s_lp must be at least 1"));
        }
        if self.s_m == 0 {
            return Err(Error::validation("s_m must be at least 1"));
        }
        if !(self.lambda_clsc.is_finite() && self.lambda_clsc >= 0.0) {
            return Err(Error::validation("lambda_clsc must be non-negative"));
        }
        if !(self.lambda_l2.is_finite() && self.lambda_l2 >= 0.0) {
            return Err(Error::validation("lambda_l2 must be non-negative"));
        }
        if self.d_z == 0 {
            return Err(Error::validation("d_z must be at least 1"));
        }
        if self.n_hidden > 0 && self.hidden_width == 0 {
            return Err(Error::validation("hidden_width must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(Error::validation("dev_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub sup_loss: f64,
    pub clsc_loss: f64,
    pub total_loss: f64,
    pub dev: Option<EvalResult>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub final_params: ModelParams,
    /// Epoch with the best held-out strict accuracy, when a dev split exists.
    pub best_epoch: Option<usize>,
    pub best_params: Option<ModelParams>,
}

impl TrainReport {
    /// Best-dev snapshot when a dev split ran, final parameters otherwise.
    pub fn selected_params(&self) -> &ModelParams {
        self.best_params.as_ref().unwrap_or(&self.final_params)
    }
}

/// The combined objective: supervision plus weighted clustering plus the
/// (already weighted) L2 penalty.
pub fn total_loss(sup_loss: f64, clsc_loss: f64, lambda_clsc: f64, l2_penalty: f64) -> f64 {
    sup_loss + lambda_clsc * clsc_loss + l2_penalty
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub sup_loss: f64,
    pub clsc_loss: f64,
    pub total_loss: f64,
    pub grads: ModelParams,
}

/// One label-propagation pass over a batch's current embeddings.
pub fn propagate_phi(
    z: &Array2<f64>,
    mask: &Array2<f64>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Array2<f64>> {
    let graph = build_graph_with(z, cfg.zero_diagonal)?;
    let lp = propagate(&graph, mask, cfg.s_lp, seed)?;
    Ok(lp.phi)
}

/// Loss and parameter gradient for one batch with the label posterior `phi`
/// held fixed. `None` skips the clustering term entirely.
///
/// This is the function the finite-difference checks probe: re-encoding under
/// a perturbed parameter vector is part of the objective, the posterior is
/// not.
pub fn step_frozen(
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    phi: Option<&Array2<f64>>,
) -> Result<StepOutput> {
    let encoded = encode(&params.encoder, batch)?;
    step_encoded(params, batch, &encoded, cfg, phi)
}

/// One full training step's loss and gradient: propagate at the current
/// parameters, then differentiate with the posterior frozen.
pub fn step(
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    lp_seed: u64,
) -> Result<StepOutput> {
    let encoded = encode(&params.encoder, batch)?;
    let phi = if cfg.lambda_clsc > 0.0 {
        Some(propagate_phi(&encoded.z, &batch.m, cfg, lp_seed)?)
    } else {
        None
    };
    step_encoded(params, batch, &encoded, cfg, phi.as_ref())
}

fn step_encoded(
    params: &ModelParams,
    batch: &Batch,
    encoded: &EncodedBatch,
    cfg: &TrainConfig,
    phi: Option<&Array2<f64>>,
) -> Result<StepOutput> {
    let probs = classify(&params.classifier, &encoded.z)?;
    let (sup_loss, dlogits) = supervision_loss_grad(&probs, batch)?;
    let mut dz = dlogits.dot(&params.classifier.w);
    let mut clsc_loss = 0.0;
    if let Some(phi) = phi {
        let (l, dz_clsc) = clsc_backward_with(&encoded.z, phi, cfg.s_m, cfg.zero_diagonal)?;
        clsc_loss = l;
        dz.scaled_add(cfg.lambda_clsc, &dz_clsc);
    }
    let mut grads = params.zeros_like();
    grads.encoder = encode_backward(&params.encoder, encoded, &dz);
    grads.classifier.w = dlogits.t().dot(&encoded.z);
    grads.classifier.b = dlogits.sum_axis(Axis(0));
    params.add_l2_grad(&mut grads, cfg.lambda_l2);
    let total = total_loss(
        sup_loss,
        clsc_loss,
        cfg.lambda_clsc,
        params.l2_penalty(cfg.lambda_l2),
    );
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("batch loss became {total}")));
    }
    Ok(StepOutput {
        sup_loss,
        clsc_loss,
        total_loss: total,
        grads,
    })
}

/// Splits `0..n` into (train, dev) index lists, both in original order.
fn dev_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if fraction == 0.0 {
        return Ok(((0..n).collect(), Vec::new()));
    }
    let n_dev = ((n as f64) * fraction).round().max(2.0) as usize;
    if n + 2 < n_dev + 4 {
        return Err(Error::validation(format!(
            "dev_fraction {fraction} leaves too little data: {n} samples total"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(seed, TAG_SPLIT, 0)));
    let mut dev: Vec<usize> = perm[..n_dev].to_vec();
    let mut train: Vec<usize> = perm[n_dev..].to_vec();
    dev.sort_unstable();
    train.sort_unstable();
    Ok((train, dev))
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation("cannot train on an empty dataset"));
    }
    let (train_idx, dev_idx) = dev_split(dataset.len(), cfg.dev_fraction, cfg.seed)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, TAG_PARAMS, 0));
    let mut params = ModelParams::init(
        dataset.d_w,
        dataset.d_h,
        cfg.n_hidden,
        cfg.hidden_width,
        cfg.d_z,
        dataset.hierarchy.len(),
        &mut init_rng,
    );
    let mut adam = AdamState::new(params.flat_len());
    let mut flat = params.to_flat();

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ModelParams)> = None;
    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        if cfg.shuffle {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(
                cfg.seed,
                TAG_SHUFFLE,
                epoch as u64,
            )));
        }
        let mut sup_sum = 0.0;
        let mut clsc_sum = 0.0;
        let mut total_sum = 0.0;
        let mut n_batches = 0u64;
        let mut start = 0;
        while start < order.len() {
            let end = (start + cfg.batch_size).min(order.len());
            if end - start < 2 {
                break; // a 1-sample remnant cannot form a graph
            }
            let samples: Vec<MentionSample> = order[start..end]
                .iter()
                .map(|&i| dataset.samples[i].clone())
                .collect();
            let batch = build_batch(&dataset.hierarchy, samples)?;
            let lp_seed = derive(cfg.seed, TAG_PROPAGATE, (epoch as u64) << 32 | n_batches);
            let out = step(&params, &batch, cfg, lp_seed)?;
            adam_step(&mut adam, &mut flat, &out.grads.to_flat(), cfg.lr);
            params.set_flat(&flat);
            sup_sum += out.sup_loss;
            clsc_sum += out.clsc_loss;
            total_sum += out.total_loss;
            n_batches += 1;
            start = end;
        }
        if n_batches == 0 {
            return Err(Error::validation(
                "training set cannot form a single batch of at least 2 samples",
            ));
        }
        let denom = n_batches as f64;
        let dev = if dev_idx.is_empty() {
            None
        } else {
            let held: Vec<MentionSample> =
                dev_idx.iter().map(|&i| dataset.samples[i].clone()).collect();
            Some(crate::experiment::evaluate_samples(
                &params,
                &dataset.hierarchy,
                held,
            )?)
        };
        if let Some(d) = &dev {
            let improved = best.as_ref().map_or(true, |(_, acc, _)| d.strict_acc > *acc);
            if improved {
                best = Some((epoch, d.strict_acc, params.clone()));
            }
        }
        epochs.push(EpochRecord {
            epoch,
            sup_loss: sup_sum / denom,
            clsc_loss: clsc_sum / denom,
            total_loss: total_sum / denom,
            dev,
        });
    }

    let (best_epoch, best_params) = match best {
        Some((e, _, p)) => (Some(e), Some(p)),
        None => (None, None),
    };
    Ok(TrainReport {
        epochs,
        final_params: params,
        best_epoch,
        best_params,
    })
}
