use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::arch::Arch;
use super::distance::{batch_triplet, Triplet};
use super::scalar::Scalar;
use super::{branch_inputs, init_params, net, FingerprintModel, ModelConfig};
use crate::datapipe::BatchSampler;
use crate::seed::derive;
use crate::sigcore::Waveform;
use crate::synth::{rng_from_seed, MessageRecord};
use crate::{Error, Result};

const VALIDATION_TAG: u64 = 0x5641_4c49_4441_5445;

/// Losses averaged over the batches of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub batches: usize,
    pub train_loss: f64,
    pub train_reconstruction: f64,
    pub train_triplet: f64,
    pub val_loss: Option<f64>,
    pub val_reconstruction: Option<f64>,
    pub val_triplet: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    pub triplet: f64,
}

/// Combined loss of one batch and, if asked, its gradient with respect to
/// every parameter. `fixed` pins the triplet selection.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_loss<T: Scalar>(
    arch: &Arch,
    params: &[T],
    waveforms: &[&Waveform],
    labels: &[u32],
    margin: f64,
    lambda_rec: f64,
    lambda_trip: f64,
    fixed: Option<&[Triplet]>,
    want_grad: bool,
) -> Result<(LossParts, Option<Vec<T>>, Vec<Triplet>)> {
    let b = waveforms.len();
    let l = arch.input_len;
    let inputs = branch_inputs::<T>(waveforms, l)?;
    let enc = net::encode(arch, params, [&inputs[0], &inputs[1]], b);
    let dec = net::decode(arch, params, &enc.e, b);

    let mut sq = 0.0;
    let coef = T::of(lambda_rec / (l * b) as f64);
    let d_out = [0, 1].map(|br| {
        dec.output(br)
            .iter()
            .zip(&inputs[br])
            .map(|(&y, &x)| {
                let r = y - x;
                sq += r.f64() * r.f64();
                coef * r
            })
            .collect::<Vec<T>>()
    });
    let reconstruction = sq / (2 * l * b) as f64;

    let (triplet, d_e, triplets) = if lambda_trip > 0.0 || fixed.is_some() {
        let (loss, mut g, ts) = batch_triplet(&enc.e, arch.dim, labels, margin, fixed)?;
        let s = T::of(lambda_trip);
        g.iter_mut().for_each(|v| *v = *v * s);
        (loss, g, ts)
    } else {
        (0.0, vec![T::zero(); arch.dim * b], Vec::new())
    };
    let parts = LossParts {
        total: lambda_rec * reconstruction + lambda_trip * triplet,
        reconstruction,
        triplet,
    };
    let grads = want_grad.then(|| {
        let mut g = vec![T::zero(); arch.n_params];
        net::backward(arch, params, &enc, &dec, d_out, d_e, &mut g);
        g
    });
    Ok((parts, grads, triplets))
}

fn mean(parts: &[LossParts]) -> LossParts {
    let n = parts.len().max(1) as f64;
    LossParts {
        total: parts.iter().map(|p| p.total).sum::<f64>() / n,
        reconstruction: parts.iter().map(|p| p.reconstruction).sum::<f64>() / n,
        triplet: parts.iter().map(|p| p.triplet).sum::<f64>() / n,
    }
}

/// Trains a fresh model from `config`.
///
/// Each epoch runs one pass of [`BatchSampler`] batches over `train` with
/// SGD plus momentum (`v = mu*v + g; theta -= lr*v`). During the first
/// `pretrain_epochs` epochs the triplet weight is zero. Validation losses use
/// the same fixed batches every epoch; pass an empty slice to skip them.
/// Execution is single-threaded and fully deterministic.
pub fn train(config: &ModelConfig, train: &[MessageRecord], validation: &[MessageRecord]) -> Result<FingerprintModel> {
    let model = FingerprintModel::new(config.clone())?;
    let arch = model.arch;
    let mut params = model.params;
    let mut sampler = BatchSampler::new(train, config.batch_seed)?;
    let val_seed = derive(&[config.batch_seed, VALIDATION_TAG]);
    let val_batches = if validation.is_empty() {
        Vec::new()
    } else {
        BatchSampler::new(validation, val_seed)?.next_epoch()
    };
    let mut velocity = vec![0.0f32; params.len()];
    let lr = config.learning_rate as f32;
    let mu = config.momentum as f32;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let lambda_trip = if epoch <= config.pretrain_epochs { 0.0 } else { config.lambda_trip };
        let batches = sampler.next_epoch();
        let mut parts = Vec::with_capacity(batches.len());
        for batch in &batches {
            let (loss, grads, _) = batch_loss(
                &arch,
                &params,
                &batch.waveforms,
                &batch.labels,
                config.margin,
                config.lambda_rec,
                lambda_trip,
                None,
                true,
            )
            .map_err(|e| match e {
                Error::DegenerateEmbedding { norm } => Error::TrainingFailure {
                    epoch,
                    reason: format!("embedding collapsed to norm {norm:e}"),
                },
                other => other,
            })?;
            let grads = grads.expect("requested");
            if !loss.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingFailure { epoch, reason: format!("non-finite loss {}", loss.total) });
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grads) {
                *v = mu * *v + g;
                *p -= lr * *v;
            }
            parts.push(loss);
        }
        let tr = mean(&parts);
        let val = if val_batches.is_empty() {
            None
        } else {
            let vp = val_batches
                .iter()
                .map(|b| {
                    batch_loss(
                        &arch,
                        &params,
                        &b.waveforms,
                        &b.labels,
                        config.margin,
                        config.lambda_rec,
                        lambda_trip,
                        None,
                        false,
                    )
                    .map(|r| r.0)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::TrainingFailure { epoch, reason: format!("validation: {e}") })?;
            Some(mean(&vp))
        };
        if let Some(v) = val {
            if !v.total.is_finite() {
                return Err(Error::TrainingFailure { epoch, reason: "non-finite validation loss".into() });
            }
        }
        let stats = EpochStats {
            epoch,
            batches: batches.len(),
            train_loss: tr.total,
            train_reconstruction: tr.reconstruction,
            train_triplet: tr.triplet,
            val_loss: val.map(|v| v.total),
            val_reconstruction: val.map(|v| v.reconstruction),
            val_triplet: val.map(|v| v.triplet),
        };
        log::info!(
            "epoch {epoch}/{}: train {:.5} (rec {:.5}, trip {:.5}){}",
            config.epochs,
            tr.total,
            tr.reconstruction,
            tr.triplet,
            val.map(|v| format!(", val {:.5}", v.total)).unwrap_or_default()
        );
        history.push(stats);
    }
    FingerprintModel::from_parts(config.clone(), params, history)
}

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Compares the analytic gradient of one batch loss with central
/// differences (step 1e-4) in f64, on a random `fraction` (at least 20) of
/// the parameters initialized from `config.init_seed`. The mined triplets
/// are held fixed while perturbing. Relative errors use a floor of 1e-7.
pub fn gradient_check(
    config: &ModelConfig,
    waveforms: &[&Waveform],
    labels: &[u32],
    fraction: f64,
    seed: u64,
) -> Result<GradientCheck> {
    config.validate()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let arch = Arch::new(config);
    let params: Vec<f64> = init_params(&arch, config.init_seed);
    let run = |p: &[f64], fixed: Option<&[Triplet]>, grad: bool| {
        batch_loss(&arch, p, waveforms, labels, config.margin, config.lambda_rec, config.lambda_trip, fixed, grad)
    };
    let (_, g, triplets) = run(&params, None, true)?;
    let g = g.expect("gradient requested");
    let fixed = (!triplets.is_empty()).then_some(triplets.as_slice());
    let n = ((arch.n_params as f64 * fraction).ceil() as usize).max(20).min(arch.n_params);
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut p = params.clone();
    for k in sample(&mut rng_from_seed(seed), arch.n_params, n) {
        p[k] = params[k] + h;
        let up = run(&p, fixed, false)?.0.total;
        p[k] = params[k] - h;
        let down = run(&p, fixed, false)?.0.total;
        p[k] = params[k];
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - g[k]).abs() / numeric.abs().max(g[k].abs()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok(GradientCheck { checked: n, max_rel_error: worst })
}
