use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::{batch_from_points, epoch_batches, PatchBatch};
use super::config::TrainConfig;
use super::optim::{sgd_step, OptimState};
use crate::data::PatchDataset;
use crate::error::{Error, Result};
use crate::eval::{describe_dataset, model_fpr95};
use crate::mining::{
    cpr_penalty, distance_matrix, hardest_in_batch, hardest_negative_table, paired_distance, random_negatives,
    LossKind, SamplingStrategy,
};
use crate::model::{prepare_batch, ArchitectureSpec, DescriptorModel, Patch};
use crate::nn::LayerMode;
use crate::tensor::{Element, Graph};

/// Independent rng streams derived from the run seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum RngStream {
    Init = 0,
    Sampling = 1,
    Dropout = 2,
    Mining = 3,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

impl TrainConfig {
    /// Fresh orthogonally initialized model with this config's dropout rate,
    /// seeded from the run seed.
    pub fn init_model<T: Element>(&self, spec: ArchitectureSpec) -> Result<DescriptorModel<T>> {
        DescriptorModel::build(spec, self.dropout_rate, &mut stream_rng(self.seed, RngStream::Init))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Share of triplets with an active hinge (see [`active_fraction`]).
    pub active_fraction: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub seconds: f64,
    pub validation_fpr95: Option<f64>,
}

impl TrainStats {
    /// `epoch mean_loss active_fraction lr seconds`
    pub fn log_line(&self) -> String {
        format!(
            "{} {:.6} {:.4} {:.6e} {:.3}",
            self.epoch, self.mean_loss, self.active_fraction, self.lr, self.seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestSnapshot<T> {
    pub epoch: usize,
    pub fpr95: f64,
    pub model: DescriptorModel<T>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: DescriptorModel<T>,
    pub history: Vec<TrainStats>,
    /// Lowest validation FPR95 seen, when a validation set was given.
    pub best: Option<BestSnapshot<T>>,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Held-out points scored after every epoch.
    pub validation: Option<&'a PatchDataset>,
    pub validation_seed: u64,
    pub run_log: Option<&'a mut dyn Write>,
}

/// Triplets counted as active: `m + d_pos − d_neg > 0` for triplet margin,
/// `m − d_neg > 0` for contrastive, `d_neg ≤ d_pos` for softmin.
pub fn active_fraction(kind: LossKind, margin: f64, d_pos: &[f64], d_neg: &[f64]) -> f64 {
    if d_pos.is_empty() {
        return 0.0;
    }
    let active = d_pos
        .iter()
        .zip(d_neg)
        .filter(|&(&p, &n)| match kind {
            LossKind::TripletMargin => margin + p - n > 0.0,
            LossKind::Contrastive => margin - n > 0.0,
            LossKind::Softmin => n <= p,
        })
        .count();
    active as f64 / d_pos.len() as f64
}

/// Index of the closest patch of a different point, for every patch, using
/// inference-mode descriptors.
pub fn epoch_hard_negatives<T: Element>(model: &DescriptorModel<T>, dataset: &PatchDataset) -> Result<Vec<usize>> {
    hardest_negative_table(&describe_dataset(model, dataset)?, &dataset.point_ids())
}

struct StepResult {
    loss: f64,
    d_pos: Vec<f64>,
    d_neg: Vec<f64>,
}

fn to_f64s<T: Element>(g: &Graph<T>, v: crate::tensor::Var) -> Vec<f64> {
    g.value(v).data().iter().map(|x| x.as_f64()).collect()
}

fn train_step<T: Element>(
    model: &mut DescriptorModel<T>,
    batch: &PatchBatch,
    negatives: Option<&[&Patch]>,
    config: &TrainConfig,
    state: &mut OptimState<T>,
    dropout_rng: &mut ChaCha8Rng,
    mining_rng: &mut ChaCha8Rng,
) -> Result<(StepResult, f64)> {
    let n = batch.len();
    let mut refs: Vec<&Patch> = batch.anchors.iter().chain(&batch.positives).collect();
    if let Some(neg) = negatives {
        refs.extend_from_slice(neg);
    }
    let x = prepare_batch::<T>(&refs, model.input_size())?;

    let mut g = Graph::new();
    let params = model.register_params(&mut g);
    let xv = g.constant(x);
    let fwd = model.forward(&mut g, xv, &params, LayerMode::Training, dropout_rng)?;
    if !g.value(fwd.output).all_finite() {
        return Err(Error::Divergence(format!(
            "step {} produced non-finite descriptors",
            state.step
        )));
    }
    let a = g.slice_rows(fwd.output, 0, n)?;
    let p = g.slice_rows(fwd.output, n, 2 * n)?;

    let (loss, d_pos, d_neg) = match config.sampling {
        SamplingStrategy::HardestInBatch | SamplingStrategy::RandomInBatch => {
            let d = distance_matrix(&mut g, a, p)?;
            let sel = if config.sampling == SamplingStrategy::HardestInBatch {
                hardest_in_batch(g.value(d))?
            } else {
                random_negatives(g.value(d), mining_rng)?
            };
            let loss = config.loss.from_selections(&mut g, d, &sel)?;
            (
                loss,
                sel.iter().map(|s| s.d_pos).collect(),
                sel.iter().map(|s| s.d_neg).collect(),
            )
        }
        SamplingStrategy::EpochHardMining => {
            let neg = g.slice_rows(fwd.output, 2 * n, 3 * n)?;
            let dp = paired_distance(&mut g, a, p)?;
            let dn = paired_distance(&mut g, a, neg)?;
            let loss = config.loss.from_distances(&mut g, dp, dn)?;
            (loss, to_f64s(&g, dp), to_f64s(&g, dn))
        }
    };
    let total = if config.loss.cpr_weight > 0.0 {
        let ap = g.slice_rows(fwd.output, 0, 2 * n)?;
        let c = cpr_penalty(&mut g, ap)?;
        let weighted = g.affine(c, config.loss.cpr_weight, 0.0);
        g.add(loss, weighted)?
    } else {
        loss
    };
    let value = g.value(total).item()?.as_f64();
    if !value.is_finite() {
        return Err(Error::Divergence(format!("step {} produced loss {value}", state.step)));
    }
    g.backward(total)?;
    let grads: Vec<_> = params.iter().map(|&v| g.grad(v).cloned()).collect();
    let lr = sgd_step(model, &grads, state, config)?;
    model.apply_batch_stats(&fwd.batch_stats)?;
    Ok((
        StepResult {
            loss: value,
            d_pos,
            d_neg,
        },
        lr,
    ))
}

/// Runs `epochs × ⌊points / n⌋` SGD steps. Each step describes the batch's
/// anchors and positives (and, for epoch mining, their negatives) in one
/// training-mode pass, mines, applies the loss and updates the model.
pub fn train<T: Element>(
    mut model: DescriptorModel<T>,
    dataset: &PatchDataset,
    config: &TrainConfig,
    mut options: TrainOptions<'_>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let n = config.batch_size;
    let points = dataset.trainable_points().len();
    if points < n {
        return Err(Error::DatasetTooSmall(format!(
            "batch of {n} needs {n} points with two patches, dataset has {points}"
        )));
    }
    let mut state = OptimState::new(&model, config.total_steps(points));
    let mut sampling_rng = stream_rng(config.seed, RngStream::Sampling);
    let mut dropout_rng = stream_rng(config.seed, RngStream::Dropout);
    let mut mining_rng = stream_rng(config.seed, RngStream::Mining);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<BestSnapshot<T>> = None;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let table = match config.sampling {
            SamplingStrategy::EpochHardMining => Some(epoch_hard_negatives(&model, dataset)?),
            _ => None,
        };
        let (mut loss_sum, mut active_sum, mut lr) = (0.0, 0.0, 0.0);
        let batches = epoch_batches(dataset, n, &mut sampling_rng)?;
        for points in &batches {
            let batch = batch_from_points(dataset, points, config.augment, &mut sampling_rng)?;
            let negatives: Option<Vec<&Patch>> = table
                .as_ref()
                .map(|t| batch.anchor_indices.iter().map(|&i| dataset.patch(t[i])).collect());
            let (step, step_lr) = train_step(
                &mut model,
                &batch,
                negatives.as_deref(),
                config,
                &mut state,
                &mut dropout_rng,
                &mut mining_rng,
            )
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}: {msg}")),
                other => other,
            })?;
            loss_sum += step.loss;
            active_sum += active_fraction(config.loss.kind, config.loss.margin, &step.d_pos, &step.d_neg);
            lr = step_lr;
        }
        let steps = batches.len() as f64;
        let mean_loss = loss_sum / steps;
        if !mean_loss.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: mean loss {mean_loss}")));
        }
        let validation_fpr95 = match options.validation {
            Some(v) => Some(model_fpr95(&model, v, options.validation_seed)?),
            None => None,
        };
        let stats = TrainStats {
            epoch,
            mean_loss,
            active_fraction: active_sum / steps,
            lr,
            seconds: start.elapsed().as_secs_f64(),
            validation_fpr95,
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4}, active {:.3}, lr {:.4}, {:.1}s{}",
            config.epochs,
            stats.mean_loss,
            stats.active_fraction,
            stats.lr,
            stats.seconds,
            validation_fpr95
                .map(|f| format!(", val fpr95 {f:.4}"))
                .unwrap_or_default()
        );
        if let Some(w) = options.run_log.as_mut() {
            writeln!(w, "{}", stats.log_line())?;
        }
        if let Some(f) = validation_fpr95 {
            if best.as_ref().is_none_or(|b| f < b.fpr95) {
                best = Some(BestSnapshot {
                    epoch,
                    fpr95: f,
                    model: model.clone(),
                });
            }
        }
        history.push(stats);
    }
    Ok(TrainOutcome { model, history, best })
}
