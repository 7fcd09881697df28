use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::aba::Abaf;
use crate::metrics::{best_threshold, NodeMetrics};

use super::loss::{class_weights, loss_gradient, weighted_bce, ClassWeights};
use super::model::Dropout;
use super::{GraphInput, Model, ModelConfig, NnError, Params, Scalar};

/// One labelled graph: the network input and a label per assumption node.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub input: GraphInput<T>,
    pub labels: Vec<bool>,
}

impl<T: Scalar> Sample<T> {
    /// `labels` follow `abaf.assumptions()`.
    pub fn new(abaf: &Abaf, labels: Vec<bool>) -> Result<Self, NnError> {
        let input = GraphInput::from_abaf(abaf);
        if labels.len() != input.num_assumptions() {
            return Err(NnError::ShapeMismatch(format!(
                "{} labels for {} assumptions",
                labels.len(),
                input.num_assumptions()
            )));
        }
        Ok(Sample { input, labels })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` whose parameters were kept.
    pub best_epoch: usize,
    pub class_weights: ClassWeights,
    pub threshold: f64,
    pub validation: NodeMetrics,
}

impl TrainReport {
    pub fn best_validation_loss(&self) -> f64 {
        self.epochs[self.best_epoch].validation_loss
    }
}

const DROPOUT_STREAM: u64 = 0xd20f;

fn dropout_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DROPOUT_STREAM);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

fn graph_loss<T: Scalar>(
    model: &Model<T>,
    sample: &Sample<T>,
    weights: ClassWeights,
    dropout: Dropout<'_, T>,
) -> Result<(T, Params<T>), NnError> {
    let out = model.forward(&sample.input, dropout)?;
    let a = sample.input.num_assumptions();
    let probs = &out.probs[..a];
    let loss = weighted_bce(probs, &sample.labels, weights)?;
    let mut upstream = loss_gradient(probs, &sample.labels, weights);
    upstream.resize(sample.input.num_nodes(), T::zero());
    Ok((loss, model.backward(&sample.input, &out.trace, &upstream)))
}

/// Summed loss and gradient of a batch. Each graph contributes its mean
/// assumption loss; per-graph gradients run in parallel and are added in batch
/// order. `dropout` gives `(epoch, position of the first sample)` for seeding
/// masks; `None` runs without dropout.
pub fn batch_gradient<T: Scalar>(
    model: &Model<T>,
    batch: &[&Sample<T>],
    weights: ClassWeights,
    dropout: Option<(usize, usize)>,
) -> Result<(T, Params<T>), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let parts: Vec<Result<(T, Params<T>), NnError>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, s)| match dropout {
            Some((epoch, base)) => {
                let mut rng = dropout_rng(model.config.seed, epoch, base + i);
                graph_loss(model, s, weights, Dropout::Sample(&mut rng))
            }
            None => graph_loss(model, s, weights, Dropout::Off),
        })
        .collect();
    let mut total = T::zero();
    let mut grads = model.params.zeros_like();
    for part in parts {
        let (l, g) = part?;
        total += l;
        grads.add_assign(&g);
    }
    Ok((total, grads))
}

/// Mean per-graph loss and the assumption probabilities of every sample, in
/// inference mode.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    samples: &[Sample<T>],
    weights: ClassWeights,
) -> Result<(f64, Vec<Vec<f64>>), NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let parts: Vec<Result<(f64, Vec<f64>), NnError>> = samples
        .par_iter()
        .map(|s| {
            let out = model.forward(&s.input, Dropout::Off)?;
            let probs = &out.probs[..s.input.num_assumptions()];
            let loss = weighted_bce(probs, &s.labels, weights)?;
            Ok((loss.f64(), probs.iter().map(|p| p.f64()).collect()))
        })
        .collect();
    let mut total = 0.0;
    let mut probs = Vec::with_capacity(samples.len());
    for part in parts {
        let (l, p) = part?;
        total += l;
        probs.push(p);
    }
    Ok((total / samples.len() as f64, probs))
}

/// Threshold from `{0.05, 0.10, ..., 0.95}` maximising pooled F1; ties keep the lowest.
pub fn tune_threshold<T: Scalar>(probs: &[Vec<f64>], samples: &[Sample<T>]) -> (f64, NodeMetrics) {
    best_threshold(probs.iter().zip(samples).map(|(p, s)| (&p[..], &s.labels[..])))
}

/// Adam over shuffled mini-batches of graphs with early stopping on validation
/// loss, then threshold tuning on the validation set.
pub fn train<T: Scalar>(
    train: &[Sample<T>],
    validation: &[Sample<T>],
    config: ModelConfig,
) -> Result<(Model<T>, TrainReport), NnError> {
    if validation.is_empty() {
        return Err(NnError::NoValidationData);
    }
    if train.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut model = Model::<T>::new(config)?;
    let cfg = model.config.clone();
    let weights = class_weights(train.iter().map(|s| &s.labels[..]), cfg.class_weight_multiplier);
    let mut adam = super::Adam::new(&model.params, cfg.learn_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Params<T>)> = None;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut train_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample<T>> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_gradient(&model, &batch, weights, Some((epoch, b * cfg.batch_size)))?;
            if !grads.is_finite() {
                return Err(NnError::NonFinite(format!("gradients in epoch {epoch}")));
            }
            train_loss += loss.f64();
            adam.step(&mut model.params, &grads);
        }
        let (validation_loss, _) = evaluate(&model, validation, weights)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: train_loss / train.len() as f64,
            validation_loss,
        });
        match &best {
            Some((_, b, _)) if validation_loss >= *b => {}
            _ => best = Some((epoch, validation_loss, model.params.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let best_epoch = match best {
        Some((e, _, params)) => {
            model.params = params;
            e
        }
        None => 0,
    };
    let report_epochs = if epochs.is_empty() {
        let (validation_loss, _) = evaluate(&model, validation, weights)?;
        vec![EpochRecord {
            epoch: 0,
            train_loss: 0.0,
            validation_loss,
        }]
    } else {
        epochs
    };
    let (_, probs) = evaluate(&model, validation, weights)?;
    let (threshold, metrics) = tune_threshold(&probs, validation);
    model.config.threshold = threshold;
    Ok((
        model,
        TrainReport {
            epochs: report_epochs,
            best_epoch,
            class_weights: weights,
            threshold,
            validation: metrics,
        },
    ))
}
