//! Optimization loop, evaluation and patch-to-image voting.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{log_sum_exp, Tape};
use crate::error::{Error, Result};
use crate::graph::{CellGraph, NormalizationStats};
use crate::model::{argmax, Mode, Model, ModelConfig};
use crate::optim::{adam_step, AdamConfig};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrStep {
    /// First epoch at which `lr` applies.
    pub epoch: usize,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Piecewise-constant learning rate, by starting epoch.
    pub lr_schedule: Vec<LrStep>,
    pub weight_decay: f64,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 40,
            lr_schedule: vec![
                LrStep { epoch: 0, lr: 1e-3 },
                LrStep { epoch: 10, lr: 1e-4 },
                LrStep { epoch: 20, lr: 1e-5 },
            ],
            weight_decay: 1e-4,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("train config: {msg}")));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        match self.lr_schedule.first() {
            Some(s) if s.epoch == 0 => {}
            _ => return bad("lr_schedule must start at epoch 0".into()),
        }
        if self.lr_schedule.windows(2).any(|w| w[1].epoch <= w[0].epoch) {
            return bad("lr_schedule epochs must strictly increase".into());
        }
        if self.lr_schedule.iter().any(|s| !(s.lr >= 0.0 && s.lr.is_finite())) {
            return bad("learning rates must be finite and non-negative".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative".into());
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam needs 0 <= beta < 1 and eps > 0".into());
        }
        Ok(())
    }
}

/// Learning rate in effect during `epoch`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::invalid(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    cfg.lr_schedule
        .iter()
        .rev()
        .find(|s| s.epoch <= epoch)
        .map(|s| s.lr)
        .ok_or_else(|| Error::invalid("lr_schedule must start at epoch 0"))
}

/// `-log softmax(logits)[label]` for a single row of logits.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<f64> {
    if logits.rows() != 1 || label >= logits.cols() {
        return Err(Error::invalid(format!(
            "label {label} invalid for logits of shape {:?}",
            logits.shape()
        )));
    }
    Ok(log_sum_exp(logits.row(0)) - logits.get(0, label))
}

/// One line of the epoch log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
}

/// A labeled graph with its normalized model inputs.
pub struct Prepared<'a> {
    pub graph: &'a CellGraph,
    pub x: Tensor,
    pub label: usize,
}

pub fn prepare<'a>(
    graphs: &'a [CellGraph],
    stats: &NormalizationStats,
    model: &ModelConfig,
) -> Result<Vec<Prepared<'a>>> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let label = g
                .label
                .ok_or_else(|| Error::invalid(format!("graph {i} has no label")))?
                .index();
            if label >= model.n_classes {
                return Err(Error::invalid(format!("graph {i}: label {label} out of range")));
            }
            Ok(Prepared {
                graph: g,
                x: stats.apply(g, model.features),
                label,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
}

/// Clears the gradients and accumulates the gradient of the mean loss over
/// `batch`, one graph at a time. Dropout is active when `dropout_rng` is set.
pub fn accumulate_batch(
    model: &mut Model,
    batch: &[&Prepared<'_>],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<BatchStats> {
    model.params_mut().zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut stats = BatchStats::default();
    for item in batch {
        let mut tape = Tape::new();
        let mode = match dropout_rng.as_deref_mut() {
            Some(rng) => Mode::Train(rng),
            None => Mode::Eval,
        };
        let out = model.forward(&mut tape, &item.x, item.graph, mode)?;
        let loss = tape.cross_entropy(out.logits, item.label)?;
        stats.loss_sum += tape.value(loss).get(0, 0);
        if argmax(tape.value(out.logits).row(0)) == item.label {
            stats.correct += 1;
        }
        tape.backward_scaled(loss, model.params_mut(), scale)?;
    }
    Ok(stats)
}

pub struct TrainOutcome {
    pub model: Model,
    pub stats: NormalizationStats,
    pub reports: Vec<EpochReport>,
}

/// Trains a fresh model on `train_set`. Normalization statistics are fitted
/// on `train_set` only; `val_set` may be empty. `on_epoch` sees every report
/// as soon as its epoch finishes.
pub fn train(
    train_set: &[CellGraph],
    val_set: &[CellGraph],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let stats = NormalizationStats::fit(train_set)?;
    let mut model = Model::new(model_cfg.clone(), cfg.seed)?;
    let items = prepare(train_set, &stats, model_cfg)?;
    let val_items = prepare(val_set, &stats, model_cfg)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = lr_at(epoch, cfg)?;
        order.shuffle(&mut shuffle_rng);
        let mut total = BatchStats::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &items[i]).collect();
            let s = accumulate_batch(&mut model, &batch, Some(&mut dropout_rng)).map_err(|e| match e {
                Error::NonFinite(op) => Error::Diverged {
                    epoch,
                    batch: b,
                    detail: format!("non-finite value from {op}"),
                },
                other => other,
            })?;
            if !s.loss_sum.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: "non-finite loss".into(),
                });
            }
            total.loss_sum += s.loss_sum;
            total.correct += s.correct;
            adam_step(model.params_mut(), lr, &cfg.adam, cfg.weight_decay);
        }
        let val_acc = if val_items.is_empty() {
            None
        } else {
            Some(evaluate_prepared(&model, &val_items)?.accuracy)
        };
        let report = EpochReport {
            epoch,
            loss: total.loss_sum / items.len() as f64,
            train_acc: total.correct as f64 / items.len() as f64,
            val_acc,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&report);
        reports.push(report);
    }
    Ok(TrainOutcome { model, stats, reports })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
}

fn evaluate_prepared(model: &Model, items: &[Prepared<'_>]) -> Result<Evaluation> {
    let k = model.config().n_classes;
    let mut confusion = vec![vec![0; k]; k];
    let mut predictions = Vec::with_capacity(items.len());
    for item in items {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &item.x, item.graph, Mode::Eval)?;
        let pred = argmax(tape.value(out.logits).row(0));
        confusion[item.label][pred] += 1;
        predictions.push(pred);
    }
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / items.len().max(1) as f64,
        confusion,
        predictions,
    })
}

/// Eval-mode accuracy and confusion matrix over labeled graphs.
pub fn evaluate(model: &Model, stats: &NormalizationStats, graphs: &[CellGraph]) -> Result<Evaluation> {
    if graphs.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    evaluate_prepared(model, &prepare(graphs, stats, model.config())?)
}

/// Most frequent class; ties go to the lowest class index.
pub fn majority_vote(predictions: &[usize]) -> Result<usize> {
    let Some(&max) = predictions.iter().max() else {
        return Err(Error::invalid("majority vote over no predictions"));
    };
    let mut counts = vec![0usize; max + 1];
    for &p in predictions {
        counts[p] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    Ok(best)
}
