use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::batching::{make_batches, split_long_sentences};
use super::optimizer::{Optimizer, OptimizerConfig};
use crate::corpus::{AnnotatedSentence, DatasetSplit, EntityType, SplitSizes, Tag};
use crate::error::{Error, Result};
use crate::evaluation::{score_tag_output, EvalReport};
use crate::network::{Model, ModelConfig};
use crate::numerics::{clip_store_grads, Gradients};
use crate::par::{map_ordered, Execution};
use crate::rng::DetRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation macro-F1 improvement before stopping;
    /// 0 disables early stopping.
    pub patience: usize,
    pub clip_norm: f64,
    /// Stop as soon as validation macro-F1 reaches this value.
    pub target_validation_f1: Option<f64>,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            clip_norm: 1.0,
            target_validation_f1: None,
            seed: 1,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("train.clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub updates: u64,
    pub validation_macro_f1: f64,
    pub validation_micro_f1: f64,
    pub validation_f1_by_type: BTreeMap<EntityType, f64>,
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainStatus {
    Completed { reason: StopReason },
    Diverged { epoch: usize, batch: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    TargetReached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub split_sizes: SplitSizes,
    /// Training/validation sentences cut to fit `max_word_length`.
    pub long_sentences_split: usize,
    pub parameter_count: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation_f1: Option<f64>,
    pub status: TrainStatus,
    pub test: Option<EvalReport>,
}

impl TrainReport {
    pub fn diverged(&self) -> bool {
        matches!(self.status, TrainStatus::Diverged { .. })
    }

    /// One JSON object per epoch, newline-terminated.
    pub fn epoch_log(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Viterbi tags for a sentence of any length; inputs longer than the model's
/// `max_word_length` are decoded in consecutive chunks.
pub fn predict_tags(model: &Model, words: &[&str]) -> Result<Vec<Tag>> {
    if words.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(words.len());
    for chunk in words.chunks(model.config.max_word_length) {
        out.extend(model.predict(chunk)?);
    }
    Ok(out)
}

pub fn predict_corpus(model: &Model, sentences: &[AnnotatedSentence], exec: Execution) -> Result<Vec<Vec<Tag>>> {
    map_ordered(exec, sentences, |_, s| {
        let words: Vec<&str> = s.tokens.iter().map(|t| t.text.as_str()).collect();
        predict_tags(model, &words)
    })
    .into_iter()
    .collect()
}

pub fn evaluate_model(model: &Model, sentences: &[AnnotatedSentence], exec: Execution) -> Result<EvalReport> {
    let predicted = predict_corpus(model, sentences, exec)?;
    let gold: Vec<Vec<Tag>> = sentences.iter().map(|s| s.tags.clone()).collect();
    score_tag_output(&gold, &predicted)
}

/// Mean loss and mean gradient over `batch` members, reduced in member order.
pub fn batch_gradients(
    model: &Model,
    sentences: &[AnnotatedSentence],
    members: &[usize],
    exec: Execution,
    rng: &DetRng,
) -> Result<(f64, Gradients)> {
    let results = map_ordered(exec, members, |pos, &i| {
        let s = &sentences[i];
        let words: Vec<&str> = s.tokens.iter().map(|t| t.text.as_str()).collect();
        let mut r = rng.split(pos as u64);
        model.loss_and_grads(&words, &s.tags, true, &mut r)
    });
    let mut total = Gradients::new(model.params.len());
    let mut loss = 0.0;
    for r in results {
        let (l, g) = r?;
        loss += l;
        total.merge(&g);
    }
    let n = members.len().max(1) as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

pub fn train(model: &mut Model, split: &DatasetSplit, tc: &TrainConfig, oc: &OptimizerConfig) -> Result<TrainReport> {
    train_with_observer(model, split, tc, oc, &mut |_| {})
}

/// Mini-batch training with clipping, per-epoch validation and early
/// stopping. The best-validation parameters are restored before returning.
pub fn train_with_observer(
    model: &mut Model,
    split: &DatasetSplit,
    tc: &TrainConfig,
    oc: &OptimizerConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainReport> {
    tc.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let max_len = model.config.max_word_length;
    let (train_set, cut_train) = split_long_sentences(&split.train, max_len);
    let (val_set, cut_val) = split_long_sentences(&split.validation, max_len);
    let monitor: &[AnnotatedSentence] = if val_set.is_empty() { &train_set } else { &val_set };

    let mut optimizer = Optimizer::new(oc.clone(), &model.params)?;
    let root = DetRng::new(tc.seed).split_named("train");
    let exec = tc.execution;

    let mut report = TrainReport {
        model: model.config.clone(),
        train: tc.clone(),
        optimizer: oc.clone(),
        seed: tc.seed,
        split_sizes: split.sizes(),
        long_sentences_split: cut_train + cut_val,
        parameter_count: model.params.iter().filter(|(_, p)| p.trainable).map(|(_, p)| p.value.len()).sum(),
        epochs: Vec::new(),
        best_epoch: None,
        best_validation_f1: None,
        status: TrainStatus::Completed {
            reason: StopReason::MaxEpochs,
        },
        test: None,
    };

    let mut best: Option<(f64, Vec<crate::numerics::Tensor>)> = None;
    let mut stale = 0;
    'epochs: for epoch in 1..=tc.max_epochs {
        let epoch_rng = root.split(epoch as u64);
        let batches = make_batches(&train_set, tc.batch_size, &mut epoch_rng.split_named("shuffle"));
        let dropout_rng = epoch_rng.split_named("dropout");
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let step = batch_gradients(model, &train_set, &batch.indices, exec, &dropout_rng.split(b as u64));
            let (loss, grads) = match step {
                Ok(x) => x,
                Err(Error::Numeric(message)) => {
                    report.status = TrainStatus::Diverged { epoch, batch: b, message };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || !grads.all_finite() {
                report.status = TrainStatus::Diverged {
                    epoch,
                    batch: b,
                    message: format!("loss {loss} or its gradient is not finite"),
                };
                break 'epochs;
            }
            model.params.zero_grads();
            model.params.accumulate(&grads);
            clip_store_grads(&mut model.params, tc.clip_norm)?;
            if let Err(Error::Numeric(message)) = optimizer.step(&mut model.params) {
                report.status = TrainStatus::Diverged { epoch, batch: b, message };
                break 'epochs;
            }
            loss_sum += loss;
        }

        let eval = evaluate_model(model, monitor, exec)?;
        let f1 = eval.macro_f1;
        let improved = best.as_ref().is_none_or(|(b, _)| f1 > *b);
        if improved {
            best = Some((f1, model.params.values_snapshot()));
            report.best_epoch = Some(epoch);
            report.best_validation_f1 = Some(f1);
            stale = 0;
        } else {
            stale += 1;
        }
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / batches.len().max(1) as f64,
            updates: optimizer.steps(),
            validation_macro_f1: f1,
            validation_micro_f1: eval.micro.f1,
            validation_f1_by_type: eval.per_type.iter().map(|(t, s)| (*t, s.f1)).collect(),
            improved,
        };
        observer(&record);
        report.epochs.push(record);

        if tc.target_validation_f1.is_some_and(|t| f1 >= t) {
            report.status = TrainStatus::Completed {
                reason: StopReason::TargetReached,
            };
            break;
        }
        if tc.patience > 0 && stale >= tc.patience {
            report.status = TrainStatus::Completed {
                reason: StopReason::Patience,
            };
            break;
        }
    }

    if let Some((_, values)) = &best {
        model.params.restore_values(values);
    }
    model.params.zero_grads();
    if !split.test.is_empty() && !report.diverged() {
        report.test = Some(evaluate_model(model, &split.test, exec)?);
    }
    Ok(report)
}
