//! Language-model training, early stopping, retraining and checkpoints.

mod adam;
mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{batch_windows, WindowBatch, DEFAULT_BATCH, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::exec;
use crate::params::Parameters;
use crate::rnn::{perplexity, CharLM, Dropout, ForwardOptions};
use crate::symbols::{EncodedSegment, SymbolSet};
use crate::tensor::cross_entropy_scaled;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch: usize,
    pub window: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Keep probability on each layer's upward output.
    pub keep_prob: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Rows per gradient shard. Shards run concurrently and are summed in a
    /// fixed order, so this (not the thread count) determines the result.
    pub shard_rows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch: DEFAULT_BATCH,
            window: DEFAULT_WINDOW,
            max_epochs: 20,
            patience: 2,
            keep_prob: 1.0,
            clip_norm: 5.0,
            seed: 1,
            shard_rows: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Usage(format!("keep probability {} not in (0, 1]", self.keep_prob)));
        }
        if self.patience == 0 {
            return Err(Error::Usage("patience must be at least 1".into()));
        }
        if self.window < 2 || self.batch == 0 || self.shard_rows == 0 {
            return Err(Error::Usage(format!(
                "window {} (≥ 2), batch {} and shard rows {} (≥ 1) out of range",
                self.window, self.batch, self.shard_rows
            )));
        }
        if !(self.adam.lr > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Usage("learning rate and clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the evaluation before any update.
    pub epoch: usize,
    /// Mean training NLL per symbol; absent for epoch 0.
    pub train_loss: Option<f64>,
    pub dev_perplexity: f64,
    /// 0 for the initial run, incremented by every retraining.
    pub stage: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Fresh,
    Continue,
}

fn shard_seed(seed: u64, step: u64, shard: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d809);
    rng.set_stream(step.wrapping_mul(1 << 16).wrapping_add(shard as u64));
    rng.random()
}

/// Loss and gradient of one batch, summed over row shards.
///
/// The gradient is scaled by `1 / valid_count`, so it is the gradient of
/// the mean loss; the returned loss is the summed NLL.
pub fn batch_gradient(
    model: &CharLM<f32>,
    batch: &WindowBatch,
    keep_prob: f64,
    shard_rows: usize,
    dropout_seed: u64,
) -> Result<(f64, CharLM<f32>)> {
    let valid = batch.valid_count();
    if valid == 0 {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / valid as f64;
    let starts: Vec<usize> = (0..batch.rows).step_by(shard_rows).collect();
    let parts = exec::map(starts, |start| -> Result<(f64, CharLM<f32>)> {
        let len = shard_rows.min(batch.rows - start);
        let shard = batch.slice_rows(start, len);
        let dropout = if keep_prob < 1.0 {
            Dropout::Keep { prob: keep_prob, seed: shard_seed(dropout_seed, 0, start) }
        } else {
            Dropout::Off
        };
        let pass = model.lm_forward(&shard.inputs, shard.rows, shard.steps, None, ForwardOptions::training(dropout))?;
        let mut targets = Vec::with_capacity(shard.inputs.len());
        let mut mask = Vec::with_capacity(shard.inputs.len());
        for t in 0..shard.steps {
            for r in 0..shard.rows {
                targets.push(shard.targets[r * shard.steps + t]);
                mask.push(shard.mask[r * shard.steps + t]);
            }
        }
        let (loss, dlogits) = cross_entropy_scaled(&pass.logits, &targets, &mask, scale)?;
        Ok((loss, model.lm_backward(&pass, &dlogits)?))
    });
    let mut total = 0.0;
    let mut grad: Option<CharLM<f32>> = None;
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        match grad.as_mut() {
            Some(acc) => acc.accumulate(&g),
            None => grad = Some(g),
        }
    }
    Ok((total, grad.expect("at least one shard")))
}

/// One clipped Adam update. Returns the mean NLL of the batch before the update.
pub fn train_step(
    model: &mut CharLM<f32>,
    adam: &mut Adam<CharLM<f32>>,
    batch: &WindowBatch,
    config: &TrainConfig,
    dropout_seed: u64,
) -> Result<f64> {
    let (loss, mut grad) = batch_gradient(model, batch, config.keep_prob, config.shard_rows, dropout_seed)?;
    let mean = loss / batch.valid_count() as f64;
    if !mean.is_finite() || !grad.all_finite() {
        return Err(Error::Numerical(format!("training loss {mean}")));
    }
    let norm = grad.global_norm();
    if norm > config.clip_norm {
        grad.scale_all((config.clip_norm / norm) as f32);
    }
    adam.update(model, &grad);
    Ok(mean)
}

fn run_training(
    start: Checkpoint,
    train: &[EncodedSegment],
    dev: &[EncodedSegment],
    config: &TrainConfig,
    phase: Phase,
) -> Result<Checkpoint> {
    config.validate()?;
    if train.iter().all(|s| s.len() < 2) {
        return Err(Error::EmptyData("no trainable windows in the training split".into()));
    }
    let stage = match phase {
        Phase::Fresh => 0,
        Phase::Continue => start.history.last().map_or(0, |r| r.stage + 1),
    };
    let mut model = start.model.clone();
    let mut adam = Adam::new(config.adam, &model);
    let mut history = start.history.clone();
    let mut best_ppl = perplexity(&model, dev)?;
    history.push(EpochRecord { epoch: 0, train_loss: None, dev_perplexity: best_ppl, stage });
    let mut best = Checkpoint {
        symbols: start.symbols.clone(),
        model: model.clone(),
        optimizer: adam.clone(),
        history: history.clone(),
    };
    let mut stale = 0;
    let mut step = 0u64;
    for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        let epoch_seed = config.seed.wrapping_add(epoch as u64).wrapping_mul(0x9e37_79b9);
        for batch in batch_windows(train, config.window, config.batch, epoch_seed) {
            let dropout_seed = shard_seed(config.seed, step, usize::MAX);
            step += 1;
            match train_step(&mut model, &mut adam, &batch, config, dropout_seed) {
                Ok(mean) => {
                    loss_sum += mean * batch.valid_count() as f64;
                    count += batch.valid_count();
                }
                Err(Error::Numerical(_)) => return Err(Error::Diverged { epoch, last_good: Some(Box::new(best)) }),
                Err(e) => return Err(e),
            }
        }
        let dev_ppl = match perplexity(&model, dev) {
            Err(Error::Numerical(_)) => return Err(Error::Diverged { epoch, last_good: Some(Box::new(best)) }),
            other => other?,
        };
        history.push(EpochRecord {
            epoch,
            train_loss: Some(loss_sum / count.max(1) as f64),
            dev_perplexity: dev_ppl,
            stage,
        });
        if dev_ppl < best_ppl {
            best_ppl = dev_ppl;
            stale = 0;
            best.model = model.clone();
            best.optimizer = adam.clone();
        } else {
            stale += 1;
        }
        best.history = history.clone();
        if stale >= config.patience {
            break;
        }
    }
    Ok(best)
}

/// Trains from the given initialization with early stopping on dev
/// perplexity and returns the best epoch's weights.
///
/// The returned history covers every evaluated epoch, including those after
/// the best one.
pub fn train_lm(
    model: CharLM<f32>,
    symbols: &SymbolSet,
    train: &[EncodedSegment],
    dev: &[EncodedSegment],
    config: &TrainConfig,
) -> Result<Checkpoint> {
    if model.vocab() != symbols.len() {
        return Err(Error::Usage(format!("model has {} symbols, symbol set has {}", model.vocab(), symbols.len())));
    }
    let optimizer = Adam::new(config.adam, &model);
    let start = Checkpoint { symbols: symbols.clone(), model, optimizer, history: Vec::new() };
    run_training(start, train, dev, config, Phase::Fresh)
}

/// Continues training a checkpoint on new data with a fresh optimizer.
pub fn retrain_lm(
    checkpoint: &Checkpoint,
    symbols: &SymbolSet,
    train: &[EncodedSegment],
    dev: &[EncodedSegment],
    config: &TrainConfig,
) -> Result<Checkpoint> {
    if &checkpoint.symbols != symbols {
        return Err(Error::IncompatibleCheckpoint(format!(
            "checkpoint symbols {:?} differ from corpus symbols {:?}",
            checkpoint.symbols.symbols().iter().collect::<String>(),
            symbols.symbols().iter().collect::<String>()
        )));
    }
    run_training(checkpoint.clone(), train, dev, config, Phase::Continue)
}
