use ndarray::{Array3, NdFloat};

use super::adam::Adam;
use super::config::TrainConfig;
use super::model::Seq2Seq;
use crate::datagen::{Batch, BatchSource};
use crate::error::{Error, Result};

/// Mean losses for one epoch (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters after the last epoch.
    pub last: Seq2Seq<F>,
    /// Parameters at the epoch with the lowest validation loss, or the lowest
    /// training loss when no validation data was given.
    pub best: Seq2Seq<F>,
    pub best_epoch: usize,
    pub history: Vec<EpochLoss>,
}

fn features<F: NdFloat>(batch: &Batch) -> Array3<F> {
    batch.encoder_input.mapv(|v| F::from(v).unwrap())
}

/// Mean batch loss over one pass of `source` without updating parameters.
pub fn evaluate_loss<F: NdFloat>(model: &Seq2Seq<F>, source: &BatchSource) -> Result<f64> {
    let mut total = 0.0;
    let mut batches = 0usize;
    for batch in source.epoch(0) {
        let batch = batch?;
        let loss = model.loss_ids(features(&batch).view(), batch.input_ids.view(), batch.target_ids.view())?;
        total += loss.to_f64().unwrap();
        batches += 1;
    }
    Ok(if batches == 0 { 0.0 } else { total / batches as f64 })
}

/// Teacher-forced Adam training, one update per batch, strictly sequential.
/// Stops with [`Error::Diverged`] at the first non-finite batch loss.
pub fn train<F: NdFloat>(
    mut model: Seq2Seq<F>,
    train_source: &BatchSource,
    val_source: Option<&BatchSource>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    if train_source.num_pairs() == 0 {
        return Err(Error::InsufficientData("no training pairs".into()));
    }
    let mut adam = Adam::new(&model.config, cfg);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Seq2Seq<F>)> = None;
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        let mut steps = 0usize;
        for batch in train_source.epoch(epoch - 1) {
            let batch = batch?;
            steps += 1;
            let (loss, grads) =
                model.loss_and_grads(features(&batch).view(), batch.input_ids.view(), batch.target_ids.view())?;
            let loss = loss.to_f64().unwrap();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step: steps });
            }
            adam.update(&mut model.params, &grads);
            total += loss;
        }
        let train_loss = total / steps as f64;
        let val_loss = val_source
            .filter(|v| v.num_pairs() > 0)
            .map(|v| evaluate_loss(&model, v))
            .transpose()?;
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.4}{}",
            cfg.epochs,
            val_loss.map(|v| format!(", val loss {v:.4}")).unwrap_or_default()
        );
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.clone()));
        }
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        last: model,
        best,
        best_epoch,
        history,
    })
}
