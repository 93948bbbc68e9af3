use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::ModelKind;
use super::graph::ModelGraph;
use crate::dataset::{Interaction, SplitDataset};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    /// Accuracy for classification/binary, MAE for regression/deepmf.
    pub test_metric: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// `epoch,train_loss,test_loss,test_metric,seconds`, one row per epoch.
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,test_loss,test_metric,seconds")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{:.3}",
                e.epoch,
                e.train_loss,
                opt(e.test_loss),
                opt(e.test_metric),
                e.seconds
            )?;
        }
        Ok(())
    }
}

/// One pass over `data` in mini-batches, one optimizer step per batch.
/// Returns the mean per-sample training loss.
pub fn train_epoch<S: Rng + ?Sized, D: Rng + ?Sized>(
    model: &mut ModelGraph,
    data: &[Interaction],
    batch_size: usize,
    shuffle: bool,
    shuffle_rng: &mut S,
    dropout_rng: &mut D,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training data".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut order: Vec<Interaction> = data.to_vec();
    if shuffle {
        order.shuffle(shuffle_rng);
    }
    let mut total = 0.0;
    for batch in order.chunks(batch_size) {
        let loss = model.accumulate_gradients(batch, dropout_rng)?;
        model.optimizer_step();
        total += loss * batch.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Inference-mode loss and metric on `data`.
pub fn evaluate_loss(model: &ModelGraph, data: &[Interaction]) -> Result<Option<(f64, f64)>> {
    if data.is_empty() {
        return Ok(None);
    }
    const CHUNK: usize = 4096;
    let mut loss_sum = 0.0;
    let mut metric_sum = 0.0;
    for chunk in data.chunks(CHUNK) {
        let users: Vec<usize> = chunk.iter().map(|x| x.user).collect();
        let items: Vec<usize> = chunk.iter().map(|x| x.item).collect();
        let ratings: Vec<u8> = chunk.iter().map(|x| x.rating).collect();
        let out = model.infer(&users, &items)?;
        let (loss, _) = model.loss(&out, &ratings)?;
        loss_sum += loss * chunk.len() as f64;
        for (r, &rating) in ratings.iter().enumerate() {
            let row = out.row(r);
            metric_sum += match model.kind {
                ModelKind::Classification => {
                    let pair = crate::reliability::ClassDistribution::new(row.to_vec())?.to_pair();
                    f64::from(u8::from(pair.rating == rating))
                }
                ModelKind::Binary => {
                    let relevant = rating >= model.theta.unwrap_or(model.v_max);
                    f64::from(u8::from((row[0] >= 0.5) == relevant))
                }
                ModelKind::Regression | ModelKind::DeepMf => {
                    (super::graph::clamp_score(row[0], model.v_max) - f64::from(rating)).abs()
                }
            };
        }
    }
    let n = data.len() as f64;
    Ok(Some((loss_sum / n, metric_sum / n)))
}

/// Trains for `model.config.epochs` epochs, scoring the test partition after each.
pub fn fit(model: &mut ModelGraph, split: &SplitDataset) -> Result<TrainHistory> {
    let cfg = model.config.clone();
    let mut shuffle_rng = rng::stream(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = rng::stream(cfg.seed, Stream::Dropout);
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let train_loss = train_epoch(
            model,
            &split.train,
            cfg.batch_size,
            cfg.shuffle,
            &mut shuffle_rng,
            &mut dropout_rng,
        )?;
        let eval = evaluate_loss(model, &split.test)?;
        let stats = EpochStats {
            epoch,
            train_loss,
            test_loss: eval.map(|e| e.0),
            test_metric: eval.map(|e| e.1),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "{} epoch {epoch}: train {:.4} test {:?} metric {:?}",
            model.kind,
            stats.train_loss,
            stats.test_loss,
            stats.test_metric
        );
        history.epochs.push(stats);
    }
    Ok(history)
}
