//! The four architectures: the reliability-producing classification network
//! and its regression, binary and DeepMF baselines.

pub mod checkpoint;
pub mod config;
pub mod graph;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{ModelKind, RegressionTrunk, TrainConfig};
pub use graph::{clamp_score, Body, ModelGraph};
pub use train::{evaluate_loss, fit, train_epoch, EpochStats, TrainHistory};

use crate::dataset::Interaction;
use crate::engine::{gradient_check, GradCheckReport, Mode};
use crate::error::Result;
use crate::rng::{self, Stream};

/// Finite-difference check of a whole model on `batch`. Dropout masks are
/// redrawn from `dropout_seed` on every evaluation, so they stay fixed
/// across probes. Also returns the smallest relu pre-activation magnitude
/// seen at the probe point.
pub fn gradient_check_model(
    model: &mut ModelGraph,
    batch: &[Interaction],
    dropout_seed: u64,
    h: f64,
) -> Result<(GradCheckReport, Option<f64>)> {
    let users: Vec<usize> = batch.iter().map(|x| x.user).collect();
    let items: Vec<usize> = batch.iter().map(|x| x.item).collect();
    let ratings: Vec<u8> = batch.iter().map(|x| x.rating).collect();
    model.forward_train(&users, &items, Mode::Train, &mut rng::stream(dropout_seed, Stream::Dropout))?;
    let margin = model.min_relu_margin();
    let report = gradient_check(
        model,
        |m, backward| {
            let mut rng = rng::stream(dropout_seed, Stream::Dropout);
            let out = m.forward_train(&users, &items, Mode::Train, &mut rng)?;
            let (loss, grad) = m.loss(&out, &ratings)?;
            if backward {
                m.backward(&grad)?;
            }
            Ok(loss)
        },
        h,
    )?;
    Ok((report, margin))
}
