//! Mini-batch training with adaptive-moment updates and early stopping on
//! a held-back slice of the training trials.

use super::{
    forward, loss_and_gradients, AdamState, CnnModel, CnnSpec, Mode, NnError, TrainConfig,
};
use crate::data::{ClassLabel, EpochSet};
use crate::rng::{ns, stream_id, stream_rng};
use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub holdback_loss: f64,
    pub holdback_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters the returned model carries.
    pub best_epoch: usize,
    /// Training hit a non-finite loss and stopped at the last finite state.
    pub diverged: bool,
}

/// Train a model on the given trials. Deterministic for a fixed seed:
/// initialization, the holdback split, and batch order all come from
/// dedicated streams of `cfg.seed`. Returns the parameter state with the
/// best holdback loss seen, frozen in inference mode.
pub fn train_cnn(
    spec: &CnnSpec,
    train: &EpochSet,
    cfg: &TrainConfig,
) -> Result<(CnnModel, TrainHistory), NnError> {
    let n = train.n_trials();
    if n < cfg.batch_size || cfg.batch_size == 0 {
        return Err(NnError::InvalidConfig(format!(
            "{n} trials for batch size {}",
            cfg.batch_size
        )));
    }
    let classes = train.class_set();
    if classes.len() < 2 {
        return Err(NnError::InvalidConfig("fewer than 2 classes".into()));
    }
    if classes.len() != spec.n_classes {
        return Err(NnError::InvalidConfig(format!(
            "{} classes in the data, spec head has {}",
            classes.len(),
            spec.n_classes
        )));
    }
    if !(cfg.learning_rate >= 0.0) || cfg.max_epochs == 0 {
        return Err(NnError::InvalidConfig(
            "learning rate must be ≥ 0 and max_epochs ≥ 1".into(),
        ));
    }

    // Stratified holdback for early stopping: at least one trial per class
    // when a class has two or more.
    let mut holdback: Vec<usize> = Vec::new();
    let mut fit: Vec<usize> = Vec::new();
    {
        let mut rng = stream_rng(cfg.seed, stream_id(ns::NN_HOLDBACK, 0));
        for &c in &classes {
            let mut idx: Vec<usize> = (0..n).filter(|&i| train.labels[i] == c).collect();
            idx.shuffle(&mut rng);
            let take = if idx.len() >= 2 {
                ((cfg.holdback_fraction * idx.len() as f64).round() as usize).max(1)
            } else {
                0
            };
            holdback.extend_from_slice(&idx[..take]);
            fit.extend_from_slice(&idx[take..]);
        }
        holdback.sort_unstable();
        fit.sort_unstable();
    }
    if fit.len() < cfg.batch_size.min(n) {
        // Tiny datasets: train on everything, stop on training loss.
        fit = (0..n).collect();
        holdback.clear();
    }

    let mut init_rng = stream_rng(cfg.seed, stream_id(ns::NN_INIT, 0));
    let mut model = CnnModel::init(
        *spec,
        classes.clone(),
        train.n_channels(),
        train.n_samples(),
        cfg.seed,
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(&model);
    let mut batch_rng = stream_rng(cfg.seed, stream_id(ns::NN_BATCH, 0));

    let mut best: Option<(f64, CnnModel)> = None;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut diverged = false;
    let mut history = Vec::new();

    'training: for epoch in 0..cfg.max_epochs {
        let mut order = fit.clone();
        order.shuffle(&mut batch_rng);

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather(train, chunk);
            let labels: Vec<ClassLabel> = chunk.iter().map(|&i| train.labels[i]).collect();
            match loss_and_gradients(&mut model, &batch, &labels) {
                Ok((loss, grads)) => {
                    if !grads.all_finite() {
                        diverged = true;
                        break 'training;
                    }
                    loss_sum += loss * chunk.len() as f64;
                    seen += chunk.len();
                    adam.step(
                        &mut model,
                        &grads,
                        cfg.learning_rate,
                        cfg.beta1,
                        cfg.beta2,
                        cfg.adam_eps,
                    );
                }
                Err(NnError::NonFiniteLoss) => {
                    diverged = true;
                    break 'training;
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = loss_sum / seen.max(1) as f64;
        let (train_accuracy, _) = score(&model, train, &fit);

        let (holdback_accuracy, holdback_loss) = if holdback.is_empty() {
            (train_accuracy, train_loss)
        } else {
            let (acc, loss) = score(&model, train, &holdback);
            (acc, loss)
        };
        history.push(EpochStats {
            train_loss,
            train_accuracy,
            holdback_loss,
            holdback_accuracy,
        });

        let improved = best
            .as_ref()
            .map_or(true, |(b, _)| holdback_loss < *b - 1e-12);
        if improved {
            best = Some((holdback_loss, model.clone()));
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.early_stop_patience {
                break;
            }
        }
    }

    let mut final_model = best.map(|(_, m)| m).unwrap_or(model);
    final_model.mode = Mode::Inference;
    Ok((
        final_model,
        TrainHistory {
            epochs: history,
            best_epoch,
            diverged,
        },
    ))
}

fn gather(e: &EpochSet, indices: &[usize]) -> Array3<f64> {
    let (_, c, t) = e.tensor.dim();
    let mut out = Array3::zeros((indices.len(), c, t));
    for (row, &i) in indices.iter().enumerate() {
        out.index_axis_mut(Axis(0), row).assign(&e.trial(i));
    }
    out
}

/// Inference-mode accuracy and mean cross-entropy over the given trials.
pub(crate) fn score(m: &CnnModel, e: &EpochSet, indices: &[usize]) -> (f64, f64) {
    if indices.is_empty() {
        return (0.0, f64::INFINITY);
    }
    let mut frozen = m.clone();
    frozen.mode = Mode::Inference;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for chunk in indices.chunks(64) {
        let batch = gather(e, chunk);
        let (probs, _) = super::forward_batch(&mut frozen, &batch, false)
            .expect("shapes fixed during training");
        for (row, &i) in chunk.iter().enumerate() {
            let p = probs.row(row);
            let mut best = 0;
            for (k, &v) in p.iter().enumerate().skip(1) {
                if v > p[best] {
                    best = k;
                }
            }
            if frozen.classes[best] == e.labels[i] {
                correct += 1;
            }
            let t = frozen
                .classes
                .iter()
                .position(|c| *c == e.labels[i])
                .expect("labels validated");
            loss -= p[t].max(1e-300).ln();
        }
    }
    (
        correct as f64 / indices.len() as f64,
        loss / indices.len() as f64,
    )
}
