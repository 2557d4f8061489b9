//! Deterministic mini-batch gradient descent.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward, init_linear_baseline, linear_backward, GcnModel, GcnScorer, LinearBaseline};
use crate::data::{label_matrix, Dataset};
use crate::graph::PropagationMatrix;
use crate::metrics::{evaluate, Scorer};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` every `every` epochs.
    Step {
        factor: f64,
        every: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0003,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            weight_decay: 0.0,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidParameter(
                "weight decay must be finite and >= 0".into(),
            ));
        }
        if let LrSchedule::Step { factor, every } = self.lr_schedule {
            if every == 0 || !(factor > 0.0 && factor.is_finite()) {
                return Err(Error::InvalidParameter(
                    "step schedule needs factor > 0 and every >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Step { factor, every } => {
                self.learning_rate * factor.powi((epoch / every) as i32)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Sample-weighted mean batch loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Validation mAP after each epoch, when a validation set was given.
    pub validation_map: Vec<f64>,
}

trait Trainable: Sized {
    fn step(
        &mut self,
        features: &Array2<f64>,
        targets: &Array2<u8>,
        lr: f64,
        decay: f64,
    ) -> Result<f64>;
    fn validation_map(&self, dataset: &Dataset) -> Result<f64>;
}

fn descend(param: &mut Array2<f64>, grad: &Array2<f64>, lr: f64, decay: f64) {
    param.zip_mut_with(grad, |p, &g| *p -= lr * (g + decay * *p));
}

struct GcnState<'a> {
    model: GcnModel,
    p1: &'a PropagationMatrix,
    p2: &'a PropagationMatrix,
}

impl Trainable for GcnState<'_> {
    fn step(
        &mut self,
        features: &Array2<f64>,
        targets: &Array2<u8>,
        lr: f64,
        decay: f64,
    ) -> Result<f64> {
        let (loss, g) = backward(&self.model, self.p1, self.p2, features, targets)?;
        let m = &mut self.model;
        descend(&mut m.embeddings, &g.embeddings, lr, decay);
        descend(&mut m.w1, &g.w1, lr, decay);
        descend(&mut m.w2, &g.w2, lr, decay);
        if let (Some(a), Some(ga)) = (m.adapter.as_mut(), g.adapter.as_ref()) {
            descend(&mut a.weight, &ga.weight, lr, decay);
            a.bias.zip_mut_with(&ga.bias, |p, &g| *p -= lr * g);
        }
        Ok(loss)
    }

    fn validation_map(&self, dataset: &Dataset) -> Result<f64> {
        let scorer = GcnScorer {
            model: &self.model,
            p1: self.p1,
            p2: self.p2,
        };
        Ok(evaluate(&scorer, dataset, 0.5)?.map)
    }
}

impl Trainable for LinearBaseline {
    fn step(
        &mut self,
        features: &Array2<f64>,
        targets: &Array2<u8>,
        lr: f64,
        decay: f64,
    ) -> Result<f64> {
        let (loss, g) = linear_backward(self, features, targets)?;
        descend(&mut self.weight, &g.weight, lr, decay);
        self.bias.zip_mut_with(&g.bias, |p, &g| *p -= lr * g);
        Ok(loss)
    }

    fn validation_map(&self, dataset: &Dataset) -> Result<f64> {
        Ok(evaluate(self as &dyn Scorer, dataset, 0.5)?.map)
    }
}

fn run<T: Trainable>(
    state: &mut T,
    dataset: &Dataset,
    tc: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<TrainHistory> {
    tc.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let features = dataset.feature_matrix();
    let targets = label_matrix(dataset);
    let n = dataset.len();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let lr = tc.rate_at(epoch);
        let mut total = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let x = features.select(Axis(0), batch);
            let y = targets.select(Axis(0), batch);
            let loss = state
                .step(&x, &y, lr, tc.weight_decay)
                .map_err(|e| match e {
                    Error::NonFinite(what) => Error::Divergence {
                        epoch: epoch + 1,
                        detail: format!("non-finite {what}"),
                    },
                    other => other,
                })?;
            total += loss * batch.len() as f64;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence {
                epoch: epoch + 1,
                detail: format!("mean loss {mean}"),
            });
        }
        history.epoch_loss.push(mean);
        if let Some(v) = validation {
            history.validation_map.push(state.validation_map(v)?);
        }
    }
    Ok(history)
}

/// Trains the GCN head end to end (embeddings, both layers and the adapter).
pub fn train(
    dataset: &Dataset,
    p1: &PropagationMatrix,
    p2: &PropagationMatrix,
    model: GcnModel,
    tc: &TrainConfig,
) -> Result<(GcnModel, TrainHistory)> {
    train_with_validation(dataset, p1, p2, model, tc, None)
}

pub fn train_with_validation(
    dataset: &Dataset,
    p1: &PropagationMatrix,
    p2: &PropagationMatrix,
    model: GcnModel,
    tc: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<(GcnModel, TrainHistory)> {
    if model.num_labels() != dataset.num_labels() {
        return Err(Error::shape(
            "model labels",
            &[dataset.num_labels()],
            &[model.num_labels()],
        ));
    }
    if model.config.d_feat != dataset.feature_dim() {
        return Err(Error::shape(
            "model d_feat",
            &[dataset.feature_dim()],
            &[model.config.d_feat],
        ));
    }
    let mut state = GcnState { model, p1, p2 };
    let history = run(&mut state, dataset, tc, validation)?;
    Ok((state.model, history))
}

/// Initializes from `tc.seed` and trains the linear head.
pub fn train_linear_baseline(
    dataset: &Dataset,
    tc: &TrainConfig,
) -> Result<(LinearBaseline, TrainHistory)> {
    let model = init_linear_baseline(dataset.num_labels(), dataset.feature_dim(), tc.seed)?;
    fit_linear_baseline(model, dataset, tc, None)
}

pub fn fit_linear_baseline(
    mut model: LinearBaseline,
    dataset: &Dataset,
    tc: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<(LinearBaseline, TrainHistory)> {
    if model.weight.dim() != (dataset.num_labels(), dataset.feature_dim()) {
        return Err(Error::shape(
            "linear baseline",
            &[dataset.num_labels(), dataset.feature_dim()],
            model.weight.shape(),
        ));
    }
    let history = run(&mut model, dataset, tc, validation)?;
    Ok((model, history))
}
