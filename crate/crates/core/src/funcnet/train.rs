use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FunctionalNetwork, Init, Loss};
use crate::curvedata::Task;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Plain gradient descent settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains on the full batch each step.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub init: Init,
    /// Defaults to MSE for regression and cross-entropy for classification.
    pub loss: Option<Loss>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 2000,
            batch_size: None,
            seed: 0,
            init: Init::Glorot,
            loss: None,
        }
    }
}

impl TrainConfig {
    pub fn resolved_loss(&self, task: Task) -> Result<Loss> {
        let loss = self.loss.unwrap_or(Loss::default_for(task));
        if loss == Loss::CrossEntropy && task != Task::BinaryClassification {
            return Err(Error::invalid("cross-entropy loss requires a classification task"));
        }
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub network: FunctionalNetwork,
    /// Full-data loss after each epoch.
    pub history: Vec<f64>,
}

/// Train `net` on stacked score vectors `inputs` with responses `targets`.
pub fn train(
    mut net: FunctionalNetwork,
    inputs: &[Vec<f64>],
    targets: &[f64],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let loss = config.resolved_loss(net.task)?;
    if inputs.is_empty() {
        return Err(Error::invalid("no training subjects"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "training targets",
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    if let Some(x) = inputs.iter().find(|x| x.len() != net.n_inputs()) {
        return Err(Error::DimensionMismatch {
            context: "network input scores",
            expected: net.n_inputs(),
            got: x.len(),
        });
    }
    if net.task == Task::BinaryClassification && targets.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::invalid("classification targets must be 0 or 1"));
    }

    let n = inputs.len();
    let batch = config.batch_size.unwrap_or(n).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut params = net.params();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if batch < n {
            order.sort_unstable();
            let mut rng = substream(config.seed, &["shuffle".into(), (epoch as u64).into()]);
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (grad, _) = net.backward(&xs, &ys, loss)?;
            for (w, g) in params.iter_mut().zip(&grad) {
                *w -= config.learning_rate * g;
            }
            net.set_params(&params)?;
        }
        let epoch_loss = net.loss(inputs, targets, loss)?;
        if !epoch_loss.is_finite() || params.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        history.push(epoch_loss);
    }
    Ok(TrainOutcome { network: net, history })
}
