use crate::bag::{Bag, Instance};
use crate::error::{ModelError, Result};
use crate::forward::{
    predict_bag, predict_instances, strong_train_backward, strong_train_forward,
    weak_train_backward, weak_train_forward,
};
use crate::params::{LearnerKind, ModelParams};
use mil_core::{real, FocalLoss, OptimKind, Optimizer, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Everything a training run needs beyond the data. The same record drives
/// both learners; `batch_size` applies to strong (instance) training only,
/// weak training always takes one bag per step.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning rate is multiplied by this factor every `decay_period` epochs.
    pub decay_factor: f64,
    pub decay_period: usize,
    pub batch_size: usize,
    /// Stop when validation accuracy fails to improve for more than this many
    /// consecutive epochs; `None` trains for the full epoch budget.
    pub patience: Option<usize>,
    pub seed: u64,
    pub focal: FocalLoss,
    pub optimizer: OptimKind,
    pub weight_decay: f64,
    /// Fraction of the data held out (stratified) for model selection.
    pub val_fraction: f64,
    /// Weak-mode subsampling augmentation: minimum kept bag size, off when
    /// `None`.
    pub subsample_min: Option<usize>,
    /// Strong-mode additive Gaussian noise augmentation, off at 0.
    pub noise_std: f64,
}

impl TrainConfig {
    pub fn strong_defaults() -> Self {
        Self {
            epochs: 15,
            learning_rate: 1e-3,
            decay_factor: 0.3,
            decay_period: 3,
            batch_size: 64,
            patience: None,
            seed: 0,
            focal: FocalLoss { alpha: 0.25, gamma: 2.0 },
            optimizer: OptimKind::adam(),
            weight_decay: 1e-7,
            val_fraction: 0.2,
            subsample_min: None,
            noise_std: 0.0,
        }
    }

    pub fn weak_defaults() -> Self {
        Self {
            epochs: 15,
            learning_rate: 5e-3,
            decay_factor: 0.3,
            decay_period: 3,
            batch_size: 1,
            patience: None,
            seed: 0,
            focal: FocalLoss { alpha: 0.25, gamma: 2.0 },
            optimizer: OptimKind::momentum_sgd(0.9),
            weight_decay: 1e-4,
            val_fraction: 0.2,
            subsample_min: Some(10),
            noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(ModelError::InvalidConfig(format!(
                "decay factor {} outside (0, 1]",
                self.decay_factor
            )));
        }
        if self.decay_period == 0 {
            return Err(ModelError::InvalidConfig(
                "decay period must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(ModelError::InvalidConfig(format!(
                "validation fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        FocalLoss::new(self.focal.alpha, self.focal.gamma)?;
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_period) as i32)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy at threshold 0.5 on the held-out split; NaN when the split
    /// is empty.
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Snapshot with the best validation accuracy across epochs.
    pub best: ModelParams<f32>,
    /// Parameters after the final epoch, retained for debugging.
    pub last: ModelParams<f32>,
    pub best_epoch: usize,
    pub stats: Vec<EpochStats>,
}

/// Stratified index split: returns (train, val) index lists.
fn stratified_split(
    labels: &[bool],
    val_fraction: f64,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [pos, neg] {
        let n_val = ((class.len() as f64) * val_fraction).round() as usize;
        let n_val = n_val.min(class.len().saturating_sub(1));
        val.extend_from_slice(&class[..n_val]);
        train.extend_from_slice(&class[n_val..]);
    }
    (train, val)
}

struct EarlyStop {
    best_acc: f64,
    best_epoch: usize,
    bad_epochs: usize,
}

impl EarlyStop {
    fn new() -> Self {
        Self {
            best_acc: f64::NEG_INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    /// Returns true when this epoch improved on the best accuracy.
    fn observe(&mut self, epoch: usize, acc: f64) -> bool {
        if acc.is_nan() || acc > self.best_acc {
            if !acc.is_nan() {
                self.best_acc = acc;
            }
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    fn should_stop(&self, patience: Option<usize>) -> bool {
        matches!(patience, Some(p) if self.bad_epochs > p)
    }
}

/// Train on bags in either mode. Strong mode flattens the bags into labeled
/// instances and fails if any instance is unlabeled.
pub fn train(
    params: ModelParams<f32>,
    bags: &[Bag<f32>],
    config: &TrainConfig,
    mode: LearnerKind,
) -> Result<TrainOutcome> {
    match mode {
        LearnerKind::Weak => train_weak(params, bags, config),
        LearnerKind::Strong => {
            let mut instances = Vec::new();
            for bag in bags {
                for (i, inst) in bag.instances().iter().enumerate() {
                    if inst.label.is_none() {
                        return Err(ModelError::MissingInstanceLabel {
                            mode: "strong",
                            bag: bag.id().to_string(),
                            index: i,
                        });
                    }
                    instances.push(inst.clone());
                }
            }
            train_strong(params, &instances, config)
        }
    }
}

/// Weak supervision: minimize mean focal loss over bag labels, one bag per
/// optimizer step.
pub fn train_weak(
    mut params: ModelParams<f32>,
    bags: &[Bag<f32>],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if params.kind() != LearnerKind::Weak {
        return Err(ModelError::WrongKind {
            expected: LearnerKind::Weak,
            got: params.kind(),
        });
    }
    if bags.is_empty() {
        return Err(ModelError::InvalidConfig("no training bags".into()));
    }

    let labels: Vec<bool> = bags.iter().map(|b| b.label()).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x517A1));
    let (train_idx, val_idx) = stratified_split(&labels, config.val_fraction, &mut split_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xD307));

    let mut optimizer: Optimizer<f32> =
        Optimizer::new(config.optimizer, config.learning_rate, config.weight_decay);
    let mut stop = EarlyStop::new();
    let mut best = params.clone();
    let mut stats = Vec::new();
    let mut order = train_idx.clone();

    for epoch in 0..config.epochs {
        optimizer.set_lr(config.lr_at_epoch(epoch));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for &bi in &order {
            let bag = &bags[bi];
            let sub;
            let bag = match config.subsample_min {
                Some(min_k) if min_k < bag.len() => {
                    sub = bag.subsample(min_k.min(bag.len()), &mut rng)?;
                    &sub
                }
                _ => bag,
            };
            let xs: Vec<&Tensor<f32>> = bag.instances().iter().map(|i| &i.values).collect();
            let fwd = weak_train_forward(&params, &xs, Some(&mut rng))?;
            let loss: f32 = config.focal.value(fwd.p, bag.label());
            loss_sum += loss as f64;
            let dp: f32 = config.focal.grad(fwd.p, bag.label());
            let grads = weak_train_backward(&params, &fwd, dp)?;
            let grad_refs: Vec<&Tensor<f32>> = grads.iter().collect();
            optimizer.step(&mut params.tensors_mut(), &grad_refs)?;
        }
        let train_loss = loss_sum / order.len().max(1) as f64;

        let val_accuracy = if val_idx.is_empty() {
            f64::NAN
        } else {
            let mut correct = 0usize;
            for &vi in &val_idx {
                let (p, _) = predict_bag(&params, &bags[vi])?;
                if (p >= 0.5) == bags[vi].label() {
                    correct += 1;
                }
            }
            correct as f64 / val_idx.len() as f64
        };

        if stop.observe(epoch, val_accuracy) {
            best = params.clone();
        }
        stats.push(EpochStats {
            epoch,
            lr: optimizer.lr(),
            train_loss,
            val_accuracy,
        });
        if stop.should_stop(config.patience) {
            break;
        }
    }

    Ok(TrainOutcome {
        best,
        last: params,
        best_epoch: stop.best_epoch,
        stats,
    })
}

/// Strong supervision: minimize mean focal loss over labeled instances in
/// minibatches of `config.batch_size`.
pub fn train_strong(
    mut params: ModelParams<f32>,
    instances: &[Instance<f32>],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if params.kind() != LearnerKind::Strong {
        return Err(ModelError::WrongKind {
            expected: LearnerKind::Strong,
            got: params.kind(),
        });
    }
    if instances.is_empty() {
        return Err(ModelError::InvalidConfig("no training instances".into()));
    }
    let mut labels = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        labels.push(inst.label.ok_or(ModelError::MissingInstanceLabel {
            mode: "strong",
            bag: "<instance list>".into(),
            index: i,
        })?);
    }

    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x517A1));
    let (train_idx, val_idx) = stratified_split(&labels, config.val_fraction, &mut split_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xD307));

    let mut optimizer: Optimizer<f32> =
        Optimizer::new(config.optimizer, config.learning_rate, config.weight_decay);
    let mut stop = EarlyStop::new();
    let mut best = params.clone();
    let mut stats = Vec::new();
    let mut order = train_idx.clone();

    for epoch in 0..config.epochs {
        optimizer.set_lr(config.lr_at_epoch(epoch));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut augmented: Vec<Tensor<f32>> = Vec::with_capacity(batch.len());
            for &ii in batch {
                let mut x = instances[ii].values.clone();
                if config.noise_std > 0.0 {
                    let std = config.noise_std;
                    for v in x.data_mut() {
                        *v += real::<f32>(rng.gen_range(-1.0..1.0) * std * 1.732_050_8);
                    }
                }
                augmented.push(x);
            }
            let xs: Vec<&Tensor<f32>> = augmented.iter().collect();
            let fwd = strong_train_forward(&params, &xs, Some(&mut rng))?;
            let n = batch.len() as f64;
            let mut dps = Vec::with_capacity(batch.len());
            for (&ii, &p) in batch.iter().zip(&fwd.probs) {
                let y = labels[ii];
                loss_sum += config.focal.value(p, y) as f64;
                dps.push(config.focal.grad(p, y) / n as f32);
            }
            seen += batch.len();
            let grads = strong_train_backward(&params, &fwd, &dps)?;
            let grad_refs: Vec<&Tensor<f32>> = grads.iter().collect();
            optimizer.step(&mut params.tensors_mut(), &grad_refs)?;
        }
        let train_loss = loss_sum / seen.max(1) as f64;

        let val_accuracy = if val_idx.is_empty() {
            f64::NAN
        } else {
            let mut correct = 0usize;
            for chunk in val_idx.chunks(256) {
                let xs: Vec<&Tensor<f32>> =
                    chunk.iter().map(|&i| &instances[i].values).collect();
                let bag = Bag::new_unchecked(
                    "val",
                    xs.iter().map(|x| Instance::new((*x).clone(), None)).collect(),
                    false,
                );
                let probs = predict_instances(&params, &bag)?;
                for (&i, &p) in chunk.iter().zip(&probs) {
                    if (p >= 0.5) == labels[i] {
                        correct += 1;
                    }
                }
            }
            correct as f64 / val_idx.len() as f64
        };

        if stop.observe(epoch, val_accuracy) {
            best = params.clone();
        }
        stats.push(EpochStats {
            epoch,
            lr: optimizer.lr(),
            train_loss,
            val_accuracy,
        });
        if stop.should_stop(config.patience) {
            break;
        }
    }

    Ok(TrainOutcome {
        best,
        last: params,
        best_epoch: stop.best_epoch,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_decays_every_period() {
        let mut cfg = TrainConfig::weak_defaults();
        cfg.learning_rate = 1.0;
        cfg.decay_factor = 0.3;
        cfg.decay_period = 3;
        for e in 0..3 {
            assert_eq!(cfg.lr_at_epoch(e), 1.0);
        }
        for e in 3..6 {
            assert!((cfg.lr_at_epoch(e) - 0.3).abs() < 1e-12);
        }
        assert!((cfg.lr_at_epoch(6) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::weak_defaults();
        cfg.decay_factor = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::weak_defaults();
        cfg.val_fraction = 1.0;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::strong_defaults().validate().is_ok());
    }
}
