use serde::{Deserialize, Serialize};

use super::io::TrajectorySample;
use super::lstm::{TrajectoryModel, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub train_fraction: f64,
}

impl Default for TrajectoryTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            batch_size: 32,
            hidden: DEFAULT_HIDDEN,
            train_fraction: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTraining {
    pub model: TrajectoryModel,
    /// Mean training MSE before the first update.
    pub initial_train_loss: f64,
    /// Mean training MSE after each epoch.
    pub train_history: Vec<f64>,
    pub val_mse: f64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

fn mean_loss(model: &TrajectoryModel, samples: &[&TrajectorySample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in samples {
        total += model.loss(s.observed(), s.target())?;
    }
    Ok(total / samples.len() as f64)
}

/// Seeded train/validation split, then mini-batch Adam on rollout MSE.
pub fn train_trajectory(
    samples: &[TrajectorySample],
    config: &TrajectoryTrainConfig,
    seed: u64,
) -> Result<TrajectoryTraining> {
    if samples.len() < 2 {
        return Err(Error::EmptySplit(format!(
            "trajectory training needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 || config.hidden == 0 {
        return Err(Error::InvalidConfig(
            "epochs, batch_size and hidden must be positive".into(),
        ));
    }
    for s in samples {
        s.validate()?;
    }
    let mut rng = SeededRng::new(seed);
    let order = rng.permutation(samples.len());
    let n_train = ((config.train_fraction * samples.len() as f64).round() as usize)
        .clamp(1, samples.len() - 1);
    let train: Vec<&TrajectorySample> = order[..n_train].iter().map(|&i| &samples[i]).collect();
    let val: Vec<&TrajectorySample> = order[n_train..].iter().map(|&i| &samples[i]).collect();

    let mut model = TrajectoryModel::init(config.hidden, rng.next_u64());
    let mut adam = AdamState::for_params(AdamConfig::with_lr(config.lr), &model);
    let initial_train_loss = mean_loss(&model, &train)?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut idx: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        rng.shuffle(&mut idx);
        for (b, chunk) in idx.chunks(config.batch_size).enumerate() {
            let mut grad = TrajectoryModel::zeros(config.hidden);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let s = train[i];
                let (loss, g) = model.loss_and_grad(s.observed(), s.target())?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, batch: b, loss });
                }
                grad.accumulate(&g, scale);
            }
            adam.step(&mut model, &grad)?;
        }
        let loss = mean_loss(&model, &train)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                loss,
            });
        }
        history.push(loss);
    }
    let val_mse = mean_loss(&model, &val)?;
    Ok(TrajectoryTraining {
        model,
        initial_train_loss,
        train_history: history,
        val_mse,
        train_ids: train.iter().map(|s| s.id.clone()).collect(),
        val_ids: val.iter().map(|s| s.id.clone()).collect(),
    })
}

/// Straight-line tracks at constant velocity inside the unit square, with
/// optional Gaussian jitter on every point.
pub fn constant_velocity_trajectories(n: usize, noise: f64, seed: u64) -> Vec<TrajectorySample> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|k| {
            let start = [rng.uniform_range(0.3, 0.7), rng.uniform_range(0.3, 0.7)];
            let vel = [rng.uniform_range(-0.015, 0.015), rng.uniform_range(-0.015, 0.015)];
            let points = (0..super::TOTAL_POINTS)
                .map(|t| {
                    let t = t as f64;
                    [
                        start[0] + vel[0] * t + noise * rng.normal(),
                        start[1] + vel[1] * t + noise * rng.normal(),
                    ]
                })
                .collect();
            TrajectorySample {
                id: format!("t{k:05}"),
                points,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_inputs() {
        let one = constant_velocity_trajectories(1, 0.0, 0);
        assert!(train_trajectory(&one, &TrajectoryTrainConfig::default(), 0).is_err());
        let two = constant_velocity_trajectories(2, 0.0, 0);
        let cfg = TrajectoryTrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(train_trajectory(&two, &cfg, 0).is_err());
    }

    #[test]
    fn split_is_three_to_one() {
        let s = constant_velocity_trajectories(40, 0.0, 1);
        let cfg = TrajectoryTrainConfig {
            epochs: 1,
            hidden: 4,
            ..Default::default()
        };
        let r = train_trajectory(&s, &cfg, 3).unwrap();
        assert_eq!(r.train_ids.len(), 30);
        assert_eq!(r.val_ids.len(), 10);
        assert_eq!(r.train_history.len(), 1);
    }

    #[test]
    fn learns_constant_velocity() {
        let s = constant_velocity_trajectories(200, 0.0, 2);
        let r = train_trajectory(&s, &TrajectoryTrainConfig::default(), 5).unwrap();
        assert!(r.train_history.iter().all(|l| l.is_finite()));
        assert!(*r.train_history.last().unwrap() <= r.initial_train_loss);
        assert!(r.val_mse < 1e-2, "val mse {}", r.val_mse);
        // distinct tracks give distinct features
        let a = r.model.extract_feature(&s[0].points).unwrap();
        let b = r.model.extract_feature(&s[1].points).unwrap();
        let gap: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(gap > 0.0);
        assert_eq!(a, r.model.extract_feature(&s[0].points).unwrap());
    }
}
