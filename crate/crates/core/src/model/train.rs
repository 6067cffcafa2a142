//! Adam training loop with early stopping on the validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_loss, gradients, ModelError, Sample, ScoreModel};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// CSV with columns `epoch,train_loss,test_loss`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,test_loss")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.validation_loss)?;
        }
        Ok(())
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, t: usize) {
        let bc1 = 1.0 - BETA1.powi(t as i32);
        let bc2 = 1.0 - BETA2.powi(t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }

    /// Sparse row update for the embedding matrix.
    fn update_rows(
        &mut self,
        params: &mut [f64],
        rows: &std::collections::HashMap<u32, Vec<f64>>,
        width: usize,
        lr: f64,
        t: usize,
    ) {
        let bc1 = 1.0 - BETA1.powi(t as i32);
        let bc2 = 1.0 - BETA2.powi(t as i32);
        for (&row, grad) in rows {
            let base = row as usize * width;
            for k in 0..width {
                let i = base + k;
                let g = grad[k];
                self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
                self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}

/// Trains with Adam and shuffled mini-batches, recording per-epoch train
/// and validation losses. Stops once the validation loss has failed to
/// improve for more than `patience` consecutive epochs (the pre-training
/// validation loss is the initial reference) and returns the weights of the
/// best epoch.
///
/// Deterministic: shuffling is seeded from `config.seed` and the epoch
/// index, and the whole loop is single-threaded.
pub fn train(
    model: ScoreModel,
    train_set: &[Sample],
    val_set: &[Sample],
) -> Result<(ScoreModel, TrainHistory), ModelError> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let config = model.config.clone();
    let mut model = model;
    let mut opt_layers: Vec<(AdamState, AdamState)> = model
        .layers
        .iter()
        .map(|l| (AdamState::new(l.weights.len()), AdamState::new(l.bias.len())))
        .collect();
    let mut opt_embedding = AdamState::new(model.embedding.len());
    let mut step = 0usize;

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut reference_val = batch_loss(&model, val_set)?;
    let mut best_epoch_val = f64::INFINITY;
    let mut best_weights: Option<(Vec<f64>, Vec<super::DenseLayer>)> = None;
    let mut streak = 0usize;
    let mut indices: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9E37));
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            epoch_loss += batch_loss(&model, &batch)?;
            n_batches += 1;
            let grads = gradients(&model, &batch)?;
            step += 1;
            for (l, (w_state, b_state)) in opt_layers.iter_mut().enumerate() {
                w_state.update(
                    &mut model.layers[l].weights,
                    &grads.layers[l].weights,
                    config.learning_rate,
                    step,
                );
                b_state.update(
                    &mut model.layers[l].bias,
                    &grads.layers[l].bias,
                    config.learning_rate,
                    step,
                );
            }
            opt_embedding.update_rows(
                &mut model.embedding,
                &grads.embedding,
                config.embedding_dim,
                config.learning_rate,
                step,
            );
        }
        let train_loss = epoch_loss / n_batches as f64;
        let validation_loss = batch_loss(&model, val_set)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best_epoch_val {
            best_epoch_val = validation_loss;
            history.best_epoch = epoch;
            best_weights = Some((model.embedding.clone(), model.layers.clone()));
        }
        if validation_loss < reference_val {
            reference_val = validation_loss;
            streak = 0;
        } else {
            streak += 1;
            if streak > config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }

    if let Some((embedding, layers)) = best_weights {
        model.embedding = embedding;
        model.layers = layers;
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::NormalizationStats;
    use crate::model::test_util::{random_input, tiny_config};
    use crate::model::{init_model, ModelInput};
    use rand::Rng;

    fn null_input(config: &crate::model::ModelConfig) -> ModelInput {
        ModelInput {
            tokens: vec![0; config.lineup_len],
            covariates: vec![0.0; config.covariate_count],
        }
    }

    #[test]
    fn rejects_empty_sets() {
        let model = init_model(tiny_config(0), NormalizationStats::identity()).unwrap();
        let s = (null_input(&model.config), [0.0, 0.0]);
        assert!(train(model.clone(), &[], &[s.clone()]).is_err());
        assert!(train(model, &[s], &[]).is_err());
    }

    #[test]
    fn strictly_rising_val_loss_stops_after_first_epoch() {
        // identical input, contradictory targets: fitting the train target
        // moves predictions away from the val target monotonically.
        let mut config = tiny_config(1);
        config.patience = 0;
        config.max_epochs = 50;
        config.learning_rate = 1e-2;
        let model = init_model(config.clone(), NormalizationStats::identity()).unwrap();
        let input = null_input(&config);
        let base = model.forward(&input).unwrap();
        let train_set = vec![(input.clone(), [base[0] + 1.0, base[1] + 1.0])];
        let val_set = vec![(input, base)];
        let (_, history) = train(model, &train_set, &val_set).unwrap();
        assert!(history.stopped_early);
        assert_eq!(history.epochs.len(), 1);
        assert_eq!(history.best_epoch, 1);
    }

    #[test]
    fn training_is_deterministic() {
        let config = tiny_config(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let train_set: Vec<_> = (0..10)
            .map(|_| {
                (
                    random_input(&mut rng, &config),
                    [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
                )
            })
            .collect();
        let val_set = train_set[..3].to_vec();
        let model = init_model(config, NormalizationStats::identity()).unwrap();
        let (m1, h1) = train(model.clone(), &train_set, &val_set).unwrap();
        let (m2, h2) = train(model, &train_set, &val_set).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn best_epoch_has_minimal_val_loss() {
        let config = tiny_config(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let train_set: Vec<_> = (0..20)
            .map(|_| {
                (
                    random_input(&mut rng, &config),
                    [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
                )
            })
            .collect();
        let val_set: Vec<_> = (0..5)
            .map(|_| {
                (
                    random_input(&mut rng, &config),
                    [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
                )
            })
            .collect();
        let model = init_model(config, NormalizationStats::identity()).unwrap();
        let (_, history) = train(model, &train_set, &val_set).unwrap();
        let min = history
            .epochs
            .iter()
            .min_by(|a, b| a.validation_loss.total_cmp(&b.validation_loss))
            .unwrap();
        assert_eq!(history.best_epoch, min.epoch);
    }

    #[test]
    fn history_csv_header() {
        let history = TrainHistory {
            epochs: vec![EpochStats {
                epoch: 1,
                train_loss: 0.5,
                validation_loss: 0.25,
            }],
            best_epoch: 1,
            stopped_early: false,
        };
        let mut buf = Vec::new();
        history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,train_loss,test_loss\n"));
        assert!(text.contains("1,0.5,0.25"));
    }
}
