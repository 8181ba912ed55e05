use rand::Rng;

use super::net::{self, TrainSample, Workspace};
use super::{EpochStats, RnnConfig, TrainedModel, TrainingMeta};
use crate::error::{Error, Result};
use crate::features::cov_sequence_from_iats;
use crate::seed;
use crate::streamgen::DatasetRecord;

/// Labeled CoV sequences.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub samples: Vec<(Vec<f64>, bool)>,
}

impl TrainingSet {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Result<Self> {
        let samples = records
            .into_iter()
            .map(|r| Ok((cov_sequence_from_iats(&r.iats)?.0, r.is_periodic())))
            .collect::<Result<_>>()?;
        Ok(TrainingSet { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &RnnConfig, lr: f64, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let a = &cfg.adam;
        let bc1 = 1.0 - a.beta1.powi(self.t);
        let bc2 = 1.0 - a.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = a.beta1 * self.m[i] + (1.0 - a.beta1) * g;
            self.v[i] = a.beta2 * self.v[i] + (1.0 - a.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + a.epsilon);
        }
    }
}

fn dropout_masks(cfg: &RnnConfig, rng: &mut impl Rng) -> Vec<Option<Vec<f64>>> {
    cfg.layer_sizes
        .iter()
        .zip(&cfg.dropout)
        .map(|(&h, &p)| {
            (p > 0.0).then(|| {
                let keep = 1.0 / (1.0 - p);
                (0..h)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect()
            })
        })
        .collect()
}

/// Splits indices into (train, validation), stratified by label.
fn holdout(set: &TrainingSet, fraction: f64, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for label in [true, false] {
        let mut idx: Vec<usize> = (0..set.len()).filter(|&i| set.samples[i].1 == label).collect();
        shuffle(&mut idx, rng);
        let n_val = (idx.len() as f64 * fraction).round() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn shuffle<T>(v: &mut [T], rng: &mut impl Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

/// Minimizes per-step binary cross-entropy with Adam and BPTT.
///
/// The loss is averaged over every output from `loss_from_packets` onward,
/// so the classifier is usable after any packet count past the transient.
/// The weights with the lowest validation loss are kept.
pub fn train(config: &RnnConfig, set: &TrainingSet) -> Result<TrainedModel> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::param("empty training set"));
    }
    let positives = set.samples.iter().filter(|s| s.1).count();
    if positives == 0 || positives == set.len() {
        return Err(Error::param("training set must contain both labels"));
    }

    let layout = config.layout();
    let mut params = config.init_params();
    let mut grad = vec![0.0; layout.len];
    let mut adam = Adam::new(layout.len);
    let mut ws = Workspace::default();

    let encoded: Vec<(Vec<f64>, f64)> = set
        .samples
        .iter()
        .map(|(cov, y)| {
            let x = cov.iter().map(|&c| config.input.encode(c)).collect();
            (x, if *y { 1.0 } else { 0.0 })
        })
        .collect();
    let loss_from = config.loss_from_packets.saturating_sub(3);

    let mut split_rng = seed::rng(seed::derive(config.seed, 0x5911));
    let (mut order, val) = holdout(set, config.validation_fraction, &mut split_rng);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 1..=config.epochs {
        let mut rng = seed::rng(seed::derive(config.seed, epoch as u64));
        shuffle(&mut order, &mut rng);
        let lr = config.learning_rate_at(epoch);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = &encoded[i];
                let masks = dropout_masks(config, &mut rng);
                let sample = TrainSample {
                    inputs: x,
                    label: *y,
                    loss_from: loss_from.min(x.len().saturating_sub(1)),
                    masks: &masks,
                };
                total += net::loss_and_grad(&layout, &params, &sample, &mut grad, scale, &mut ws);
            }
            // ReLU maps NaN to 0, so a finite loss can still carry NaN gradients
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !total.is_finite() || !norm.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            if config.max_grad_norm > 0.0 && norm > config.max_grad_norm {
                let s = config.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            adam.step(config, lr, &mut params, &grad);
        }
        let train_loss = total / order.len() as f64;

        let validation_loss = (!val.is_empty()).then(|| {
            val.iter()
                .map(|&i| {
                    let (x, y) = &encoded[i];
                    net::sequence_loss(&layout, &params, x, *y, loss_from.min(x.len() - 1))
                })
                .sum::<f64>()
                / val.len() as f64
        });
        if !train_loss.is_finite() || validation_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}, validation loss {}",
            validation_loss.map_or("-".into(), |v| format!("{v:.5}"))
        );
        history.push(EpochStats {
            epoch,
            train_loss,
            validation_loss,
        });
        let score = validation_loss.unwrap_or(train_loss);
        if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
            best = Some((score, epoch, params.clone()));
        }
    }

    let (selected_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    let mut model = TrainedModel::from_params(config.clone(), params)?;
    model.training = Some(TrainingMeta {
        optimizer: format!(
            "adam(lr={} cosine to x{}, beta1={}, beta2={}, eps={}), batch {}, clip {}",
            config.learning_rate,
            config.final_lr_fraction,
            config.adam.beta1,
            config.adam.beta2,
            config.adam.epsilon,
            config.batch_size,
            config.max_grad_norm
        ),
        loss: format!(
            "binary cross-entropy averaged over outputs from packet {}",
            config.loss_from_packets
        ),
        train_samples: order.len(),
        validation_samples: val.len(),
        selected_epoch,
        history,
    });
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_set() -> TrainingSet {
        // Periodic: flat, low CoV. Aperiodic: large, wandering CoV.
        let mut samples = Vec::new();
        for i in 0..24 {
            let f = i as f64 / 24.0;
            samples.push((vec![0.005 + 0.01 * f; 8], true));
            samples.push(((0..8).map(|k| 0.3 + 0.2 * ((k as f64 + f * 7.0).sin())).collect(), false));
        }
        TrainingSet { samples }
    }

    fn toy_config() -> RnnConfig {
        RnnConfig {
            layer_sizes: vec![4, 4],
            dropout: vec![0.0, 0.25],
            epochs: 8,
            batch_size: 8,
            learning_rate: 1e-2,
            loss_from_packets: 3,
            ..Default::default()
        }
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let set = toy_set();
        let a = train(&toy_config(), &set).unwrap();
        let b = train(&toy_config(), &set).unwrap();
        assert_eq!(a.params, b.params);
        let h = &a.training.as_ref().unwrap().history;
        assert!(h.last().unwrap().train_loss < h[0].train_loss);
        assert!(a.forward(&set.samples[0].0).unwrap() > a.forward(&set.samples[1].0).unwrap());
    }

    #[test]
    fn rejects_single_label_sets() {
        let set = TrainingSet {
            samples: vec![(vec![0.1, 0.2], true); 4],
        };
        assert!(train(&toy_config(), &set).is_err());
        assert!(train(&toy_config(), &TrainingSet::default()).is_err());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let set = TrainingSet {
            samples: vec![(vec![f64::NAN; 4], true), (vec![0.1; 4], false)],
        };
        let mut cfg = toy_config();
        cfg.validation_fraction = 0.0;
        cfg.input = super::super::InputEncoding::Raw;
        let r = train(&cfg, &set);
        assert!(matches!(r, Err(Error::Diverged { epoch: 1 })), "{r:?}");
    }
}
