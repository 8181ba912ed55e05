//! Stacked-LSTM periodicity classifier.
//!
//! The network reads one coefficient-of-variation value per packet and
//! emits, after every packet, the confidence that the stream is periodic.

pub mod net;
mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::StepScorer;
use crate::seed;

pub use net::Layout;
pub use train::{train, TrainingSet};

pub const MODEL_FORMAT: &str = "scip-lstm";
pub const MODEL_VERSION: u32 = 1;

/// How a raw coefficient of variation is presented to the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InputEncoding {
    Raw,
    /// `(ln(c + floor) - center) / width`; monotone, so scale invariance of
    /// the feature is untouched.
    Log { floor: f64, center: f64, width: f64 },
}

impl InputEncoding {
    pub fn encode(&self, c: f64) -> f64 {
        match *self {
            InputEncoding::Raw => c,
            InputEncoding::Log {
                floor,
                center,
                width,
            } => ((c + floor).ln() - center) / width,
        }
    }
}

impl Default for InputEncoding {
    fn default() -> Self {
        InputEncoding::Log {
            floor: 1e-4,
            center: -4.0,
            width: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnConfig {
    pub layer_sizes: Vec<usize>,
    /// Dropout probability applied to each layer's output.
    pub dropout: Vec<f64>,
    pub seed: u64,
    pub learning_rate: f64,
    /// The step size follows a cosine from `learning_rate` down to this
    /// fraction of it at the last epoch; 1 keeps it constant.
    pub final_lr_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of the training split held out to track validation loss.
    pub validation_fraction: f64,
    /// Outputs produced before this many packets were observed carry no loss.
    pub loss_from_packets: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub max_grad_norm: f64,
    pub adam: AdamConfig,
    pub input: InputEncoding,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            layer_sizes: vec![32, 64, 64, 32],
            dropout: vec![0.0, 0.0, 0.25, 0.25],
            seed: 0x5C19_5EED,
            learning_rate: 3e-3,
            final_lr_fraction: 0.05,
            epochs: 70,
            batch_size: 32,
            validation_fraction: 0.1,
            loss_from_packets: 9,
            max_grad_norm: 1.0,
            adam: AdamConfig::default(),
            input: InputEncoding::default(),
        }
    }
}

impl RnnConfig {
    /// Step size used throughout epoch `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let progress = (epoch.saturating_sub(1) as f64 / (self.epochs - 1) as f64).min(1.0);
        let f = self.final_lr_fraction;
        self.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
    }

    /// Layer widths of the original architecture.
    pub fn full_scale() -> Self {
        RnnConfig {
            layer_sizes: vec![200, 400, 400, 200],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be non-empty and >= 1".into()));
        }
        if self.dropout.len() != self.layer_sizes.len() {
            return Err(Error::Config(format!(
                "{} dropout factors for {} layers",
                self.dropout.len(),
                self.layer_sizes.len()
            )));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("learning rate and batch size must be positive".into()));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::Config("final learning-rate fraction must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(1, &self.layer_sizes)
    }

    /// Weights uniform in `[-k, k]`, `k = 1 / sqrt(fan_in)`.
    pub fn init_params(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut rng = seed::rng(seed::derive(self.seed, 0x1417));
        let mut params = vec![0.0; layout.len];
        for s in &layout.layers {
            let k = 1.0 / (s.cols() as f64).sqrt();
            for p in &mut params[s.w..s.b + s.rows()] {
                *p = rng.random_range(-k..=k);
            }
        }
        let k = 1.0 / (layout.last_hidden() as f64).sqrt();
        for p in &mut params[layout.out_w..layout.len] {
            *p = rng.random_range(-k..=k);
        }
        params
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub optimizer: String,
    pub loss: String,
    pub train_samples: usize,
    pub validation_samples: usize,
    /// Epoch whose weights were kept (lowest validation loss).
    pub selected_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// Trained weights plus everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub config: RnnConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
    pub training: Option<TrainingMeta>,
}

impl TrainedModel {
    pub fn from_params(config: RnnConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if params.len() != layout.len {
            return Err(Error::Config(format!(
                "{} parameters for a layout of {}",
                params.len(),
                layout.len
            )));
        }
        Ok(TrainedModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config,
            layout,
            params,
            training: None,
        })
    }

    /// Untrained network with the configured initialization.
    pub fn initialized(config: RnnConfig) -> Result<Self> {
        let params = config.init_params();
        Self::from_params(config, params)
    }

    pub fn zeros(config: RnnConfig) -> Result<Self> {
        let n = config.layout().len;
        Self::from_params(config, vec![0.0; n])
    }

    fn encode(&self, cov: &[f64]) -> Vec<f64> {
        cov.iter().map(|&c| self.config.input.encode(c)).collect()
    }

    /// Confidence after every step.
    pub fn forward_all(&self, cov: &[f64]) -> Result<Vec<f64>> {
        if cov.is_empty() {
            return Err(Error::InsufficientData("empty CoV sequence".into()));
        }
        let logits = net::forward_logits(&self.layout, &self.params, &self.encode(cov));
        logits
            .into_iter()
            .map(|s| {
                if s.is_finite() {
                    Ok(net::sigmoid(s))
                } else {
                    Err(Error::Numeric(format!("non-finite network output {s}")))
                }
            })
            .collect()
    }

    /// Confidence that the stream is periodic, read after the last step.
    pub fn forward(&self, cov: &[f64]) -> Result<f64> {
        Ok(*self.forward_all(cov)?.last().expect("non-empty"))
    }

    /// Periodic when the confidence exceeds `threshold`.
    pub fn classify(&self, cov: &[f64], threshold: f64) -> Result<bool> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::param(format!("threshold {threshold} outside (0, 1)")));
        }
        Ok(self.forward(cov)? > threshold)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: TrainedModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Config(format!("not a model file: {}", model.format)));
        }
        model.config.validate()?;
        if model.layout != model.config.layout() || model.params.len() != model.layout.len {
            return Err(Error::Config("model layout does not match its config".into()));
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("model contains non-finite weights".into()));
        }
        Ok(model)
    }
}

impl StepScorer for TrainedModel {
    fn step_confidences(&self, cov: &[f64]) -> Result<Vec<f64>> {
        self.forward_all(cov)
    }
}

/// Periodic-confidence oracle used by the proxy.
pub trait PeriodicityClassifier {
    fn confidence(&self, cov: &[f64]) -> Result<f64>;
}

impl PeriodicityClassifier for TrainedModel {
    fn confidence(&self, cov: &[f64]) -> Result<f64> {
        self.forward(cov)
    }
}

/// Fixed confidence regardless of input; useful for wiring and tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier(pub f64);

impl PeriodicityClassifier for ConstantClassifier {
    fn confidence(&self, cov: &[f64]) -> Result<f64> {
        if cov.is_empty() {
            return Err(Error::InsufficientData("empty CoV sequence".into()));
        }
        Ok(self.0)
    }
}
