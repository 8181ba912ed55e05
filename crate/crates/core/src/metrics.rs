//! Binary classification metrics, positive meaning "periodic".

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (p, a) in pairs {
            c.record(p, a);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn merge(&self, other: &Self) -> Self {
        ConfusionCounts {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn accuracy(&self) -> Result<f64> {
        ratio(self.tp + self.tn, self.total(), "accuracy")
    }

    pub fn recall(&self) -> Result<f64> {
        ratio(self.tp, self.tp + self.fn_, "recall")
    }

    pub fn precision(&self) -> Result<f64> {
        ratio(self.tp, self.tp + self.fp, "precision")
    }

    /// Harmonic mean of precision and recall.
    pub fn f1(&self) -> Result<f64> {
        let p = self.precision()?;
        let r = self.recall()?;
        if p + r == 0.0 {
            return Err(Error::UndefinedMetric("f1"));
        }
        Ok(2.0 * p * r / (p + r))
    }

    pub fn summary(&self) -> MetricSummary {
        MetricSummary {
            accuracy: self.accuracy().ok(),
            precision: self.precision().ok(),
            recall: self.recall().ok(),
            f1: self.f1().ok(),
        }
    }
}

fn ratio(num: u64, den: u64, name: &'static str) -> Result<f64> {
    if den == 0 {
        Err(Error::UndefinedMetric(name))
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// All four metrics; `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Anything that produces a periodic-confidence after every packet.
pub trait StepScorer {
    /// Confidence after each prefix of `cov`, one value per input step.
    fn step_confidences(&self, cov: &[f64]) -> Result<Vec<f64>>;
}

/// A test stream as seen by the evaluator.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub cov: Vec<f64>,
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketMetricsRow {
    /// Number of observed packets.
    pub x: usize,
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Classifies every sample after each packet count `x` in `3..=x_max` and
/// every threshold.
///
/// Below roughly nine packets the table is dominated by a transient: a
/// four-packet pattern has not repeated yet and cannot be told apart from
/// random arrivals.
pub fn metrics_vs_packets<S: StepScorer + ?Sized>(
    model: &S,
    samples: &[EvalSample],
    thresholds: &[f64],
) -> Result<Vec<PacketMetricsRow>> {
    if samples.is_empty() {
        return Err(Error::param("empty test set"));
    }
    if thresholds.is_empty() {
        return Err(Error::param("no thresholds given"));
    }
    // x_max is bounded by the shortest stream: every row covers all samples.
    let steps = samples.iter().map(|s| s.cov.len()).min().unwrap_or(0);
    if steps == 0 {
        return Err(Error::InsufficientData("test streams have fewer than 3 packets".into()));
    }
    let scores: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| model.step_confidences(&s.cov[..steps]))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(thresholds.len() * steps);
    for &threshold in thresholds {
        for step in 0..steps {
            let counts = ConfusionCounts::from_pairs(
                samples
                    .iter()
                    .zip(&scores)
                    .map(|(s, sc)| (sc[step] > threshold, s.periodic)),
            );
            let m = counts.summary();
            rows.push(PacketMetricsRow {
                x: step + 3,
                threshold,
                counts,
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
            });
        }
    }
    Ok(rows)
}

/// Writes `x,threshold,accuracy,precision,recall,f1`; undefined values are empty.
pub fn write_metrics_csv(rows: &[PacketMetricsRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "threshold", "accuracy", "precision", "recall", "f1"])?;
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.x.to_string(),
            r.threshold.to_string(),
            fmt(r.accuracy),
            fmt(r.precision),
            fmt(r.recall),
            fmt(r.f1),
        ])?;
    }
    out.flush()?;
    Ok(())
}
