//! Running coefficient of variation of inter-arrival times.
//!
//! After the `n`-th arrival (`n >= 3`) the feature is `c_n = sigma / mu`
//! over the `n - 1` inter-arrival times seen so far, using the population
//! standard deviation. The value is scale- and shift-free in the arrival
//! timestamps, which lets one classifier cover periods from microseconds to
//! seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coefficient-of-variation value per arrival, starting at the third.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovSequence(pub Vec<f64>);

impl CovSequence {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Prefix that corresponds to the first `packets` arrivals.
    pub fn after_packets(&self, packets: usize) -> &[f64] {
        let k = packets.saturating_sub(2).min(self.0.len());
        &self.0[..k]
    }
}

/// O(1)-per-update accumulator over inter-arrival times.
///
/// Sums are kept relative to the first observed IAT (shifted data), which
/// avoids cancellation when the IATs have a tiny spread around a large mean.
#[derive(Debug, Clone, Default)]
pub struct CovAccumulator {
    count: usize,
    shift: f64,
    sum: f64,
    sum_sq: f64,
}

impl CovAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, iat: f64) {
        if self.count == 0 {
            self.shift = iat;
        }
        let d = iat - self.shift;
        self.count += 1;
        self.sum += d;
        self.sum_sq += d * d;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.shift + self.sum / self.count as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = (self.sum_sq - self.sum * self.sum / n) / n;
        var.max(0.0).sqrt()
    }

    /// `sigma / mu`, or 0 when the mean is zero (all arrivals coincide).
    pub fn cov(&self) -> f64 {
        let mu = self.mean();
        if mu <= 0.0 {
            0.0
        } else {
            self.std_dev() / mu
        }
    }
}

/// Coefficient-of-variation sequence for an ordered list of arrival times.
pub fn cov_sequence(arrivals: &[f64]) -> Result<CovSequence> {
    if arrivals.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 arrivals, got {}",
            arrivals.len()
        )));
    }
    let mut acc = CovAccumulator::new();
    let mut out = Vec::with_capacity(arrivals.len() - 2);
    for (i, pair) in arrivals.windows(2).enumerate() {
        let iat = pair[1] - pair[0];
        if !(iat >= 0.0) {
            return Err(Error::Ordering(i + 1));
        }
        acc.push(iat);
        if acc.count() >= 2 {
            out.push(acc.cov());
        }
    }
    Ok(CovSequence(out))
}

/// Same as [`cov_sequence`] but fed directly with inter-arrival times.
pub fn cov_sequence_from_iats(iats: &[f64]) -> Result<CovSequence> {
    if iats.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 inter-arrival times, got {}",
            iats.len()
        )));
    }
    let mut acc = CovAccumulator::new();
    let mut out = Vec::with_capacity(iats.len() - 1);
    for (i, &iat) in iats.iter().enumerate() {
        if !(iat >= 0.0) {
            return Err(Error::Ordering(i + 1));
        }
        acc.push(iat);
        if acc.count() >= 2 {
            out.push(acc.cov());
        }
    }
    Ok(CovSequence(out))
}
