//! Labeled artificial streams: pure periodic, periodic pattern,
//! near-periodic and aperiodic inter-arrival sequences.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CovAccumulator;
use crate::seed;

pub const MIN_PERIOD: f64 = 1e-6;
pub const MAX_PERIOD: f64 = 1.0;
/// Upper (exclusive) coefficient of variation of the periodic classes and
/// lower (inclusive) bound of the aperiodic class.
pub const PERIODIC_COV_LIMIT: f64 = 0.05;
pub const NEAR_PERIODIC_COV: f64 = 0.01;
pub const NEAR_PERIODIC_COV_LIMIT: f64 = 0.04;
/// Last packet index that may be delayed in a near-periodic stream. Both
/// affected IATs are then visible within the first 15 packets.
pub const NEAR_PERIODIC_LAST_DELAYED: usize = 13;

const MASK_LABEL: u64 = 0x6d61_736b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamClass {
    PurePeriodic,
    #[serde(rename = "pattern")]
    PeriodicPattern,
    NearPeriodic,
    Aperiodic,
}

impl StreamClass {
    /// Ground-truth periodicity flag.
    pub fn is_periodic(self) -> bool {
        matches!(self, StreamClass::PurePeriodic | StreamClass::PeriodicPattern)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StreamClass::PurePeriodic => "pure_periodic",
            StreamClass::PeriodicPattern => "pattern",
            StreamClass::NearPeriodic => "near_periodic",
            StreamClass::Aperiodic => "aperiodic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Period `p` in seconds.
    pub period: f64,
    /// Target coefficient of variation `c`.
    pub cov: f64,
    pub n_packets: usize,
    /// Packets per repeating pattern `m`.
    pub pattern_m: usize,
    pub seed: u64,
}

impl GenParams {
    pub fn new(period: f64, cov: f64, n_packets: usize, pattern_m: usize, seed: u64) -> Self {
        GenParams {
            period,
            cov,
            n_packets,
            pattern_m,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period >= MIN_PERIOD && self.period <= MAX_PERIOD) {
            return Err(Error::param(format!(
                "period {} outside [{MIN_PERIOD}, {MAX_PERIOD}] s",
                self.period
            )));
        }
        if !(self.cov >= 0.0 && self.cov.is_finite()) {
            return Err(Error::param(format!("coefficient of variation {}", self.cov)));
        }
        if self.pattern_m == 0 {
            return Err(Error::param("pattern size must be at least 1"));
        }
        if self.n_packets < 2 || self.n_packets < 2 * self.pattern_m {
            return Err(Error::param(format!(
                "{} packets do not cover two periods of {}",
                self.n_packets, self.pattern_m
            )));
        }
        Ok(())
    }

    fn require_cov(&self, lo: f64, hi: f64, hi_inclusive: bool) -> Result<()> {
        let ok = self.cov >= lo && if hi_inclusive { self.cov <= hi } else { self.cov < hi };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!(
                "coefficient of variation {} outside class range",
                self.cov
            )))
        }
    }
}

/// Multiplicative IAT mask of a periodic pattern; the last entry is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMask(Vec<f64>);

impl PatternMask {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.last() != Some(&1.0) {
            return Err(Error::param("pattern mask must end in 1"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("pattern mask values must lie in [0, 1]"));
        }
        Ok(PatternMask(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStream {
    pub label: StreamClass,
    pub params: GenParams,
    pub iats: Vec<f64>,
}

impl LabeledStream {
    pub fn is_periodic(&self) -> bool {
        self.label.is_periodic()
    }

    /// Arrival times starting at zero.
    pub fn arrivals(&self) -> Vec<f64> {
        arrivals_from_iats(&self.iats)
    }
}

pub fn arrivals_from_iats(iats: &[f64]) -> Vec<f64> {
    let mut t = 0.0;
    let mut out = Vec::with_capacity(iats.len() + 1);
    out.push(0.0);
    for &x in iats {
        t += x;
        out.push(t);
    }
    out
}

/// Empirical population coefficient of variation.
pub fn empirical_cov(iats: &[f64]) -> f64 {
    let mut acc = CovAccumulator::new();
    iats.iter().for_each(|&x| acc.push(x));
    acc.cov()
}

fn truncated_normal_iats(params: &GenParams, count: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let normal = Normal::new(params.period, params.cov * params.period)
        .map_err(|e| Error::param(e.to_string()))?;
    Ok((0..count).map(|_| normal.sample(rng).max(0.0)).collect())
}

/// `n - 1` IATs drawn i.i.d. from `max(0, N(p, (c p)^2))`.
pub fn gen_pure_periodic(params: &GenParams) -> Result<LabeledStream> {
    params.validate()?;
    if params.pattern_m != 1 {
        return Err(Error::param("pure periodic streams have one packet per period"));
    }
    params.require_cov(0.0, PERIODIC_COV_LIMIT, false)?;
    let mut rng = seed::rng(params.seed);
    Ok(LabeledStream {
        label: StreamClass::PurePeriodic,
        params: *params,
        iats: truncated_normal_iats(params, params.n_packets - 1, &mut rng)?,
    })
}

/// `m - 1` uniform draws in `(0, 1)` followed by a literal 1.
pub fn gen_pattern_mask(m: usize, seed: u64) -> Result<PatternMask> {
    if m < 2 {
        return Err(Error::param(format!("pattern size {m} < 2")));
    }
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(m);
    while values.len() < m - 1 {
        let u: f64 = rng.random();
        if u > 0.0 {
            values.push(u);
        }
    }
    values.push(1.0);
    Ok(PatternMask(values))
}

/// Mask seed used by the dataset builder for a stream seeded with `seed`.
pub fn mask_seed(stream_seed: u64) -> u64 {
    seed::derive(stream_seed, MASK_LABEL)
}

/// Applies the mask cyclically to Gaussian IATs.
///
/// The mask is normalized by its sum so that one full pattern spans the
/// period `p` on average and the mean IAT is `p / m`.
pub fn gen_periodic_pattern(params: &GenParams, mask: &PatternMask) -> Result<LabeledStream> {
    params.validate()?;
    if mask.len() != params.pattern_m {
        return Err(Error::param(format!(
            "mask length {} does not match pattern size {}",
            mask.len(),
            params.pattern_m
        )));
    }
    if params.pattern_m < 2 {
        return Err(Error::param("a pattern needs at least two packets"));
    }
    params.require_cov(0.0, PERIODIC_COV_LIMIT, false)?;
    let mut rng = seed::rng(params.seed);
    let total: f64 = mask.values().iter().sum();
    let iats = truncated_normal_iats(params, params.n_packets - 1, &mut rng)?
        .into_iter()
        .enumerate()
        .map(|(k, x)| x * mask.values()[k % mask.len()] / total)
        .collect();
    Ok(LabeledStream {
        label: StreamClass::PeriodicPattern,
        params: *params,
        iats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearPeriodicOptions {
    /// The empirical CoV over all IATs must stay strictly below this.
    pub cov_limit: f64,
    /// Largest packet index eligible for the delay (clamped to `n - 2`).
    pub last_delayed: usize,
}

impl Default for NearPeriodicOptions {
    fn default() -> Self {
        NearPeriodicOptions {
            cov_limit: NEAR_PERIODIC_COV_LIMIT,
            last_delayed: NEAR_PERIODIC_LAST_DELAYED,
        }
    }
}

pub fn gen_near_periodic(params: &GenParams) -> Result<LabeledStream> {
    gen_near_periodic_with(params, &NearPeriodicOptions::default())
}

/// Pure periodic stream in which one interior packet is delayed by the
/// largest `d` that keeps the empirical CoV below the limit.
pub fn gen_near_periodic_with(
    params: &GenParams,
    opts: &NearPeriodicOptions,
) -> Result<LabeledStream> {
    params.validate()?;
    if params.n_packets < 4 {
        return Err(Error::param("near-periodic streams need at least 4 packets"));
    }
    if params.pattern_m != 1 {
        return Err(Error::param("near-periodic streams have one packet per period"));
    }
    params.require_cov(0.0, opts.cov_limit, false)?;
    let mut rng = seed::rng(params.seed);
    let mut iats = truncated_normal_iats(params, params.n_packets - 1, &mut rng)?;
    let last = opts.last_delayed.clamp(1, params.n_packets - 2);
    let k = rng.random_range(1..=last);

    let cov_with = |iats: &[f64], d: f64| {
        let mut acc = CovAccumulator::new();
        for (j, &x) in iats.iter().enumerate() {
            let v = if j == k - 1 {
                x + d
            } else if j == k {
                x - d
            } else {
                x
            };
            acc.push(v);
        }
        acc.cov()
    };

    if cov_with(&iats, 0.0) >= opts.cov_limit {
        return Err(Error::Numeric(
            "base stream already exceeds the near-periodic CoV limit".into(),
        ));
    }
    // CoV(d) is the root of a convex quadratic in d; bisect on [lo, hi]
    // keeping CoV(lo) < limit. The target sits a hair under the limit so
    // the stored IATs still pass when the CoV is recomputed another way
    // (two-pass, after a JSON round trip).
    let target = opts.cov_limit * (1.0 - 1e-9);
    let mut lo = 0.0;
    let mut hi = iats[k];
    if cov_with(&iats, hi) < target {
        lo = hi;
    } else {
        while hi - lo > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            if cov_with(&iats, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    iats[k - 1] += lo;
    iats[k] = (iats[k] - lo).max(0.0);

    Ok(LabeledStream {
        label: StreamClass::NearPeriodic,
        params: *params,
        iats,
    })
}

/// Gaussian IATs with a large coefficient of variation, `c` in `[0.05, 1]`.
pub fn gen_aperiodic(params: &GenParams) -> Result<LabeledStream> {
    params.validate()?;
    params.require_cov(PERIODIC_COV_LIMIT, 1.0, true)?;
    let mut rng = seed::rng(params.seed);
    Ok(LabeledStream {
        label: StreamClass::Aperiodic,
        params: *params,
        iats: truncated_normal_iats(params, params.n_packets - 1, &mut rng)?,
    })
}

/// Regenerates a stream of the given class from its parameters.
pub fn generate(
    class: StreamClass,
    params: &GenParams,
    near: &NearPeriodicOptions,
) -> Result<LabeledStream> {
    match class {
        StreamClass::PurePeriodic => gen_pure_periodic(params),
        StreamClass::PeriodicPattern => {
            let mask = gen_pattern_mask(params.pattern_m, mask_seed(params.seed))?;
            gen_periodic_pattern(params, &mask)
        }
        StreamClass::NearPeriodic => gen_near_periodic_with(params, near),
        StreamClass::Aperiodic => gen_aperiodic(params),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Per-class sample counts and parameter ranges of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// Pure periodic, pattern m=2, m=3, m=4, near-periodic, aperiodic.
    pub counts: [usize; 6],
    pub n_packets: usize,
    pub period_range: (f64, f64),
    pub aperiodic_cov: (f64, f64),
    pub near_periodic: NearPeriodicOptions,
    pub train_fraction: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            counts: [2000, 668, 666, 666, 2000, 2000],
            n_packets: 36,
            period_range: (MIN_PERIOD, MAX_PERIOD),
            aperiodic_cov: (PERIODIC_COV_LIMIT, 1.0),
            near_periodic: NearPeriodicOptions::default(),
            train_fraction: 0.5,
        }
    }
}

impl DatasetSpec {
    pub fn with_counts(counts: [usize; 6]) -> Self {
        DatasetSpec {
            counts,
            ..Default::default()
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    fn groups(&self) -> [(StreamClass, usize, usize); 6] {
        use StreamClass::*;
        [
            (PurePeriodic, 1, self.counts[0]),
            (PeriodicPattern, 2, self.counts[1]),
            (PeriodicPattern, 3, self.counts[2]),
            (PeriodicPattern, 4, self.counts[3]),
            (NearPeriodic, 1, self.counts[4]),
            (Aperiodic, 1, self.counts[5]),
        ]
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.period_range;
        if !(lo >= MIN_PERIOD && hi <= MAX_PERIOD && lo <= hi) {
            return Err(Error::param("period range must lie within [1 us, 1 s]"));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::param("train fraction must lie in [0, 1]"));
        }
        let (clo, chi) = self.aperiodic_cov;
        if !(clo >= PERIODIC_COV_LIMIT && chi >= clo) {
            return Err(Error::param("aperiodic CoV range must start at 0.05 or above"));
        }
        Ok(())
    }
}

/// One line of the dataset JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub label: StreamClass,
    pub p: f64,
    pub c: f64,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub split: Split,
    pub iats: Vec<f64>,
}

impl DatasetRecord {
    pub fn is_periodic(&self) -> bool {
        self.label.is_periodic()
    }

    pub fn arrivals(&self) -> Vec<f64> {
        arrivals_from_iats(&self.iats)
    }

    pub fn params(&self) -> GenParams {
        GenParams::new(self.p, self.c, self.n, self.m, self.seed)
    }
}

/// Builds the full labeled dataset, class by class, with a stratified
/// train/test split.
pub fn build_dataset(spec: &DatasetSpec, master_seed: u64) -> Result<Vec<DatasetRecord>> {
    spec.validate()?;
    let (plo, phi) = spec.period_range;
    let (ln_lo, ln_hi) = (plo.ln(), phi.ln());
    let mut out = Vec::with_capacity(spec.total());
    let mut index = 0u64;

    for (group, (class, m, count)) in spec.groups().into_iter().enumerate() {
        let mut split_rng = seed::rng(seed::derive(master_seed, u64::MAX - group as u64));
        let mut order: Vec<usize> = (0..count).collect();
        // Fisher-Yates; the first `n_train` positions go to training.
        for i in (1..count).rev() {
            let j = split_rng.random_range(0..=i);
            order.swap(i, j);
        }
        let n_train = (count as f64 * spec.train_fraction).floor() as usize;
        let mut is_train = vec![false; count];
        for &i in &order[..n_train] {
            is_train[i] = true;
        }

        for train in is_train {
            let mut prng = seed::rng(seed::derive(master_seed, 2 * index));
            let stream_seed = seed::derive(master_seed, 2 * index + 1);
            index += 1;

            let p = if ln_hi > ln_lo {
                prng.random_range(ln_lo..=ln_hi).exp()
            } else {
                plo
            }
            .clamp(plo, phi);
            let c = match class {
                StreamClass::PurePeriodic | StreamClass::PeriodicPattern => {
                    prng.random_range(0.0..PERIODIC_COV_LIMIT)
                }
                StreamClass::NearPeriodic => NEAR_PERIODIC_COV,
                StreamClass::Aperiodic => {
                    let (lo, hi) = spec.aperiodic_cov;
                    prng.random_range(lo..=hi)
                }
            };
            let params = GenParams::new(p, c, spec.n_packets, m, stream_seed);
            let stream = generate(class, &params, &spec.near_periodic)?;
            out.push(DatasetRecord {
                label: class,
                p,
                c,
                m,
                n: spec.n_packets,
                seed: stream_seed,
                split: if train { Split::Train } else { Split::Test },
                iats: stream.iats,
            });
        }
    }
    Ok(out)
}

pub fn write_dataset(records: &[DatasetRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(records: &[DatasetRecord], path: &Path) -> Result<()> {
    write_dataset(records, BufWriter::new(File::create(path)?))
}

pub fn read_dataset(r: impl BufRead) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("dataset line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset_file(path: &Path) -> Result<Vec<DatasetRecord>> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_variance_pure_periodic() {
        let s = gen_pure_periodic(&GenParams::new(0.020, 0.0, 36, 1, 3)).unwrap();
        assert_eq!(s.iats.len(), 35);
        assert!(s.iats.iter().all(|&x| x == 0.020));
        assert!(s.is_periodic());
    }

    #[test]
    fn pure_periodic_mean_within_clt_bound() {
        let p = 1e-3;
        let c = 0.01;
        let s = gen_pure_periodic(&GenParams::new(p, c, 36, 1, 1)).unwrap();
        let mean = s.iats.iter().sum::<f64>() / 35.0;
        assert!((mean - p).abs() < 3.0 * c * p / 35f64.sqrt());
    }

    #[test]
    fn pure_periodic_rejects_bad_ranges() {
        assert!(gen_pure_periodic(&GenParams::new(2.0, 0.0, 36, 1, 0)).is_err());
        assert!(gen_pure_periodic(&GenParams::new(0.01, 0.05, 36, 1, 0)).is_err());
        assert!(gen_pure_periodic(&GenParams::new(0.01, 0.0, 1, 1, 0)).is_err());
        assert!(gen_pure_periodic(&GenParams::new(0.01, 0.0, 36, 2, 0)).is_err());
    }

    #[test]
    fn mask_shape_and_determinism() {
        let m2 = gen_pattern_mask(2, 9).unwrap();
        assert_eq!(m2.len(), 2);
        assert!(m2.values()[0] > 0.0 && m2.values()[0] < 1.0);
        assert_eq!(m2.values()[1], 1.0);
        assert_eq!(gen_pattern_mask(4, 5).unwrap(), gen_pattern_mask(4, 5).unwrap());
        assert!(gen_pattern_mask(1, 0).is_err());
        assert!(PatternMask::new(vec![0.5, 0.9]).is_err());
    }

    #[test]
    fn zero_variance_pattern_alternates() {
        let mask = PatternMask::new(vec![0.5, 1.0]).unwrap();
        let s = gen_periodic_pattern(&GenParams::new(0.010, 0.0, 36, 2, 0), &mask).unwrap();
        for (k, &x) in s.iats.iter().enumerate() {
            let want = if k % 2 == 0 { 0.010 / 3.0 } else { 0.020 / 3.0 };
            assert_relative_eq!(x, want, max_relative = 1e-12);
        }
        // one full pattern spans the period
        assert_relative_eq!(s.iats[0] + s.iats[1], 0.010, max_relative = 1e-12);
    }

    #[test]
    fn pattern_mask_length_mismatch() {
        let mask = PatternMask::new(vec![0.5, 1.0]).unwrap();
        assert!(gen_periodic_pattern(&GenParams::new(0.01, 0.0, 36, 3, 0), &mask).is_err());
    }

    #[test]
    fn near_periodic_single_outlier_pair() {
        for seed in 0..50 {
            let params = GenParams::new(0.01, NEAR_PERIODIC_COV, 36, 1, seed);
            let s = gen_near_periodic(&params).unwrap();
            assert_eq!(s.label, StreamClass::NearPeriodic);
            assert!(!s.is_periodic());
            assert!(empirical_cov(&s.iats) < NEAR_PERIODIC_COV_LIMIT);
            let sigma = NEAR_PERIODIC_COV * 0.01;
            // the injected delay is ~16 sigma; 5 sigma keeps base noise out
            let above = s.iats.iter().filter(|&&x| x > 0.01 + 5.0 * sigma).count();
            let below = s.iats.iter().filter(|&&x| x < 0.01 - 5.0 * sigma).count();
            assert_eq!((above, below), (1, 1), "seed {seed}");
            // the outlier pair sits within the first 14 IATs
            let pos = s.iats.iter().position(|&x| x > 0.01 + 5.0 * sigma).unwrap();
            assert!(pos < NEAR_PERIODIC_LAST_DELAYED);
        }
    }

    #[test]
    fn near_periodic_delay_is_maximal() {
        let params = GenParams::new(0.5, NEAR_PERIODIC_COV, 36, 1, 17);
        let s = gen_near_periodic(&params).unwrap();
        let c = empirical_cov(&s.iats);
        assert!(c < 0.04 && c > 0.04 * (1.0 - 1e-6), "{c}");
    }

    #[test]
    fn near_periodic_needs_interior_packet() {
        let params = GenParams::new(0.5, NEAR_PERIODIC_COV, 3, 1, 17);
        assert!(gen_near_periodic(&params).is_err());
    }

    #[test]
    fn aperiodic_class_range() {
        assert!(gen_aperiodic(&GenParams::new(1e-3, 0.04, 36, 1, 0)).is_err());
        assert!(gen_aperiodic(&GenParams::new(1e-3, 1.01, 36, 1, 0)).is_err());
        let s = gen_aperiodic(&GenParams::new(1e-3, 1.0, 36, 1, 0)).unwrap();
        assert!(s.iats.iter().all(|&x| x >= 0.0));
        assert!(!s.is_periodic());
    }

    #[test]
    fn small_dataset_counts_and_split() {
        let spec = DatasetSpec::with_counts([10, 4, 4, 4, 10, 10]);
        let ds = build_dataset(&spec, 42).unwrap();
        assert_eq!(ds.len(), 42);
        let train = ds.iter().filter(|r| r.split == Split::Train).count();
        assert_eq!(train, 21);
        for r in &ds {
            assert_eq!(r.iats.len(), 35);
            let regen = generate(r.label, &r.params(), &spec.near_periodic).unwrap();
            assert_eq!(regen.iats, r.iats);
        }
    }

    #[test]
    fn jsonl_roundtrip_and_schema() {
        let ds = build_dataset(&DatasetSpec::with_counts([1, 1, 0, 0, 1, 1]), 1).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["label", "p", "c", "m", "n", "seed", "split", "iats"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!(text.contains("\"label\":\"pattern\""));
        assert_eq!(read_dataset(&buf[..]).unwrap(), ds);
    }
}
