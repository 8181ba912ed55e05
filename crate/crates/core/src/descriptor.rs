//! Traffic descriptor `(interval w, max frames m, max frame size)`
//! extraction by deviation minimization.
//!
//! For every candidate `m` the tightest window `w(m)` holding at most `m`
//! arrivals is the minimum span of `m` consecutive IATs. The candidate is
//! scored by the average packet deficit `m - u_m(t)` of the left-open
//! window `(t, t + w(m)]` as it slides over the trace; the smallest average
//! deficit wins.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream bandwidth contract: at most `max_frames` frames of at most
/// `max_frame_size` bytes in any left-open window of `interval` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficDescriptor {
    #[serde(rename = "interval_s")]
    pub interval: f64,
    pub max_frames: usize,
    pub max_frame_size: u32,
}

impl TrafficDescriptor {
    pub fn new(interval: f64, max_frames: usize, max_frame_size: u32) -> Result<Self> {
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(Error::Degenerate(format!("interval {interval} s")));
        }
        if max_frames == 0 {
            return Err(Error::Degenerate("zero frames per interval".into()));
        }
        if max_frame_size == 0 {
            return Err(Error::Degenerate("zero frame size".into()));
        }
        Ok(TrafficDescriptor {
            interval,
            max_frames,
            max_frame_size,
        })
    }

    /// True when no left-open window of `interval` over `arrivals` holds
    /// more than `max_frames` arrivals.
    pub fn conforms(&self, arrivals: &[f64]) -> bool {
        max_occupancy(arrivals, self.interval) <= self.max_frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub m: usize,
    pub window: f64,
    /// `None` when the integration interval is empty.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviationProfile {
    pub entries: Vec<DeviationEntry>,
}

impl DeviationProfile {
    pub fn get(&self, m: usize) -> Option<&DeviationEntry> {
        self.entries.iter().find(|e| e.m == m)
    }

    /// CSV with columns `m,w,delta`; degenerate candidates have an empty delta.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["m", "w", "delta"])?;
        for e in &self.entries {
            out.write_record([
                e.m.to_string(),
                format!("{:e}", e.window),
                e.deviation.map(|d| d.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_sorted(arrivals: &[f64]) -> Result<()> {
    for (i, w) in arrivals.windows(2).enumerate() {
        if !(w[1] >= w[0]) {
            return Err(Error::Ordering(i + 1));
        }
    }
    Ok(())
}

/// Tightest window holding at most `m` arrivals:
/// `min(t[i + m] - t[i])` over every start index `0 <= i <= n - 1 - m`.
pub fn window_bound(arrivals: &[f64], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::param("m must be at least 1"));
    }
    if arrivals.len() <= m {
        return Err(Error::InsufficientData(format!(
            "{} arrivals cannot bound a window of {m} frames",
            arrivals.len()
        )));
    }
    Ok(arrivals
        .iter()
        .zip(&arrivals[m..])
        .map(|(a, b)| b - a)
        .fold(f64::INFINITY, f64::min))
}

/// Number of arrivals in the left-open window `(t, t + w]`.
pub fn occupancy(arrivals: &[f64], w: f64, t: f64) -> usize {
    let lo = arrivals.partition_point(|&x| x <= t);
    let hi = arrivals.partition_point(|&x| x <= t + w);
    hi.saturating_sub(lo)
}

/// Largest occupancy of any left-open window of length `w`.
///
/// The count only increases when the right edge reaches an arrival, so it
/// suffices to test windows ending exactly at each arrival. Membership is
/// decided on the gap `t_j - t_i < w` rather than on `t_j - w`, which keeps
/// a window built from the same pair of arrivals exact.
pub fn max_occupancy(arrivals: &[f64], w: f64) -> usize {
    let mut lo = 0;
    let mut best = 0;
    for (j, &t) in arrivals.iter().enumerate() {
        while t - arrivals[lo] >= w {
            lo += 1;
        }
        best = best.max(j + 1 - lo);
    }
    best
}

/// Range of window start times `t` the deficit is averaged over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationRange {
    /// `[t_0, t_{n-1} - w(m)]`: only windows that end inside the trace.
    #[default]
    Trimmed,
    /// `[t_0, t_{n-1}]`: windows running past the last arrival count their
    /// missing packets too, which penalizes long windows.
    Observed,
}

/// Average deficit `delta(m)` of the sliding window over
/// `[t_0, t_{n-1} - w(m)]`, integrated exactly.
///
/// `u_m(t)` is a step function whose breakpoints are the arrivals
/// themselves (an arrival leaves the window) and the arrivals shifted by
/// `-w(m)` (an arrival enters it).
pub fn deviation(arrivals: &[f64], m: usize) -> Result<f64> {
    deviation_with(arrivals, m, DeviationRange::Trimmed)
}

pub fn deviation_with(arrivals: &[f64], m: usize, range: DeviationRange) -> Result<f64> {
    check_sorted(arrivals)?;
    let w = window_bound(arrivals, m)?;
    deviation_for_window(arrivals, m, w, range)
}

fn deviation_for_window(arrivals: &[f64], m: usize, w: f64, range: DeviationRange) -> Result<f64> {
    let start = arrivals[0];
    let last = arrivals[arrivals.len() - 1];
    // the candidate set does not depend on the range
    if !(last - w - start > 0.0) {
        return Err(Error::Degenerate(format!(
            "window {w} for m={m} covers the whole trace"
        )));
    }
    let end = match range {
        DeviationRange::Trimmed => last - w,
        DeviationRange::Observed => last,
    };
    let span = end - start;
    let mut cuts: Vec<f64> = Vec::with_capacity(2 * arrivals.len() + 2);
    cuts.push(start);
    cuts.push(end);
    for &t in arrivals {
        for b in [t, t - w] {
            if b > start && b < end {
                cuts.push(b);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut integral = 0.0;
    for seg in cuts.windows(2) {
        let len = seg[1] - seg[0];
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (seg[0] + seg[1]);
        let u = occupancy(arrivals, w, mid);
        integral += (m as f64 - u as f64) * len;
    }
    Ok(integral / span)
}

/// Deviation of every candidate `1 <= m <= floor(n / 2)`.
pub fn deviation_profile(arrivals: &[f64]) -> Result<DeviationProfile> {
    deviation_profile_with(arrivals, DeviationRange::Trimmed)
}

pub fn deviation_profile_with(arrivals: &[f64], range: DeviationRange) -> Result<DeviationProfile> {
    check_sorted(arrivals)?;
    if arrivals.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 arrivals, got {}",
            arrivals.len()
        )));
    }
    let entries = (1..=arrivals.len() / 2)
        .map(|m| {
            let w = window_bound(arrivals, m)?;
            let deviation = match deviation_for_window(arrivals, m, w, range) {
                Ok(d) => Some(d),
                Err(Error::Degenerate(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(DeviationEntry {
                m,
                window: w,
                deviation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeviationProfile { entries })
}

/// Deviations closer than this (in packets) are treated as equal.
pub const DEVIATION_TIE_TOLERANCE: f64 = 1e-9;

/// Picks `m* = argmin delta(m)` (ties to the smaller `m`) and returns the
/// descriptor together with the full profile.
///
/// Candidates with an empty integration interval or a zero window are
/// skipped. Every `m` scores zero on a perfectly periodic trace, so ties
/// are resolved with [`DEVIATION_TIE_TOLERANCE`] rather than bitwise.
pub fn extract_descriptor(
    arrivals: &[f64],
    frame_sizes: &[u32],
) -> Result<(TrafficDescriptor, DeviationProfile)> {
    extract_descriptor_with(arrivals, frame_sizes, DeviationRange::Trimmed)
}

pub fn extract_descriptor_with(
    arrivals: &[f64],
    frame_sizes: &[u32],
    range: DeviationRange,
) -> Result<(TrafficDescriptor, DeviationProfile)> {
    let profile = deviation_profile_with(arrivals, range)?;
    let scored = || {
        profile
            .entries
            .iter()
            .filter(|e| e.window > 0.0)
            .filter_map(|e| e.deviation.map(|d| (e, d)))
    };
    let min = scored()
        .map(|(_, d)| d)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
        .ok_or_else(|| Error::Degenerate("every candidate is degenerate".into()))?;
    let best = scored()
        .find(|&(_, d)| d <= min + DEVIATION_TIE_TOLERANCE)
        .map(|(e, _)| *e)
        .expect("minimum exists");
    let max_size = frame_sizes.iter().copied().max().unwrap_or(0);
    let desc = TrafficDescriptor::new(best.window, best.m, max_size)?;
    Ok((desc, profile))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic(p: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * p).collect()
    }

    #[test]
    fn window_of_constant_stream() {
        let a = periodic(0.25, 10);
        assert_eq!(window_bound(&a, 1).unwrap(), 0.25);
        assert_eq!(window_bound(&a, 9).unwrap(), a[9] - a[0]);
        assert!(window_bound(&a, 10).is_err());
    }

    #[test]
    fn window_of_pairs() {
        let a = [0.0, 1.0, 10.0, 11.0, 20.0, 21.0];
        assert_eq!(window_bound(&a, 2).unwrap(), 10.0);
        assert_eq!(window_bound(&a, 1).unwrap(), 1.0);
    }

    #[test]
    fn occupancy_is_left_open() {
        let a = [0.0, 1.0, 2.0];
        assert_eq!(occupancy(&a, 1.0, 0.0), 1);
        assert_eq!(occupancy(&a, 2.0, 0.0), 2);
        assert_eq!(occupancy(&a, 0.5, -0.5), 1);
    }

    #[test]
    fn perfect_periodicity_has_zero_deviation() {
        let a = periodic(0.02, 36);
        assert!(deviation(&a, 1).unwrap().abs() < 1e-9);
        let (d, _) = extract_descriptor(&a, &[94; 36]).unwrap();
        assert_eq!(d.max_frames, 1);
        assert!((d.interval - 0.02).abs() < 1e-12);
        assert_eq!(d.max_frame_size, 94);
        assert!(d.conforms(&a));
    }

    #[test]
    fn pair_pattern_deviation_by_hand() {
        // m=1: w=1, integrate over [0, 20]. The window (t, t+1] holds one
        // arrival except when it sits in a gap (t in [1, 9) and [11, 19)).
        let a = [0.0, 1.0, 10.0, 11.0, 20.0, 21.0];
        let d1 = deviation(&a, 1).unwrap();
        assert!((d1 - 16.0 / 20.0).abs() < 1e-12, "{d1}");
        // m=2: w=10 is exactly one pattern, no deficit at all.
        assert!(deviation(&a, 2).unwrap().abs() < 1e-12);
        let (d, _) = extract_descriptor(&a, &[100, 200, 100, 200, 100, 200]).unwrap();
        assert_eq!((d.max_frames, d.interval, d.max_frame_size), (2, 10.0, 200));
    }

    #[test]
    fn degenerate_candidates_are_skipped() {
        let a = [0.0, 0.0, 0.0, 0.0];
        assert!(matches!(extract_descriptor(&a, &[1; 4]), Err(Error::Degenerate(_))));
        assert!(matches!(
            deviation(&[0.0, 1.0], 1),
            Err(Error::Degenerate(_))
        ));
        assert!(extract_descriptor(&[0.0, 1.0, 2.0], &[1; 3]).is_err());
        assert!(matches!(deviation(&[0.0, 2.0, 1.0], 1), Err(Error::Ordering(2))));
    }

    #[test]
    fn observed_range_charges_the_tail() {
        // m=2 on the pair pattern: w=10; past t=11 the window still holds
        // 20 and 21 until t reaches 20, then only 21.
        let a = [0.0, 1.0, 10.0, 11.0, 20.0, 21.0];
        let d2 = deviation_with(&a, 2, DeviationRange::Observed).unwrap();
        assert!((d2 - 1.0 / 21.0).abs() < 1e-12, "{d2}");
        let (d, _) = extract_descriptor_with(&a, &[1; 6], DeviationRange::Observed).unwrap();
        assert_eq!(d.max_frames, 2);
        let a = periodic(0.02, 36);
        let (d, _) = extract_descriptor_with(&a, &[94; 36], DeviationRange::Observed).unwrap();
        assert_eq!(d.max_frames, 1);
    }

    #[test]
    fn profile_csv() {
        let p = deviation_profile(&periodic(1.0, 6)).unwrap();
        assert_eq!(p.entries.len(), 3);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("m,w,delta\n1,"));
    }
}
