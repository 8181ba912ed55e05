use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr};

use rand::Rng;
use scip_core::descriptor::{deviation_profile_with, extract_descriptor, DeviationRange};
use scip_core::features::cov_sequence;
use scip_core::netsim::{
    run_sim, Integration, MirrorScope, QueueClass, Scenario, SimOutput, SourceSpec, TrafficPattern, TxRecord,
};
use scip_core::{ConfusionCounts, Protocol, StreamKey};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Arrival trace starting at 0 with `3..60` gaps of `p * U(0.05, 3)`.
pub fn random_trace(seed: u64) -> Vec<f64> {
    let mut rng = scip_core::seed::rng(seed);
    let p = rng.random_range(1e-3..1.0);
    let n = rng.random_range(3..60);
    let mut t = vec![0.0];
    for _ in 0..n {
        let next = t[t.len() - 1] + p * rng.random_range(0.05..3.0);
        t.push(next);
    }
    t
}

/// Two-pass population CoV of every IAT prefix of length >= 2.
pub fn naive_cov(arrivals: &[f64]) -> Vec<f64> {
    let iats: Vec<f64> = arrivals.windows(2).map(|w| w[1] - w[0]).collect();
    (2..=iats.len())
        .map(|k| {
            let x = &iats[..k];
            let mu = x.iter().sum::<f64>() / k as f64;
            let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / k as f64;
            if mu <= 0.0 {
                0.0
            } else {
                var.sqrt() / mu
            }
        })
        .collect()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> Check {
    ensure!(a.len() == b.len(), "lengths {} and {}", a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        ensure!((x - y).abs() <= tol * (1.0 + y.abs()), "step {i}: {x} vs {y}");
    }
    Ok(())
}

/// The CoV sequence of `k * t + b` equals that of `t`.
pub fn cov_affine_invariance(t: &[f64], k: f64, b: f64) -> Check {
    let base = cov_sequence(t).map_err(|e| e.to_string())?;
    let moved: Vec<f64> = t.iter().map(|x| k * x + b).collect();
    let other = cov_sequence(&moved).map_err(|e| e.to_string())?;
    close(other.values(), base.values(), 1e-7)
}

/// Accuracy, precision, recall and F1 against their count definitions.
pub fn metric_identities(c: &ConfusionCounts) -> Check {
    let total = c.tp + c.tn + c.fp + c.fn_;
    let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
    ensure!(c.accuracy().ok() == ratio(c.tp + c.tn, total), "accuracy of {c:?}");
    ensure!(c.precision().ok() == ratio(c.tp, c.tp + c.fp), "precision of {c:?}");
    ensure!(c.recall().ok() == ratio(c.tp, c.tp + c.fn_), "recall of {c:?}");
    match c.f1() {
        Ok(f) => {
            let (p, r) = (c.precision().unwrap(), c.recall().unwrap());
            let count_form = 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64;
            ensure!((f - count_form).abs() < 1e-12, "f1 {f} vs {count_form} for {c:?}");
            ensure!((f - 2.0 * p * r / (p + r)).abs() < 1e-12, "f1 not harmonic for {c:?}");
        }
        Err(_) => ensure!(c.tp == 0, "f1 undefined with tp > 0 for {c:?}"),
    }
    let s = c.summary();
    for v in [s.accuracy, s.precision, s.recall, s.f1].into_iter().flatten() {
        ensure!((0.0..=1.0).contains(&v), "{v} outside [0, 1]");
    }
    Ok(())
}

/// Scaling by `k` scales every window by `k` and leaves every deviation
/// unchanged; `m*` is compared only for exact (power-of-two) factors.
pub fn descriptor_scale_covariance(t: &[f64], k: f64) -> Check {
    let scaled: Vec<f64> = t.iter().map(|x| x * k).collect();
    let (Ok(pa), Ok(pb)) = (
        deviation_profile_with(t, DeviationRange::Trimmed),
        deviation_profile_with(&scaled, DeviationRange::Trimmed),
    ) else {
        return Ok(());
    };
    for (x, y) in pa.entries.iter().zip(&pb.entries) {
        ensure!(x.m == y.m, "candidate sets differ");
        let w = x.window * k;
        ensure!((y.window - w).abs() <= 1e-12 * w.abs(), "m={}: window {} vs {w}", x.m, y.window);
        match (x.deviation, y.deviation) {
            (Some(a), Some(b)) => ensure!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "m={}: {a} vs {b}", x.m),
            (None, None) => {}
            _ => return Err(format!("m={}: degeneracy changed", x.m)),
        }
    }
    if k.log2().fract() == 0.0 {
        let (a, b) = (extract_descriptor(t, &[100]), extract_descriptor(&scaled, &[100]));
        if let (Ok((da, _)), Ok((db, _))) = (a, b) {
            ensure!(da.max_frames == db.max_frames, "m* {} vs {}", da.max_frames, db.max_frames);
        }
    }
    Ok(())
}

fn key(i: usize, dst: u8) -> StreamKey {
    StreamKey {
        src: IpAddr::V4(Ipv4Addr::new(10, 0, 0, i as u8 + 1)),
        dst: IpAddr::V4(Ipv4Addr::new(10, 0, 1, dst)),
        proto: Protocol::Udp,
        sport: 1000 + i as u16,
        dport: 5000,
    }
}

/// Two to four periodic or bursty sources on a shared bottleneck, some of
/// them prioritized, with optional finite queues and a mid-run promotion.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = scip_core::seed::rng(seed);
    let n = rng.random_range(2..=4);
    let mut sources = Vec::with_capacity(n);
    let mut priority_streams = Vec::new();
    for i in 0..n {
        let k = key(i, rng.random_range(1..=2));
        let size = rng.random_range(64..1500);
        let pattern = if rng.random_bool(0.5) {
            TrafficPattern::Periodic {
                start_s: rng.random_range(0..5000) as f64 * 1e-6,
                period_s: rng.random_range(50..2000) as f64 * 1e-6,
                size,
            }
        } else {
            let len = rng.random_range(100..1000);
            TrafficPattern::Bursts {
                first_s: rng.random_range(0..3000) as f64 * 1e-6,
                burst_len_s: len as f64 * 1e-6,
                burst_gap_s: (len + rng.random_range(100..3000)) as f64 * 1e-6,
                size,
            }
        };
        if rng.random_bool(0.5) {
            priority_streams.push(k);
        }
        sources.push(SourceSpec {
            name: format!("s{i}"),
            key: k,
            pattern,
        });
    }
    Scenario {
        link_rate_bps: if rng.random_bool(0.5) { 1e8 } else { 1e9 },
        overhead_bytes: 24,
        propagation_s: if rng.random_bool(0.5) { 0.0 } else { 1e-6 },
        queue_capacity_bytes: rng.random_bool(0.5).then(|| rng.random_range(3000..50_000)),
        duration_s: rng.random_range(5..20) as f64 * 1e-3,
        sources,
        monitored: "s0".into(),
        mirror: MirrorScope::Monitored,
        priority_streams,
        integration: if rng.random_bool(0.5) {
            Integration::AtTime {
                t_s: rng.random_range(0..20) as f64 * 1e-3,
            }
        } else {
            Integration::Never
        },
    }
}

fn wire_ns(sc: &Scenario, size: u32) -> u64 {
    let bits = (size + sc.overhead_bytes) as f64 * 8.0;
    ((bits * 1e9 / sc.link_rate_bps).ceil() as u64).max(1)
}

fn size_of(sc: &Scenario, stream: &str) -> u32 {
    let s = sc.sources.iter().find(|s| s.name == stream).expect("known stream");
    match s.pattern {
        TrafficPattern::Periodic { size, .. } | TrafficPattern::Bursts { size, .. } => size,
    }
}

/// Every emitted frame is delivered exactly once or dropped exactly once,
/// after crossing all three hops, and periodic sources emit the expected
/// number of frames.
pub fn netsim_conservation(sc: &Scenario, out: &SimOutput) -> Check {
    let mut hops: HashMap<u64, usize> = HashMap::new();
    for port in &out.audit {
        for tx in &port.transmissions {
            *hops.entry(tx.packet_id).or_default() += 1;
        }
    }
    let drops: usize = out.audit.iter().map(|p| p.drops.len()).sum();
    ensure!(
        drops == out.trace.iter().filter(|e| e.dropped).count(),
        "{drops} port drops disagree with the trace"
    );
    let prop_ns = (sc.propagation_s * 1e9).round() as u64;
    for (i, e) in out.trace.iter().enumerate() {
        ensure!(e.packet_id == i as u64, "trace out of order at {i}");
        ensure!(e.rx_ns.is_some() != e.dropped, "packet {i} delivered and dropped, or neither");
        if let Some(rx) = e.rx_ns {
            let n = hops.get(&e.packet_id).copied().unwrap_or(0);
            ensure!(n == 3, "packet {i} crossed {n} hops");
            let floor = 3 * (wire_ns(sc, size_of(sc, &e.stream)) + prop_ns);
            ensure!(rx - e.tx_ns >= floor, "packet {i} faster than the wire");
        }
    }
    let stop = (sc.duration_s * 1e9).round() as u64;
    for s in &sc.sources {
        if let TrafficPattern::Periodic { start_s, period_s, .. } = s.pattern {
            let (start, period) = ((start_s * 1e9).round() as u64, (period_s * 1e9).round() as u64);
            let expected = if start < stop { (stop - start - 1) / period + 1 } else { 0 };
            let got = out.trace.iter().filter(|e| e.stream == s.name).count() as u64;
            ensure!(got == expected, "{} emitted {got}, expected {expected}", s.name);
        }
    }
    Ok(())
}

/// Per egress port: no overlap, exact serialization times, no idling while
/// a frame waits, no best-effort start while a priority frame waits, and
/// FIFO order within each class.
pub fn netsim_port_discipline(sc: &Scenario, out: &SimOutput, txs: &[TxRecord]) -> Check {
    let mut txs = txs.to_vec();
    txs.sort_by_key(|t| t.start_ns);
    for w in txs.windows(2) {
        ensure!(w[1].start_ns >= w[0].end_ns, "packets {} and {} overlap", w[0].packet_id, w[1].packet_id);
    }
    for t in &txs {
        let size = size_of(sc, &out.trace[t.packet_id as usize].stream);
        ensure!(t.end_ns - t.start_ns == wire_ns(sc, size), "packet {} serialization", t.packet_id);
        ensure!(t.start_ns >= t.enqueue_ns, "packet {} sent before queued", t.packet_id);
    }
    let mut busy: Vec<(u64, u64)> = Vec::new();
    for t in &txs {
        match busy.last_mut() {
            Some(b) if b.1 == t.start_ns => b.1 = t.end_ns,
            _ => busy.push((t.start_ns, t.end_ns)),
        }
    }
    for t in txs.iter().filter(|t| t.start_ns > t.enqueue_ns) {
        let b = busy
            .iter()
            .find(|b| b.0 <= t.start_ns && t.start_ns <= b.1)
            .expect("every start lies in a busy period");
        ensure!(b.0 <= t.enqueue_ns, "port idle while packet {} waited", t.packet_id);
    }
    // latest start among priority frames queued before each instant
    let mut prio: Vec<(u64, u64)> = txs
        .iter()
        .filter(|t| t.class == QueueClass::Priority)
        .map(|t| (t.enqueue_ns, t.start_ns))
        .collect();
    prio.sort_unstable();
    let mut latest = Vec::with_capacity(prio.len());
    let mut acc = 0;
    for &(_, s) in &prio {
        acc = acc.max(s);
        latest.push(acc);
    }
    for d in txs.iter().filter(|t| t.class == QueueClass::Default) {
        let queued_before = prio.partition_point(|&(e, _)| e < d.start_ns);
        ensure!(
            queued_before == 0 || latest[queued_before - 1] <= d.start_ns,
            "best-effort {} started while a priority frame waited",
            d.packet_id
        );
    }
    for class in [QueueClass::Priority, QueueClass::Default] {
        let same: Vec<&TxRecord> = txs.iter().filter(|t| t.class == class).collect();
        for w in same.windows(2) {
            ensure!(w[0].enqueue_ns <= w[1].enqueue_ns, "FIFO violated in {class:?}");
        }
    }
    Ok(())
}

/// Runs a scenario twice and applies every queueing check.
pub fn netsim_all(sc: &Scenario) -> Check {
    let out = run_sim(sc).map_err(|e| e.to_string())?;
    netsim_conservation(sc, &out)?;
    for port in &out.audit {
        netsim_port_discipline(sc, &out, &port.transmissions).map_err(|e| format!("{}: {e}", port.port))?;
    }
    let again = run_sim(sc).map_err(|e| e.to_string())?;
    ensure!(out.trace == again.trace, "two runs differ");
    Ok(())
}
