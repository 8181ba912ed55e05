//! Deterministic discrete-event model of a dumbbell network.
//!
//! Every source has its own access link into switch A. A single bottleneck
//! link joins A and B, and B has one egress link per destination address.
//! Each egress port owns a priority queue and a default queue served with
//! strict priority and without preemption. Frames are store-and-forward;
//! a frame occupies a link for `(size + overhead) * 8 / rate` seconds,
//! rounded up to whole nanoseconds.
//!
//! Frames whose 5-tuple matches an identification rule use the priority
//! queue in both switches. Rules come either from the scenario, from a
//! fixed integration time, or from a proxy fed by a mirror tap on switch
//! A's ingress, which runs inline at the frame's arrival time.

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fs::File;
use std::io::{BufReader, Write};
use std::net::IpAddr;
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proxy::{
    AnnouncementLogEntry, Cnc, IdentificationRule, PacketRecord, Protocol, Proxy, ProxyConfig, RecordingSwitch,
    StreamKey, StreamState,
};
use crate::proxy::switch::RuleTable;
use crate::qosmap::{ApplicationDetector, QosDatabase};
use crate::rnn::PeriodicityClassifier;

pub const NS_PER_S: f64 = 1e9;

/// Seconds to whole nanoseconds, rounded to nearest.
pub fn to_ns(seconds: f64) -> u64 {
    (seconds * NS_PER_S).round() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrafficPattern {
    /// One frame every `period_s`, starting at `start_s`.
    Periodic { start_s: f64, period_s: f64, size: u32 },
    /// Back-to-back frames at line rate for `burst_len_s`, then silence for
    /// `burst_gap_s`, starting at `first_s`.
    Bursts {
        first_s: f64,
        burst_len_s: f64,
        burst_gap_s: f64,
        size: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub key: StreamKey,
    pub pattern: TrafficPattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorScope {
    /// Only the monitored source's access port.
    Monitored,
    /// Every ingress port of switch A.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Integration {
    Never,
    /// The proxy decides from the mirror tap.
    ViaScip,
    /// The monitored stream is prioritized from this time on.
    AtTime { t_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub link_rate_bps: f64,
    /// Preamble, inter-frame gap and FCS added to every frame on the wire.
    pub overhead_bytes: u32,
    pub propagation_s: f64,
    /// Per-queue capacity; `None` is unbounded.
    pub queue_capacity_bytes: Option<u64>,
    /// Sources stop emitting at this time; frames in flight are still delivered.
    pub duration_s: f64,
    pub sources: Vec<SourceSpec>,
    /// Name of the source whose latency is reported and, by default, mirrored.
    pub monitored: String,
    pub mirror: MirrorScope,
    /// Streams prioritized from the start.
    #[serde(default)]
    pub priority_streams: Vec<StreamKey>,
    pub integration: Integration,
}

fn ip(s: &str) -> IpAddr {
    s.parse().expect("literal address")
}

impl Default for Scenario {
    /// VoIP talker (94 B every 20 ms) against two synchronized 1 Gbit/s
    /// burst generators (150 ms bursts separated by 200 ms of silence) on a
    /// 1 Gbit/s bottleneck.
    fn default() -> Self {
        let udp = |src: &str, dst: &str, sport, dport| StreamKey {
            src: ip(src),
            dst: ip(dst),
            proto: Protocol::Udp,
            sport,
            dport,
        };
        let burst = |name: &str, src: &str, dst: &str| SourceSpec {
            name: name.into(),
            key: udp(src, dst, 9000, 9000),
            pattern: TrafficPattern::Bursts {
                first_s: 0.095,
                burst_len_s: 0.150,
                burst_gap_s: 0.200,
                size: 1500,
            },
        };
        Scenario {
            link_rate_bps: 1e9,
            overhead_bytes: 24,
            propagation_s: 0.0,
            queue_capacity_bytes: None,
            duration_s: 1.5,
            sources: vec![
                SourceSpec {
                    name: "voip".into(),
                    key: udp("10.0.0.1", "10.0.1.1", 40000, 5004),
                    pattern: TrafficPattern::Periodic {
                        start_s: 0.020,
                        period_s: 0.020,
                        size: 94,
                    },
                },
                burst("g1", "10.0.0.2", "10.0.1.2"),
                burst("g2", "10.0.0.3", "10.0.1.3"),
            ],
            monitored: "voip".into(),
            mirror: MirrorScope::Monitored,
            priority_streams: Vec::new(),
            integration: Integration::Never,
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let s: Scenario = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.link_rate_bps > 0.0 && self.link_rate_bps.is_finite()) {
            return bad(format!("link rate {}", self.link_rate_bps));
        }
        if !(self.duration_s > 0.0) || !(self.propagation_s >= 0.0) {
            return bad("duration must be positive and propagation non-negative".into());
        }
        if self.sources.is_empty() {
            return bad("no sources".into());
        }
        if !self.sources.iter().any(|s| s.name == self.monitored) {
            return bad(format!("monitored source {:?} does not exist", self.monitored));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if self.sources[..i].iter().any(|o| o.name == s.name || o.key == s.key) {
                return bad(format!("duplicate source name or stream for {:?}", s.name));
            }
            match s.pattern {
                TrafficPattern::Periodic {
                    start_s,
                    period_s,
                    size,
                } => {
                    if !(period_s > 0.0 && start_s >= 0.0 && size > 0) {
                        return bad(format!("{}: invalid periodic pattern", s.name));
                    }
                    if to_ns(period_s) == 0 {
                        return bad(format!("{}: period below one nanosecond", s.name));
                    }
                }
                TrafficPattern::Bursts {
                    first_s,
                    burst_len_s,
                    burst_gap_s,
                    size,
                } => {
                    if !(first_s >= 0.0 && burst_len_s > 0.0 && burst_gap_s > 0.0 && size > 0) {
                        return bad(format!("{}: invalid burst pattern", s.name));
                    }
                    if !(burst_len_s < burst_gap_s) {
                        return bad(format!("{}: burst length must be below the gap", s.name));
                    }
                }
            }
        }
        if let Integration::AtTime { t_s } = self.integration {
            if !(t_s >= 0.0) {
                return bad(format!("integration time {t_s}"));
            }
        }
        Ok(())
    }

    fn tx_ns(&self, size: u32) -> u64 {
        let bits = (size as f64 + self.overhead_bytes as f64) * 8.0;
        ((bits * NS_PER_S / self.link_rate_bps).ceil() as u64).max(1)
    }

    fn monitored_key(&self) -> StreamKey {
        self.sources
            .iter()
            .find(|s| s.name == self.monitored)
            .expect("validated")
            .key
    }
}

/// Delivery record of one frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub packet_id: u64,
    pub stream: String,
    pub tx_ns: u64,
    pub rx_ns: Option<u64>,
    pub dropped: bool,
}

impl TraceEvent {
    pub fn delay_ns(&self) -> Option<u64> {
        self.rx_ns.map(|rx| rx - self.tx_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueClass {
    Priority,
    Default,
}

/// One transmission on an egress port, for property checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxRecord {
    pub packet_id: u64,
    pub class: QueueClass,
    pub enqueue_ns: u64,
    pub start_ns: u64,
    pub end_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortAudit {
    pub port: String,
    pub transmissions: Vec<TxRecord>,
    pub drops: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, Default)]
pub struct SimOutput {
    /// One entry per injected frame, ordered by packet id.
    pub trace: Vec<TraceEvent>,
    /// Copies seen by the tap, at switch A arrival times.
    pub mirror: Vec<PacketRecord>,
    pub announcements: Vec<AnnouncementLogEntry>,
    /// When the monitored stream was first prioritized.
    pub integrated_at_ns: Option<u64>,
    pub audit: Vec<PortAudit>,
    pub events: u64,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    id: u64,
    source: usize,
    size: u32,
    class: QueueClass,
    enqueue_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hop {
    SwitchA,
    SwitchB,
    Host,
}

#[derive(Debug)]
struct Port {
    next: Hop,
    queues: [VecDeque<Frame>; 2],
    queued_bytes: [u64; 2],
    busy: bool,
    audit: PortAudit,
}

impl Port {
    fn new(name: String, next: Hop) -> Self {
        Port {
            audit: PortAudit {
                port: name,
                transmissions: Vec::new(),
                drops: Vec::new(),
            },
            next,
            queues: [VecDeque::new(), VecDeque::new()],
            queued_bytes: [0, 0],
            busy: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Emit { source: usize },
    TxDone { port: usize },
    Arrive { hop_port: usize, frame_slot: usize },
}

/// Hooks the event loop calls at switch A ingress.
trait Tap {
    fn observe(&mut self, now_ns: u64, key: &StreamKey, size: u32) -> Option<IdentificationRule>;
}

struct NoTap;

impl Tap for NoTap {
    fn observe(&mut self, _: u64, _: &StreamKey, _: u32) -> Option<IdentificationRule> {
        None
    }
}

struct ProxyTap<'p, 'a> {
    proxy: &'p mut Proxy<'a>,
}

impl Tap for ProxyTap<'_, '_> {
    fn observe(&mut self, now_ns: u64, key: &StreamKey, size: u32) -> Option<IdentificationRule> {
        let rec = PacketRecord {
            t_ns: now_ns,
            src: key.src,
            dst: key.dst,
            proto: key.proto,
            sport: key.sport,
            dport: key.dport,
            len: size.min(u16::MAX as u32) as u16,
        };
        match self.proxy.ingest(&rec) {
            crate::proxy::StageAction::Decided(StreamState::Announced { vlan_id, pcp }) => {
                Some(IdentificationRule {
                    key: *key,
                    vlan_id,
                    pcp,
                })
            }
            _ => None,
        }
    }
}

struct Sim<'s> {
    sc: &'s Scenario,
    now: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<(u64, u64, EventKind)>>,
    ports: Vec<Port>,
    /// Access port of each source, then the bottleneck, then B's egress ports.
    access: Vec<usize>,
    bottleneck: usize,
    egress_b: BTreeMap<IpAddr, usize>,
    in_flight: Vec<Option<Frame>>,
    free_slots: Vec<usize>,
    rules: RuleTable,
    trace: Vec<TraceEvent>,
    mirror: Vec<PacketRecord>,
    next_id: u64,
    stop_ns: u64,
    prop_ns: u64,
    burst_end: Vec<u64>,
    emitted: Vec<u64>,
    integrated_at: Option<u64>,
    events: u64,
}

impl<'s> Sim<'s> {
    fn new(sc: &'s Scenario, rules: RuleTable) -> Self {
        let mut ports = Vec::new();
        let mut access = Vec::new();
        for s in &sc.sources {
            access.push(ports.len());
            ports.push(Port::new(format!("{}->A", s.name), Hop::SwitchA));
        }
        let bottleneck = ports.len();
        ports.push(Port::new("A->B".into(), Hop::SwitchB));
        let mut egress_b = BTreeMap::new();
        for s in &sc.sources {
            egress_b.entry(s.key.dst).or_insert_with(|| {
                ports.push(Port::new(format!("B->{}", s.key.dst), Hop::Host));
                ports.len() - 1
            });
        }
        Sim {
            sc,
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            ports,
            access,
            bottleneck,
            egress_b,
            in_flight: Vec::new(),
            free_slots: Vec::new(),
            rules,
            trace: Vec::new(),
            mirror: Vec::new(),
            next_id: 0,
            stop_ns: to_ns(sc.duration_s),
            prop_ns: to_ns(sc.propagation_s),
            burst_end: vec![0; sc.sources.len()],
            emitted: vec![0; sc.sources.len()],
            integrated_at: None,
            events: 0,
        }
    }

    fn schedule(&mut self, at: u64, kind: EventKind) {
        debug_assert!(at >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq, kind)));
    }

    fn first_emission(&self, source: usize) -> (u64, u64) {
        match self.sc.sources[source].pattern {
            TrafficPattern::Periodic { start_s, .. } => (to_ns(start_s), 0),
            TrafficPattern::Bursts {
                first_s,
                burst_len_s,
                ..
            } => {
                let t = to_ns(first_s);
                (t, t + to_ns(burst_len_s))
            }
        }
    }

    /// Time of the frame after one emitted at `t`.
    fn next_emission(&mut self, source: usize, t: u64) -> u64 {
        match self.sc.sources[source].pattern {
            TrafficPattern::Periodic {
                start_s, period_s, ..
            } => to_ns(start_s) + self.emitted[source] * to_ns(period_s),
            TrafficPattern::Bursts {
                burst_len_s,
                burst_gap_s,
                size,
                ..
            } => {
                let next = t + self.sc.tx_ns(size);
                if next < self.burst_end[source] {
                    next
                } else {
                    let start = self.burst_end[source] + to_ns(burst_gap_s);
                    self.burst_end[source] = start + to_ns(burst_len_s);
                    start
                }
            }
        }
    }

    fn size_of(&self, source: usize) -> u32 {
        match self.sc.sources[source].pattern {
            TrafficPattern::Periodic { size, .. } | TrafficPattern::Bursts { size, .. } => size,
        }
    }

    fn class_for(&self, source: usize) -> QueueClass {
        if self.rules.borrow().contains_key(&self.sc.sources[source].key) {
            QueueClass::Priority
        } else {
            QueueClass::Default
        }
    }

    fn enqueue(&mut self, port: usize, mut frame: Frame) {
        frame.enqueue_ns = self.now;
        let q = frame.class as usize;
        let p = &mut self.ports[port];
        if let Some(cap) = self.sc.queue_capacity_bytes {
            if p.queued_bytes[q] + frame.size as u64 > cap {
                p.audit.drops.push((frame.id, self.now));
                self.trace[frame.id as usize].dropped = true;
                return;
            }
        }
        p.queued_bytes[q] += frame.size as u64;
        p.queues[q].push_back(frame);
        if !p.busy {
            self.start_next(port);
        }
    }

    fn start_next(&mut self, port: usize) {
        let p = &mut self.ports[port];
        let Some(frame) = p.queues[QueueClass::Priority as usize]
            .pop_front()
            .or_else(|| p.queues[QueueClass::Default as usize].pop_front())
        else {
            p.busy = false;
            return;
        };
        p.queued_bytes[frame.class as usize] -= frame.size as u64;
        p.busy = true;
        let end = self.now + self.sc.tx_ns(frame.size);
        p.audit.transmissions.push(TxRecord {
            packet_id: frame.id,
            class: frame.class,
            enqueue_ns: frame.enqueue_ns,
            start_ns: self.now,
            end_ns: end,
        });
        let slot = self.park(frame);
        self.schedule(end, EventKind::TxDone { port });
        self.schedule(
            end + self.prop_ns,
            EventKind::Arrive {
                hop_port: port,
                frame_slot: slot,
            },
        );
    }

    fn park(&mut self, frame: Frame) -> usize {
        match self.free_slots.pop() {
            Some(i) => {
                self.in_flight[i] = Some(frame);
                i
            }
            None => {
                self.in_flight.push(Some(frame));
                self.in_flight.len() - 1
            }
        }
    }

    fn run(&mut self, tap: &mut dyn Tap) {
        let monitored = self.sc.monitored_key();
        for s in 0..self.sc.sources.len() {
            let (t, end) = self.first_emission(s);
            self.burst_end[s] = end;
            if t < self.stop_ns {
                self.schedule(t, EventKind::Emit { source: s });
            }
        }
        let fixed = match self.sc.integration {
            Integration::AtTime { t_s } => Some(to_ns(t_s)),
            _ => None,
        };

        while let Some(Reverse((t, _, kind))) = self.heap.pop() {
            self.now = t;
            self.events += 1;
            if fixed.is_some_and(|f| t >= f) && self.integrated_at.is_none() {
                self.install(IdentificationRule {
                    key: monitored,
                    vlan_id: 1,
                    pcp: 7,
                });
            }
            match kind {
                EventKind::Emit { source } => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.emitted[source] += 1;
                    self.trace.push(TraceEvent {
                        packet_id: id,
                        stream: self.sc.sources[source].name.clone(),
                        tx_ns: t,
                        rx_ns: None,
                        dropped: false,
                    });
                    let frame = Frame {
                        id,
                        source,
                        size: self.size_of(source),
                        class: QueueClass::Default,
                        enqueue_ns: t,
                    };
                    let port = self.access[source];
                    self.enqueue(port, frame);
                    let next = self.next_emission(source, t);
                    if next < self.stop_ns {
                        self.schedule(next, EventKind::Emit { source });
                    }
                }
                EventKind::TxDone { port } => {
                    self.ports[port].busy = false;
                    self.start_next(port);
                }
                EventKind::Arrive {
                    hop_port,
                    frame_slot,
                } => {
                    let mut frame = self.in_flight[frame_slot].take().expect("frame in flight");
                    self.free_slots.push(frame_slot);
                    match self.ports[hop_port].next {
                        Hop::SwitchA => {
                            frame.class = self.class_for(frame.source);
                            self.enqueue(self.bottleneck, frame);
                            let src = &self.sc.sources[frame.source];
                            let mirrored = match self.sc.mirror {
                                MirrorScope::All => true,
                                MirrorScope::Monitored => src.name == self.sc.monitored,
                            };
                            if mirrored {
                                let key = src.key;
                                self.mirror.push(PacketRecord {
                                    t_ns: t,
                                    src: key.src,
                                    dst: key.dst,
                                    proto: key.proto,
                                    sport: key.sport,
                                    dport: key.dport,
                                    len: frame.size.min(u16::MAX as u32) as u16,
                                });
                                // the forwarding decision above precedes the tap
                                if let Some(rule) = tap.observe(t, &key, frame.size) {
                                    self.install(rule);
                                }
                            }
                        }
                        Hop::SwitchB => {
                            frame.class = self.class_for(frame.source);
                            let port = self.egress_b[&self.sc.sources[frame.source].key.dst];
                            self.enqueue(port, frame);
                        }
                        Hop::Host => {
                            self.trace[frame.id as usize].rx_ns = Some(t);
                        }
                    }
                }
            }
        }
    }

    fn install(&mut self, rule: IdentificationRule) {
        let mut rules = self.rules.borrow_mut();
        rules.entry(rule.key).or_insert(rule);
        if rule.key == self.sc.monitored_key() && self.integrated_at.is_none() {
            self.integrated_at = Some(self.now);
        }
    }

    fn finish(self) -> SimOutput {
        SimOutput {
            trace: self.trace,
            mirror: self.mirror,
            announcements: Vec::new(),
            integrated_at_ns: self.integrated_at,
            audit: self.ports.into_iter().map(|p| p.audit).collect(),
            events: self.events,
        }
    }
}

fn static_rules(sc: &Scenario) -> RuleTable {
    let table: BTreeMap<StreamKey, IdentificationRule> = sc
        .priority_streams
        .iter()
        .map(|&key| {
            (
                key,
                IdentificationRule {
                    key,
                    vlan_id: 1,
                    pcp: 7,
                },
            )
        })
        .collect();
    Rc::new(RefCell::new(table))
}

/// Runs the scenario without a proxy. `ViaScip` behaves like `Never`.
pub fn run_sim(sc: &Scenario) -> Result<SimOutput> {
    sc.validate()?;
    let mut sim = Sim::new(sc, static_rules(sc));
    sim.run(&mut NoTap);
    Ok(sim.finish())
}

/// Runs the scenario with the proxy attached to the mirror tap; rules the
/// proxy installs apply to both switches.
pub fn run_closed_loop(
    sc: &Scenario,
    proxy_config: ProxyConfig,
    classifier: &dyn PeriodicityClassifier,
    detector: &dyn ApplicationDetector,
    db: &QosDatabase,
    cnc: Box<dyn Cnc + '_>,
) -> Result<SimOutput> {
    sc.validate()?;
    let rules = static_rules(sc);
    let switch = RecordingSwitch::with_table(rules.clone());
    let mut proxy = Proxy::new(proxy_config, classifier, detector, db, cnc, Box::new(switch))?;
    let mut sim = Sim::new(sc, rules);
    sim.run(&mut ProxyTap { proxy: &mut proxy });
    let mut out = sim.finish();
    out.announcements = proxy.announcement_log().to_vec();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub packet_id: u64,
    pub tx_ns: u64,
    pub rx_ns: u64,
    pub delay_ns: u64,
    /// `|delay - previous delay|`; zero for the first delivered packet.
    pub jitter_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub stream: String,
    pub sent: usize,
    pub received: usize,
    pub lost: usize,
    pub max_delay_ns: u64,
    pub mean_delay_ns: f64,
    pub max_jitter_ns: u64,
    pub rows: Vec<LatencyRow>,
}

impl LatencyReport {
    /// Largest delay among packets sent at or after `from_ns`.
    pub fn max_delay_from(&self, from_ns: u64) -> Option<u64> {
        self.rows
            .iter()
            .filter(|r| r.tx_ns >= from_ns)
            .map(|r| r.delay_ns)
            .max()
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["packet_id", "tx_ns", "rx_ns", "delay_ns", "jitter_ns"])?;
        for r in &self.rows {
            out.serialize((r.packet_id, r.tx_ns, r.rx_ns, r.delay_ns, r.jitter_ns))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Delay, jitter and loss of one stream.
pub fn latency_report(trace: &[TraceEvent], stream: &str) -> Result<LatencyReport> {
    let events: Vec<&TraceEvent> = trace.iter().filter(|e| e.stream == stream).collect();
    if events.is_empty() {
        return Err(Error::InsufficientData(format!("no packets of stream {stream:?}")));
    }
    let mut rows = Vec::new();
    let mut prev: Option<u64> = None;
    for e in &events {
        if let Some(rx) = e.rx_ns {
            let d = rx - e.tx_ns;
            rows.push(LatencyRow {
                packet_id: e.packet_id,
                tx_ns: e.tx_ns,
                rx_ns: rx,
                delay_ns: d,
                jitter_ns: prev.map_or(0, |p| p.abs_diff(d)),
            });
            prev = Some(d);
        }
    }
    let received = rows.len();
    Ok(LatencyReport {
        stream: stream.into(),
        sent: events.len(),
        received,
        lost: events.len() - received,
        max_delay_ns: rows.iter().map(|r| r.delay_ns).max().unwrap_or(0),
        mean_delay_ns: if received == 0 {
            0.0
        } else {
            rows.iter().map(|r| r.delay_ns as f64).sum::<f64>() / received as f64
        },
        max_jitter_ns: rows.iter().map(|r| r.jitter_ns).max().unwrap_or(0),
        rows,
    })
}

/// `packet_id,stream,tx_ns,rx_ns,delay_ns,dropped`; undelivered packets
/// have empty receive time and delay.
pub fn write_trace_csv(trace: &[TraceEvent], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["packet_id", "stream", "tx_ns", "rx_ns", "delay_ns", "dropped"])?;
    for e in trace {
        out.write_record([
            e.packet_id.to_string(),
            e.stream.clone(),
            e.tx_ns.to_string(),
            e.rx_ns.map(|v| v.to_string()).unwrap_or_default(),
            e.delay_ns().map(|v| v.to_string()).unwrap_or_default(),
            e.dropped.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads what [`write_trace_csv`] wrote.
pub fn read_trace_csv(r: impl std::io::Read) -> Result<Vec<TraceEvent>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Data(format!("trace row {}: bad {what}", i + 1));
        let field = |k: usize| rec.get(k).ok_or_else(|| bad("column count"));
        let rx = field(3)?;
        out.push(TraceEvent {
            packet_id: field(0)?.parse().map_err(|_| bad("packet_id"))?,
            stream: field(1)?.to_string(),
            tx_ns: field(2)?.parse().map_err(|_| bad("tx_ns"))?,
            rx_ns: if rx.is_empty() {
                None
            } else {
                Some(rx.parse().map_err(|_| bad("rx_ns"))?)
            },
            dropped: field(5)?.parse().map_err(|_| bad("dropped"))?,
        });
        let e = out.last().expect("just pushed");
        if e.rx_ns.is_some_and(|rx| rx < e.tx_ns) {
            return Err(bad("rx_ns before tx_ns"));
        }
    }
    Ok(out)
}
