//! The stream classification and integration proxy.
//!
//! Packets are grouped into streams by their IP 5-tuple. Once a stream has
//! been recorded for `decide_after` packets it runs through
//! periodicity classification, descriptor extraction and QoS lookup; a
//! periodic stream is then announced to the CNC and, when admitted, an
//! identification rule is pushed to the first switch.
//!
//! All decisions use packet timestamps, never wall-clock time, so replaying
//! a capture is deterministic and the time spent announcing one stream does
//! not change what is recorded for any other.

pub mod cnc;
pub mod switch;

use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::descriptor::{extract_descriptor, TrafficDescriptor};
use crate::error::{Error, Result};
use crate::features::cov_sequence;
use crate::qosmap::{resolve_qos, ApplicationDetector, ApplicationId, QosDatabase, QosRequirements};
use crate::rnn::PeriodicityClassifier;

pub use cnc::{Cnc, CncPolicy, CncResponse, CncStubServer, StaticCnc, TalkerAnnouncement, TcpCncClient};
pub use switch::{IdentificationRule, RecordingSwitch, SwitchConfigurator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Udp,
    Tcp,
}

impl Protocol {
    /// IANA protocol number.
    pub fn number(self) -> u8 {
        match self {
            Protocol::Udp => 17,
            Protocol::Tcp => 6,
        }
    }
}

/// IP 5-tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamKey {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub proto: Protocol,
    pub sport: u16,
    pub dport: u16,
}

impl std::fmt::Display for StreamKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = match self.proto {
            Protocol::Udp => "udp",
            Protocol::Tcp => "tcp",
        };
        write!(f, "{p} {}:{} -> {}:{}", self.src, self.sport, self.dst, self.dport)
    }
}

/// One observed packet, as stored in packet JSONL files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Arrival time in nanoseconds.
    pub t_ns: u64,
    pub src: IpAddr,
    pub dst: IpAddr,
    pub proto: Protocol,
    pub sport: u16,
    pub dport: u16,
    /// Frame size in bytes.
    pub len: u16,
}

impl PacketRecord {
    pub fn key(&self) -> StreamKey {
        StreamKey {
            src: self.src,
            dst: self.dst,
            proto: self.proto,
            sport: self.sport,
            dport: self.dport,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum StreamState {
    Collecting,
    ClassifiedAperiodic { reason: String },
    Announced { vlan_id: u16, pcp: u8 },
    Rejected { reason: String },
}

impl StreamState {
    pub fn is_collecting(&self) -> bool {
        matches!(self, StreamState::Collecting)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub key: StreamKey,
    pub arrivals_ns: Vec<u64>,
    pub frame_sizes: Vec<u16>,
    pub state: StreamState,
    pub confidence: Option<f64>,
    pub descriptor: Option<TrafficDescriptor>,
    pub app: Option<ApplicationId>,
    pub qos: Option<QosRequirements>,
    /// Packets of an announced stream that broke its own descriptor.
    pub drift_events: u64,
}

impl StreamRecord {
    pub fn new(key: StreamKey) -> Self {
        StreamRecord {
            key,
            arrivals_ns: Vec::new(),
            frame_sizes: Vec::new(),
            state: StreamState::Collecting,
            confidence: None,
            descriptor: None,
            app: None,
            qos: None,
            drift_events: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.arrivals_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals_ns.is_empty()
    }

    pub fn last_seen_ns(&self) -> Option<u64> {
        self.arrivals_ns.last().copied()
    }

    /// Arrival times in seconds relative to the first packet.
    pub fn arrivals_s(&self) -> Vec<f64> {
        let t0 = self.arrivals_ns.first().copied().unwrap_or(0);
        self.arrivals_ns.iter().map(|&t| (t - t0) as f64 * 1e-9).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_ms: 50,
        }
    }
}

impl RetryPolicy {
    /// Pause after failed attempt `k` (0-based): `initial * 2^k`.
    pub fn backoff(&self, k: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1 << k.min(16)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyConfig {
    /// Packets recorded before a stream is classified.
    pub decide_after: usize,
    /// A stream is periodic when the classifier confidence exceeds this.
    pub threshold: f64,
    /// Collecting streams silent for this long are dropped.
    pub idle_timeout_ns: u64,
    pub retry: RetryPolicy,
    /// Streams already registered by TSN-aware talkers.
    pub excluded: Vec<StreamKey>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            decide_after: 20,
            threshold: 0.9,
            idle_timeout_ns: 60_000_000_000,
            retry: RetryPolicy::default(),
            excluded: Vec::new(),
        }
    }
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.decide_after < 4 {
            return Err(Error::Config(format!(
                "decide_after {} < 4 leaves no descriptor candidates",
                self.decide_after
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if self.retry.attempts == 0 {
            return Err(Error::Config("at least one announcement attempt is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyCounters {
    pub ingested: u64,
    pub skipped_registered: u64,
    pub malformed: u64,
    pub out_of_order: u64,
    pub garbage_collected: u64,
    pub protocol_errors: u64,
    pub drift_events: u64,
}

/// What [`Proxy::ingest`] did with a packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageAction {
    Recorded,
    SkippedRegistered,
    Malformed,
    OutOfOrder,
    /// The pipeline ran; the stream is now in the given state (still
    /// `Collecting` after a protocol error).
    Decided(StreamState),
    /// Packet of an already decided stream.
    Monitored,
}

/// One CNC exchange, as written to the announcement log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnouncementLogEntry {
    /// Timestamp of the packet that triggered the announcement.
    pub t_ns: u64,
    pub key: StreamKey,
    pub packets: usize,
    pub confidence: f64,
    pub descriptor: TrafficDescriptor,
    pub app: ApplicationId,
    pub qos: QosRequirements,
    pub response: CncResponse,
}

pub struct Proxy<'a> {
    config: ProxyConfig,
    classifier: &'a dyn PeriodicityClassifier,
    detector: &'a dyn ApplicationDetector,
    db: &'a QosDatabase,
    cnc: Box<dyn Cnc + 'a>,
    switch: Box<dyn SwitchConfigurator + 'a>,
    excluded: BTreeSet<StreamKey>,
    table: BTreeMap<StreamKey, StreamRecord>,
    announced: BTreeSet<StreamKey>,
    counters: ProxyCounters,
    log: Vec<AnnouncementLogEntry>,
    next_gc_ns: u64,
}

impl<'a> Proxy<'a> {
    pub fn new(
        config: ProxyConfig,
        classifier: &'a dyn PeriodicityClassifier,
        detector: &'a dyn ApplicationDetector,
        db: &'a QosDatabase,
        cnc: Box<dyn Cnc + 'a>,
        switch: Box<dyn SwitchConfigurator + 'a>,
    ) -> Result<Self> {
        config.validate()?;
        db.validate()?;
        Ok(Proxy {
            excluded: config.excluded.iter().copied().collect(),
            config,
            classifier,
            detector,
            db,
            cnc,
            switch,
            table: BTreeMap::new(),
            announced: BTreeSet::new(),
            counters: ProxyCounters::default(),
            log: Vec::new(),
            next_gc_ns: 0,
        })
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    pub fn table(&self) -> &BTreeMap<StreamKey, StreamRecord> {
        &self.table
    }

    pub fn stream(&self, key: &StreamKey) -> Option<&StreamRecord> {
        self.table.get(key)
    }

    pub fn counters(&self) -> ProxyCounters {
        self.counters
    }

    pub fn announcement_log(&self) -> &[AnnouncementLogEntry] {
        &self.log
    }

    /// Records a packet and, once enough packets are in, runs the pipeline.
    pub fn ingest(&mut self, packet: &PacketRecord) -> StageAction {
        self.counters.ingested += 1;
        if packet.len == 0 {
            self.counters.malformed += 1;
            return StageAction::Malformed;
        }
        let key = packet.key();
        if self.excluded.contains(&key) {
            self.counters.skipped_registered += 1;
            return StageAction::SkippedRegistered;
        }
        self.maybe_collect_garbage(packet.t_ns);

        let rec = self.table.entry(key).or_insert_with(|| StreamRecord::new(key));
        if rec.last_seen_ns().is_some_and(|t| packet.t_ns < t) {
            self.counters.out_of_order += 1;
            return StageAction::OutOfOrder;
        }
        rec.arrivals_ns.push(packet.t_ns);
        rec.frame_sizes.push(packet.len);

        match rec.state {
            StreamState::Collecting if rec.len() >= self.config.decide_after => {
                StageAction::Decided(self.run_pipeline(&key, packet.t_ns))
            }
            StreamState::Collecting => StageAction::Recorded,
            StreamState::Announced { .. } => {
                if breaks_descriptor(rec) {
                    rec.drift_events += 1;
                    self.counters.drift_events += 1;
                    if rec.drift_events == 1 {
                        log::warn!("{key}: announced stream no longer matches its descriptor");
                    }
                }
                StageAction::Monitored
            }
            _ => StageAction::Monitored,
        }
    }

    /// Classify, describe, resolve QoS and announce one stream.
    fn run_pipeline(&mut self, key: &StreamKey, now_ns: u64) -> StreamState {
        let rec = self.table.get_mut(key).expect("stream exists");
        let arrivals = rec.arrivals_s();

        let confidence = match cov_sequence(&arrivals)
            .and_then(|cov| self.classifier.confidence(cov.values()))
        {
            Ok(c) => c,
            Err(e) => {
                rec.state = StreamState::ClassifiedAperiodic {
                    reason: format!("classification failed: {e}"),
                };
                return rec.state.clone();
            }
        };
        rec.confidence = Some(confidence);
        if !(confidence > self.config.threshold) {
            rec.state = StreamState::ClassifiedAperiodic {
                reason: format!(
                    "confidence {confidence:.4} not above threshold {}",
                    self.config.threshold
                ),
            };
            return rec.state.clone();
        }

        let sizes: Vec<u32> = rec.frame_sizes.iter().map(|&s| s as u32).collect();
        let descriptor = match extract_descriptor(&arrivals, &sizes) {
            Ok((d, _)) => d,
            Err(e) => {
                rec.state = StreamState::ClassifiedAperiodic {
                    reason: format!("no usable descriptor: {e}"),
                };
                return rec.state.clone();
            }
        };
        let app = self.detector.detect(rec);
        let qos = resolve_qos(&app, &descriptor, self.db);
        rec.descriptor = Some(descriptor);
        rec.app = Some(app.clone());
        rec.qos = Some(qos);

        if self.announced.contains(key) {
            // Unreachable through the state machine; guards the lifetime invariant.
            rec.state = StreamState::Rejected {
                reason: "stream was already announced".into(),
            };
            return rec.state.clone();
        }

        let announcement = TalkerAnnouncement {
            key: *key,
            descriptor,
            qos,
            app: app.name.clone(),
        };
        let packets = rec.len();
        let response = match announce_with_retry(self.cnc.as_mut(), &announcement, &self.config.retry) {
            Ok(r) => r,
            Err(Error::Protocol(msg)) => {
                self.counters.protocol_errors += 1;
                log::warn!("{key}: CNC protocol error, will retry on the next packet: {msg}");
                return StreamState::Collecting;
            }
            Err(e) => {
                let rec = self.table.get_mut(key).expect("stream exists");
                rec.state = StreamState::Rejected {
                    reason: format!("CNC unreachable: {e}"),
                };
                return rec.state.clone();
            }
        };
        self.announced.insert(*key);
        self.log.push(AnnouncementLogEntry {
            t_ns: now_ns,
            key: *key,
            packets,
            confidence,
            descriptor,
            app,
            qos,
            response: response.clone(),
        });

        let state = match response {
            CncResponse::Admitted { vlan_id, pcp } => {
                let rule = IdentificationRule {
                    key: *key,
                    vlan_id,
                    pcp,
                };
                match self.switch.configure(&rule) {
                    Ok(true) => {
                        log::info!("{key}: announced, vlan {vlan_id} pcp {pcp}");
                        StreamState::Announced { vlan_id, pcp }
                    }
                    Ok(false) => {
                        log::warn!("{key}: switch refused identification rule");
                        StreamState::Rejected {
                            reason: "switch refused identification rule".into(),
                        }
                    }
                    Err(e) => {
                        log::warn!("{key}: switch configuration failed: {e}");
                        StreamState::Rejected {
                            reason: format!("switch configuration failed: {e}"),
                        }
                    }
                }
            }
            CncResponse::Denied { reason } => StreamState::Rejected { reason },
        };
        let rec = self.table.get_mut(key).expect("stream exists");
        rec.state = state.clone();
        state
    }

    fn maybe_collect_garbage(&mut self, now_ns: u64) {
        if now_ns < self.next_gc_ns {
            return;
        }
        self.next_gc_ns = now_ns.saturating_add((self.config.idle_timeout_ns / 4).max(1));
        self.collect_garbage(now_ns);
    }

    /// Drops collecting streams idle for longer than the timeout.
    pub fn collect_garbage(&mut self, now_ns: u64) -> usize {
        let timeout = self.config.idle_timeout_ns;
        let before = self.table.len();
        self.table.retain(|_, r| {
            !(r.state.is_collecting()
                && r.last_seen_ns().is_some_and(|t| now_ns.saturating_sub(t) > timeout))
        });
        let n = before - self.table.len();
        self.counters.garbage_collected += n as u64;
        n
    }
}

/// True when the newest `m + 1` packets fit in one window of the announced
/// interval.
fn breaks_descriptor(rec: &StreamRecord) -> bool {
    let Some(d) = rec.descriptor else {
        return false;
    };
    let n = rec.arrivals_ns.len();
    if n <= d.max_frames {
        return false;
    }
    let span = (rec.arrivals_ns[n - 1] - rec.arrivals_ns[n - 1 - d.max_frames]) as f64 * 1e-9;
    span < d.interval
}

/// Transport failures are retried with exponential backoff; protocol
/// errors and answers are returned immediately.
pub fn announce_with_retry(
    cnc: &mut dyn Cnc,
    announcement: &TalkerAnnouncement,
    retry: &RetryPolicy,
) -> Result<CncResponse> {
    let mut attempt = 0;
    loop {
        match cnc.announce(announcement) {
            Err(Error::Io(e)) if attempt + 1 < retry.attempts => {
                log::warn!("announcement attempt {} failed: {e}", attempt + 1);
                std::thread::sleep(retry.backoff(attempt));
                attempt += 1;
            }
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qosmap::{PortRule, PortTableDetector};
    use crate::rnn::ConstantClassifier;

    fn key(sport: u16) -> StreamKey {
        StreamKey {
            src: "10.0.0.1".parse().unwrap(),
            dst: "10.0.0.2".parse().unwrap(),
            proto: Protocol::Udp,
            sport,
            dport: 5004,
        }
    }

    fn packet(k: StreamKey, t_ns: u64, len: u16) -> PacketRecord {
        PacketRecord {
            t_ns,
            src: k.src,
            dst: k.dst,
            proto: k.proto,
            sport: k.sport,
            dport: k.dport,
            len,
        }
    }

    fn voip_detector() -> PortTableDetector {
        PortTableDetector::new(vec![PortRule {
            proto: Protocol::Udp,
            dport: 5004,
            app: "voip".into(),
        }])
        .unwrap()
    }

    #[test]
    fn periodic_stream_is_announced_once() {
        let clf = ConstantClassifier(0.95);
        let det = voip_detector();
        let db = QosDatabase::default();
        let sw = RecordingSwitch::new();
        let rules = sw.rules();
        let mut p = Proxy::new(
            ProxyConfig::default(),
            &clf,
            &det,
            &db,
            Box::new(StaticCnc::new(CncPolicy::admit(10, 5))),
            Box::new(sw),
        )
        .unwrap();
        let k = key(1);
        let mut decided = Vec::new();
        for i in 0..60u64 {
            match p.ingest(&packet(k, i * 20_000_000, 94)) {
                StageAction::Decided(s) => decided.push((i, s)),
                StageAction::Recorded => assert!(i < 19),
                StageAction::Monitored => assert!(i > 19),
                other => panic!("{other:?}"),
            }
        }
        assert_eq!(decided, vec![(19, StreamState::Announced { vlan_id: 10, pcp: 5 })]);
        assert_eq!(p.announcement_log().len(), 1);
        let e = &p.announcement_log()[0];
        assert_eq!(e.packets, 20);
        assert_eq!(e.descriptor.max_frames, 1);
        assert!((e.descriptor.interval - 0.020).abs() < 1e-12);
        assert_eq!(e.descriptor.max_frame_size, 94);
        assert_eq!(e.app.name, "voip");
        assert_eq!(rules.borrow().len(), 1);
        assert_eq!(p.counters().drift_events, 0);
    }

    #[test]
    fn aperiodic_stream_is_never_announced() {
        let clf = ConstantClassifier(0.2);
        let det = voip_detector();
        let db = QosDatabase::default();
        let mut p = Proxy::new(
            ProxyConfig::default(),
            &clf,
            &det,
            &db,
            Box::new(StaticCnc::new(CncPolicy::admit(10, 5))),
            Box::new(RecordingSwitch::new()),
        )
        .unwrap();
        for i in 0..40u64 {
            p.ingest(&packet(key(2), i * 1_000_000, 100));
        }
        assert!(p.announcement_log().is_empty());
        assert!(matches!(
            p.stream(&key(2)).unwrap().state,
            StreamState::ClassifiedAperiodic { .. }
        ));
    }

    #[test]
    fn counters_for_excluded_malformed_and_out_of_order() {
        let clf = ConstantClassifier(0.95);
        let det = voip_detector();
        let db = QosDatabase::default();
        let cfg = ProxyConfig {
            excluded: vec![key(3)],
            ..Default::default()
        };
        let mut p = Proxy::new(
            cfg,
            &clf,
            &det,
            &db,
            Box::new(StaticCnc::new(CncPolicy::admit(10, 5))),
            Box::new(RecordingSwitch::new()),
        )
        .unwrap();
        assert_eq!(p.ingest(&packet(key(3), 0, 10)), StageAction::SkippedRegistered);
        assert_eq!(p.ingest(&packet(key(4), 0, 0)), StageAction::Malformed);
        assert_eq!(p.ingest(&packet(key(4), 10, 10)), StageAction::Recorded);
        assert_eq!(p.ingest(&packet(key(4), 5, 10)), StageAction::OutOfOrder);
        let c = p.counters();
        assert_eq!((c.ingested, c.skipped_registered, c.malformed, c.out_of_order), (4, 1, 1, 1));
        assert!(p.stream(&key(3)).is_none());
        assert_eq!(p.stream(&key(4)).unwrap().len(), 1);
    }

    #[test]
    fn denied_stream_is_rejected() {
        let clf = ConstantClassifier(0.95);
        let det = voip_detector();
        let db = QosDatabase::default();
        let mut p = Proxy::new(
            ProxyConfig::default(),
            &clf,
            &det,
            &db,
            Box::new(StaticCnc::new(CncPolicy::Deny {
                reason: "no capacity".into(),
            })),
            Box::new(RecordingSwitch::new()),
        )
        .unwrap();
        for i in 0..20u64 {
            p.ingest(&packet(key(5), i * 1_000_000, 64));
        }
        assert_eq!(
            p.stream(&key(5)).unwrap().state,
            StreamState::Rejected {
                reason: "no capacity".into()
            }
        );
    }

    #[test]
    fn idle_collecting_streams_are_collected() {
        let clf = ConstantClassifier(0.95);
        let det = voip_detector();
        let db = QosDatabase::default();
        let cfg = ProxyConfig {
            idle_timeout_ns: 1_000,
            ..Default::default()
        };
        let mut p = Proxy::new(
            cfg,
            &clf,
            &det,
            &db,
            Box::new(StaticCnc::new(CncPolicy::admit(10, 5))),
            Box::new(RecordingSwitch::new()),
        )
        .unwrap();
        p.ingest(&packet(key(6), 0, 64));
        p.ingest(&packet(key(7), 5_000, 64));
        assert!(p.stream(&key(6)).is_none());
        assert_eq!(p.counters().garbage_collected, 1);
    }

    #[test]
    fn drift_of_an_announced_stream_is_counted() {
        let clf = ConstantClassifier(0.95);
        let det = voip_detector();
        let db = QosDatabase::default();
        let mut p = Proxy::new(
            ProxyConfig::default(),
            &clf,
            &det,
            &db,
            Box::new(StaticCnc::new(CncPolicy::admit(10, 5))),
            Box::new(RecordingSwitch::new()),
        )
        .unwrap();
        for i in 0..20u64 {
            p.ingest(&packet(key(8), i * 10_000_000, 64));
        }
        // twice the announced rate
        for i in 0..4u64 {
            p.ingest(&packet(key(8), 200_000_000 + i * 5_000_000, 64));
        }
        assert!(p.stream(&key(8)).unwrap().drift_events > 0);
        assert!(matches!(p.stream(&key(8)).unwrap().state, StreamState::Announced { .. }));
    }

    #[test]
    fn packet_json_field_names() {
        let p = packet(key(9), 42, 94);
        let v: serde_json::Value = serde_json::to_value(p).unwrap();
        assert_eq!(v["t_ns"], 42);
        assert_eq!(v["proto"], "udp");
        assert_eq!(v["len"], 94);
        assert_eq!(v["sport"], 9);
    }
}
