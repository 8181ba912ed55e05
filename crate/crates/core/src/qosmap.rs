//! Application identity and QoS requirement lookup.
//!
//! Known applications map straight to database entries. Anything else
//! falls back to a traffic class chosen by the extracted period.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptor::TrafficDescriptor;
use crate::error::{Error, Result};
use crate::proxy::{Protocol, StreamRecord};

pub const UNKNOWN_APP: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationId {
    pub name: String,
    pub confidence: f64,
}

impl ApplicationId {
    pub fn new(name: impl Into<String>, confidence: f64) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::param("application name must not be empty"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::param(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(ApplicationId { name, confidence })
    }

    pub fn unknown() -> Self {
        ApplicationId {
            name: UNKNOWN_APP.into(),
            confidence: 0.0,
        }
    }

    pub fn is_unknown(&self) -> bool {
        self.name == UNKNOWN_APP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRank {
    Emergency,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosRequirements {
    pub rank: StreamRank,
    #[serde(rename = "max_latency_s")]
    pub max_latency: f64,
    #[serde(rename = "paths")]
    pub redundant_paths: u32,
}

impl QosRequirements {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_latency > 0.0 && self.max_latency.is_finite()) {
            return Err(Error::Config(format!("max latency {} s", self.max_latency)));
        }
        if self.redundant_paths == 0 {
            return Err(Error::Config("at least one path is required".into()));
        }
        Ok(())
    }
}

/// One traffic class; `max_period_s: null` marks the catch-all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallbackClass {
    #[serde(rename = "max_period_s")]
    pub max_period: Option<f64>,
    #[serde(flatten)]
    pub qos: QosRequirements,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosDatabase {
    #[serde(default)]
    pub apps: BTreeMap<String, QosRequirements>,
    pub fallback: Vec<FallbackClass>,
}

impl Default for QosDatabase {
    /// Control-loop style classes: isochronous, cyclic, slow cyclic, and
    /// everything else.
    fn default() -> Self {
        let class = |max_period, rank, max_latency, redundant_paths| FallbackClass {
            max_period,
            qos: QosRequirements {
                rank,
                max_latency,
                redundant_paths,
            },
        };
        let mut apps = BTreeMap::new();
        apps.insert(
            "voip".to_string(),
            QosRequirements {
                rank: StreamRank::Normal,
                max_latency: 0.010,
                redundant_paths: 1,
            },
        );
        QosDatabase {
            apps,
            fallback: vec![
                class(Some(0.002), StreamRank::Emergency, 0.0005, 2),
                class(Some(0.020), StreamRank::Normal, 0.010, 1),
                class(Some(0.100), StreamRank::Normal, 0.050, 1),
                class(None, StreamRank::Normal, 0.100, 1),
            ],
        }
    }
}

impl QosDatabase {
    pub fn validate(&self) -> Result<()> {
        for (name, q) in &self.apps {
            if name.is_empty() || name == UNKNOWN_APP {
                return Err(Error::Config(format!("reserved application name {name:?}")));
            }
            q.validate()?;
        }
        let Some((last, bounded)) = self.fallback.split_last() else {
            return Err(Error::Config("fallback list is empty".into()));
        };
        if last.max_period.is_some() {
            return Err(Error::Config("the last fallback class must be a catch-all".into()));
        }
        let mut prev = 0.0;
        for c in bounded {
            let p = c.max_period.ok_or_else(|| {
                Error::Config("only the last fallback class may be a catch-all".into())
            })?;
            if !(p > prev && p.is_finite()) {
                return Err(Error::Config(format!(
                    "fallback period bounds must be positive and strictly increasing at {p} s"
                )));
            }
            prev = p;
        }
        self.fallback.iter().try_for_each(|c| c.qos.validate())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let db: QosDatabase =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("QoS database: {e}")))?;
        db.validate()?;
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let db: QosDatabase = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        db.validate()?;
        Ok(db)
    }

    /// First class whose bound is at least `period`; the catch-all otherwise.
    pub fn fallback_for(&self, period: f64) -> &FallbackClass {
        self.fallback
            .iter()
            .find(|c| c.max_period.is_none_or(|b| period <= b))
            .expect("validated database ends with a catch-all")
    }
}

/// Known application: its entry verbatim. Otherwise the fallback class
/// chosen by the descriptor interval.
pub fn resolve_qos(
    app: &ApplicationId,
    descriptor: &TrafficDescriptor,
    db: &QosDatabase,
) -> QosRequirements {
    match db.apps.get(&app.name) {
        Some(q) if !app.is_unknown() => *q,
        _ => db.fallback_for(descriptor.interval).qos,
    }
}

/// Names the application behind a recorded stream.
pub trait ApplicationDetector {
    fn detect(&self, stream: &StreamRecord) -> ApplicationId;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortRule {
    pub proto: Protocol,
    pub dport: u16,
    pub app: String,
}

/// Matches transport protocol and destination port against a table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortTableDetector {
    pub rules: Vec<PortRule>,
}

impl PortTableDetector {
    pub fn new(rules: Vec<PortRule>) -> Result<Self> {
        if let Some(r) = rules.iter().find(|r| r.app.is_empty()) {
            return Err(Error::Config(format!("empty application name for port {}", r.dport)));
        }
        Ok(PortTableDetector { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t: PortTableDetector = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::new(t.rules)
    }
}

impl ApplicationDetector for PortTableDetector {
    fn detect(&self, stream: &StreamRecord) -> ApplicationId {
        let k = &stream.key;
        self.rules
            .iter()
            .find(|r| r.proto == k.proto && r.dport == k.dport)
            .map(|r| ApplicationId {
                name: r.app.clone(),
                confidence: 1.0,
            })
            .unwrap_or_else(ApplicationId::unknown)
    }
}
