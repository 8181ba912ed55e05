//! Stream identification rules pushed to the first switch.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::StreamKey;
use crate::error::Result;

/// Maps a 5-tuple to VLAN tag insertion with the given id and PCP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentificationRule {
    pub key: StreamKey,
    pub vlan_id: u16,
    pub pcp: u8,
}

pub trait SwitchConfigurator {
    /// `Ok(true)` is an ack, `Ok(false)` a nack.
    fn configure(&mut self, rule: &IdentificationRule) -> Result<bool>;
}

pub type RuleTable = Rc<RefCell<BTreeMap<StreamKey, IdentificationRule>>>;

/// Keeps rules in a table that can be shared with a simulated switch.
///
/// Re-sending an identical rule is acknowledged without change; a
/// conflicting rule for an existing key is refused.
#[derive(Debug, Clone, Default)]
pub struct RecordingSwitch {
    rules: RuleTable,
    calls: usize,
}

impl RecordingSwitch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_table(rules: RuleTable) -> Self {
        RecordingSwitch { rules, calls: 0 }
    }

    pub fn rules(&self) -> RuleTable {
        self.rules.clone()
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl SwitchConfigurator for RecordingSwitch {
    fn configure(&mut self, rule: &IdentificationRule) -> Result<bool> {
        self.calls += 1;
        let mut rules = self.rules.borrow_mut();
        match rules.get(&rule.key) {
            Some(existing) => Ok(existing == rule),
            None => {
                rules.insert(rule.key, *rule);
                Ok(true)
            }
        }
    }
}
