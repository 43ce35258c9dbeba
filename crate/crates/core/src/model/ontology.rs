use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NONE_LABEL: &str = "none";
pub const DONTCARE_LABEL: &str = "dontcare";

const DSTC2_ONTOLOGY: &str = include_str!("../../data/ontology_dstc2.json");
const SYNTHETIC_ONTOLOGY: &str = include_str!("../../data/ontology_synthetic.json");

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Deserialize)]
struct RawOntology {
    goal_slots: BTreeMap<String, Vec<String>>,
    requestable_slots: Vec<String>,
}

/// Goal slots with their values and the requestable slots.
///
/// The output space of a goal slot is `none`, `dontcare`, then its values
/// in file order, so index 0 always means "not expressed yet".
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Ontology {
    goal_slots: BTreeMap<String, Vec<String>>,
    requestable_slots: Vec<String>,
}

fn check_label(what: &str, label: &str) -> Result<()> {
    if label.is_empty() || label.trim() != label || label.to_lowercase() != label {
        return Err(Error::Config(format!(
            "ontology {what} {label:?} must be non-empty, trimmed and lowercase"
        )));
    }
    Ok(())
}

impl Ontology {
    pub fn new(
        goal_slots: BTreeMap<String, Vec<String>>,
        requestable_slots: Vec<String>,
    ) -> Result<Self> {
        if goal_slots.is_empty() {
            return Err(Error::Config("ontology has no goal slots".into()));
        }
        for (slot, values) in &goal_slots {
            check_label("slot", slot)?;
            if values.is_empty() {
                return Err(Error::Config(format!("goal slot {slot} has no values")));
            }
            let mut seen = BTreeSet::new();
            for v in values {
                check_label("value", v)?;
                if v == NONE_LABEL || v == DONTCARE_LABEL {
                    return Err(Error::Config(format!(
                        "goal slot {slot} lists reserved label {v}"
                    )));
                }
                if !seen.insert(v) {
                    return Err(Error::Config(format!("goal slot {slot} lists {v} twice")));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for r in &requestable_slots {
            check_label("requestable slot", r)?;
            if !seen.insert(r) {
                return Err(Error::Config(format!("requestable slot {r} listed twice")));
            }
        }
        Ok(Self {
            goal_slots,
            requestable_slots,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawOntology =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("ontology: {e}")))?;
        Self::new(raw.goal_slots, raw.requestable_slots)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ontology serializes") + "\n"
    }

    /// Restaurant-domain ontology with 7/93/5 goal labels and 8 requestable
    /// slots.
    pub fn dstc2() -> Self {
        Self::from_json(DSTC2_ONTOLOGY).expect("bundled ontology is valid")
    }

    /// Small ontology used by the synthetic generator.
    pub fn synthetic() -> Self {
        Self::from_json(SYNTHETIC_ONTOLOGY).expect("bundled ontology is valid")
    }

    pub fn goal_slots(&self) -> impl Iterator<Item = &str> {
        self.goal_slots.keys().map(String::as_str)
    }

    pub fn goal_slot_count(&self) -> usize {
        self.goal_slots.len()
    }

    pub fn values(&self, slot: &str) -> Option<&[String]> {
        self.goal_slots.get(slot).map(Vec::as_slice)
    }

    pub fn requestable_slots(&self) -> &[String] {
        &self.requestable_slots
    }

    /// Number of output labels of a goal slot including `none` and
    /// `dontcare`.
    pub fn output_size(&self, slot: &str) -> Option<usize> {
        self.values(slot).map(|v| v.len() + 2)
    }

    pub fn output_space(&self, slot: &str) -> Option<Vec<&str>> {
        self.values(slot).map(|values| {
            [NONE_LABEL, DONTCARE_LABEL]
                .into_iter()
                .chain(values.iter().map(String::as_str))
                .collect()
        })
    }

    pub fn label_index(&self, slot: &str, label: &str) -> Option<usize> {
        match label {
            NONE_LABEL => self.values(slot).map(|_| 0),
            DONTCARE_LABEL => self.values(slot).map(|_| 1),
            _ => self
                .values(slot)?
                .iter()
                .position(|v| v == label)
                .map(|i| i + 2),
        }
    }

    pub fn label_at(&self, slot: &str, index: usize) -> Option<&str> {
        match index {
            0 => self.values(slot).map(|_| NONE_LABEL),
            1 => self.values(slot).map(|_| DONTCARE_LABEL),
            i => self.values(slot)?.get(i - 2).map(String::as_str),
        }
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(
            serde_json::to_string(self)
                .expect("ontology serializes")
                .as_bytes(),
        )
    }

    /// Checks that every label of `state` lies in this ontology.
    pub fn validate_state(&self, state: &DialogState) -> Result<()> {
        for (slot, value) in &state.goals {
            if self.values(slot).is_none() {
                return Err(Error::data("labels", format!("unknown goal slot {slot:?}")));
            }
            if self.label_index(slot, value).is_none() {
                return Err(Error::data(
                    "labels",
                    format!("value {value:?} is not in the output space of slot {slot}"),
                ));
            }
        }
        for r in &state.requests {
            if !self.requestable_slots.contains(r) {
                return Err(Error::data(
                    "labels",
                    format!("unknown requestable slot {r:?}"),
                ));
            }
        }
        Ok(())
    }
}

/// Goal labels and requested slots after one turn. A goal slot missing
/// from `goals` is `none`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogState {
    #[serde(default)]
    pub goals: BTreeMap<String, String>,
    #[serde(default)]
    pub requests: BTreeSet<String>,
}

impl DialogState {
    pub fn goal(&self, slot: &str) -> &str {
        self.goals
            .get(slot)
            .map(String::as_str)
            .unwrap_or(NONE_LABEL)
    }

    /// Lowercases labels and drops explicit `none` entries so equal states
    /// compare equal.
    pub fn normalized(self) -> Self {
        Self {
            goals: self
                .goals
                .into_iter()
                .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
                .filter(|(_, v)| v != NONE_LABEL)
                .collect(),
            requests: self
                .requests
                .into_iter()
                .map(|r| r.to_lowercase())
                .collect(),
        }
    }
}
