//! Dialog corpora: on-disk layout, dialog-act mapping, vocabulary,
//! pretrained embeddings, a synthetic generator and a DSTC2 importer.

mod acts;
mod dstc2;
mod embeddings;
mod io;
mod synth;
mod vocab;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cnet::{degenerate_cnet, prune_cnet, ConfusionNetwork};
use crate::error::{Error, Result};
use crate::model::DialogState;

pub use acts::{acts_to_tokens, ActWordMap};
pub use dstc2::{import_dstc2, read_dstc2_dialog, AsrSource};
pub use embeddings::{load_embeddings, EmbeddingLoad};
pub use io::{load_corpus, load_corpus_ontology, write_corpus, Split};
pub use synth::{generate_synthetic, SynthConfig};
pub use vocab::{build_vocab, Vocab, NULL_INDEX, PAD_INDEX, PAD_TOKEN, UNK_INDEX, UNK_TOKEN};

#[derive(Deserialize)]
struct RawTriple {
    act: String,
    #[serde(default)]
    slot: Option<String>,
    #[serde(default)]
    value: Option<String>,
}

/// A system dialog act such as `inform food thai`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTriple")]
pub struct DialogActTriple {
    act: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    slot: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<String>,
}

impl TryFrom<RawTriple> for DialogActTriple {
    type Error = Error;

    fn try_from(raw: RawTriple) -> Result<Self> {
        DialogActTriple::new(raw.act, raw.slot, raw.value)
    }
}

impl DialogActTriple {
    pub fn new(
        act: impl Into<String>,
        slot: Option<String>,
        value: Option<String>,
    ) -> Result<Self> {
        let act = act.into();
        let clean = |s: Option<String>| s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        let (slot, value) = (clean(slot), clean(value));
        if act.trim().is_empty() {
            return Err(Error::structural("dialog act with empty act name"));
        }
        if value.is_some() && slot.is_none() {
            return Err(Error::structural(format!(
                "dialog act {act} has a value but no slot"
            )));
        }
        Ok(Self {
            act: act.trim().to_string(),
            slot,
            value,
        })
    }

    pub fn act(&self) -> &str {
        &self.act
    }

    pub fn slot(&self) -> Option<&str> {
        self.slot.as_deref()
    }

    pub fn value(&self) -> Option<&str> {
        self.value.as_deref()
    }
}

/// One exchange: the system acts, then the user utterance with its gold
/// state after the turn.
#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub system_acts: Vec<DialogActTriple>,
    pub transcript: Vec<String>,
    pub cnet: ConfusionNetwork,
    pub state: DialogState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dialog {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialog {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self> {
        let id = id.into();
        if turns.is_empty() {
            return Err(Error::data(id, "dialog has no turns"));
        }
        Ok(Self { id, turns })
    }

    pub fn gold(&self) -> Vec<DialogState> {
        self.turns.iter().map(|t| t.state.clone()).collect()
    }
}

/// Whitespace tokenization with lowercasing.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// The degenerate network of a transcript; empty for an empty utterance.
pub fn transcript_cnet(tokens: &[String]) -> Result<ConfusionNetwork> {
    if tokens.is_empty() {
        Ok(ConfusionNetwork::empty())
    } else {
        degenerate_cnet(tokens)
    }
}

/// Copy of `dialogs` with every user network pruned.
pub fn prune_dialogs(
    dialogs: &[Dialog],
    interjections: &BTreeSet<String>,
    threshold: f64,
) -> Result<Vec<Dialog>> {
    dialogs
        .iter()
        .map(|d| {
            let turns = d
                .turns
                .iter()
                .map(|t| {
                    Ok(Turn {
                        cnet: prune_cnet(&t.cnet, interjections, threshold)?,
                        ..t.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Dialog {
                id: d.id.clone(),
                turns,
            })
        })
        .collect()
}
