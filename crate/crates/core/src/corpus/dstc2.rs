//! Converts DSTC2 `log.json` / `label.json` dialog pairs into the corpus
//! layout.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use log::warn;
use serde::Deserialize;
use serde_json::Value;

use super::{tokenize, write_corpus, Dialog, DialogActTriple, Split, Turn};
use crate::cnet::{ConfusionNetwork, Hypothesis, Timestep};
use crate::error::{Error, Result};
use crate::model::{DialogState, Ontology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AsrSource {
    Batch,
    Live,
}

impl AsrSource {
    fn key(self) -> &'static str {
        match self {
            AsrSource::Batch => "batch",
            AsrSource::Live => "live",
        }
    }
}

#[derive(Deserialize)]
struct LabelFile {
    turns: Vec<LabelTurn>,
}

#[derive(Deserialize)]
struct LabelTurn {
    transcription: String,
    #[serde(rename = "goal-labels", default)]
    goal_labels: BTreeMap<String, String>,
    #[serde(rename = "requested-slots", default)]
    requested_slots: Vec<String>,
}

fn field<'a>(v: &'a Value, key: &str, ctx: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| Error::data(ctx.to_string(), format!("missing field {key:?}")))
}

fn parse_acts(output: &Value, ctx: &str) -> Result<Vec<DialogActTriple>> {
    let mut triples = Vec::new();
    let acts = field(output, "dialog-acts", ctx)?
        .as_array()
        .ok_or_else(|| Error::data(ctx.to_string(), "dialog-acts is not a list"))?;
    for a in acts {
        let name = a
            .get("act")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::data(ctx.to_string(), "dialog act without a name"))?;
        let slots = a
            .get("slots")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        if slots.is_empty() {
            triples.push(DialogActTriple::new(name, None, None)?);
        }
        for pair in slots {
            let pair: Vec<String> = pair
                .as_array()
                .map(|p| {
                    p.iter()
                        .map(|x| {
                            x.as_str()
                                .map(String::from)
                                .unwrap_or_else(|| x.to_string())
                        })
                        .collect()
                })
                .unwrap_or_default();
            let triple = match pair.as_slice() {
                // `request` names the slot in the value position.
                [k, v] if k == "slot" => DialogActTriple::new(name, Some(v.to_lowercase()), None)?,
                [k, v] => {
                    DialogActTriple::new(name, Some(k.to_lowercase()), Some(v.to_lowercase()))?
                }
                [k] => DialogActTriple::new(name, Some(k.to_lowercase()), None)?,
                _ => DialogActTriple::new(name, None, None)?,
            };
            triples.push(triple);
        }
    }
    Ok(triples)
}

fn parse_cnet(input: &Value, asr: AsrSource, ctx: &str) -> Result<ConfusionNetwork> {
    let Some(steps) = input
        .get(asr.key())
        .and_then(|s| s.get("cnet"))
        .and_then(Value::as_array)
    else {
        return Err(Error::data(
            ctx.to_string(),
            format!("no {} cnet", asr.key()),
        ));
    };
    let mut timesteps = Vec::new();
    for step in steps {
        let mut merged: BTreeMap<String, f64> = BTreeMap::new();
        let mut order = Vec::new();
        for arc in step
            .get("arcs")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
        {
            let (Some(word), Some(score)) = (
                arc.get("word").and_then(Value::as_str),
                arc.get("score").and_then(Value::as_f64),
            ) else {
                continue;
            };
            let word = word.trim().to_lowercase();
            if word.is_empty() || word.contains(char::is_whitespace) || !score.is_finite() {
                continue;
            }
            let score = score.min(0.0);
            match merged.get_mut(&word) {
                Some(s) => *s = s.max(score),
                None => {
                    order.push(word.clone());
                    merged.insert(word, score);
                }
            }
        }
        if order.is_empty() {
            continue;
        }
        let hyps = order
            .iter()
            .map(|w| Hypothesis::new(w, merged[w]))
            .collect::<Result<Vec<_>>>()?;
        let start = step.get("start").and_then(Value::as_f64).unwrap_or(0.0);
        let end = step.get("end").and_then(Value::as_f64).unwrap_or(start);
        timesteps.push((start, end, hyps));
    }
    let timed = timesteps
        .iter()
        .map(|(s, e, h)| Timestep::new(*s, *e, h.clone()))
        .collect::<Result<Vec<_>>>()
        .and_then(ConfusionNetwork::new);
    match timed {
        Ok(c) => Ok(c),
        Err(_) => {
            warn!("{ctx}: irregular timestep times, renumbering");
            let steps = timesteps
                .into_iter()
                .enumerate()
                .map(|(i, (_, _, h))| Timestep::new(i as f64, i as f64 + 1.0, h))
                .collect::<Result<Vec<_>>>()?;
            ConfusionNetwork::new(steps)
        }
    }
}

/// Reads one DSTC2 dialog directory.
pub fn read_dstc2_dialog(dir: &Path, asr: AsrSource, ontology: &Ontology) -> Result<Dialog> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| Error::io(path, e))
    };
    let ctx = format!("dialog {id}");
    let log: Value = serde_json::from_str(&read("log.json")?)
        .map_err(|e| Error::data(&ctx, format!("log.json: {e}")))?;
    let labels: LabelFile = serde_json::from_str(&read("label.json")?)
        .map_err(|e| Error::data(&ctx, format!("label.json: {e}")))?;
    let log_turns = field(&log, "turns", &ctx)?
        .as_array()
        .ok_or_else(|| Error::data(&ctx, "turns is not a list"))?;
    if log_turns.len() != labels.turns.len() {
        return Err(Error::data(
            &ctx,
            format!(
                "log has {} turns, labels have {}",
                log_turns.len(),
                labels.turns.len()
            ),
        ));
    }
    let mut turns = Vec::with_capacity(log_turns.len());
    for (i, (lt, label)) in log_turns.iter().zip(labels.turns).enumerate() {
        let tctx = format!("{ctx} turn {}", i + 1);
        let system_acts = parse_acts(field(lt, "output", &tctx)?, &tctx)?;
        let cnet = parse_cnet(field(lt, "input", &tctx)?, asr, &tctx)?;
        let state = DialogState {
            goals: label.goal_labels,
            requests: label.requested_slots.into_iter().collect::<BTreeSet<_>>(),
        }
        .normalized();
        ontology
            .validate_state(&state)
            .map_err(|e| Error::data(&tctx, e.to_string()))?;
        turns.push(Turn {
            system_acts,
            transcript: tokenize(&label.transcription),
            cnet,
            state,
        });
    }
    Dialog::new(id, turns)
}

/// Imports the dialogs listed (one directory per line, relative to
/// `data_root`) in `flist` and writes them as `split` under `out`.
/// Returns the number of dialogs written.
pub fn import_dstc2(
    data_root: &Path,
    flist: &Path,
    out: &Path,
    split: Split,
    asr: AsrSource,
    ontology: &Ontology,
) -> Result<usize> {
    let list = fs::read_to_string(flist).map_err(|e| Error::io(flist, e))?;
    let dialogs = list
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|rel| read_dstc2_dialog(&data_root.join(rel), asr, ontology))
        .collect::<Result<Vec<_>>>()?;
    if dialogs.is_empty() {
        return Err(Error::data(
            flist.display().to_string(),
            "file list names no dialogs",
        ));
    }
    write_corpus(out, split, &dialogs, Some(ontology))?;
    Ok(dialogs.len())
}
