//! Corpus directory layout:
//!
//! ```text
//! <root>/ontology.json
//! <root>/<split>/<dialog id>/acts.jsonl       one JSON array of act triples per turn
//! <root>/<split>/<dialog id>/transcript.txt   one utterance per line
//! <root>/<split>/<dialog id>/cnet.txt         one network block per turn
//! <root>/<split>/<dialog id>/labels.jsonl     one dialog state per turn
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use super::{tokenize, Dialog, DialogActTriple, Turn};
use crate::cnet::{parse_cnet_blocks, serialize_cnet_blocks};
use crate::error::{Error, Result};
use crate::model::{DialogState, Ontology};

pub const ONTOLOGY_FILE: &str = "ontology.json";
const ACTS_FILE: &str = "acts.jsonl";
const TRANSCRIPT_FILE: &str = "transcript.txt";
const CNET_FILE: &str = "cnet.txt";
const LABELS_FILE: &str = "labels.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

pub fn load_corpus_ontology(root: &Path) -> Result<Ontology> {
    Ontology::load(&root.join(ONTOLOGY_FILE))
}

fn read(dir: &Path, id: &str, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::data(
            format!("dialog {id}"),
            format!("missing {name}"),
        ));
    }
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn load_dialog(dir: &Path, id: &str, ontology: &Ontology) -> Result<Dialog> {
    let ctx = |file: &str| format!("dialog {id} {file}");
    let acts_text = read(dir, id, ACTS_FILE)?;
    let transcript_text = read(dir, id, TRANSCRIPT_FILE)?;
    let cnet_text = read(dir, id, CNET_FILE)?;
    let labels_text = read(dir, id, LABELS_FILE)?;

    let acts = acts_text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str::<Vec<DialogActTriple>>(l)
                .map_err(|e| Error::data(ctx(ACTS_FILE), format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let transcripts: Vec<Vec<String>> = transcript_text.lines().map(tokenize).collect();
    let cnets =
        parse_cnet_blocks(&cnet_text).map_err(|e| Error::data(ctx(CNET_FILE), e.to_string()))?;
    let states = labels_text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let state: DialogState = serde_json::from_str(l)
                .map_err(|e| Error::data(ctx(LABELS_FILE), format!("line {}: {e}", i + 1)))?;
            let state = state.normalized();
            ontology
                .validate_state(&state)
                .map_err(|e| Error::data(ctx(LABELS_FILE), format!("line {}: {e}", i + 1)))?;
            Ok(state)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = acts.len();
    for (name, count) in [
        (TRANSCRIPT_FILE, transcripts.len()),
        (CNET_FILE, cnets.len()),
        (LABELS_FILE, states.len()),
    ] {
        if count != n {
            return Err(Error::data(
                format!("dialog {id}"),
                format!("{ACTS_FILE} has {n} turns but {name} has {count}"),
            ));
        }
    }
    let turns = acts
        .into_iter()
        .zip(transcripts)
        .zip(cnets)
        .zip(states)
        .map(|(((system_acts, transcript), cnet), state)| Turn {
            system_acts,
            transcript,
            cnet,
            state,
        })
        .collect();
    Dialog::new(id, turns)
}

/// Loads every dialog of a split, ordered by dialog id. Labels are checked
/// against `ontology`.
pub fn load_corpus(root: &Path, split: Split, ontology: &Ontology) -> Result<Vec<Dialog>> {
    let dir = root.join(split.as_str());
    let mut entries: Vec<(String, PathBuf)> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .map(|entry| {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            Ok((
                entry.file_name().to_string_lossy().into_owned(),
                entry.path(),
            ))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(_, p)| p.is_dir())
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::data(
            dir.display().to_string(),
            "split contains no dialogs",
        ));
    }
    let dialogs = entries
        .iter()
        .map(|(id, path)| load_dialog(path, id, ontology))
        .collect::<Result<Vec<_>>>()?;
    let turns: usize = dialogs.iter().map(|d| d.turns.len()).sum();
    info!(
        "loaded {} dialogs ({turns} turns) from {split}",
        dialogs.len()
    );
    Ok(dialogs)
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes `dialogs` under `<root>/<split>` and, when given, the ontology
/// file at the root.
pub fn write_corpus(
    root: &Path,
    split: Split,
    dialogs: &[Dialog],
    ontology: Option<&Ontology>,
) -> Result<()> {
    let split_dir = root.join(split.as_str());
    fs::create_dir_all(&split_dir).map_err(|e| Error::io(&split_dir, e))?;
    if let Some(o) = ontology {
        write(root.join(ONTOLOGY_FILE), &o.to_json())?;
    }
    for d in dialogs {
        if d.id.is_empty() || d.id.contains(['/', '\\']) || d.id.starts_with('.') {
            return Err(Error::data(
                format!("dialog {:?}", d.id),
                "id is not a valid directory name",
            ));
        }
        let dir = split_dir.join(&d.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut acts = String::new();
        let mut transcript = String::new();
        let mut labels = String::new();
        for t in &d.turns {
            acts += &serde_json::to_string(&t.system_acts).expect("acts serialize");
            acts.push('\n');
            transcript += &t.transcript.join(" ");
            transcript.push('\n');
            labels += &serde_json::to_string(&t.state).expect("state serializes");
            labels.push('\n');
        }
        let cnets: Vec<_> = d.turns.iter().map(|t| t.cnet.clone()).collect();
        write(dir.join(ACTS_FILE), &acts)?;
        write(dir.join(TRANSCRIPT_FILE), &transcript)?;
        write(dir.join(CNET_FILE), &serialize_cnet_blocks(&cnets))?;
        write(dir.join(LABELS_FILE), &labels)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};

    const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus");

    #[test]
    fn fixture_loads() {
        let root = Path::new(FIXTURE);
        let ontology = load_corpus_ontology(root).unwrap();
        let dialogs = load_corpus(root, Split::Dev, &ontology).unwrap();
        let turns: Vec<usize> = dialogs.iter().map(|d| d.turns.len()).collect();
        assert_eq!(turns, [2, 3, 1]);
        assert_eq!(dialogs[0].id, "voip-0001");
        let first = &dialogs[0].turns[0];
        assert_eq!(first.cnet.len(), 3);
        assert_eq!(first.state.goal("food"), "thai");
    }

    #[test]
    fn round_trip_through_disk() {
        let dialogs = generate_synthetic(&SynthConfig {
            dialogs: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ontology = Ontology::synthetic();
        write_corpus(dir.path(), Split::Train, &dialogs, Some(&ontology)).unwrap();
        let loaded = load_corpus(
            dir.path(),
            Split::Train,
            &load_corpus_ontology(dir.path()).unwrap(),
        )
        .unwrap();
        assert_eq!(loaded, dialogs);
    }

    #[test]
    fn empty_split_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("dev")).unwrap();
        let err = load_corpus(dir.path(), Split::Dev, &Ontology::dstc2()).unwrap_err();
        assert!(matches!(err, Error::Data { .. }), "{err}");
    }

    fn copy_fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let src = Path::new(FIXTURE).join("dev/voip-0001");
        let dst = dir.path().join("dev/voip-0001");
        fs::create_dir_all(&dst).unwrap();
        for f in fs::read_dir(&src).unwrap() {
            let f = f.unwrap();
            fs::copy(f.path(), dst.join(f.file_name())).unwrap();
        }
        dir
    }

    #[test]
    fn missing_cnet_names_dialog() {
        let dir = copy_fixture();
        fs::remove_file(dir.path().join("dev/voip-0001/cnet.txt")).unwrap();
        let err = load_corpus(dir.path(), Split::Dev, &Ontology::dstc2())
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("voip-0001") && err.contains("cnet.txt"),
            "{err}"
        );
    }

    #[test]
    fn out_of_ontology_food_names_value() {
        let dir = copy_fixture();
        let labels = dir.path().join("dev/voip-0001/labels.jsonl");
        let text = fs::read_to_string(&labels)
            .unwrap()
            .replace("thai", "martian");
        fs::write(&labels, text).unwrap();
        let err = load_corpus(dir.path(), Split::Dev, &Ontology::dstc2())
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("martian") && err.contains("voip-0001"),
            "{err}"
        );
    }

    #[test]
    fn turn_count_mismatch() {
        let dir = copy_fixture();
        let path = dir.path().join("dev/voip-0001/transcript.txt");
        fs::write(&path, "only one line\n").unwrap();
        assert!(load_corpus(dir.path(), Split::Dev, &Ontology::dstc2()).is_err());
    }
}
