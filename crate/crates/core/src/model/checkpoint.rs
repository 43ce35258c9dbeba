//! Text checkpoint format:
//!
//! ```text
//! cnet-dst-checkpoint 1
//! ontology <fnv-1a hash of the ontology, hex>
//! config <model config JSON>
//! heads <head list JSON>
//! vocab <token list JSON>
//! tensor <name> <comma-separated shape> <base64 of little-endian f64 values>
//! ...
//! checksum <fnv-1a hash of every preceding byte, hex>
//! ```

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use super::network::{expected_layout, DstModel, Head, ModelConfig};
use super::ontology::{fnv1a64, Ontology};
use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "cnet-dst-checkpoint";

fn err(field: &str, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        field: field.to_string(),
        msg: msg.into(),
    }
}

pub fn checkpoint_to_string(model: &DstModel) -> String {
    let json = |v: &dyn erased::Json| v.to_json();
    let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\n");
    out += &format!("ontology {:016x}\n", model.ontology().hash());
    out += &format!("config {}\n", json(model.config()));
    out += &format!("heads {}\n", json(&model.heads().to_vec()));
    out += &format!("vocab {}\n", json(&model.vocab().tokens().to_vec()));
    for p in model.params().iter() {
        let shape: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
        let bytes: Vec<u8> = p
            .value
            .data()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        out += &format!(
            "tensor {} {} {}\n",
            p.name,
            shape.join(","),
            STANDARD.encode(bytes)
        );
    }
    let sum = fnv1a64(out.as_bytes());
    out += &format!("checksum {sum:016x}\n");
    out
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string(self).expect("checkpoint metadata serializes")
        }
    }
}

fn split_field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    line.and_then(|l| l.strip_prefix(key))
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| err(key, format!("expected a `{key}` line")))
}

/// Parses a checkpoint and rebuilds the model. The file's ontology hash
/// must match `ontology`.
pub fn checkpoint_from_str(text: &str, ontology: &Ontology) -> Result<DstModel> {
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| err("checksum", "file too short"))?;
    let (body, tail) = text.split_at(body_end);
    let stored = tail
        .trim_end()
        .strip_prefix("checksum ")
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(|| err("checksum", "missing checksum line; file may be truncated"))?;
    if stored != fnv1a64(body.as_bytes()) {
        return Err(err("checksum", "checksum mismatch; file is corrupted"));
    }

    let mut lines = body.lines();
    let version =
        split_field(lines.next(), MAGIC).map_err(|_| err("version", "not a checkpoint file"))?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(err(
            "version",
            format!("format version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let hash = split_field(lines.next(), "ontology")?;
    let expected = format!("{:016x}", ontology.hash());
    if hash != expected {
        return Err(err(
            "ontology",
            format!("checkpoint was trained with ontology {hash}, current ontology is {expected}"),
        ));
    }
    let config: ModelConfig = serde_json::from_str(split_field(lines.next(), "config")?)
        .map_err(|e| err("config", e.to_string()))?;
    let heads: Vec<Head> = serde_json::from_str(split_field(lines.next(), "heads")?)
        .map_err(|e| err("heads", e.to_string()))?;
    let tokens: Vec<String> = serde_json::from_str(split_field(lines.next(), "vocab")?)
        .map_err(|e| err("vocab", e.to_string()))?;
    let vocab = Vocab::from_tokens(tokens).map_err(|e| err("vocab", e.to_string()))?;

    let layout = expected_layout(&config, vocab.len(), ontology, &heads)
        .map_err(|e| err("heads", e.to_string()))?;
    let mut params = ParamStore::new();
    for (name, kind, shape) in layout {
        let line =
            split_field(lines.next(), "tensor").map_err(|_| err(&name, "tensor record missing"))?;
        let fields: Vec<&str> = line.split(' ').collect();
        let [got_name, shape_csv, data] = fields[..] else {
            return Err(err(&name, "malformed tensor record"));
        };
        if got_name != name {
            return Err(err(&name, format!("found tensor {got_name} in its place")));
        }
        let got_shape = shape_csv
            .split(',')
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(&name, format!("bad shape: {e}")))?;
        if got_shape != shape {
            return Err(err(
                &name,
                format!("shape {got_shape:?}, expected {shape:?}"),
            ));
        }
        let bytes = STANDARD
            .decode(data)
            .map_err(|e| err(&name, format!("bad base64: {e}")))?;
        if bytes.len() != 8 * shape.iter().product::<usize>() {
            return Err(err(&name, "payload length does not match shape"));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of eight")))
            .collect();
        let tensor = Tensor::new(shape, values).map_err(|e| err(&name, e.to_string()))?;
        params.push(name, kind, tensor);
    }
    if let Some(extra) = lines.next() {
        return Err(err(
            "tensor",
            format!(
                "unexpected trailing record {:?}",
                extra.split(' ').take(2).collect::<Vec<_>>()
            ),
        ));
    }
    DstModel::from_parts(config, vocab, ontology.clone(), heads, params)
        .map_err(|e| err("parameters", e.to_string()))
}

pub fn save_checkpoint(model: &DstModel, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, checkpoint_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, ontology: &Ontology) -> Result<DstModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text, ontology)
}
