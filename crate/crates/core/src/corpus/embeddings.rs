use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use super::Vocab;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingLoad {
    /// Vocabulary rows overwritten from the file.
    pub hits: usize,
    /// Non-reserved vocabulary entries.
    pub eligible: usize,
    pub hit_rate_pct: f64,
}

/// Copies vectors from a `word v1 … vE` text file into the matching rows of
/// `table` (one row per vocabulary index). Other rows are left untouched.
/// A leading `count dim` header line is skipped. Words are lowercased and
/// the first occurrence wins.
pub fn load_embeddings(path: &Path, vocab: &Vocab, table: &mut Tensor) -> Result<EmbeddingLoad> {
    if !table.is_matrix() || table.rows() != vocab.len() {
        return Err(Error::structural(format!(
            "embedding table {:?} does not match a vocabulary of {}",
            table.shape(),
            vocab.len()
        )));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim: Option<usize> = None;
    let mut filled = vec![false; vocab.len()];
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if line_no == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let d = fields.len() - 1;
        match dim {
            None if d == 0 => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "word without a vector".into(),
                })
            }
            None => {
                if d != table.cols() {
                    return Err(Error::data(
                        path.display().to_string(),
                        format!(
                            "vectors have {d} dimensions, model expects {}",
                            table.cols()
                        ),
                    ));
                }
                dim = Some(d);
            }
            Some(expected) if expected != d => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("vector has {d} dimensions, earlier lines have {expected}"),
                })
            }
            Some(_) => {}
        }
        let Some(row) = vocab.get(&fields[0].to_lowercase()) else {
            continue;
        };
        if row < vocab.reserved_len() || filled[row] {
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line: line_no,
                    msg: format!("bad vector component {f:?}"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        table.row_mut(row).copy_from_slice(&values);
        filled[row] = true;
    }
    let hits = filled.iter().filter(|&&f| f).count();
    let eligible = vocab.len() - vocab.reserved_len();
    let hit_rate_pct = if eligible == 0 {
        0.0
    } else {
        100.0 * hits as f64 / eligible as f64
    };
    Ok(EmbeddingLoad {
        hits,
        eligible,
        hit_rate_pct,
    })
}
