//! Binary checkpoints: a magic line, a JSON header and raw little-endian
//! `f64` tensor data.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::TitleModel;

const MAGIC: &[u8; 8] = b"TPCKPT01";

/// Name of the frozen word table inside a checkpoint.
pub const WORD_TABLE: &str = "embedder.word_table";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset in values (not bytes) into the data section.
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_hash: String,
    step: u64,
    tensors: Vec<TensorEntry>,
}

/// A loaded checkpoint plus any non-fatal problems found while loading.
#[derive(Clone, Debug)]
pub struct LoadedCheckpoint {
    pub model: TitleModel,
    pub vocab_hash: String,
    pub step: u64,
    pub warnings: Vec<String>,
}

fn all_tensors(model: &TitleModel) -> Vec<(String, ArrayD<f64>)> {
    let mut out = vec![(WORD_TABLE.to_owned(), model.embedder.word_table.as_ref().clone().into_dyn())];
    out.extend(model.tensors().into_iter().map(|t| (t.name, t.value.to_owned())));
    out
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &TitleModel, vocab_hash: &str, step: u64) -> Result<()> {
    let tensors = all_tensors(model);
    let mut offset = 0;
    let entries = tensors
        .iter()
        .map(|(name, value)| {
            let e = TensorEntry { name: name.clone(), shape: value.shape().to_vec(), offset };
            offset += value.len();
            e
        })
        .collect();
    let header = Header {
        config: model.config.clone(),
        vocab_hash: vocab_hash.to_owned(),
        step,
        tensors: entries,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + offset * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, value) in &tensors {
        for v in value.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.as_ref().parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn read_parts(path: &Path) -> Result<(Header, Vec<f64>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let corrupt = |m: &str| Error::CorruptCheckpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..data_start]).map_err(|e| corrupt(&format!("bad header: {e}")))?;
    let data = &bytes[data_start..];
    if data.len() % 8 != 0 {
        return Err(corrupt("data section is not a whole number of f64 values"));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let needed = header
        .tensors
        .iter()
        .map(|t| t.offset + t.shape.iter().product::<usize>())
        .max()
        .unwrap_or(0);
    if needed != values.len() {
        return Err(corrupt(&format!("expected {needed} values, found {}", values.len())));
    }
    Ok((header, values))
}

fn tensor_of(entry: &TensorEntry, values: &[f64]) -> Result<ArrayD<f64>> {
    let len: usize = entry.shape.iter().product();
    ArrayD::from_shape_vec(IxDyn(&entry.shape), values[entry.offset..entry.offset + len].to_vec())
        .map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", entry.name)))
}

/// Copies checkpoint tensors into `model`. Every trainable tensor of `model`
/// must be present with the same shape; the word table is not touched.
/// Returns warnings such as a vocabulary mismatch.
pub fn load_into(path: impl AsRef<Path>, model: &mut TitleModel, vocab_hash: Option<&str>) -> Result<Vec<String>> {
    let (header, values) = read_parts(path.as_ref())?;
    let mut mismatches = Vec::new();
    let mut loaded = Vec::new();
    for t in model.tensors() {
        match header.tensors.iter().find(|e| e.name == t.name) {
            None => mismatches.push(format!("{} missing from checkpoint", t.name)),
            Some(e) if e.shape != t.value.shape() => mismatches.push(format!(
                "{}: checkpoint {:?}, model {:?}",
                t.name,
                e.shape,
                t.value.shape()
            )),
            Some(e) => loaded.push(tensor_of(e, &values)?),
        }
    }
    if !mismatches.is_empty() {
        return Err(Error::IncompatibleCheckpoint(mismatches));
    }
    model.restore(&loaded);
    Ok(vocab_warning(&header.vocab_hash, vocab_hash).into_iter().collect())
}

fn vocab_warning(stored: &str, expected: Option<&str>) -> Option<String> {
    let expected = expected?;
    (stored != expected).then(|| {
        let msg = format!("checkpoint vocabulary {stored} differs from current vocabulary {expected}");
        log::warn!("{msg}");
        msg
    })
}

/// Rebuilds the full model, word table included, from a checkpoint.
pub fn load_checkpoint(path: impl AsRef<Path>, vocab_hash: Option<&str>) -> Result<LoadedCheckpoint> {
    let path = path.as_ref();
    let (header, values) = read_parts(path)?;
    let table_entry = header
        .tensors
        .iter()
        .find(|e| e.name == WORD_TABLE)
        .ok_or_else(|| Error::CorruptCheckpoint(format!("{}: no word table", path.display())))?;
    let table: Array2<f64> = tensor_of(table_entry, &values)?
        .into_dimensionality()
        .map_err(|e| Error::CorruptCheckpoint(format!("word table: {e}")))?;
    let char_count = header
        .tensors
        .iter()
        .find(|e| e.name == "char_cnn.char_table")
        .map_or(1, |e| e.shape[0]);
    let mut model = TitleModel::new(header.config.clone(), Arc::new(table), char_count, 0)?;
    let mut warnings = load_into(path, &mut model, None)?;
    warnings.extend(vocab_warning(&header.vocab_hash, vocab_hash));
    Ok(LoadedCheckpoint {
        model,
        vocab_hash: header.vocab_hash,
        step: header.step,
        warnings,
    })
}
