//! Versioned binary checkpoint container.
//!
//! ```text
//! magic        8 bytes   "DVARCKPT"
//! version      u32 LE    1
//! manifest_len u64 LE
//! manifest     manifest_len bytes of UTF-8 JSON (see `Manifest`)
//! then, for each manifest tensor in order:
//!   byte_len   u64 LE    8 * product(shape)
//!   values     byte_len bytes, f64 LE, row-major
//! ```
//!
//! Nothing may follow the last section. Each tensor entry carries the CRC-32
//! of its value bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::embeddings::{CharAlphabet, EmbeddingTable};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::DetRng;

pub const MAGIC: &[u8; 8] = b"DVARCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub alphabet: String,
    pub vocabulary: Vec<String>,
    pub tensors: Vec<TensorEntry>,
}

fn tensor_bytes(t: &Tensor) -> Vec<u8> {
    t.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let sections: Vec<(TensorEntry, Vec<u8>)> = model
        .params
        .iter()
        .map(|(_, p)| {
            let bytes = tensor_bytes(&p.value);
            (
                TensorEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    trainable: p.trainable,
                    crc32: crc32fast::hash(&bytes),
                },
                bytes,
            )
        })
        .collect();
    let manifest = Manifest {
        format: "deepvar-checkpoint".into(),
        version: VERSION,
        config: model.config.clone(),
        alphabet: model.alphabet.symbols().iter().collect(),
        vocabulary: model.vocabulary().to_vec(),
        tensors: sections.iter().map(|(e, _)| e.clone()).collect(),
    };
    let manifest = serde_json::to_vec(&manifest)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    for (_, bytes) in sections {
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, &path.display().to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            path: self.origin.to_string(),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0, origin };
    if r.take(8, "magic")? != MAGIC {
        return Err(r.fail("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let mlen = r.u64("manifest length")? as usize;
    let mbytes = r.take(mlen, "manifest")?;
    let manifest: Manifest =
        serde_json::from_slice(mbytes).map_err(|e| r.fail(format!("manifest is invalid: {e}")))?;
    if manifest.format != "deepvar-checkpoint" || manifest.version != VERSION {
        return Err(r.fail("manifest format/version mismatch"));
    }

    let mut values = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        let len = r.u64(&format!("section length of {}", entry.name))? as usize;
        if len != numel * 8 {
            return Err(r.fail(format!(
                "manifest says tensor {} has shape {:?} ({} bytes) but its section holds {len} bytes",
                entry.name,
                entry.shape,
                numel * 8
            )));
        }
        let data = r.take(len, &entry.name)?;
        if crc32fast::hash(data) != entry.crc32 {
            return Err(r.fail(format!("manifest checksum mismatch for tensor {}", entry.name)));
        }
        let vals: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        values.push(Tensor::new(&entry.shape, vals).map_err(|e| r.fail(e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} unexpected trailing bytes", bytes.len() - r.pos)));
    }

    let alphabet = CharAlphabet::from_symbols(manifest.alphabet.chars().collect())
        .map_err(|e| r.fail(format!("manifest alphabet: {e}")))?;
    let find = |name: &str| {
        manifest
            .tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| r.fail(format!("manifest lacks tensor {name}")))
    };
    let emb = &values[find("word_embeddings")?];
    let unk = &values[find("word_unk")?];
    if emb.shape().len() != 2 || emb.rows() != manifest.vocabulary.len() {
        return Err(r.fail("word_embeddings shape does not match the manifest vocabulary"));
    }
    let table = EmbeddingTable::from_parts(emb.cols(), manifest.vocabulary.clone(), emb.data().to_vec(), unk.data().to_vec())
        .map_err(|e| r.fail(e.to_string()))?;
    let mut model = Model::new(manifest.config.clone(), &table, &DetRng::new(0))
        .map_err(|e| r.fail(format!("manifest config: {e}")))?;
    model.alphabet = alphabet;

    if model.params.len() != manifest.tensors.len() {
        return Err(r.fail(format!(
            "manifest lists {} tensors but the config implies {}",
            manifest.tensors.len(),
            model.params.len()
        )));
    }
    for (entry, value) in manifest.tensors.iter().zip(values) {
        let id = model
            .params
            .id(&entry.name)
            .ok_or_else(|| r.fail(format!("manifest tensor {} is not part of this architecture", entry.name)))?;
        let p = model.params.get_mut(id);
        if p.value.shape() != value.shape() {
            return Err(r.fail(format!(
                "manifest tensor {} has shape {:?}, architecture expects {:?}",
                entry.name,
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value;
        p.trainable = entry.trainable;
    }
    Ok(model)
}
