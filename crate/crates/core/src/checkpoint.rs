//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"CGCNETCK"
//! version  u32
//! manifest u64 length, then UTF-8 JSON
//! count    u32 number of parameter blobs
//! blob*    u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64
//! ```
//!
//! Encoding is canonical, so `encode(decode(b)) == b` for every accepted `b`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::graph::NormalizationStats;
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CGCNETCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model: ModelConfig,
    pub normalization: NormalizationStats,
    pub seed: u64,
    /// Completed training epochs.
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, normalization: &NormalizationStats, seed: u64, epoch: usize) -> Self {
        Checkpoint {
            manifest: Manifest {
                model: model.config().clone(),
                normalization: normalization.clone(),
                seed,
                epoch,
            },
            params: model
                .params()
                .iter()
                .map(|(name, p)| (name.to_owned(), p.value.clone()))
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let mut store = ParamStore::new();
        for (name, value) in &self.params {
            store.insert(name.clone(), value.clone())?;
        }
        Model::from_params(self.manifest.model.clone(), store)
    }

    pub fn encode(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest is always serializable");
        let mut out = Vec::with_capacity(
            32 + manifest.len()
                + self
                    .params
                    .iter()
                    .map(|(n, t)| 12 + n.len() + 8 * t.len())
                    .sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let len = r.u64()?;
        let len = usize::try_from(len).map_err(|_| bad("manifest too large"))?;
        let manifest_bytes = r.take(len)?;
        let manifest: Manifest = serde_json::from_slice(manifest_bytes).map_err(|e| bad(format!("manifest: {e}")))?;
        if serde_json::to_vec(&manifest)? != manifest_bytes {
            return Err(bad("manifest is not in canonical form"));
        }
        manifest.model.validate()?;
        manifest.normalization.validate()?;
        let count = r.u32()? as usize;
        let mut params = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| bad("parameter name is not UTF-8"))?
                .to_owned();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| bad("blob too large"))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| bad("blob too large"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            params.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint { manifest, params })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::file(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::decode(&bytes)
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::parse("checkpoint", msg)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
