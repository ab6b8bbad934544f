//! Binary checkpoints: a magic header, a versioned JSON manifest, raw f64
//! matrix payloads, and a trailing whole-file checksum.

use crate::checksum::Fnv64;
use crate::encoder::{EncoderConfig, FrozenEncoder};
use crate::model::Model;
use crate::prob::HeadSet;
use crate::registry::{Tool, ToolRegistry};
use crate::vocab::Vocab;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"TKPL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes; not a checkpoint file")]
    BadMagic,
    #[error("format version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("registry mismatch: checkpoint was trained against a different tool registry")]
    RegistryMismatch,
    #[error("checksum mismatch: file is corrupt")]
    CorruptChecksum,
    #[error("truncated or malformed checkpoint: {0}")]
    Malformed(String),
    #[error("stage order violated: {0}")]
    StageOrder(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1 = 1,
    Stage2 = 2,
    Stage3 = 3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    stage: Stage,
    encoder: EncoderConfig,
    n_vocab: usize,
    n_tools: usize,
    d: usize,
    vocab: Vec<String>,
    eos: String,
    tools: Vec<Tool>,
    config_echo: BTreeMap<String, String>,
    /// Checksums of the frozen parameter groups, for tamper checks across
    /// stages: encoder always; vocabulary head after stage 1; toolken head
    /// after stage 2.
    freeze: BTreeMap<String, u64>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub stage: Stage,
    pub model: Model,
    pub config_echo: BTreeMap<String, String>,
    pub freeze: BTreeMap<String, u64>,
}

impl Checkpoint {
    pub fn new(stage: Stage, model: Model, config_echo: BTreeMap<String, String>) -> Self {
        let mut freeze = BTreeMap::new();
        freeze.insert("encoder".into(), model.encoder.checksum());
        if stage >= Stage::Stage1 {
            freeze.insert("w_v".into(), crate::checksum::matrix_checksum(&model.heads.w_v));
        }
        if stage >= Stage::Stage2 {
            freeze.insert("w_t".into(), crate::checksum::matrix_checksum(&model.heads.w_t));
        }
        Self { stage, model, config_echo, freeze }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let m = &self.model;
        let manifest = Manifest {
            stage: self.stage,
            encoder: m.encoder.config,
            n_vocab: m.vocab.size(),
            n_tools: m.registry.len(),
            d: m.encoder.config.d,
            vocab: m.vocab.tokens().to_vec(),
            eos: m.vocab.token(m.vocab.eos_id()).to_string(),
            tools: m.registry.tools().to_vec(),
            config_echo: self.config_echo.clone(),
            freeze: self.freeze.clone(),
        };
        let manifest_bytes = serde_json::to_vec(&manifest)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest_bytes);
        for matrix in self.matrices() {
            for &x in matrix.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut fnv = Fnv64::new();
        fnv.write(&out);
        out.extend_from_slice(&fnv.finish().to_le_bytes());
        Ok(out)
    }

    fn matrices(&self) -> [&Array2<f64>; 6] {
        let m = &self.model;
        [
            &m.encoder.a,
            &m.encoder.b,
            &m.encoder.e,
            &m.heads.w_v,
            &m.heads.w_t,
            &m.heads.w_rerank,
        ]
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let trunc = |what: &str| CheckpointError::Malformed(format!("truncated at {what}"));
        if bytes.len() < 8 {
            return Err(trunc("header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        if bytes.len() < 24 {
            return Err(trunc("manifest length"));
        }
        // Trailing checksum covers everything before it.
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        let mut fnv = Fnv64::new();
        fnv.write(body);
        if fnv.finish() != stored {
            return Err(CheckpointError::CorruptChecksum);
        }
        let manifest_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
        let manifest_end = 16 + manifest_len;
        if body.len() < manifest_end {
            return Err(trunc("manifest"));
        }
        let manifest: Manifest = serde_json::from_slice(&body[16..manifest_end])?;
        let vocab = Vocab::new(manifest.vocab.clone(), &manifest.eos)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let registry = ToolRegistry::new(manifest.tools.clone())
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let (d, d_e) = (manifest.encoder.d, manifest.encoder.d_e);
        let (nv, nt) = (manifest.n_vocab, manifest.n_tools);
        let shapes = [
            (d, d),
            (d, d_e),
            (nv, d_e),
            (nv, d),
            (nt, d),
            (nt + 1, d),
        ];
        let mut offset = manifest_end;
        let mut mats = Vec::with_capacity(6);
        for (rows, cols) in shapes {
            let n = rows * cols * 8;
            if body.len() < offset + n {
                return Err(trunc("matrix payload"));
            }
            let data: Vec<f64> = body[offset..offset + n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            mats.push(
                Array2::from_shape_vec((rows, cols), data)
                    .map_err(|e| CheckpointError::Malformed(e.to_string()))?,
            );
            offset += n;
        }
        if offset != body.len() {
            return Err(CheckpointError::Malformed("trailing bytes after matrices".into()));
        }
        let mut drain = mats.into_iter();
        let encoder = FrozenEncoder {
            config: manifest.encoder,
            a: drain.next().unwrap(),
            b: drain.next().unwrap(),
            e: drain.next().unwrap(),
        };
        let heads = HeadSet {
            w_v: drain.next().unwrap(),
            w_t: drain.next().unwrap(),
            w_rerank: drain.next().unwrap(),
            // A stage-N checkpoint records *completed* stage-N training,
            // which is the moment its head freezes.
            w_v_frozen: manifest.stage >= Stage::Stage1,
            w_t_frozen: manifest.stage >= Stage::Stage2,
        };
        let model = Model { encoder, heads, registry, vocab };
        Ok(Self {
            stage: manifest.stage,
            model,
            config_echo: manifest.config_echo,
            freeze: manifest.freeze,
        })
    }

    /// Guard against resuming a later stage from the wrong checkpoint.
    pub fn require_stage(&self, expected: Stage) -> Result<(), CheckpointError> {
        if self.stage != expected {
            return Err(CheckpointError::StageOrder(format!(
                "expected a {:?} checkpoint, found {:?}",
                expected, self.stage
            )));
        }
        Ok(())
    }

    /// Compare against a live registry; mined artifacts and reranking are
    /// meaningless if the tool set changed since training.
    pub fn verify_registry(&self, registry: &ToolRegistry) -> Result<(), CheckpointError> {
        if registry_hash(&self.model.registry) != registry_hash(registry) {
            return Err(CheckpointError::RegistryMismatch);
        }
        Ok(())
    }
}

pub fn registry_hash(registry: &ToolRegistry) -> u64 {
    let json = serde_json::to_vec(registry.tools()).expect("tools serialize");
    crate::checksum::bytes_checksum(&json)
}
