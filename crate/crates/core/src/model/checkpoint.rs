//! `ESSM` checkpoint files.
//!
//! Layout (little-endian): magic, version `u32`, config JSON length `u64`,
//! canonical config JSON, parameter tensors in declaration order as f32 or
//! f64 per the precision flag, CRC32 of the above. Then an auxiliary
//! section: length `u64` (zero when absent), payload, CRC32 of the section.

use std::path::Path;

use super::config::{ModelConfig, Precision};
use super::layer::SpectralEngine;
use super::params::ModelParams;
use crate::basis::write_atomic;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ESSM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Opaque trailing payload (optimizer state when resuming training).
    pub auxiliary: Option<Vec<u8>>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams) -> Self {
        Checkpoint {
            config,
            params,
            auxiliary: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = serde_json::to_vec(&self.config)?;
        let mut w = ByteWriter::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u64(json.len() as u64);
        w.bytes(&json);
        for (_, t) in self.params.tensors() {
            match self.config.precision {
                Precision::F64 => w.f64_slice(t),
                Precision::F32 => t.iter().for_each(|&v| w.f32(v as f32)),
            }
        }
        w.end_section();
        let aux = self.auxiliary.as_deref().unwrap_or(&[]);
        w.u64(aux.len() as u64);
        w.bytes(aux);
        w.end_section();
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let json_len = r.u64()? as usize;
        let json = r.bytes(json_len)?;
        let config: ModelConfig = serde_json::from_slice(json)
            .map_err(|e| Error::format(format!("checkpoint config: {e}")))?;
        config.validate()?;
        let mut params = ModelParams::zeros(&config);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = match config.precision {
                    Precision::F64 => r.f64()?,
                    Precision::F32 => r.f32()? as f64,
                };
            }
        }
        r.end_section()?;
        let aux_len = r.u64()? as usize;
        let aux = r.bytes(aux_len)?.to_vec();
        r.end_section()?;
        r.finish()?;
        Ok(Checkpoint {
            config,
            params,
            auxiliary: (aux_len > 0).then_some(aux),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// The basis must match the sequence length and capacity the model was
    /// trained with.
    pub fn check_engine(&self, engine: &SpectralEngine) -> Result<()> {
        if engine.seq_len() != self.config.seq_len || engine.capacity() != self.config.capacity {
            return Err(Error::Mismatch(format!(
                "checkpoint expects basis (L={}, K̄={}), got (L={}, K̄={})",
                self.config.seq_len,
                self.config.capacity,
                engine.seq_len(),
                engine.capacity()
            )));
        }
        Ok(())
    }
}
