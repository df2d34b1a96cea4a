//! Checkpoint file layout:
//!
//! ```text
//! u64 (LE)  header length in bytes
//! [u8]      JSON header
//! [f32 LE]  tensor blobs, in the order listed by `header.tensors`
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamWConfig, ModelConfig, ModelParams, OptimizerState};
use crate::error::{Error, Result};
use crate::tagging::TagVocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub model: ModelConfig,
    /// Training steps completed when the checkpoint was written.
    pub step: usize,
    pub tag_vocabulary: TagVocabulary,
    pub tokenizer_hash: String,
    #[serde(default)]
    pub optimizer: Option<OptimizerHeader>,
    /// Free-form run metadata (training config, stage name, ...).
    #[serde(default)]
    pub run: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub config: AdamWConfig,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams<f32>,
    pub optimizer: Option<OptimizerState<f32>>,
}

fn entries(prefix: &str, p: &ModelParams<f32>) -> Vec<TensorEntry> {
    p.tensors()
        .into_iter()
        .map(|(name, _, t)| TensorEntry { name: format!("{prefix}{name}"), len: t.len() })
        .collect()
}

impl Checkpoint {
    pub fn new(
        params: ModelParams<f32>,
        optimizer: Option<OptimizerState<f32>>,
        step: usize,
        tag_vocabulary: TagVocabulary,
        tokenizer_hash: String,
        run: serde_json::Value,
    ) -> Self {
        let mut tensors = entries("", &params);
        if let Some(opt) = &optimizer {
            tensors.extend(entries("adam_m.", &opt.m));
            tensors.extend(entries("adam_v.", &opt.v));
        }
        let header = CheckpointHeader {
            version: CHECKPOINT_VERSION,
            model: params.config.clone(),
            step,
            tag_vocabulary,
            tokenizer_hash,
            optimizer: optimizer.as_ref().map(|o| OptimizerHeader { config: o.config, step: o.step }),
            run,
            tensors,
        };
        Checkpoint { header, params, optimizer }
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        out.write_all(&(header.len() as u64).to_le_bytes())?;
        out.write_all(&header)?;
        let mut blobs = vec![&self.params];
        if let Some(opt) = &self.optimizer {
            blobs.push(&opt.m);
            blobs.push(&opt.v);
        }
        for p in blobs {
            for (_, _, t) in p.tensors() {
                let mut buf = Vec::with_capacity(t.len() * 4);
                for x in t {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                out.write_all(&buf)?;
            }
        }
        Ok(())
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Checkpoint(format!("implausible header length {len}")));
        }
        let mut header = vec![0u8; len];
        input.read_exact(&mut header)?;
        let mut header: CheckpointHeader = serde_json::from_slice(&header)?;
        header.tag_vocabulary.rebuild_index();
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
        }
        header.model.validate()?;

        let mut params = ModelParams::<f32>::zeros(&header.model);
        let mut optimizer = header
            .optimizer
            .as_ref()
            .map(|o| OptimizerState { step: o.step, ..OptimizerState::new(&params, o.config) });

        let mut expected = entries("", &params);
        if let Some(opt) = &optimizer {
            expected.extend(entries("adam_m.", &opt.m));
            expected.extend(entries("adam_v.", &opt.v));
        }
        if expected != header.tensors {
            return Err(Error::Checkpoint("tensor table does not match the model config".into()));
        }

        let mut targets = vec![&mut params];
        if let Some(opt) = optimizer.as_mut() {
            targets.push(&mut opt.m);
            targets.push(&mut opt.v);
        }
        for p in targets {
            for (_, _, t) in p.tensors_mut() {
                let mut buf = vec![0u8; t.len() * 4];
                input.read_exact(&mut buf).map_err(|e| Error::Checkpoint(format!("truncated blob: {e}")))?;
                for (x, chunk) in t.iter_mut().zip(buf.chunks_exact(4)) {
                    *x = f32::from_le_bytes(chunk.try_into().unwrap());
                }
            }
        }
        Ok(Checkpoint { header, params, optimizer })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::read(BufReader::new(File::open(path)?))
    }
}
