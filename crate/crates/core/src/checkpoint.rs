//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "CAECKPT\0"
//! version   u32
//! vocab     32 bytes SHA-256 of the serialized vocabulary
//! header    u32 length + UTF-8 key=value lines (model shape + training config)
//! count     u32 number of tensors
//! tensor*   u32 name length, name, u32 rank, u64 dims..., f64 data...
//! checksum  32 bytes SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::data::Vocabulary;
use crate::error::{CaeError, Result};
use crate::model::{init_model, CaeModel};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CAECKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: CaeModel,
    pub config: TrainConfig,
    pub vocab_hash: [u8; 32],
}

pub fn encode_checkpoint(model: &CaeModel, config: &TrainConfig, vocab: &Vocabulary) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&vocab.content_hash());

    let mut header = format!(
        "model.hidden={}\nmodel.vocab_size={}\nmodel.t12.identity={}\nmodel.t21.identity={}\n",
        model.hidden, model.vocab_size, model.t12.identity, model.t21.identity
    );
    header.push_str(&config.to_kv_string());
    put_bytes(&mut out, header.as_bytes());

    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        put_bytes(&mut out, p.name().as_bytes());
        let shape = p.value().shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value().data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(CaeError::Parse {
                what: "checkpoint",
                detail: format!("truncated while reading {what} at byte {}", self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CaeError::Parse {
            what: "checkpoint",
            detail: format!("{what} is not UTF-8"),
        })
    }
}

/// Parses a checkpoint without checking it against a vocabulary.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(CaeError::Parse {
            what: "checkpoint",
            detail: "bad magic bytes".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CaeError::Checkpoint(format!(
            "unsupported version {version} (this build reads {VERSION})"
        )));
    }
    let vocab_hash: [u8; 32] = r.take(32, "vocabulary hash")?.try_into().expect("32 bytes");
    let header = r.string("header")?;

    let mut hidden = None;
    let mut vocab_size = None;
    let mut identity = (false, false);
    let mut config_text = String::new();
    for line in header.lines() {
        let bad = || CaeError::Parse {
            what: "checkpoint",
            detail: format!("bad header line {line:?}"),
        };
        match line.split_once('=') {
            Some(("model.hidden", v)) => hidden = Some(v.parse::<usize>().map_err(|_| bad())?),
            Some(("model.vocab_size", v)) => vocab_size = Some(v.parse::<usize>().map_err(|_| bad())?),
            Some(("model.t12.identity", v)) => identity.0 = v.parse().map_err(|_| bad())?,
            Some(("model.t21.identity", v)) => identity.1 = v.parse().map_err(|_| bad())?,
            Some(_) => {
                config_text.push_str(line);
                config_text.push('\n');
            }
            None => return Err(bad()),
        }
    }
    let (Some(hidden), Some(vocab_size)) = (hidden, vocab_size) else {
        return Err(CaeError::Parse {
            what: "checkpoint",
            detail: "header lacks model dimensions".into(),
        });
    };
    let config = TrainConfig::from_kv_str(&config_text)?;
    let shape_cfg = TrainConfig {
        hidden,
        ..config.clone()
    };
    let mut model = init_model(&shape_cfg, vocab_size, 0)?;
    model.t12.identity = identity.0;
    model.t21.identity = identity.1;

    let count = r.u32("tensor count")? as usize;
    let expected = model.params().len();
    if count != expected {
        return Err(CaeError::Checkpoint(format!(
            "expected {expected} tensors, found {count}"
        )));
    }
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let rank = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("tensor dims")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8, "tensor data")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let p = model
            .param_mut(&name)
            .ok_or_else(|| CaeError::Checkpoint(format!("unknown tensor {name:?}")))?;
        if p.value().shape() != shape.as_slice() {
            return Err(CaeError::Checkpoint(format!(
                "tensor {name:?} has shape {shape:?}, model expects {:?}",
                p.value().shape()
            )));
        }
        *p.value_mut() = Tensor::new(shape, data)?;
    }
    let body_end = r.pos;
    let stored = r.take(32, "checksum")?;
    if Sha256::digest(&bytes[..body_end]).as_slice() != stored {
        return Err(CaeError::Checkpoint("checksum mismatch".into()));
    }
    if r.pos != bytes.len() {
        return Err(CaeError::Parse {
            what: "checkpoint",
            detail: "trailing bytes after checksum".into(),
        });
    }
    Ok(Checkpoint {
        model,
        config,
        vocab_hash,
    })
}

pub fn save_checkpoint(path: &Path, model: &CaeModel, config: &TrainConfig, vocab: &Vocabulary) -> Result<()> {
    fs::write(path, encode_checkpoint(model, config, vocab)).map_err(|e| CaeError::io(path, e))
}

/// Loads a checkpoint and refuses it unless it was written with `vocab`.
pub fn load_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| CaeError::io(path, e))?;
    let ckpt = decode_checkpoint(&bytes)?;
    if ckpt.vocab_hash != vocab.content_hash() {
        return Err(CaeError::Checkpoint(format!(
            "{} was trained with a different vocabulary",
            path.display()
        )));
    }
    if ckpt.model.vocab_size != vocab.len() {
        return Err(CaeError::Checkpoint(format!(
            "model vocabulary size {} differs from {}",
            ckpt.model.vocab_size,
            vocab.len()
        )));
    }
    Ok(ckpt)
}
