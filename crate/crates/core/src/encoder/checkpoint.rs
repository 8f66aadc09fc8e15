//! Binary checkpoint format.
//!
//! ```text
//! "CRLP"                      4 bytes
//! format version              u32 LE
//! entry count                 u32 LE
//! per entry:
//!   name length               u16 LE
//!   name                      UTF-8
//!   ndim                      u8
//!   dims                      u32 LE each
//!   payload                   f32 LE, row-major
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ClassifierHead, EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"CRLP";
pub const FORMAT_VERSION: u32 = 1;

const ENCODER_PREFIX: &str = "encoder.";
const HEAD_PREFIX: &str = "head.";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let count = u32::try_from(self.entries.len())
            .map_err(|_| Error::Format("too many entries".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.entries {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Format(format!("entry name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let ndim = u8::try_from(t.ndim())
                .map_err(|_| Error::Format(format!("{name}: too many dims")))?;
            out.push(ndim);
            for &d in t.shape() {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Format(format!("{name}: dim too large")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a CRLP checkpoint".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_owned();
            let ndim = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(
                numel
                    .checked_mul(4)
                    .ok_or_else(|| Error::Format("payload overflow".into()))?,
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("{name}: {e}")))?;
            entries.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized bytes.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }

    pub fn from_model(encoder: &EncoderModel, head: &ClassifierHead) -> Self {
        let mut entries = Vec::new();
        for (name, p) in encoder.params().iter() {
            entries.push((format!("{ENCODER_PREFIX}{name}"), p.tensor.clone()));
        }
        for (name, p) in head.params().iter() {
            entries.push((format!("{HEAD_PREFIX}{name}"), p.tensor.clone()));
        }
        Self { entries }
    }

    fn prefixed(&self, prefix: &str) -> Result<ParamSet> {
        let mut ps = ParamSet::new();
        for (name, t) in &self.entries {
            if let Some(rest) = name.strip_prefix(prefix) {
                ps.insert(rest, t.clone())?;
            }
        }
        Ok(ps)
    }

    /// Rebuilds encoder and head. Sizes are read from tensor shapes; head
    /// count and dropout rate, which shapes cannot reveal, come from the
    /// caller.
    pub fn to_model(
        &self,
        n_heads: usize,
        dropout_p: f32,
    ) -> Result<(EncoderModel, ClassifierHead)> {
        if let Some((name, _)) = self
            .entries
            .iter()
            .find(|(n, _)| !n.starts_with(ENCODER_PREFIX) && !n.starts_with(HEAD_PREFIX))
        {
            return Err(Error::Format(format!("unexpected entry {name:?}")));
        }
        let enc = self.prefixed(ENCODER_PREFIX)?;
        let tok = enc
            .get("tok_emb")
            .ok_or_else(|| Error::Format("missing encoder.tok_emb".into()))?;
        let pos = enc
            .get("pos_emb")
            .ok_or_else(|| Error::Format("missing encoder.pos_emb".into()))?;
        let w1 = enc
            .get("layers.0.ff.w1")
            .ok_or_else(|| Error::Format("missing encoder.layers.0.ff.w1".into()))?;
        let n_layers = (0..)
            .take_while(|l| enc.get(&format!("layers.{l}.attn.wq")).is_some())
            .count();
        let bad_shape =
            |what: &str, t: &Tensor| Error::Format(format!("{what} has shape {:?}", t.shape()));
        if tok.ndim() != 2 {
            return Err(bad_shape("encoder.tok_emb", tok));
        }
        if pos.ndim() != 2 {
            return Err(bad_shape("encoder.pos_emb", pos));
        }
        if w1.ndim() != 2 {
            return Err(bad_shape("encoder.layers.0.ff.w1", w1));
        }
        let cfg = EncoderConfig {
            vocab_size: tok.shape()[0],
            d_model: tok.shape()[1],
            max_len: pos.shape()[0],
            d_ff: w1.shape()[1],
            n_layers,
            n_heads,
            dropout_p,
            ..EncoderConfig::default()
        };
        let encoder =
            EncoderModel::from_params(cfg, &enc).map_err(|e| Error::Format(e.to_string()))?;
        let head = ClassifierHead::from_params(&self.prefixed(HEAD_PREFIX)?)
            .map_err(|e| Error::Format(format!("head: {e}")))?;
        if head.d_model() != encoder.config().d_model {
            return Err(Error::Format("head width does not match encoder".into()));
        }
        Ok((encoder, head))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
