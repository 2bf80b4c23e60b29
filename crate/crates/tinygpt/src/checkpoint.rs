//! Binary checkpoint format.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! "TPCL"  u32 version
//! u32 n_layers, n_heads, embed_dim, block_size, vocab_size
//! u32 alphabet checksum
//! u32 meta length, meta bytes (UTF-8 "key=value\n" lines)
//! u64 n, n x f32 parameters (layout order)
//! u64 optimizer step, f64 beta1, beta2, eps, weight_decay,
//!     n x f32 first moments, n x f32 second moments
//! u8 has_rng, [32-byte seed, u64 stream, u128 word position]
//! u64 completed iterations
//! u32 CRC-32 of every preceding byte
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::config::{ConfigError, ModelConfig};
use crate::optim::{AdamW, AdamWConfig};
use crate::params::{Layout, ModelParams};
use crate::scalar::Scalar;
use crate::train::RngState;
use crate::vocab::alphabet_checksum;

pub const MAGIC: &[u8; 4] = b"TPCL";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint was written for a different alphabet")]
    AlphabetMismatch,
    #[error("checkpoint config invalid: {0}")]
    Config(#[from] ConfigError),
}

/// Everything needed to evaluate a model or continue its training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<F> {
    pub params: ModelParams<F>,
    pub opt: AdamW<F>,
    pub rng: Option<RngState>,
    pub iter: u64,
    /// Free-form provenance (schedule, stage, seed, ...), kept in order.
    pub meta: Vec<(String, String)>,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn meta_get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.params.cfg();
        let mut b = Vec::with_capacity(12 * self.params.len() + 256);
        b.extend_from_slice(MAGIC);
        put_u32(&mut b, VERSION);
        for v in [cfg.n_layers, cfg.n_heads, cfg.embed_dim, cfg.block_size, cfg.vocab_size] {
            put_u32(&mut b, v as u32);
        }
        put_u32(&mut b, alphabet_checksum());
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        put_u32(&mut b, meta.len() as u32);
        b.extend_from_slice(meta.as_bytes());
        put_u64(&mut b, self.params.len() as u64);
        put_floats(&mut b, &self.params.data);
        put_u64(&mut b, self.opt.step);
        let c = self.opt.config;
        for x in [c.beta1, c.beta2, c.eps, c.weight_decay] {
            b.extend_from_slice(&x.to_le_bytes());
        }
        put_floats(&mut b, &self.opt.m);
        put_floats(&mut b, &self.opt.v);
        match self.rng {
            Some(r) => {
                b.push(1);
                b.extend_from_slice(&r.seed);
                put_u64(&mut b, r.stream);
                b.extend_from_slice(&r.word_pos.to_le_bytes());
            }
            None => b.push(0),
        }
        put_u64(&mut b, self.iter);
        let crc = crc32fast::hash(&b);
        put_u32(&mut b, crc);
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut r = Reader { buf: bytes, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch { found: version, expected: VERSION });
        }
        if bytes.len() < 4 + 4 + 4 {
            return Err(CheckpointError::Corrupt("truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(CheckpointError::Corrupt("checksum mismatch (truncated or damaged file)".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let cfg = ModelConfig { n_layers: dims[0], n_heads: dims[1], embed_dim: dims[2], block_size: dims[3], vocab_size: dims[4] };
        cfg.validate()?;
        if r.u32()? != alphabet_checksum() {
            return Err(CheckpointError::AlphabetMismatch);
        }
        let meta_len = r.u32()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?).map_err(|_| CheckpointError::Corrupt("meta is not UTF-8".into()))?;
        let meta = meta_text
            .lines()
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| CheckpointError::Corrupt(format!("bad meta line {l:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let layout = Layout::new(cfg);
        let n = r.u64()? as usize;
        if n != layout.total {
            return Err(CheckpointError::Corrupt(format!("{n} parameters stored, config implies {}", layout.total)));
        }
        let data = r.floats(n)?;
        let step = r.u64()?;
        let mut hp = [0f64; 4];
        for x in &mut hp {
            *x = r.f64()?;
        }
        let config = AdamWConfig { beta1: hp[0], beta2: hp[1], eps: hp[2], weight_decay: hp[3] };
        let m = r.floats(n)?;
        let v = r.floats(n)?;
        let rng = match r.take(1)?[0] {
            0 => None,
            1 => {
                let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
                let stream = r.u64()?;
                let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
                Some(RngState { seed, stream, word_pos })
            }
            x => return Err(CheckpointError::Corrupt(format!("bad rng flag {x}"))),
        };
        let iter = r.u64()?;
        if r.pos != body.len() {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        let opt = AdamW::from_parts(&layout, config, m, v, step);
        Ok(Checkpoint { params: ModelParams { layout, data }, opt, rng, iter, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(b: &mut Vec<u8>, x: u32) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, x: u64) {
    b.extend_from_slice(&x.to_le_bytes());
}

fn put_floats<F: Scalar>(b: &mut Vec<u8>, xs: &[F]) {
    for x in xs {
        b.extend_from_slice(&x.to_f32_bits().to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn floats<F: Scalar>(&mut self, n: usize) -> Result<Vec<F>, CheckpointError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| CheckpointError::Corrupt("length overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| F::from_f32_bits(u32::from_le_bytes(c.try_into().unwrap()))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<f32> {
        let params = ModelParams::<f32>::init(ModelConfig::gradcheck(), 3);
        let mut opt = AdamW::new(&params.layout, AdamWConfig::default());
        opt.m.iter_mut().enumerate().for_each(|(i, x)| *x = i as f32 * 1e-3);
        opt.step = 7;
        let rng = Some(RngState { seed: [9; 32], stream: 2, word_pos: 1234 });
        Checkpoint { params, opt, rng, iter: 7, meta: vec![("schedule".into(), "hybrid".into()), ("stage".into(), "2".into())] }
    }

    #[test]
    fn round_trip_is_lossless_and_byte_stable() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta_get("stage"), Some("2"));
    }

    #[test]
    fn truncation_and_damage_are_detected() {
        let bytes = sample().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() / 2, 12] {
            assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes[..cut]), Err(CheckpointError::Corrupt(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[100] ^= 1;
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bad), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn header_errors() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 2;
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes), Err(CheckpointError::VersionMismatch { found: 2, .. })));
        assert!(matches!(Checkpoint::<f32>::from_bytes(b"NOPE...."), Err(CheckpointError::BadMagic)));
    }
}
