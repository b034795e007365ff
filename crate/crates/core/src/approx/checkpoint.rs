use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::mlp::Mlp;
use super::normalizer::RunningNorm;
use super::policy::{PolicyNet, ValueNet};

const MAGIC: &[u8; 8] = b"ECPCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checksum mismatch")]
    Checksum,
    #[error("truncated or malformed checkpoint: {0}")]
    Malformed(String),
}

/// Everything needed to run a trained policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form metadata (TOML text) owned by the caller.
    pub metadata: String,
    pub policy: PolicyNet<f32>,
    pub value: ValueNet<f32>,
    pub norm: RunningNorm,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn f32s(&mut self, v: &[f32]) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }
    fn mlp(&mut self, m: &Mlp<f32>) {
        self.u64(m.sizes.len() as u64);
        for s in &m.sizes {
            self.u64(*s as u64);
        }
        self.f32s(&m.flat_params());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Malformed("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self, elem: usize) -> Result<usize, CheckpointError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(CheckpointError::Malformed(format!("length {n} exceeds data")));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn bytes(&mut self) -> Result<&'a [u8], CheckpointError> {
        let n = self.len(1)?;
        self.take(n)
    }
    fn f32s(&mut self) -> Result<Vec<f32>, CheckpointError> {
        let n = self.len(4)?;
        let raw = self.take(4 * n)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn mlp(&mut self) -> Result<Mlp<f32>, CheckpointError> {
        let k = self.len(8)?;
        if k < 2 {
            return Err(CheckpointError::Malformed("network needs at least two layers".into()));
        }
        let sizes = (0..k).map(|_| self.u64().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        let params = self.f32s()?;
        if params.len() != Mlp::<f32>::param_count_for(&sizes) {
            return Err(CheckpointError::Malformed("parameter count mismatch".into()));
        }
        let mut m = Mlp::zeros(&sizes);
        m.set_flat_params(&params);
        Ok(m)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.bytes(self.metadata.as_bytes());
        w.mlp(&self.policy.mean);
        w.f32s(self.policy.log_std.as_slice().expect("contiguous"));
        w.mlp(&self.value.net);
        w.f64s(&self.norm.mean);
        w.f64s(&self.norm.var);
        w.f64(self.norm.count);
        w.0.push(self.norm.frozen as u8);
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        if buf.len() < MAGIC.len() + 4 + 32 {
            return Err(CheckpointError::Malformed("file too short".into()));
        }
        if &buf[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let (body, trailer) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(CheckpointError::Checksum);
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let metadata = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| CheckpointError::Malformed("metadata is not UTF-8".into()))?;
        let mean = r.mlp()?;
        let log_std = Array1::from(r.f32s()?);
        if log_std.len() != mean.output_size() {
            return Err(CheckpointError::Malformed("log-std width mismatch".into()));
        }
        let value = r.mlp()?;
        let nm = r.f64s()?;
        let nv = r.f64s()?;
        let count = r.f64()?;
        let frozen = r.take(1)?[0] != 0;
        if r.pos != body.len() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        if nm.len() != mean.input_size() || nv.len() != nm.len() || value.input_size() != nm.len() {
            return Err(CheckpointError::Malformed("observation width mismatch".into()));
        }
        Ok(Self {
            metadata,
            policy: PolicyNet { mean, log_std },
            value: ValueNet { net: value },
            norm: RunningNorm {
                mean: nm,
                var: nv,
                count,
                frozen,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let buf = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&buf)
    }

    /// Normalizes `raw` and returns the deterministic action mean.
    pub fn act(&self, raw: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, raw.len()), self.norm.normalize(raw)).expect("row shape");
        self.policy.forward(x.view()).iter().map(|v| *v as f64).collect()
    }

    /// Batched deterministic action means, one row per observation.
    pub fn act_batch(&self, raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let d = self.norm.dim();
        let mut x = Array2::<f32>::zeros((raw.len(), d));
        for (i, r) in raw.iter().enumerate() {
            self.norm
                .normalize_into(r, x.row_mut(i).as_slice_mut().expect("contiguous row"));
        }
        self.policy
            .forward(x.view())
            .outer_iter()
            .map(|row| row.iter().map(|v| *v as f64).collect())
            .collect()
    }
}

/// Hex sha256 of a file's bytes.
pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}
