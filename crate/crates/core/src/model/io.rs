//! Binary model file.
//!
//! Little-endian layout:
//!
//! ```text
//! "RAFM"  u32 version
//! config  u32 m, u32 k, u8 feature mask bits, u8 baseline, u8 mask mode,
//!         u8 reserved, u32 abs_hidden, u32 head_hidden, f64 dropout,
//!         f64 learning rate, f64 beta1, f64 beta2, f64 eps,
//!         u32 batch size, u32 max epochs, u32 patience
//! catalog u32 length + UTF-8 fingerprint, u32 length + UTF-8 method list
//! norm    6 x f64 mean, 6 x f64 std
//! params  u32 tensor count, then per tensor: u32 rank, rank x u32 dims,
//!         f64 values
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::{MaskMode, ModelConfig};
use super::network::{NormStats, SelectorModel};
use crate::error::{Error, Result};
use crate::features::ABSOLUTE_COUNT;
use crate::nn::{AdamConfig, Tensor};
use crate::solvers::MethodCatalog;

pub const MODEL_MAGIC: &[u8; 4] = b"RAFM";
pub const MODEL_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("model dimensions fit in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len());
        for &d in t.shape() {
            self.u32(d);
        }
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::FormatError(format!("model file truncated at byte {}", self.bytes.len()))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        let raw = self.take(n)?;
        core::str::from_utf8(raw)
            .map(String::from)
            .map_err(|_| Error::FormatError("model file string is not UTF-8".into()))
    }
    fn tensor(&mut self, expected: &[usize]) -> Result<Tensor> {
        let rank = self.usize()?;
        if rank != expected.len() {
            return Err(Error::FormatError(format!("tensor rank {rank}, expected {}", expected.len())));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.usize()?);
        }
        if shape != expected {
            return Err(Error::FormatError(format!("tensor shape {shape:?}, expected {expected:?}")));
        }
        let len: usize = shape.iter().product();
        let raw = self.take(len.checked_mul(8).ok_or_else(|| Error::FormatError("tensor too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Tensor::from_vec(&shape, data).map_err(|e| Error::FormatError(format!("{e}")))
    }
}

impl SelectorModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MODEL_MAGIC);
        w.0.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        w.u32(c.m);
        w.u32(c.k);
        let bits = c.feature_mask.iter().enumerate().fold(0u8, |acc, (j, &on)| acc | (u8::from(on) << j));
        w.u8(bits);
        w.u8(u8::from(c.baseline_mode));
        w.u8(match c.mask_mode {
            MaskMode::Zero => 0,
            MaskMode::Strict => 1,
        });
        w.u8(0);
        w.u32(c.abs_hidden);
        w.u32(c.head_hidden);
        w.f64(c.dropout);
        w.f64(c.adam.learning_rate);
        w.f64(c.adam.beta1);
        w.f64(c.adam.beta2);
        w.f64(c.adam.eps);
        w.u32(c.batch_size);
        w.u32(c.max_epochs);
        w.u32(c.patience);
        w.str(&self.catalog.fingerprint());
        w.str(&self.catalog.canonical_string());
        for v in self.norm.mean.iter().chain(&self.norm.std) {
            w.f64(*v);
        }
        let layers = self.layers();
        w.u32(layers.len() * 2);
        for p in layers {
            w.tensor(&p.weights);
            w.tensor(&p.biases);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::FormatError("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::VersionError { found: version, expected: MODEL_VERSION });
        }
        let m = r.usize()?;
        let k = r.usize()?;
        let bits = r.u8()?;
        let baseline_mode = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::FormatError(format!("invalid baseline flag {v}"))),
        };
        let mask_mode = match r.u8()? {
            0 => MaskMode::Zero,
            1 => MaskMode::Strict,
            v => return Err(Error::FormatError(format!("invalid mask mode {v}"))),
        };
        r.u8()?;
        let config = ModelConfig {
            m,
            k,
            feature_mask: core::array::from_fn(|j| bits & (1 << j) != 0),
            mask_mode,
            baseline_mode,
            abs_hidden: r.usize()?,
            head_hidden: r.usize()?,
            dropout: r.f64()?,
            adam: AdamConfig { learning_rate: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? },
            batch_size: r.usize()?,
            max_epochs: r.usize()?,
            patience: r.usize()?,
        };
        config.validate().map_err(|e| Error::FormatError(format!("invalid stored config: {e}")))?;
        let fingerprint = r.str()?;
        let catalog = MethodCatalog::parse_list(&r.str()?)
            .map_err(|e| Error::FormatError(format!("invalid stored catalog: {e}")))?;
        if catalog.fingerprint() != fingerprint {
            return Err(Error::FormatError("stored catalog does not match its fingerprint".into()));
        }
        let mut norm = NormStats::default();
        for j in 0..ABSOLUTE_COUNT {
            norm.mean[j] = r.f64()?;
        }
        for j in 0..ABSOLUTE_COUNT {
            norm.std[j] = r.f64()?;
        }
        let mut model = SelectorModel::zeroed(config, catalog)
            .map_err(|e| Error::FormatError(format!("invalid stored model: {e}")))?;
        model.norm = norm;
        let count = r.usize()?;
        let expected = model.layers().len() * 2;
        if count != expected {
            return Err(Error::FormatError(format!("{count} parameter tensors, expected {expected}")));
        }
        for p in model.layers_mut() {
            let (ws, bs) = (p.weights.shape().to_vec(), p.biases.shape().to_vec());
            p.weights = r.tensor(&ws)?;
            p.biases = r.tensor(&bs)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::FormatError("trailing bytes after model".into()));
        }
        Ok(model)
    }
}
