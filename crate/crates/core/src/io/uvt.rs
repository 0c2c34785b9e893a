//! `UVT1` tensors: magic, u32 ndim, ndim × u32 dims, then f32 values, all
//! little-endian, row-major with the last dimension fastest.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UVT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidInput("tensor needs at least one dimension".into()));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::InvalidInput(format!(
                "tensor dims {dims:?} hold {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&x| x as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| x as f64).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Parse a tensor; `path` only labels error messages.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |offset: usize, msg: String| Error::format(path, offset, msg);
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(err(0, "bad magic, expected UVT1".into()));
        }
        let read_u32 = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| err(at, "truncated header".into()))
        };
        let ndim = read_u32(4)? as usize;
        if ndim == 0 {
            return Err(err(4, "ndim must be at least 1".into()));
        }
        let mut dims = Vec::with_capacity(ndim.min(64));
        for k in 0..ndim {
            dims.push(read_u32(8 + 4 * k)? as usize);
        }
        let start = 8 + 4 * ndim;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| err(8, "dims overflow".into()))?;
        let payload = bytes.len() - start;
        if payload != count.saturating_mul(4) {
            let offset = start + (payload.min(count.saturating_mul(4)) / 4) * 4;
            return Err(err(
                offset,
                format!("payload is {payload} bytes but dims {dims:?} need {}", count.saturating_mul(4)),
            ));
        }
        let mut data = Vec::with_capacity(count);
        for (i, chunk) in bytes[start..].chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes(chunk.try_into().unwrap());
            if !x.is_finite() {
                return Err(err(start + 4 * i, format!("value {i} is not finite")));
            }
            data.push(x);
        }
        Ok(Tensor { dims, data })
    }
}

pub fn save_uvt(path: &Path, tensor: &Tensor) -> Result<()> {
    std::fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn load_uvt(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes, path)
}
