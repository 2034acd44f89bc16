//! Flat binary checkpoints. All integers are little-endian `u32`.
//!
//! ```text
//! magic    8 bytes  "ATVZCKPT"
//! version  u32      1
//! dtype    u32      scalar width in bytes (4 = f32, 8 = f64)
//! count    u32      number of parameters
//! count × { name_len u32, name (UTF-8), ndim u32, dims u32 × ndim,
//!           values (dtype bytes each, little-endian, row-major) }
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ATVZCKPT";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

pub fn encode<T: Scalar>(params: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + params.numel() * T::BYTES);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, T::BYTES);
    put_u32(&mut out, params.len());
    for (name, tensor) in params.iter() {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, tensor.ndim());
        for &d in tensor.shape() {
            put_u32(&mut out, d);
        }
        for &v in tensor.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ParamStore<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let width = r.u32("dtype")?;
    if width != T::BYTES {
        return Err(Error::Checkpoint(format!(
            "stored scalars are {width} bytes wide, expected {}",
            T::BYTES
        )));
    }
    let count = r.u32("parameter count")?;
    let mut store = ParamStore::default();
    for _ in 0..count {
        let len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32("rank")?;
        let shape = (0..ndim)
            .map(|_| r.u32("dimension"))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("'{name}' has an absurd shape")))?;
        let raw = r.take(numel.saturating_mul(width), "values")?;
        let data = raw.chunks_exact(width).map(T::read_le).collect();
        let tensor =
            Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("'{name}': {e}")))?;
        store
            .insert(&name, tensor)
            .map_err(|_| Error::Checkpoint(format!("duplicate parameter '{name}'")))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(store)
}

pub fn save<T: Scalar>(params: &ParamStore<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Scalar>(path: &Path) -> Result<ParamStore<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
