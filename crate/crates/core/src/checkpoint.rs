//! Binary tensor records.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"PRXT"
//! u32    format version (1)
//! u32    record count
//! per record:
//!   u32  name length, then UTF-8 name bytes
//!   u32  rank, then rank x u64 dimensions
//!   f32  x product(dimensions) values
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 4] = b"PRXT";
pub const FORMAT_VERSION: u32 = 1;

fn stream_err(e: std::io::Error) -> Error {
    Error::io("<stream>", e)
}

pub fn write_tensors<T: Real, W: Write>(w: &mut W, records: &[(String, &Tensor<T>)]) -> Result<()> {
    w.write_all(MAGIC).map_err(stream_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(stream_err)?;
    w.write_all(&(records.len() as u32).to_le_bytes()).map_err(stream_err)?;
    for (name, t) in records {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(stream_err)?;
        w.write_all(bytes).map_err(stream_err)?;
        w.write_all(&(t.ndim() as u32).to_le_bytes()).map_err(stream_err)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(stream_err)?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        w.write_all(&buf).map_err(stream_err)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::parse("tensor file", format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::parse("tensor file", format!("truncated: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::parse("tensor file", format!("truncated header: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::parse("tensor file", "bad magic"));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::parse("tensor file", format!("unsupported format version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        if len > 1 << 16 {
            return Err(Error::parse("tensor file", "implausible name length"));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|e| Error::parse("tensor file", format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::parse("tensor file", "name is not UTF-8"))?;
        let rank = read_u32(r)? as usize;
        if rank > 8 {
            return Err(Error::parse("tensor file", format!("rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(r)? as usize);
        }
        let n: usize = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::parse("tensor file", "shape overflow"))?;
        let mut raw = vec![0u8; n.checked_mul(4).ok_or_else(|| Error::parse("tensor file", "shape overflow"))?];
        r.read_exact(&mut raw).map_err(|e| Error::parse("tensor file", format!("truncated data for {name}: {e}")))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(out)
}

/// Copies records into a model's parameters and buffers by name; every entry of
/// the model must be present with a matching shape.
pub fn load_into<T: Real, P: Parameters<T> + ?Sized>(model: &mut P, records: &[(String, Tensor<f32>)]) -> Result<()> {
    let index: HashMap<&str, &Tensor<f32>> = records.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let mut failure: Option<Error> = None;
    let mut assign = |name: String, dst: &mut Tensor<T>| {
        if failure.is_some() {
            return;
        }
        match index.get(name.as_str()) {
            None => failure = Some(Error::parse("checkpoint", format!("missing tensor {name}"))),
            Some(src) if src.shape() != dst.shape() => {
                failure = Some(Error::shape("checkpoint", format!("{name} {:?}", dst.shape()), format!("{:?}", src.shape())))
            }
            Some(src) => {
                for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
                    *d = T::of(s as f64);
                }
            }
        }
    };
    model.visit_params_mut("", &mut |n, t| assign(n, t));
    model.visit_buffers_mut("", &mut |n, t| assign(n, t));
    failure.map_or(Ok(()), Err)
}

pub fn save_state<T: Real, P: Parameters<T> + ?Sized>(path: &Path, model: &P) -> Result<()> {
    let mut buf = Vec::new();
    write_tensors(&mut buf, &model.named_state())?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_state<T: Real, P: Parameters<T> + ?Sized>(path: &Path, model: &mut P) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let records = read_tensors(&mut bytes.as_slice())?;
    load_into(model, &records)
}
