//! Flat binary container for named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "NRXTENS\0"
//! version    u32
//! header     u32 count, then count × (u16 len, key bytes, u32 len, value bytes)
//! entries    u32 count, then count × (u16 len, name bytes, u8 rank,
//!                                     rank × u64 extent, extent-product × f64)
//! ```

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 8] = b"NRXTENS\0";
pub const CONTAINER_VERSION: u32 = 1;

/// Decoded container: string header plus ordered named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn write_container<W: Write>(mut w: W, container: &Container) -> Result<()> {
    w.write_all(CONTAINER_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(container.header.len() as u32).to_le_bytes())?;
    for (k, v) in &container.header {
        write_str16(&mut w, k)?;
        w.write_all(&(v.len() as u32).to_le_bytes())?;
        w.write_all(v.as_bytes())?;
    }
    w.write_all(&(container.tensors.len() as u32).to_le_bytes())?;
    for (name, t) in &container.tensors {
        write_str16(&mut w, name)?;
        let rank =
            u8::try_from(t.shape().len()).map_err(|_| Error::Contract(format!("tensor `{name}` rank too large")))?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_container<R: Read>(mut r: R) -> Result<Container> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != CONTAINER_MAGIC {
        return Err(Error::Load("bad magic string, not a tensor container".into()));
    }
    let version = read_u32(&mut r, "version")?;
    if version != CONTAINER_VERSION {
        return Err(Error::Load(format!(
            "container version {version} unsupported (expected {CONTAINER_VERSION})"
        )));
    }
    let n_header = read_u32(&mut r, "header count")?;
    let mut header = Vec::with_capacity(n_header.min(1024) as usize);
    for _ in 0..n_header {
        let k = read_str16(&mut r)?;
        let len = read_u32(&mut r, "header value length")? as usize;
        let v = read_string(&mut r, len)?;
        header.push((k, v));
    }
    let n_tensors = read_u32(&mut r, "tensor count")?;
    let mut tensors = Vec::with_capacity(n_tensors.min(4096) as usize);
    for _ in 0..n_tensors {
        let name = read_str16(&mut r)?;
        let mut rank = [0u8; 1];
        read_exact(&mut r, &mut rank, "rank")?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut b = [0u8; 8];
            read_exact(&mut r, &mut b, "extent")?;
            shape.push(
                usize::try_from(u64::from_le_bytes(b))
                    .map_err(|_| Error::Load(format!("extent of `{name}` does not fit in memory")))?,
            );
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| *n <= (1 << 32))
            .ok_or_else(|| Error::Load(format!("tensor `{name}` is implausibly large")))?;
        let mut raw = vec![0u8; n * 8];
        read_exact(&mut r, &mut raw, "tensor payload")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    Ok(Container { header, tensors })
}

fn write_str16<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Contract(format!("name too long: {} bytes", s.len())))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Load(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf, "string")?;
    String::from_utf8(buf).map_err(|_| Error::Load("invalid UTF-8 in container".into()))
}

fn read_str16<R: Read>(r: &mut R) -> Result<String> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, "string length")?;
    read_string(r, u16::from_le_bytes(b) as usize)
}
