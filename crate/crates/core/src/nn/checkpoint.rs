//! Flat binary container for model weights.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      b"LSCK"            4 bytes
//! version    u16                currently 1
//! tags       u16 count, u8 each layer kind tags
//! meta       u16 count, u64 each model dimensions
//! params     u32 count, then per parameter:
//!              u16 name length, UTF-8 name, u8 rank, u64 per dimension
//! payload    f64 for every scalar of every parameter, in header order
//! ```

use std::io::{Read, Write};

use super::param::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LSCK";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub tags: Vec<u8>,
    pub meta: Vec<u64>,
    pub params: ParamSet,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn len_u16(n: usize, what: &str) -> Result<u16> {
    u16::try_from(n).map_err(|_| corrupt(format!("too many {what}: {n}")))
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&len_u16(self.tags.len(), "tags")?.to_le_bytes())?;
        w.write_all(&self.tags)?;
        w.write_all(&len_u16(self.meta.len(), "meta fields")?.to_le_bytes())?;
        for m in &self.meta {
            w.write_all(&m.to_le_bytes())?;
        }
        let count = u32::try_from(self.params.len()).map_err(|_| corrupt("too many parameters"))?;
        w.write_all(&count.to_le_bytes())?;
        for p in self.params.iter() {
            let name = p.name.as_bytes();
            w.write_all(&len_u16(name.len(), "name bytes")?.to_le_bytes())?;
            w.write_all(name)?;
            let rank = u8::try_from(p.value.shape().len()).map_err(|_| corrupt("rank above 255"))?;
            w.write_all(&[rank])?;
            for &d in p.value.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
        }
        for p in self.params.iter() {
            for v in p.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = read_u16(&mut r)?;
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let mut tags = vec![0u8; read_u16(&mut r)? as usize];
        r.read_exact(&mut tags)?;
        let meta = (0..read_u16(&mut r)?)
            .map(|_| read_u64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        let count = u32::from_le_bytes(buf4);
        let mut headers = Vec::new();
        for _ in 0..count {
            let mut name = vec![0u8; read_u16(&mut r)? as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| corrupt("parameter name is not UTF-8"))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            let shape = (0..rank[0])
                .map(|_| read_u64(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            headers.push((name, shape));
        }
        let mut params = ParamSet::new();
        for (name, shape) in headers {
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf8 = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf8)
                    .map_err(|_| corrupt(format!("payload truncated in `{name}`")))?;
                data.push(f64::from_le_bytes(buf8));
            }
            params.add(name, Tensor::new(shape, data)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(corrupt("trailing bytes after payload"));
        }
        Ok(Checkpoint { tags, meta, params })
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(|_| corrupt("header truncated"))?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| corrupt("header truncated"))?;
    Ok(u64::from_le_bytes(b))
}
