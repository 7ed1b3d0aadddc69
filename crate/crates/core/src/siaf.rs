// SPDX-License-Identifier: Apache-2.0

//! SIAF tensor container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "SIAF" | version u16 = 1 | count u32
//! per tensor: name_len u16 | name (UTF-8) | dtype u8 | rank u8 | dims u32 x rank
//!             | scale_exp i8 | payload_len u64 | payload
//! ```
//!
//! dtype codes: 0 packed spikes, 1 int8, 2 int32, 3 uint8.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{AccTensor, QTensor, SpikeTensor};

pub const MAGIC: &[u8; 4] = b"SIAF";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    Spike = 0,
    Int8 = 1,
    Int32 = 2,
    Uint8 = 3,
}

impl DType {
    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DType::Spike,
            1 => DType::Int8,
            2 => DType::Int32,
            3 => DType::Uint8,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoredTensor {
    Spike(SpikeTensor),
    Int8(QTensor),
    Int32(AccTensor),
    Uint8 { shape: Vec<usize>, data: Vec<u8> },
}

impl StoredTensor {
    pub fn dtype(&self) -> DType {
        match self {
            StoredTensor::Spike(_) => DType::Spike,
            StoredTensor::Int8(_) => DType::Int8,
            StoredTensor::Int32(_) => DType::Int32,
            StoredTensor::Uint8 { .. } => DType::Uint8,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            StoredTensor::Spike(t) => t.shape(),
            StoredTensor::Int8(t) => t.shape(),
            StoredTensor::Int32(t) => t.shape(),
            StoredTensor::Uint8 { shape, .. } => shape,
        }
    }
}

/// Ordered collection of named tensors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TensorFile {
    entries: Vec<(String, StoredTensor)>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`, keeping first-insertion order.
    pub fn insert(&mut self, name: impl Into<String>, t: StoredTensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.entries.push((name, t)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &StoredTensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn qtensor(&self, name: &str) -> Result<QTensor> {
        match self.get(name) {
            Some(StoredTensor::Int8(q)) => Ok(q.clone()),
            Some(other) => Err(Error::Config(format!("tensor `{name}` is {:?}, expected int8", other.dtype()))),
            None => Err(Error::Config(format!("missing tensor `{name}`"))),
        }
    }

    pub fn acc_tensor(&self, name: &str) -> Result<AccTensor> {
        match self.get(name) {
            Some(StoredTensor::Int32(a)) => Ok(a.clone()),
            Some(other) => Err(Error::Config(format!("tensor `{name}` is {:?}, expected int32", other.dtype()))),
            None => Err(Error::Config(format!("missing tensor `{name}`"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype() as u8);
            let shape = t.shape();
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            let (scale, payload): (i8, Vec<u8>) = match t {
                StoredTensor::Spike(s) => (0, s.to_bytes()),
                StoredTensor::Int8(q) => (q.scale_exp(), q.data().iter().map(|&v| v as u8).collect()),
                StoredTensor::Int32(a) => (a.scale_exp(), a.data().iter().flat_map(|v| v.to_le_bytes()).collect()),
                StoredTensor::Uint8 { data, .. } => (0, data.clone()),
            };
            out.push(scale as u8);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format { offset: 0, message: format!("bad magic {magic:02x?}, expected \"SIAF\"") });
        }
        let version_at = r.pos;
        let version = r.u16()?;
        if version != VERSION {
            return Err(r.err_at(version_at, format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut file = TensorFile::new();
        for _ in 0..count {
            let name_at = r.pos;
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| r.err_at(name_at, "tensor name is not UTF-8".into()))?
                .to_string();
            let dtype_at = r.pos;
            let code = r.u8()?;
            let dtype =
                DType::from_code(code).ok_or_else(|| r.err_at(dtype_at, format!("unknown dtype code {code}")))?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let scale_exp = r.u8()? as i8;
            let len_at = r.pos;
            let payload_len = r.u64()?;
            let payload =
                r.take(usize::try_from(payload_len).map_err(|_| r.err_at(len_at, "payload length too large".into()))?)?;
            let wrap = |e: Error| r.err_at(len_at, format!("tensor `{name}`: {e}"));
            let numel: usize = shape.iter().product();
            let tensor = match dtype {
                DType::Spike => StoredTensor::Spike(SpikeTensor::from_bytes(&shape, payload).map_err(wrap)?),
                DType::Int8 => {
                    let data = payload.iter().map(|&b| b as i8).collect();
                    StoredTensor::Int8(QTensor::new(&shape, data, scale_exp).map_err(wrap)?)
                }
                DType::Int32 => {
                    if payload.len() != numel * 4 {
                        return Err(wrap(Error::shape("int32 payload length")));
                    }
                    let data = payload.chunks_exact(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                    StoredTensor::Int32(AccTensor::new(&shape, data, scale_exp).map_err(wrap)?)
                }
                DType::Uint8 => {
                    if payload.len() != numel {
                        return Err(wrap(Error::shape("uint8 payload length")));
                    }
                    StoredTensor::Uint8 { shape, data: payload.to_vec() }
                }
            };
            file.insert(name, tensor);
        }
        if r.pos != bytes.len() {
            return Err(r.err_at(r.pos, "trailing bytes after last tensor".into()));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err_at(&self, offset: usize, message: String) -> Error {
        Error::Format { offset: offset as u64, message }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err_at(self.pos, format!("unexpected end of file (need {n} bytes)")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TensorFile {
        let mut f = TensorFile::new();
        f.insert("w", StoredTensor::Int8(QTensor::new(&[2, 3], vec![-128, 127, 0, 1, -1, 5], -6).unwrap()));
        f.insert("b", StoredTensor::Int32(AccTensor::new(&[2], vec![i32::MIN, 7], -14).unwrap()));
        f.insert("s", StoredTensor::Spike(SpikeTensor::from_bits(&[2, 5], &[1, 0, 0, 1, 1, 0, 1, 0, 0, 1]).unwrap()));
        f.insert("img", StoredTensor::Uint8 { shape: vec![1, 1, 3], data: vec![0, 181, 255] });
        f
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let mut f = TensorFile::new();
        f.insert("ab", StoredTensor::Int8(QTensor::new(&[2], vec![-1, 3], -2).unwrap()));
        let bytes = f.to_bytes();
        let expected: Vec<u8> = [
            b"SIAF".as_slice(),
            &[1, 0],
            &[1, 0, 0, 0],
            &[2, 0],
            b"ab",
            &[1, 1],
            &[2, 0, 0, 0],
            &[0xfe],
            &[2, 0, 0, 0, 0, 0, 0, 0],
            &[0xff, 3],
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip() {
        let f = sample();
        assert_eq!(TensorFile::from_bytes(&f.to_bytes()).unwrap(), f);
    }

    #[test]
    fn bad_magic_names_offset_zero() {
        let mut bytes = sample().to_bytes();
        bytes[1] = b'X';
        match TensorFile::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_fail() {
        let bytes = sample().to_bytes();
        for cut in [3, 9, bytes.len() - 1] {
            assert!(matches!(TensorFile::from_bytes(&bytes[..cut]), Err(Error::Format { .. })));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(TensorFile::from_bytes(&extra).is_err());
    }

    #[test]
    fn unknown_dtype_rejected() {
        let mut f = TensorFile::new();
        f.insert("x", StoredTensor::Uint8 { shape: vec![1], data: vec![9] });
        let mut bytes = f.to_bytes();
        // dtype byte follows magic(4) version(2) count(4) name_len(2) name(1)
        bytes[13] = 9;
        match TensorFile::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 13),
            other => panic!("{other:?}"),
        }
    }
}
