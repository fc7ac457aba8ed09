//! IDX container (the MNIST file format).
//!
//! ```text
//! byte 0-1   0x00 0x00
//! byte 2     dtype: 0x08 u8, 0x09 i8, 0x0B i16, 0x0C i32, 0x0D f32, 0x0E f64
//! byte 3     ndim (>= 1)
//! then       ndim big-endian u32 extents
//! then       payload, big-endian, row-major
//! ```
//!
//! [`IdxArray::to_tensor`] flattens every trailing axis into one, so
//! `(N, 28, 28)` becomes `[N, 784]` and a 1-D file stays `[N]`; `u8`
//! payloads are divided by 255.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    I8(Vec<i8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl IdxData {
    fn code(&self) -> u8 {
        match self {
            IdxData::U8(_) => 0x08,
            IdxData::I8(_) => 0x09,
            IdxData::I16(_) => 0x0B,
            IdxData::I32(_) => 0x0C,
            IdxData::F32(_) => 0x0D,
            IdxData::F64(_) => 0x0E,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IdxData::U8(v) => v.len(),
            IdxData::I8(v) => v.len(),
            IdxData::I16(v) => v.len(),
            IdxData::I32(v) => v.len(),
            IdxData::F32(v) => v.len(),
            IdxData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn element_size(code: u8) -> Option<usize> {
    match code {
        0x08 | 0x09 => Some(1),
        0x0B => Some(2),
        0x0C | 0x0D => Some(4),
        0x0E => Some(8),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: IdxData,
}

impl IdxArray {
    pub fn new(dims: Vec<usize>, data: IdxData) -> Result<Self> {
        if dims.is_empty() || dims.len() > 255 {
            return Err(Error::invalid(format!("IDX needs 1..=255 dimensions, got {}", dims.len())));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Values as `f64` (u8 scaled into `[0, 1]`), flattened to `[N]` or
    /// `[N, rest]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let values: Vec<f64> = match &self.data {
            IdxData::U8(v) => v.iter().map(|&b| b as f64 / 255.0).collect(),
            IdxData::I8(v) => v.iter().map(|&b| b as f64).collect(),
            IdxData::I16(v) => v.iter().map(|&b| b as f64).collect(),
            IdxData::I32(v) => v.iter().map(|&b| b as f64).collect(),
            IdxData::F32(v) => v.iter().map(|&b| b as f64).collect(),
            IdxData::F64(v) => v.clone(),
        };
        let shape = if self.dims.len() == 1 {
            vec![self.dims[0]]
        } else {
            vec![self.dims[0], self.dims[1..].iter().product()]
        };
        Tensor::new(shape, values)
    }

    /// Integer class labels from a 1-D integer file.
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        if self.dims.len() != 1 {
            return Err(Error::invalid(format!("label file must be 1-D, got dims {:?}", self.dims)));
        }
        let to_class = |v: i64| {
            usize::try_from(v).map_err(|_| Error::invalid(format!("negative class label {v}")))
        };
        match &self.data {
            IdxData::U8(v) => Ok(v.iter().map(|&b| b as usize).collect()),
            IdxData::I8(v) => v.iter().map(|&b| to_class(b as i64)).collect(),
            IdxData::I16(v) => v.iter().map(|&b| to_class(b as i64)).collect(),
            IdxData::I32(v) => v.iter().map(|&b| to_class(b as i64)).collect(),
            _ => Err(Error::invalid("label file must have an integer dtype")),
        }
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Idx {
            offset: bytes.len(),
            detail: format!("header needs 4 bytes, got {}", bytes.len()),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Idx {
            offset: 0,
            detail: format!("bad magic {:02x} {:02x}, expected 00 00", bytes[0], bytes[1]),
        });
    }
    let code = bytes[2];
    let Some(size) = element_size(code) else {
        return Err(Error::Idx {
            offset: 2,
            detail: format!("unsupported dtype 0x{code:02x}"),
        });
    };
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(Error::Idx {
            offset: 3,
            detail: "zero dimensions".into(),
        });
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Idx {
            offset: bytes.len(),
            detail: format!("header with {ndim} extents needs {header} bytes, got {}", bytes.len()),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let expected = count.and_then(|c| c.checked_mul(size)).ok_or_else(|| Error::Idx {
        offset: 4,
        detail: format!("extents {dims:?} overflow"),
    })?;
    let payload = &bytes[header..];
    if payload.len() != expected {
        let what = if payload.len() < expected { "truncated payload" } else { "trailing bytes after payload" };
        return Err(Error::Idx {
            offset: header,
            detail: format!("{what}: expected {expected} bytes, got {}", payload.len()),
        });
    }
    let data = match code {
        0x08 => IdxData::U8(payload.to_vec()),
        0x09 => IdxData::I8(payload.iter().map(|&b| b as i8).collect()),
        0x0B => IdxData::I16(payload.chunks_exact(2).map(|c| i16::from_be_bytes(c.try_into().unwrap())).collect()),
        0x0C => IdxData::I32(payload.chunks_exact(4).map(|c| i32::from_be_bytes(c.try_into().unwrap())).collect()),
        0x0D => IdxData::F32(payload.chunks_exact(4).map(|c| f32::from_be_bytes(c.try_into().unwrap())).collect()),
        0x0E => IdxData::F64(payload.chunks_exact(8).map(|c| f64::from_be_bytes(c.try_into().unwrap())).collect()),
        _ => unreachable!("dtype checked above"),
    };
    IdxArray::new(dims, data)
}

pub fn serialize_idx(array: &IdxArray) -> Result<Vec<u8>> {
    let mut out = vec![0, 0, array.data.code(), array.dims.len() as u8];
    for &d in &array.dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    match &array.data {
        IdxData::U8(v) => out.extend_from_slice(v),
        IdxData::I8(v) => out.extend(v.iter().map(|&b| b as u8)),
        IdxData::I16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
        IdxData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_be_bytes())),
    }
    Ok(out)
}

/// Parse and convert in one step.
pub fn parse_idx_tensor(bytes: &[u8]) -> Result<Tensor> {
    parse_idx(bytes)?.to_tensor()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u8_vector_scaled() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 0, 128, 255];
        let t = parse_idx_tensor(&bytes).unwrap();
        assert_eq!(t.shape(), &[3]);
        assert_eq!(t.data(), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn images_flatten() {
        let arr = IdxArray::new(vec![2, 28, 28], IdxData::U8(vec![7; 2 * 784])).unwrap();
        let t = parse_idx_tensor(&serialize_idx(&arr).unwrap()).unwrap();
        assert_eq!(t.shape(), &[2, 784]);
    }

    #[test]
    fn malformed_inputs() {
        let err = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2]).unwrap_err().to_string();
        assert!(err.contains("expected 3 bytes, got 2"), "{err}");
        assert!(err.contains("byte 8"), "{err}");
        let err = parse_idx(&[1, 0, 8, 1, 0, 0, 0, 1, 5]).unwrap_err().to_string();
        assert!(err.contains("bad magic") && err.contains("byte 0"), "{err}");
        let err = parse_idx(&[0, 0, 0x0A, 1, 0, 0, 0, 1, 5]).unwrap_err().to_string();
        assert!(err.contains("unsupported dtype 0x0a") && err.contains("byte 2"), "{err}");
    }

    #[test]
    fn labels_from_u8() {
        let arr = IdxArray::new(vec![3], IdxData::U8(vec![0, 9, 4])).unwrap();
        assert_eq!(arr.class_labels().unwrap(), vec![0, 9, 4]);
    }
}
