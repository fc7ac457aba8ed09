//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! offset 0   8 bytes   magic "MFORGE01"
//!            u32       number of layer sizes S (>= 2)
//!            S x u32   layer sizes d_0 .. d_{S-1}
//! then for each layer l = 0 .. S-2:
//!            d_l * d_{l+1} x f64   weight, row-major [in][out]
//!            d_{l+1} x f64         bias
//! ```
//!
//! Nothing follows the last bias; trailing bytes are rejected.

use std::path::Path;

use super::{Dense, Mlp};
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MFORGE01";

pub fn to_bytes(model: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.num_parameters() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(model.sizes().len() as u32).to_le_bytes());
    for &s in model.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for l in model.layers() {
        for v in l.weight.data().iter().chain(l.bias.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated while reading {what} at byte {}: need {n} bytes, {} remain",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(magic),
            std::str::from_utf8(MAGIC).unwrap()
        )));
    }
    let count = r.u32("layer count")? as usize;
    if count < 2 {
        return Err(Error::Checkpoint(format!("{count} layer sizes, need at least 2")));
    }
    let mut sizes = Vec::with_capacity(count);
    for i in 0..count {
        let s = r.u32("layer size")? as usize;
        if s == 0 {
            return Err(Error::Checkpoint(format!("layer size {i} is zero")));
        }
        sizes.push(s);
    }
    let mut layers = Vec::with_capacity(count - 1);
    for w in sizes.windows(2) {
        let weight = r.f64s(w[0] * w[1], "weights")?;
        let bias = r.f64s(w[1], "biases")?;
        layers.push(Dense {
            weight: Tensor::matrix(w[0], w[1], weight)?,
            bias: Tensor::matrix(1, w[1], bias)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after parameters",
            bytes.len() - r.pos
        )));
    }
    Mlp::from_layers(layers)
}

pub fn save(model: &Mlp, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load(path: &Path) -> Result<Mlp> {
    from_bytes(&read_file(path)?)
}
