//! Binary checkpoint of the optimizer state.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes   b"PLNETCKP"
//! version    u32       1
//! n          u32       neurons
//! pop_size   u64
//! generation u64       next generation to run
//! W          n*n  f64
//! Pi         n*n  f64
//! adam m     2n*n f64
//! adam v     2n*n f64
//! adam t     u64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::es::{AdamState, EsState};

pub const MAGIC: &[u8; 8] = b"PLNETCKP";
pub const VERSION: u32 = 1;

pub fn encode(state: &EsState) -> Result<Vec<u8>> {
    let n = state.n_neurons;
    let dim = 2 * n * n;
    if state.theta.len() != dim || state.adam.m.len() != dim || state.adam.v.len() != dim {
        return Err(Error::contract("optimizer state sizes do not match the neuron count"));
    }
    let n32 = u32::try_from(n).map_err(|_| Error::contract("too many neurons for the checkpoint format"))?;
    let mut out = Vec::with_capacity(40 + 8 * 3 * dim);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&(state.pop_size as u64).to_le_bytes());
    out.extend_from_slice(&state.generation.to_le_bytes());
    for v in state.theta.iter().chain(&state.adam.m).chain(&state.adam.v) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&state.adam.t.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated: wanted {k} bytes at offset {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let bytes = self.take(k.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<EsState> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = c.u32()? as usize;
    let pop_size = c.u64()? as usize;
    let generation = c.u64()?;
    let dim = 2 * n * n;
    let theta = c.f64s(dim)?;
    let m = c.f64s(dim)?;
    let v = c.f64s(dim)?;
    let t = c.u64()?;
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(EsState {
        n_neurons: n,
        pop_size,
        generation,
        theta,
        adam: AdamState { m, v, t },
    })
}

pub fn save(path: &Path, state: &EsState) -> Result<()> {
    let bytes = encode(state)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<EsState> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    decode(&bytes)
}
