//! Flat parameter dumps: `b"MRSM"`, u32 version, u64 length (all
//! little-endian), then one little-endian f32 per parameter.

use std::io::{Read, Write};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MRSM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn write_checkpoint<W: Write>(mut w: W, params: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<f32>> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let d = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 4 * d {
        return Err(Error::Checkpoint(format!(
            "expected {} payload bytes, found {}",
            4 * d,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}
