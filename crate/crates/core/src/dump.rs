//! Binary dumps of noise increments and solver snapshots.
//!
//! Layout: a 32-byte header (8-byte magic, `u32` dimension, `u32` cells per
//! dimension, `f64` time step, `u64` step index), then the cell values as
//! little-endian `f64` in row-major order.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const NOISE_MAGIC: [u8; 8] = *b"PAMNOISE";
pub const FIELD_MAGIC: [u8; 8] = *b"PAMFIELD";
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpHeader {
    pub magic: [u8; 8],
    pub d: u32,
    pub n_cells: u32,
    pub dt: f64,
    pub index: u64,
}

impl DumpHeader {
    pub fn value_count(&self) -> usize {
        (self.n_cells as usize).pow(self.d)
    }
}

pub fn write_dump<W: Write>(mut w: W, header: &DumpHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.value_count() {
        return Err(Error::Io(format!(
            "dump expects {} values, got {}",
            header.value_count(),
            values.len()
        )));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    buf.extend_from_slice(&header.magic);
    buf.extend_from_slice(&header.d.to_le_bytes());
    buf.extend_from_slice(&header.n_cells.to_le_bytes());
    buf.extend_from_slice(&header.dt.to_le_bytes());
    buf.extend_from_slice(&header.index.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_dump<R: Read>(mut r: R) -> Result<(DumpHeader, Vec<f64>)> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head)?;
    let word = |a: usize, b: usize| -> [u8; 8] { head[a..b].try_into().unwrap() };
    let magic = word(0, 8);
    if magic != NOISE_MAGIC && magic != FIELD_MAGIC {
        return Err(Error::Io("unrecognized dump magic".into()));
    }
    let header = DumpHeader {
        magic,
        d: u32::from_le_bytes(head[8..12].try_into().unwrap()),
        n_cells: u32::from_le_bytes(head[12..16].try_into().unwrap()),
        dt: f64::from_le_bytes(word(16, 24)),
        index: u64::from_le_bytes(word(24, 32)),
    };
    if !(1..=2).contains(&header.d) {
        return Err(Error::Io(format!("dump dimension {} unsupported", header.d)));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.value_count() {
        return Err(Error::Io(format!(
            "dump body has {} bytes, expected {}",
            bytes.len(),
            8 * header.value_count()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}
