//! Columnar draw archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  b"SBRA"
//! version    1 byte   1
//! header_len u32      length of the JSON header
//! header     JSON     model, n, d, s, seed, config_hash
//! n_blocks   u32
//! per block:
//!   name_len u16
//!   name     UTF-8
//!   rows     u64
//!   cols     u64
//!   data     rows*cols f64, row-major
//! ```
//!
//! Values round-trip bitwise: floats are stored as raw IEEE-754 bits.

use crate::{CliError, CliResult};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"SBRA";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ArchiveHeader {
    pub model: String,
    pub n: u64,
    pub d: u64,
    pub s: u64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub rows: u64,
    pub cols: u64,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DrawArchive {
    pub header: ArchiveHeader,
    pub blocks: Vec<Block>,
}

impl DrawArchive {
    pub fn new(header: ArchiveHeader) -> Self {
        Self {
            header,
            blocks: Vec::new(),
        }
    }

    pub fn push_matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        self.blocks.push(Block {
            name: name.to_string(),
            rows: m.nrows() as u64,
            cols: m.ncols() as u64,
            data,
        });
    }

    pub fn push_vector(&mut self, name: &str, v: &[f64]) {
        self.blocks.push(Block {
            name: name.to_string(),
            rows: v.len() as u64,
            cols: 1,
            data: v.to_vec(),
        });
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn matrix(&self, name: &str) -> Option<DMatrix<f64>> {
        let b = self.block(name)?;
        Some(DMatrix::from_row_slice(
            b.rows as usize,
            b.cols as usize,
            &b.data,
        ))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(&MAGIC);
        buf.push(VERSION);
        let header = serde_json::to_vec(&self.header)
            .map_err(|e| CliError::Input(format!("header serialization: {e}")))?;
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            let name = b.name.as_bytes();
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name);
            buf.extend_from_slice(&b.rows.to_le_bytes());
            buf.extend_from_slice(&b.cols.to_le_bytes());
            if b.data.len() != (b.rows * b.cols) as usize {
                return Err(CliError::Input(format!(
                    "block '{}' shape mismatch: {}x{} vs {} values",
                    b.name,
                    b.rows,
                    b.cols,
                    b.data.len()
                )));
            }
            for &v in &b.data {
                buf.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, k: usize| -> CliResult<&[u8]> {
            if *pos + k > bytes.len() {
                return Err(CliError::Input(format!(
                    "truncated archive: need {} bytes at offset {}, have {}",
                    k,
                    pos,
                    bytes.len()
                )));
            }
            let s = &bytes[*pos..*pos + k];
            *pos += k;
            Ok(s)
        };
        if take(&mut pos, 4)? != MAGIC {
            return Err(CliError::Input("not a draw archive (bad magic)".into()));
        }
        let version = take(&mut pos, 1)?[0];
        if version != VERSION {
            return Err(CliError::Input(format!(
                "unsupported archive version {version} (expected {VERSION})"
            )));
        }
        let header_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let header: ArchiveHeader = serde_json::from_slice(take(&mut pos, header_len)?)
            .map_err(|e| CliError::Input(format!("malformed archive header: {e}")))?;
        let n_blocks = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(&mut pos, name_len)?)
                .map_err(|e| CliError::Input(format!("non-UTF8 block name: {e}")))?
                .to_string();
            let rows = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
            let cols = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
            let count = (rows * cols) as usize;
            let raw = take(&mut pos, count * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
                .collect();
            blocks.push(Block {
                name,
                rows,
                cols,
                data,
            });
        }
        Ok(Self { header, blocks })
    }
}

/// Pack a set of variable-length knot tables into three flat blocks:
/// `g_offsets` (length S+1), `g_knots_t`, and `g_knots_g`.
pub fn push_knot_tables(
    archive: &mut DrawArchive,
    maps: &[sbr_core::transform::MonotoneMap],
) {
    let mut offsets = Vec::with_capacity(maps.len() + 1);
    let mut ts = Vec::new();
    let mut gs = Vec::new();
    offsets.push(0.0);
    for m in maps {
        ts.extend_from_slice(m.knots_t());
        gs.extend_from_slice(m.knots_g());
        offsets.push(ts.len() as f64);
    }
    archive.push_vector("g_offsets", &offsets);
    archive.push_vector("g_knots_t", &ts);
    archive.push_vector("g_knots_g", &gs);
}

/// Recover the knot table of draw `index` from the flat blocks.
pub fn knot_table(archive: &DrawArchive, index: usize) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let offsets = archive
        .block("g_offsets")
        .ok_or_else(|| CliError::Input("archive has no g_offsets block".into()))?;
    let ts = archive
        .block("g_knots_t")
        .ok_or_else(|| CliError::Input("archive has no g_knots_t block".into()))?;
    let gs = archive
        .block("g_knots_g")
        .ok_or_else(|| CliError::Input("archive has no g_knots_g block".into()))?;
    if index + 1 >= offsets.data.len() {
        return Err(CliError::Config(format!(
            "draw index {index} out of range (archive holds {} transforms)",
            offsets.data.len().saturating_sub(1)
        )));
    }
    let lo = offsets.data[index] as usize;
    let hi = offsets.data[index + 1] as usize;
    Ok((ts.data[lo..hi].to_vec(), gs.data[lo..hi].to_vec()))
}
