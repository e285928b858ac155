//! Binary grid checkpoints.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `SSGRID\r\n` |
//! | 4 | format version (u32) |
//! | 2 | endianness tag `LE` |
//! | 1 | scalar width in bytes (8) |
//! | 12 | node counts (3 x u32) |
//! | 48 | box min and max (6 x f64) |
//! | 8 | density scale (f64) |
//! | 8 | parameter count (u64) |
//! | 8n | raw parameters (f64) |
//! | 32 | SHA-256 of everything above |

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Aabb, RadianceGrid};

pub const MAGIC: &[u8; 8] = b"SSGRID\r\n";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 2 + 1 + 12 + 48 + 8 + 8;
const MAX_NODES_PER_AXIS: u32 = 4096;

pub fn encode_checkpoint(grid: &RadianceGrid) -> Vec<u8> {
    let raw = grid.raw();
    let mut out = Vec::with_capacity(HEADER_LEN + raw.len() * 8 + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(b"LE");
    out.push(8);
    for d in grid.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let bbox = grid.bbox();
    for v in bbox.min.iter().chain(&bbox.max) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&grid.density_scale().to_le_bytes());
    out.extend_from_slice(&(raw.len() as u64).to_le_bytes());
    for v in raw {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Hex content hash stored in the trailer of the checkpoint of `grid`.
pub fn grid_hash(grid: &RadianceGrid) -> String {
    let bytes = encode_checkpoint(grid);
    hex(&bytes[bytes.len() - 32..])
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Verifies magic, version, tags and content hash before decoding.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<RadianceGrid> {
    if bytes.len() < HEADER_LEN + 32 {
        return Err(Error::Checkpoint(format!("{} bytes is too short", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(Error::Checkpoint("content hash mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    if r.take(2)? != b"LE" {
        return Err(Error::Checkpoint("unsupported endianness tag".into()));
    }
    if r.take(1)? != [8] {
        return Err(Error::Checkpoint("unsupported scalar type".into()));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let v = r.u32()?;
        if !(2..=MAX_NODES_PER_AXIS).contains(&v) {
            return Err(Error::Checkpoint(format!("node count {v} out of range")));
        }
        *d = v as usize;
    }
    let mut corners = [0.0; 6];
    for c in corners.iter_mut() {
        *c = r.f64()?;
    }
    let density_scale = r.f64()?;
    let count = r.u64()?;
    let remaining = (body.len() - r.pos) as u64;
    if count.checked_mul(8) != Some(remaining) {
        return Err(Error::Checkpoint(format!("payload of {remaining} bytes does not hold {count} parameters")));
    }
    let raw = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let bbox = Aabb::new([corners[0], corners[1], corners[2]], [corners[3], corners[4], corners[5]])
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    RadianceGrid::from_raw(bbox, dims, density_scale, raw).map_err(|e| Error::Checkpoint(e.to_string()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
