//! Portable float maps for depth and 1-bit bitmaps for masks.

use crate::buffers::{DepthMap, RegionMask};
use crate::error::{Error, Result};

/// Largest accepted width or height.
pub const MAX_SIDE: usize = 1 << 15;

/// Little-endian grayscale PFM, rows bottom to top. Invalid pixels are
/// written as 0.
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let v = depth.get(x, y).unwrap_or(DepthMap::INVALID) as f32;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Reads a grayscale PFM of either byte order. Non-positive and non-finite
/// samples become invalid pixels.
pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut hdr = Header::new(bytes);
    match hdr.token()? {
        b"Pf" => {}
        b"PF" => return Err(Error::format("color PFM is not a depth map")),
        other => return Err(Error::format(format!("not a PFM file (magic {:?})", String::from_utf8_lossy(other)))),
    }
    let w = hdr.dimension()?;
    let h = hdr.dimension()?;
    let scale: f64 = std::str::from_utf8(hdr.token()?)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::format("bad PFM scale"))?;
    let data = hdr.raster()?;
    let n = w * h;
    if data.len() != n * 4 {
        return Err(Error::format(format!("PFM raster has {} bytes, expected {}", data.len(), n * 4)));
    }
    let little = scale < 0.0;
    let mut values = vec![0.0; n];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (x, row) = (k % w, k / w);
        values[(h - 1 - row) * w + x] = v as f64;
    }
    DepthMap::from_values(w, h, values)
}

/// Binary PBM; set bits (black) mark missing pixels.
pub fn encode_pbm(mask: &RegionMask) -> Vec<u8> {
    let (w, h) = mask.dims();
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let stride = w.div_ceil(8);
    for y in 0..h {
        let mut row = vec![0u8; stride];
        for x in 0..w {
            if mask.is_missing(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

pub fn decode_pbm(bytes: &[u8]) -> Result<RegionMask> {
    let mut hdr = Header::new(bytes);
    if hdr.token()? != b"P4" {
        return Err(Error::format("not a binary PBM file"));
    }
    let w = hdr.dimension()?;
    let h = hdr.dimension()?;
    let data = hdr.raster()?;
    let stride = w.div_ceil(8);
    if data.len() != stride * h {
        return Err(Error::format(format!("PBM raster has {} bytes, expected {}", data.len(), stride * h)));
    }
    let mut missing = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            missing[y * w + x] = data[y * stride + x / 8] & (0x80 >> (x % 8)) != 0;
        }
    }
    RegionMask::from_bools(w, h, missing)
}

/// Netpbm header reader: whitespace-separated tokens, `#` comments, and a
/// single whitespace byte before the raster.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::format("truncated header")),
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if self.pos - start > 32 {
            return Err(Error::format("header token too long"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn dimension(&mut self) -> Result<usize> {
        let t = self.token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&v| v > 0 && v <= MAX_SIDE)
            .ok_or_else(|| Error::format(format!("bad image dimension {:?}", String::from_utf8_lossy(t))))
    }

    fn raster(self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(&self.bytes[self.pos + 1..]),
            _ => Err(Error::format("missing raster separator")),
        }
    }
}
