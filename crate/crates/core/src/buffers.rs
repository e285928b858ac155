//! Per-pixel buffers shared by every stage: color images, z-depth maps and
//! region masks. All buffers are row-major with the origin at the top-left.

use crate::error::{Error, Result};

pub type Rgb = [f64; 3];

/// An RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ColorImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape(width * height, pixels.len()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    /// `1 - c` per channel.
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|c| [1.0 - c[0], 1.0 - c[1], 1.0 - c[2]])
                .collect(),
        }
    }

    /// Takes `fill` inside `mask` and `self` everywhere else.
    pub fn composite(&self, fill: &ColorImage, mask: &RegionMask) -> Result<Self> {
        check_dims(self.dims(), fill.dims())?;
        check_dims(self.dims(), mask.dims())?;
        let pixels = self
            .pixels
            .iter()
            .zip(&fill.pixels)
            .zip(mask.as_slice())
            .map(|((&keep, &new), &m)| if m { new } else { keep })
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            pixels,
        })
    }

    /// Quantizes to 8-bit RGB, row-major.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    /// Rounds every channel to the nearest 8-bit level, so the image
    /// survives an 8-bit file round trip unchanged.
    pub fn quantized(&self) -> Self {
        Self::from_rgb8(self.width, self.height, &self.to_rgb8()).expect("same dimensions")
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::shape(width * height * 3, bytes.len()));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|p| p.iter().map(|&b| b as f64 / 255.0).collect::<Vec<_>>())
            .map(|v| [v[0], v[1], v[2]])
            .collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }
}

/// Per-pixel camera-space z-depth with a validity mask.
///
/// Invalid pixels hold [`DepthMap::INVALID`] and are skipped by every
/// reduction in this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub const INVALID: f64 = 0.0;

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![Self::INVALID; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Builds a map where every finite positive value is valid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape(width * height, values.len()));
        }
        let mut map = Self::invalid(width, height);
        for (i, v) in values.into_iter().enumerate() {
            if v.is_finite() && v > 0.0 {
                map.values[i] = v;
                map.valid[i] = true;
            }
        }
        Ok(map)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.get_index(y * self.width + x)
    }

    pub fn get_index(&self, i: usize) -> Option<f64> {
        self.valid[i].then(|| self.values[i])
    }

    /// Stores `z`; non-positive or non-finite values invalidate the pixel.
    pub fn set_index(&mut self, i: usize, z: f64) {
        if z.is_finite() && z > 0.0 {
            self.values[i] = z;
            self.valid[i] = true;
        } else {
            self.invalidate_index(i);
        }
    }

    pub fn set(&mut self, x: usize, y: usize, z: f64) {
        self.set_index(y * self.width + x, z);
    }

    pub fn invalidate_index(&mut self, i: usize) {
        self.values[i] = Self::INVALID;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Applies `f` to every valid value; results that are not positive
    /// invalidate the pixel.
    pub fn map_valid(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let mut out = Self::invalid(self.width, self.height);
        for i in 0..self.values.len() {
            if self.valid[i] {
                out.set_index(i, f(i, self.values[i]));
            }
        }
        out
    }

    /// Rounds valid values to single precision.
    pub fn quantized(&self) -> Self {
        self.map_valid(|_, z| z as f32 as f64)
    }

    /// Keeps only pixels where `keep` is set.
    pub fn restricted(&self, keep: &[bool]) -> Self {
        let mut out = self.clone();
        for (i, &k) in keep.iter().enumerate() {
            if !k {
                out.invalidate_index(i);
            }
        }
        out
    }

    /// Pixels valid in both maps.
    pub fn overlap(&self, other: &DepthMap) -> Result<Vec<bool>> {
        check_dims(self.dims(), other.dims())?;
        Ok(self
            .valid
            .iter()
            .zip(&other.valid)
            .map(|(&a, &b)| a && b)
            .collect())
    }

    /// Root-mean-square difference over pixels in `mask` that are valid in
    /// both maps. `None` when no pixel qualifies.
    pub fn rmse(&self, other: &DepthMap, mask: &[bool]) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.values.len() {
            if mask[i] && self.valid[i] && other.valid[i] {
                let d = self.values[i] - other.values[i];
                sum += d * d;
                n += 1;
            }
        }
        (n > 0).then(|| (sum / n as f64).sqrt())
    }
}

/// Pixels whose content is unknown and must be inpainted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    missing: Vec<bool>,
}

impl RegionMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            missing: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            missing: vec![true; width * height],
        }
    }

    pub fn from_bools(width: usize, height: usize, missing: Vec<bool>) -> Result<Self> {
        if missing.len() != width * height {
            return Err(Error::shape(width * height, missing.len()));
        }
        Ok(Self {
            width,
            height,
            missing,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, x: usize, y: usize) -> bool {
        self.missing[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, missing: bool) {
        self.missing[y * self.width + x] = missing;
    }

    pub fn count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn fraction(&self) -> f64 {
        if self.missing.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.missing.len() as f64
        }
    }

    /// Complement: `true` where content is known.
    pub fn known(&self) -> Vec<bool> {
        self.missing.iter().map(|&m| !m).collect()
    }
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::shape(
            format!("{}x{}", expected.0, expected.1),
            format!("{}x{}", actual.0, actual.1),
        ));
    }
    Ok(())
}
