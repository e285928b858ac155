use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::buffers::Rgb;
use crate::error::{Error, Result};

/// Parameters stored per grid node: density followed by RGB.
pub const CHANNELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn cube(half: f64) -> Result<Self> {
        Self::new([-half; 3], [half; 3])
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.min[a].is_finite() && self.max[a].is_finite() && self.max[a] > self.min[a]) {
                return Err(Error::invalid(format!("degenerate bounding box {self:?}")));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        )
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Parametric interval where `origin + t * dir` is inside the box.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let (mut lo, mut hi) = ((self.min[a] - origin[a]) * inv, (self.max[a] - origin[a]) * inv);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        (t0 < t1).then_some((t0, t1))
    }
}

/// Dense node grid of density and color over an axis-aligned box.
///
/// Parameters are unconstrained pre-activations. Density is
/// `density_scale * softplus(raw)` and color is `logistic(raw)`. Activated
/// values and their derivatives are cached and kept in sync with every
/// parameter write.
#[derive(Clone, Debug)]
pub struct RadianceGrid {
    bbox: Aabb,
    dims: [usize; 3],
    density_scale: f64,
    raw: Vec<f64>,
    act: Vec<f64>,
    dact: Vec<f64>,
    to_node: [f64; 3],
}

/// Trilinear footprint of a point: first node's parameter offset and the
/// fractional position inside the cell.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Cell {
    pub base: usize,
    pub frac: [f64; 3],
}

impl RadianceGrid {
    /// Uniform grid with activated density `density` and color `color`.
    pub fn uniform(
        bbox: Aabb,
        dims: [usize; 3],
        density_scale: f64,
        density: f64,
        color: Rgb,
    ) -> Result<Self> {
        if !(density_scale > 0.0) || !(density > 0.0) {
            return Err(Error::invalid("uniform grid needs positive density and scale"));
        }
        let node = [
            softplus_inv(density / density_scale),
            logit(color[0]),
            logit(color[1]),
            logit(color[2]),
        ];
        let n = node_count(&dims)?;
        let raw = node.iter().copied().cycle().take(n * CHANNELS).collect();
        Self::from_raw(bbox, dims, density_scale, raw)
    }

    pub fn from_raw(bbox: Aabb, dims: [usize; 3], density_scale: f64, raw: Vec<f64>) -> Result<Self> {
        bbox.validate()?;
        let n = node_count(&dims)?;
        if raw.len() != n * CHANNELS {
            return Err(Error::shape(n * CHANNELS, raw.len()));
        }
        if !(density_scale.is_finite() && density_scale > 0.0) {
            return Err(Error::invalid("density scale must be positive"));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid parameters must be finite"));
        }
        let ext = bbox.extent();
        let to_node = [
            (dims[0] - 1) as f64 / ext.x,
            (dims[1] - 1) as f64 / ext.y,
            (dims[2] - 1) as f64 / ext.z,
        ];
        let mut grid = Self {
            bbox,
            dims,
            density_scale,
            act: vec![0.0; raw.len()],
            dact: vec![0.0; raw.len()],
            raw,
            to_node,
        };
        for i in 0..grid.raw.len() {
            grid.refresh(i);
        }
        Ok(grid)
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn density_scale(&self) -> f64 {
        self.density_scale
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn param_count(&self) -> usize {
        self.raw.len()
    }

    /// Largest node spacing.
    pub fn voxel_size(&self) -> f64 {
        (0..3).map(|a| 1.0 / self.to_node[a]).fold(0.0, f64::max)
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn set_raw(&mut self, i: usize, v: f64) {
        self.raw[i] = v;
        self.refresh(i);
    }

    /// Visits every parameter mutably, refreshing the activation cache.
    pub fn update_raw(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        for i in 0..self.raw.len() {
            let old = self.raw[i];
            f(i, &mut self.raw[i]);
            if self.raw[i].to_bits() != old.to_bits() {
                self.refresh(i);
            }
        }
    }

    /// Parameter offset of node `(i, j, k)`; x varies fastest.
    pub fn node_offset(&self, i: usize, j: usize, k: usize) -> usize {
        ((k * self.dims[1] + j) * self.dims[0] + i) * CHANNELS
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.bbox.min[0] + i as f64 / self.to_node[0],
            self.bbox.min[1] + j as f64 / self.to_node[1],
            self.bbox.min[2] + k as f64 / self.to_node[2],
        )
    }

    /// Activated `(density, color)` stored at a node.
    pub fn node_value(&self, i: usize, j: usize, k: usize) -> (f64, Rgb) {
        let o = self.node_offset(i, j, k);
        (self.act[o], [self.act[o + 1], self.act[o + 2], self.act[o + 3]])
    }

    /// Trilinearly interpolated activated density and color; zero density
    /// and black outside the box. View direction does not enter.
    pub fn query(&self, x: &Vector3<f64>) -> (f64, Rgb) {
        match self.locate(x) {
            Some(cell) => {
                let v = self.interpolate(&cell);
                (v[0], [v[1], v[2], v[3]])
            }
            None => (0.0, [0.0; 3]),
        }
    }

    pub(crate) fn locate(&self, x: &Vector3<f64>) -> Option<Cell> {
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (x[a] - self.bbox.min[a]) * self.to_node[a];
            let top = (self.dims[a] - 1) as f64;
            if !(u >= 0.0 && u <= top) {
                return None;
            }
            let i = (u.floor() as usize).min(self.dims[a] - 2);
            idx[a] = i;
            frac[a] = u - i as f64;
        }
        Some(Cell {
            base: self.node_offset(idx[0], idx[1], idx[2]),
            frac,
        })
    }

    /// Parameter offsets and trilinear weights of the 8 cell corners.
    #[inline]
    pub(crate) fn corners(&self, cell: &Cell) -> [(usize, f64); 8] {
        let sx = CHANNELS;
        let sy = self.dims[0] * CHANNELS;
        let sz = self.dims[0] * self.dims[1] * CHANNELS;
        let [fx, fy, fz] = cell.frac;
        let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
        let b = cell.base;
        [
            (b, gx * gy * gz),
            (b + sx, fx * gy * gz),
            (b + sy, gx * fy * gz),
            (b + sx + sy, fx * fy * gz),
            (b + sz, gx * gy * fz),
            (b + sx + sz, fx * gy * fz),
            (b + sy + sz, gx * fy * fz),
            (b + sx + sy + sz, fx * fy * fz),
        ]
    }

    #[inline]
    pub(crate) fn interpolate(&self, cell: &Cell) -> [f64; CHANNELS] {
        let mut v = [0.0; CHANNELS];
        for (o, w) in self.corners(cell) {
            let a = &self.act[o..o + CHANNELS];
            v[0] += w * a[0];
            v[1] += w * a[1];
            v[2] += w * a[2];
            v[3] += w * a[3];
        }
        v
    }

    /// Derivative of the activated value at parameter `i` w.r.t. its raw value.
    #[inline]
    pub(crate) fn activation_slope(&self, i: usize) -> f64 {
        self.dact[i]
    }

    fn refresh(&mut self, i: usize) {
        let r = self.raw[i];
        if i % CHANNELS == 0 {
            self.act[i] = self.density_scale * softplus(r);
            self.dact[i] = self.density_scale * logistic(r);
        } else {
            let s = logistic(r);
            self.act[i] = s;
            self.dact[i] = s * (1.0 - s);
        }
    }
}

fn node_count(dims: &[usize; 3]) -> Result<usize> {
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::invalid(format!("grid needs at least 2 nodes per axis, got {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= 1 << 28)
        .ok_or_else(|| Error::invalid("grid too large"))
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}
