use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::buffers::{check_dims, DepthMap};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalConfig {
    /// Lattice nodes per image side.
    pub lattice: usize,
    /// Weight of squared differences between neighboring nodes, relative
    /// to the mean squared overlap residual.
    pub smoothness: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            lattice: 17,
            smoothness: 0.1,
        }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lattice < 2 {
            return Err(Error::invalid("correction lattice needs at least 2 nodes per side"));
        }
        if !(self.smoothness >= 0.0 && self.smoothness.is_finite()) {
            return Err(Error::invalid(format!("bad smoothness weight {}", self.smoothness)));
        }
        Ok(())
    }
}

/// Per-node scale and offset on a square lattice spanning the image,
/// bilinearly interpolated per pixel: `D' = a(p) D + b(p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionField {
    pub nodes: usize,
    pub width: usize,
    pub height: usize,
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl CorrectionField {
    pub fn identity(nodes: usize, width: usize, height: usize) -> Self {
        Self {
            nodes,
            width,
            height,
            scale: vec![1.0; nodes * nodes],
            offset: vec![0.0; nodes * nodes],
        }
    }

    /// The four lattice nodes around pixel `(x, y)` with bilinear weights.
    fn stencil(&self, x: usize, y: usize) -> [(usize, f64); 4] {
        let n = self.nodes;
        let coord = |p: usize, extent: usize| {
            let u = if extent > 1 {
                p as f64 / (extent - 1) as f64 * (n - 1) as f64
            } else {
                0.0
            };
            let i = (u.floor() as usize).min(n - 2);
            (i, u - i as f64)
        };
        let (i, fx) = coord(x, self.width);
        let (j, fy) = coord(y, self.height);
        [
            (j * n + i, (1.0 - fx) * (1.0 - fy)),
            (j * n + i + 1, fx * (1.0 - fy)),
            ((j + 1) * n + i, (1.0 - fx) * fy),
            ((j + 1) * n + i + 1, fx * fy),
        ]
    }

    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        self.stencil(x, y)
            .iter()
            .fold((0.0, 0.0), |(a, b), &(k, w)| (a + w * self.scale[k], b + w * self.offset[k]))
    }

    pub fn apply(&self, depth: &DepthMap) -> Result<DepthMap> {
        check_dims((self.width, self.height), depth.dims())?;
        let w = self.width;
        Ok(depth.map_valid(|i, z| {
            let (a, b) = self.at(i % w, i / w);
            a * z + b
        }))
    }

    /// Lower bound of the interpolated scale.
    pub fn min_scale(&self) -> f64 {
        self.scale.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Fits a correction field minimizing the mean squared residual against
/// `rendered` on `overlap` plus the lattice smoothness penalty, in closed
/// form, and applies it to the whole of `coarse`.
pub fn local_align(
    coarse: &DepthMap,
    rendered: &DepthMap,
    overlap: &[bool],
    cfg: &LocalConfig,
) -> Result<(DepthMap, CorrectionField)> {
    cfg.validate()?;
    check_dims(coarse.dims(), rendered.dims())?;
    if overlap.len() != coarse.len() {
        return Err(Error::shape(coarse.len(), overlap.len()));
    }
    let (width, height) = coarse.dims();
    let mut field = CorrectionField::identity(cfg.lattice, width, height);
    let n = cfg.lattice * cfg.lattice;
    let dim = 2 * n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut g = DVector::<f64>::zeros(dim);
    let used: Vec<usize> = (0..overlap.len())
        .filter(|&i| overlap[i] && coarse.valid_mask()[i] && rendered.valid_mask()[i])
        .collect();
    if used.is_empty() {
        return Err(Error::Alignment("local alignment needs a non-empty overlap".into()));
    }
    let inv_n = 1.0 / used.len() as f64;
    for &i in &used {
        let z = coarse.values()[i];
        let r0 = z - rendered.values()[i];
        if !r0.is_finite() {
            return Err(Error::NumericAbort {
                iteration: 0,
                detail: format!("non-finite depth residual at pixel {i}"),
            });
        }
        let st = field.stencil(i % width, i / width);
        // Jacobian row entries: d r / d scale_k = w_k z, d r / d offset_k = w_k.
        let mut idx = [0usize; 8];
        let mut val = [0.0; 8];
        for (s, &(k, w)) in st.iter().enumerate() {
            idx[2 * s] = 2 * k;
            val[2 * s] = w * z;
            idx[2 * s + 1] = 2 * k + 1;
            val[2 * s + 1] = w;
        }
        for a in 0..8 {
            g[idx[a]] += inv_n * val[a] * r0;
            for b in 0..8 {
                h[(idx[a], idx[b])] += inv_n * val[a] * val[b];
            }
        }
    }
    let data_trace = h.trace() / dim as f64;
    let side = cfg.lattice;
    let mut couple = |p: usize, q: usize| {
        for c in 0..2 {
            let (a, b) = (2 * p + c, 2 * q + c);
            h[(a, a)] += cfg.smoothness;
            h[(b, b)] += cfg.smoothness;
            h[(a, b)] -= cfg.smoothness;
            h[(b, a)] -= cfg.smoothness;
        }
    };
    for j in 0..side {
        for i in 0..side {
            let k = j * side + i;
            if i + 1 < side {
                couple(k, k + 1);
            }
            if j + 1 < side {
                couple(k, k + side);
            }
        }
    }
    // A faint pull toward the identity keeps nodes determined when the
    // overlap cannot separate scale from offset.
    let ridge = 1e-10 * data_trace.max(1e-12);
    for d in 0..dim {
        h[(d, d)] += ridge;
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::Alignment("correction normal equations not positive definite".into()))?;
    let delta = chol.solve(&(-g));
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericAbort {
            iteration: 0,
            detail: "non-finite correction field".into(),
        });
    }
    for k in 0..n {
        field.scale[k] += delta[2 * k];
        field.offset[k] += delta[2 * k + 1];
    }
    let out = field.apply(coarse)?;
    Ok((out, field))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_input_keeps_identity() {
        let d = DepthMap::from_values(6, 4, (0..24).map(|i| 1.0 + i as f64 * 0.1).collect()).unwrap();
        let (out, field) = local_align(&d, &d, &vec![true; 24], &LocalConfig::default()).unwrap();
        assert_eq!(out, d);
        assert!(field.scale.iter().all(|&s| s == 1.0));
        assert!(field.offset.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn removes_constant_offset() {
        let r = DepthMap::from_values(6, 4, (0..24).map(|i| 1.0 + i as f64 * 0.1).collect()).unwrap();
        let c = r.map_valid(|_, z| z + 0.3);
        let (out, _) = local_align(&c, &r, &vec![true; 24], &LocalConfig::default()).unwrap();
        assert!(out.rmse(&r, &vec![true; 24]).unwrap() < 1e-6);
    }

    #[test]
    fn stencil_weights_partition_unity() {
        let f = CorrectionField::identity(5, 13, 7);
        for y in 0..7 {
            for x in 0..13 {
                let s: f64 = f.stencil(x, y).iter().map(|p| p.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(f.at(12, 6), (1.0, 0.0));
    }

    #[test]
    fn empty_overlap_is_an_error() {
        let d = DepthMap::from_values(2, 2, vec![1.0; 4]).unwrap();
        assert!(local_align(&d, &d, &[false; 4], &LocalConfig::default()).is_err());
    }
}
