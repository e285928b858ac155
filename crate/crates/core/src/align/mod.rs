//! Bringing an independently estimated depth map into agreement with the
//! depth rendered from the field: a global scale and offset estimated from
//! sampled point pairs, then a smooth spatially varying correction fitted on
//! the overlap.

mod local;

use nalgebra::Vector3;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::{check_dims, DepthMap};
use crate::camera::Intrinsics;
use crate::error::{Error, Result};

pub use local::{local_align, CorrectionField, LocalConfig};

/// Pair count cap when sampling the overlap.
pub const MAX_PAIRS: usize = 10_000;

/// The same pixel back-projected with rendered and estimated depth, in the
/// camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointPair {
    pub pixel: usize,
    pub rendered: Vector3<f64>,
    pub estimated: Vector3<f64>,
}

/// Draws `min(overlap size, max_pairs)` overlap pixels uniformly without
/// replacement, in random order.
pub fn sample_pairs<R: Rng + ?Sized>(
    rendered: &DepthMap,
    estimated: &DepthMap,
    overlap: &[bool],
    intrinsics: &Intrinsics,
    max_pairs: usize,
    rng: &mut R,
) -> Result<Vec<PointPair>> {
    check_dims(rendered.dims(), estimated.dims())?;
    check_dims((intrinsics.width, intrinsics.height), rendered.dims())?;
    if overlap.len() != rendered.len() {
        return Err(Error::shape(rendered.len(), overlap.len()));
    }
    let pool: Vec<usize> = (0..overlap.len())
        .filter(|&i| overlap[i] && rendered.valid_mask()[i] && estimated.valid_mask()[i])
        .collect();
    if pool.is_empty() {
        return Err(Error::Alignment("rendered and estimated depth share no valid pixel".into()));
    }
    let m = pool.len().min(max_pairs);
    let w = rendered.width();
    Ok(index::sample(rng, pool.len(), m)
        .into_iter()
        .map(|k| {
            let i = pool[k];
            let q = [(i % w) as f64, (i / w) as f64];
            PointPair {
                pixel: i,
                rendered: intrinsics.unproject(q, rendered.values()[i]),
                estimated: intrinsics.unproject(q, estimated.values()[i]),
            }
        })
        .collect())
}

/// `D = scale * D_est + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalAlignment {
    pub scale: f64,
    pub offset: f64,
}

impl GlobalAlignment {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn apply(&self, depth: &DepthMap) -> DepthMap {
        depth.map_valid(|_, z| self.scale * z + self.offset)
    }
}

/// Scale is the mean ratio of distances between consecutive pairs in the
/// given order, skipping pairs whose estimated points coincide; offset is
/// the mean z gap left after scaling.
pub fn global_align(pairs: &[PointPair]) -> Result<GlobalAlignment> {
    if pairs.len() < 2 {
        return Err(Error::Alignment(format!("need two point pairs, got {}", pairs.len())));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for w in pairs.windows(2) {
        let de = (w[0].estimated - w[1].estimated).norm();
        if de < 1e-9 {
            continue;
        }
        sum += (w[0].rendered - w[1].rendered).norm() / de;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Alignment("all consecutive estimated points coincide".into()));
    }
    let scale = sum / n as f64;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Alignment(format!("degenerate scale {scale}")));
    }
    let offset = pairs
        .iter()
        .map(|p| p.rendered.z - scale * p.estimated.z)
        .sum::<f64>()
        / pairs.len() as f64;
    Ok(GlobalAlignment { scale, offset })
}

/// Parameters of the synthetic estimator-error model
/// `D' = (D + tau1) * D^(1 / tau2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub tau1: f64,
    pub tau2: f64,
}

impl Distortion {
    /// `tau1` in `[0, 1]`, `tau2` in `[30, 50]`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            tau1: rng.random_range(0.0..=1.0),
            tau2: rng.random_range(30.0..=50.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau2 > 0.0) || !self.tau1.is_finite() || self.tau2.is_nan() {
            return Err(Error::invalid(format!("bad distortion parameters {self:?}")));
        }
        Ok(())
    }
}

pub fn distort_depth(depth: &DepthMap, d: Distortion) -> Result<DepthMap> {
    d.validate()?;
    Ok(depth.map_valid(|_, z| (z + d.tau1) * z.powf(1.0 / d.tau2)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub max_pairs: usize,
    pub local: LocalConfig,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            max_pairs: MAX_PAIRS,
            local: LocalConfig::default(),
        }
    }
}

/// Result of the two-stage alignment with overlap residuals after each stage.
#[derive(Clone, Debug)]
pub struct Aligned {
    pub depth: DepthMap,
    pub global: GlobalAlignment,
    pub field: Option<CorrectionField>,
    pub overlap_pixels: usize,
    pub rmse_raw: Option<f64>,
    pub rmse_global: Option<f64>,
    pub rmse_local: Option<f64>,
    /// Why a stage was replaced by the identity, if one was.
    pub fallback: Option<String>,
}

/// Global then local alignment of `estimated` to `rendered`.
///
/// Without overlap the estimate is returned unchanged. A global fit that
/// would increase the overlap residual is replaced by the identity.
pub fn align_depth<R: Rng + ?Sized>(
    rendered: &DepthMap,
    estimated: &DepthMap,
    intrinsics: &Intrinsics,
    cfg: &AlignConfig,
    rng: &mut R,
) -> Result<Aligned> {
    let overlap = rendered.overlap(estimated)?;
    let overlap_pixels = overlap.iter().filter(|&&o| o).count();
    let rmse_raw = estimated.rmse(rendered, &overlap);
    let mut fallback = None;
    let pairs = match sample_pairs(rendered, estimated, &overlap, intrinsics, cfg.max_pairs, rng) {
        Ok(p) => p,
        Err(Error::Alignment(msg)) => {
            log::warn!("depth alignment skipped: {msg}");
            return Ok(Aligned {
                depth: estimated.clone(),
                global: GlobalAlignment::IDENTITY,
                field: None,
                overlap_pixels,
                rmse_raw,
                rmse_global: rmse_raw,
                rmse_local: rmse_raw,
                fallback: Some(msg),
            });
        }
        Err(e) => return Err(e),
    };
    let mut global = match global_align(&pairs) {
        Ok(g) => g,
        Err(Error::Alignment(msg)) => {
            fallback = Some(msg);
            GlobalAlignment::IDENTITY
        }
        Err(e) => return Err(e),
    };
    let mut coarse = global.apply(estimated);
    let mut rmse_global = coarse.rmse(rendered, &overlap);
    if coarse.valid_mask() != estimated.valid_mask() || worse(rmse_global, rmse_raw) {
        fallback = Some(format!("global fit {global:?} rejected"));
        global = GlobalAlignment::IDENTITY;
        coarse = estimated.clone();
        rmse_global = rmse_raw;
    }
    let (depth, field) = local_align(&coarse, rendered, &overlap, &cfg.local)?;
    let mut rmse_local = depth.rmse(rendered, &overlap);
    let (depth, field) = if depth.valid_mask() != coarse.valid_mask() || worse(rmse_local, rmse_global) {
        fallback = Some("local correction rejected".into());
        rmse_local = rmse_global;
        (coarse, None)
    } else {
        (depth, Some(field))
    };
    if let Some(msg) = &fallback {
        log::warn!("depth alignment fallback: {msg}");
    }
    Ok(Aligned {
        depth,
        global,
        field,
        overlap_pixels,
        rmse_raw,
        rmse_global,
        rmse_local,
        fallback,
    })
}

fn worse(candidate: Option<f64>, baseline: Option<f64>) -> bool {
    match (candidate, baseline) {
        (Some(c), Some(b)) => !(c <= b),
        _ => false,
    }
}
