use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::{check_dims, ColorImage, DepthMap};
use crate::camera::{forward_warp, CameraView, SplatOptions};
use crate::error::{Error, Result};
use crate::field::{render_view, RadianceGrid};
use crate::rng::{stream_rng, Stream};

/// Upper bound reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Peak signal-to-noise ratio over `mask` for colors in `[0, 1]`.
/// `None` when the mask is empty.
pub fn psnr(a: &ColorImage, b: &ColorImage, mask: &[bool]) -> Result<Option<f64>> {
    check_dims(a.dims(), b.dims())?;
    if mask.len() != a.pixels().len() {
        return Err(Error::shape(a.pixels().len(), mask.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((pa, pb), &m) in a.pixels().iter().zip(b.pixels()).zip(mask) {
        if m {
            for ch in 0..3 {
                let d = pa[ch] - pb[ch];
                sum += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return Ok(None);
    }
    let mse = sum / n as f64;
    if mse <= 0.0 {
        return Ok(Some(PSNR_CAP));
    }
    Ok(Some((-10.0 * mse.log10()).min(PSNR_CAP)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub poses: usize,
    pub min_shift: f64,
    pub max_shift: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            poses: 100,
            min_shift: 0.1,
            max_shift: 0.4,
            steps: 192,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.poses == 0 {
            return Err(Error::invalid("evaluation needs at least one pose"));
        }
        if !(self.min_shift >= 0.0 && self.max_shift >= self.min_shift && self.max_shift.is_finite()) {
            return Err(Error::invalid(format!(
                "bad shift range [{}, {}]",
                self.min_shift, self.max_shift
            )));
        }
        if self.steps < 2 {
            return Err(Error::invalid("at least two samples per ray"));
        }
        Ok(())
    }
}

/// Views translated from `center` within its image plane by a random
/// direction and a distance drawn uniformly from the configured range.
pub fn test_poses(center: &CameraView, cfg: &EvalConfig) -> Result<Vec<CameraView>> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Evaluation, center.id as u64);
    Ok((0..cfg.poses)
        .map(|_| {
            let theta = rng.random_range(0.0..TAU);
            let r = if cfg.max_shift > cfg.min_shift {
                rng.random_range(cfg.min_shift..cfg.max_shift)
            } else {
                cfg.min_shift
            };
            // Image up is camera -y.
            let offset = nalgebra::Vector3::new(r * theta.cos(), -r * theta.sin(), 0.0);
            CameraView::new(center.intrinsics, center.pose.shifted(offset), center.id)
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per-pose score; `None` when no pixel of the warped reference is valid.
    pub per_pose: Vec<Option<f64>>,
    pub mean_psnr: f64,
}

/// Scores the field at poses near `view` against the reference image
/// forward-warped there with its depth.
pub fn eval_initialization(
    grid: &RadianceGrid,
    view: &CameraView,
    image: &ColorImage,
    depth: &DepthMap,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let poses = test_poses(view, cfg)?;
    let mut per_pose = Vec::with_capacity(poses.len());
    for pose in &poses {
        let warped = forward_warp(image, depth, view, pose, SplatOptions::default())?;
        let rendered = render_view(grid, pose, cfg.steps, 0.0)?;
        per_pose.push(psnr(&rendered.image, &warped.image, &warped.missing.known())?);
    }
    let scored: Vec<f64> = per_pose.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::invalid("no test pose overlaps the reference view"));
    }
    let mean_psnr = scored.iter().sum::<f64>() / scored.len() as f64;
    Ok(EvalReport { per_pose, mean_psnr })
}
