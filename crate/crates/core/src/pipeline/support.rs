use crate::buffers::{ColorImage, DepthMap};
use crate::camera::{forward_warp, support_poses, CameraView, SplatOptions};
use crate::error::Result;
use crate::optim::TrainTarget;

/// A supervised view plus its depth-warped satellites.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportSet {
    pub center: TrainTarget,
    pub satellites: Vec<TrainTarget>,
}

impl SupportSet {
    /// Center first, then satellites in pose order.
    pub fn targets(&self) -> Vec<TrainTarget> {
        std::iter::once(self.center.clone()).chain(self.satellites.iter().cloned()).collect()
    }
}

/// Warps `(image, depth)` to `count` poses at distance `shift` around
/// `view`; each satellite supervises exactly the pixels it received.
pub fn build_support_set(
    view: &CameraView,
    image: &ColorImage,
    depth: &DepthMap,
    count: usize,
    shift: f64,
    opts: SplatOptions,
) -> Result<SupportSet> {
    let center = TrainTarget::from_depth(*view, image.clone(), depth.clone())?;
    let satellites = support_poses(view, shift, count)
        .into_iter()
        .map(|sat| {
            let w = forward_warp(image, depth, view, &sat, opts)?;
            TrainTarget::from_depth(sat, w.image, w.depth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SupportSet { center, satellites })
}
