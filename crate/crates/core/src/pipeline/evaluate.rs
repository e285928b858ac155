use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::field::{render_view, RadianceGrid};
use crate::io::grid_hash;
use crate::optim::{eval_initialization, psnr, EvalConfig};
use crate::provider::{OracleScene, SceneProvider};

use super::{initialize, PipelineConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Satellites per support set.
    SupportCount,
    /// Satellite distance.
    SupportShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub mean_psnr: f64,
    pub scored_poses: usize,
}

/// Fits a fresh field on `view` for every value of `param` and scores each
/// with the initialization protocol against the oracle's ground truth.
pub fn init_sweep(
    p: &dyn SceneProvider,
    scene: &OracleScene,
    view: &CameraView,
    base: &PipelineConfig,
    eval: &EvalConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    let (image, depth) = scene.render(view);
    let image = image.quantized();
    let view = CameraView::new(view.intrinsics, view.pose, 0);
    values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match param {
                SweepParam::SupportCount => {
                    if value < 0.0 || value.fract() != 0.0 {
                        return Err(Error::invalid(format!("support count {value} is not a count")));
                    }
                    cfg.support_count = value as usize;
                }
                SweepParam::SupportShift => cfg.support_shift = value,
            }
            let state = initialize(p, vec![view], cfg, &mut ())?;
            let r = eval_initialization(&state.grid, &view, &image, &depth, eval)?;
            Ok(SweepRow {
                param,
                value,
                mean_psnr: r.mean_psnr,
                scored_poses: r.per_pose.iter().flatten().count(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub view_id: usize,
    /// Over every pixel the oracle sees a surface in.
    pub psnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub grid_hash: String,
    pub test_poses: usize,
    /// Initialization protocol around the first view.
    pub mean_psnr: f64,
    pub per_pose: Vec<Option<f64>>,
    pub views: Vec<ViewScore>,
    pub sweeps: Vec<SweepRow>,
}

/// Scores `grid` against the oracle: the test-pose protocol around the
/// first trajectory view and a render-vs-truth PSNR for every view.
pub fn oracle_report(
    grid: &RadianceGrid,
    scene: &OracleScene,
    trajectory: &[CameraView],
    eval: &EvalConfig,
    opacity_floor: f64,
) -> Result<OracleReport> {
    let first = trajectory.first().ok_or_else(|| Error::invalid("trajectory is empty"))?;
    let (image, depth) = scene.render(first);
    let r = eval_initialization(grid, first, &image.quantized(), &depth, eval)?;
    let views = trajectory
        .iter()
        .map(|v| {
            let (truth, truth_depth) = scene.render(v);
            let rendered = render_view(grid, v, eval.steps, opacity_floor)?;
            Ok(ViewScore {
                view_id: v.id,
                psnr: psnr(&rendered.image, &truth.quantized(), truth_depth.valid_mask())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleReport {
        grid_hash: grid_hash(grid),
        test_poses: eval.poses,
        mean_psnr: r.mean_psnr,
        per_pose: r.per_pose,
        views,
        sweeps: Vec::new(),
    })
}
