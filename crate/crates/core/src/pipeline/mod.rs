//! Scene initialization from one generated view and the view-by-view
//! inpainting and updating loop.

mod evaluate;
mod support;

use serde::{Deserialize, Serialize};

use crate::align::{align_depth, AlignConfig, GlobalAlignment};
use crate::buffers::{ColorImage, DepthMap, RegionMask};
use crate::camera::{angular_distance, missing_mask, CameraView, SplatOptions};
use crate::error::{Error, Result};
use crate::field::{render_view, Aabb, RadianceGrid, DEFAULT_OPACITY_FLOOR};
use crate::io::grid_hash;
use crate::optim::{fit, FitConfig, IterationRecord, LossBreakdown};
use crate::provider::{self, InpaintRequest, SceneProvider, DEFAULT_CANDIDATES};
use crate::rng::{derive_seed, stream_rng, Stream};

pub use evaluate::{init_sweep, oracle_report, OracleReport, SweepParam, SweepRow, ViewScore};
pub use support::{build_support_set, SupportSet};

/// Starting field: uniform faint gray fog inside `bbox`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub bbox: Aabb,
    /// Nodes per axis.
    pub resolution: [usize; 3],
    /// Density is `density_scale * softplus(raw)`.
    pub density_scale: f64,
    pub initial_density: f64,
    pub initial_color: [f64; 3],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            bbox: Aabb {
                min: [-2.25, -1.75, -2.25],
                max: [2.25, 1.75, 2.25],
            },
            resolution: [128, 128, 128],
            density_scale: 25.0,
            initial_density: 1.0,
            initial_color: [0.5; 3],
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<RadianceGrid> {
        RadianceGrid::uniform(
            self.bbox,
            self.resolution,
            self.density_scale,
            self.initial_density,
            self.initial_color,
        )
    }
}

/// Order in which pending views are visited.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewOrder {
    /// Increasing viewing-angle distance from the first view, ties in
    /// trajectory order.
    #[default]
    NearestFirst,
    AsGiven,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub prompt: String,
    pub grid: GridConfig,
    /// Satellites per support set.
    pub support_count: usize,
    /// Satellite distance from the center camera, world units.
    pub support_shift: f64,
    pub close_pinholes: bool,
    /// Iterations, batch, loss and schedule of the first fit; the seed is
    /// replaced per fit.
    pub fit: FitConfig,
    pub update_iterations: usize,
    pub candidates: usize,
    /// Masks covering less than this fraction of the view skip inpainting.
    pub min_mask_fraction: f64,
    pub align: AlignConfig,
    pub opacity_floor: f64,
    pub order: ViewOrder,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prompt: String::new(),
            grid: GridConfig::default(),
            support_count: 8,
            support_shift: 0.2,
            close_pinholes: false,
            fit: FitConfig::default(),
            update_iterations: 800,
            candidates: DEFAULT_CANDIDATES,
            min_mask_fraction: 0.002,
            align: AlignConfig::default(),
            opacity_floor: DEFAULT_OPACITY_FLOOR,
            order: ViewOrder::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.support_shift >= 0.0 && self.support_shift.is_finite()) {
            return bad("support shift must be finite and non-negative");
        }
        if self.candidates == 0 {
            return bad("at least one inpainting candidate is required");
        }
        if !(0.0..=1.0).contains(&self.min_mask_fraction) {
            return bad("minimum mask fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.opacity_floor) {
            return bad("opacity floor must lie in [0, 1]");
        }
        if self.fit.batch_size == 0 || self.fit.loss.steps < 2 {
            return bad("batch size must be positive and rays need at least two samples");
        }
        self.fit.loss.weights.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.align.local.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.grid.build().map(|_| ()).map_err(|e| Error::Config(e.to_string()))
    }

    fn splat(&self) -> SplatOptions {
        SplatOptions {
            close_pinholes: self.close_pinholes,
        }
    }

    fn fit_for(&self, view_id: usize, iterations: usize) -> FitConfig {
        FitConfig {
            iterations,
            seed: derive_seed(self.seed, Stream::RayBatching, view_id as u64),
            ..self.fit
        }
    }
}

/// A view whose content is fixed: its image and the aligned depth that
/// supervised the field.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdatedView {
    pub view: CameraView,
    pub image: ColorImage,
    pub depth: DepthMap,
}

/// How a view was processed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Initial,
    /// Fully covered by earlier views; nothing trained.
    Covered,
    /// Mask below the threshold; the render stands in for inpainting.
    SmallMask,
    Inpainted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub view_id: usize,
    pub kind: UpdateKind,
    pub mask_pixels: usize,
    pub selected_candidate: Option<usize>,
    pub global: Option<GlobalAlignment>,
    pub overlap_rmse: Option<[Option<f64>; 3]>,
    pub alignment_fallback: Option<String>,
    pub final_loss: Option<LossBreakdown>,
    pub grid_hash: String,
}

/// Intermediate products of one update, for inspection and logging.
#[derive(Clone, Debug, Default)]
pub struct UpdateArtifacts {
    pub rendered: Option<ColorImage>,
    pub rendered_depth: Option<DepthMap>,
    pub mask: Option<RegionMask>,
    pub selected: Option<ColorImage>,
    pub estimated_depth: Option<DepthMap>,
    pub aligned_depth: Option<DepthMap>,
    pub history: Vec<IterationRecord>,
}

/// Receives every completed update; an error stops the run after the
/// state has advanced.
pub trait Observer {
    fn on_update(&mut self, state: &PipelineState, record: &UpdateRecord, artifacts: &UpdateArtifacts) -> Result<()>;
}

impl Observer for () {
    fn on_update(&mut self, _: &PipelineState, _: &UpdateRecord, _: &UpdateArtifacts) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PipelineState {
    pub config: PipelineConfig,
    /// All views, `trajectory[i].id == i`.
    pub trajectory: Vec<CameraView>,
    /// Views already updated, in update order.
    pub updated: Vec<UpdatedView>,
    /// Views still to update, in visitation order.
    pub pending: Vec<usize>,
    pub grid: RadianceGrid,
    pub history: Vec<UpdateRecord>,
}

impl PipelineState {
    pub fn initial_image(&self) -> &ColorImage {
        &self.updated[0].image
    }

    pub fn is_complete(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn grid_hash(&self) -> String {
        grid_hash(&self.grid)
    }

    pub fn known_views(&self) -> Vec<(CameraView, &DepthMap)> {
        self.updated.iter().map(|u| (u.view, &u.depth)).collect()
    }

    /// Pixels of `view` that no updated view covers.
    pub fn missing_mask(&self, view: &CameraView) -> Result<RegionMask> {
        missing_mask(view, &self.known_views(), self.config.splat())
    }

    /// Checks that updated and pending views partition the trajectory.
    pub fn check_partition(&self) -> Result<()> {
        let mut seen = vec![0u8; self.trajectory.len()];
        for id in self.updated.iter().map(|u| u.view.id).chain(self.pending.iter().copied()) {
            match seen.get_mut(id) {
                Some(s) => *s += 1,
                None => return Err(Error::invalid(format!("view {id} is not in the trajectory"))),
            }
        }
        if seen.iter().all(|&s| s == 1) {
            Ok(())
        } else {
            Err(Error::invalid("updated and pending views do not partition the trajectory"))
        }
    }
}

/// Visitation order of every view but the first.
pub fn visit_order(trajectory: &[CameraView], order: ViewOrder) -> Vec<usize> {
    let mut rest: Vec<usize> = (1..trajectory.len()).collect();
    if order == ViewOrder::NearestFirst {
        let p0 = &trajectory[0].pose;
        let dist: Vec<f64> = trajectory.iter().map(|v| angular_distance(p0, &v.pose)).collect();
        rest.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    }
    rest
}

fn check_trajectory(trajectory: &[CameraView]) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::invalid("trajectory is empty"));
    }
    let dims = trajectory[0].dims();
    for (i, v) in trajectory.iter().enumerate() {
        if v.id != i {
            return Err(Error::invalid(format!("trajectory view {i} has id {}", v.id)));
        }
        if v.dims() != dims {
            return Err(Error::invalid("trajectory views differ in resolution"));
        }
    }
    Ok(())
}

/// Generates the first view, estimates its depth, and fits a fresh field to
/// it and its support set.
pub fn initialize(
    p: &dyn SceneProvider,
    trajectory: Vec<CameraView>,
    config: PipelineConfig,
    observer: &mut dyn Observer,
) -> Result<PipelineState> {
    config.validate()?;
    check_trajectory(&trajectory)?;
    let v0 = trajectory[0];
    let image = provider::generate_initial(p, &config.prompt, &v0, derive_seed(config.seed, Stream::Provider, 0))?;
    let depth = provider::estimate_depth(p, &image, &v0)?;
    let support = build_support_set(
        &v0,
        &image,
        &depth,
        config.support_count,
        config.support_shift,
        config.splat(),
    )?;
    let mut grid = config.grid.build()?;
    let report = fit(&mut grid, &support.targets(), &config.fit_for(0, config.fit.iterations))?;
    let pending = visit_order(&trajectory, config.order);
    let record = UpdateRecord {
        view_id: 0,
        kind: UpdateKind::Initial,
        mask_pixels: v0.intrinsics.pixel_count(),
        selected_candidate: None,
        global: None,
        overlap_rmse: None,
        alignment_fallback: None,
        final_loss: report.final_loss(),
        grid_hash: grid_hash(&grid),
    };
    let artifacts = UpdateArtifacts {
        selected: Some(image.clone()),
        estimated_depth: Some(depth.clone()),
        aligned_depth: Some(depth.clone()),
        history: report.history,
        ..Default::default()
    };
    let state = PipelineState {
        config,
        trajectory,
        updated: vec![UpdatedView { view: v0, image, depth }],
        pending,
        grid,
        history: vec![record],
    };
    observer.on_update(&state, &state.history[0], &artifacts)?;
    Ok(state)
}

/// Updates the next pending view. Returns `false` when nothing is pending.
pub fn update_next(state: &mut PipelineState, p: &dyn SceneProvider, observer: &mut dyn Observer) -> Result<bool> {
    match state.pending.first() {
        Some(&k) => {
            update_view(state, k, p, observer)?;
            Ok(true)
        }
        None => Ok(false),
    }
}

/// Renders view `k`, inpaints what no updated view covers, aligns the new
/// depth to the rendered one, and retrains on the new support set. The
/// state is only modified once every provider call has succeeded.
pub fn update_view(
    state: &mut PipelineState,
    k: usize,
    p: &dyn SceneProvider,
    observer: &mut dyn Observer,
) -> Result<()> {
    let pos = state
        .pending
        .iter()
        .position(|&v| v == k)
        .ok_or_else(|| Error::invalid(format!("view {k} is not pending")))?;
    let cfg = state.config.clone();
    let view = state.trajectory[k];
    let rendered = render_view(&state.grid, &view, cfg.fit.loss.steps, cfg.opacity_floor)?;
    let image_r = rendered.image.quantized();
    let mask = state.missing_mask(&view)?;
    let mut artifacts = UpdateArtifacts {
        rendered: Some(image_r.clone()),
        rendered_depth: Some(rendered.depth.clone()),
        mask: Some(mask.clone()),
        ..Default::default()
    };
    let mut record = UpdateRecord {
        view_id: k,
        kind: UpdateKind::Covered,
        mask_pixels: mask.count(),
        selected_candidate: None,
        global: None,
        overlap_rmse: None,
        alignment_fallback: None,
        final_loss: None,
        grid_hash: String::new(),
    };

    let entry = if mask.is_empty() {
        UpdatedView {
            view,
            image: image_r,
            depth: rendered.depth.quantized(),
        }
    } else {
        let image = if mask.fraction() < cfg.min_mask_fraction {
            record.kind = UpdateKind::SmallMask;
            image_r
        } else {
            record.kind = UpdateKind::Inpainted;
            let req = InpaintRequest {
                prompt: cfg.prompt.clone(),
                image: image_r,
                mask: mask.clone(),
                candidates: cfg.candidates,
                seed: derive_seed(cfg.seed, Stream::Provider, k as u64),
            };
            let set = provider::inpaint(p, &req, &view)?;
            let idx = provider::select_candidate(p, &set, state.initial_image())?;
            record.selected_candidate = Some(idx);
            set.candidates.into_iter().nth(idx).expect("selected index in range")
        };
        let estimated = provider::estimate_depth(p, &image, &view)?;
        let mut rng = stream_rng(cfg.seed, Stream::PairSampling, k as u64);
        let aligned = align_depth(&rendered.depth, &estimated, &view.intrinsics, &cfg.align, &mut rng)?;
        record.global = Some(aligned.global);
        record.overlap_rmse = Some([aligned.rmse_raw, aligned.rmse_global, aligned.rmse_local]);
        record.alignment_fallback = aligned.fallback.clone();
        let depth = aligned.depth.quantized();
        let support = build_support_set(&view, &image, &depth, cfg.support_count, cfg.support_shift, cfg.splat())?;
        // Train a copy so a numeric abort leaves the state untouched.
        let mut grid = state.grid.clone();
        let report = fit(&mut grid, &support.targets(), &cfg.fit_for(k, cfg.update_iterations))?;
        state.grid = grid;
        record.final_loss = report.final_loss();
        artifacts.selected = Some(image.clone());
        artifacts.estimated_depth = Some(estimated);
        artifacts.aligned_depth = Some(depth.clone());
        artifacts.history = report.history;
        UpdatedView { view, image, depth }
    };

    state.pending.remove(pos);
    state.updated.push(entry);
    record.grid_hash = grid_hash(&state.grid);
    state.history.push(record);
    let record = state.history.last().expect("just pushed").clone();
    observer.on_update(state, &record, &artifacts)
}

/// Updates every pending view in order.
pub fn resume(state: &mut PipelineState, p: &dyn SceneProvider, observer: &mut dyn Observer) -> Result<()> {
    while update_next(state, p, observer)? {}
    Ok(())
}

/// Initializes on the first trajectory view and updates the rest.
pub fn run(
    p: &dyn SceneProvider,
    trajectory: Vec<CameraView>,
    config: PipelineConfig,
    observer: &mut dyn Observer,
) -> Result<PipelineState> {
    let mut state = initialize(p, trajectory, config, observer)?;
    resume(&mut state, p, observer)?;
    Ok(state)
}
