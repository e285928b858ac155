use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffers::{check_dims, ColorImage, DepthMap, Rgb};
use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::field::{backprop_ray, trace_ray, Gradient, RadianceGrid, Ray, RayAdjoint, RayTape};
use crate::rng::{stream_rng, Stream};

use super::adam::{Adam, LrSchedule};
use super::loss::{transmittance_pixel, LossWeights, TransmittanceForm};

/// One supervised view: color and aligned depth on the pixels in `supervised`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainTarget {
    pub view: CameraView,
    pub image: ColorImage,
    pub depth: DepthMap,
    pub supervised: Vec<bool>,
}

impl TrainTarget {
    pub fn new(view: CameraView, image: ColorImage, depth: DepthMap, supervised: Vec<bool>) -> Result<Self> {
        check_dims(view.dims(), image.dims())?;
        check_dims(view.dims(), depth.dims())?;
        if supervised.len() != depth.len() {
            return Err(Error::shape(depth.len(), supervised.len()));
        }
        if supervised.iter().zip(depth.valid_mask()).any(|(&s, &v)| s && !v) {
            return Err(Error::invalid("supervised pixel without valid depth"));
        }
        Ok(Self {
            view,
            image,
            depth,
            supervised,
        })
    }

    /// Supervises every pixel with valid depth.
    pub fn from_depth(view: CameraView, image: ColorImage, depth: DepthMap) -> Result<Self> {
        let supervised = depth.valid_mask().to_vec();
        Self::new(view, image, depth, supervised)
    }

    pub fn supervised_count(&self) -> usize {
        self.supervised.iter().filter(|&&s| s).count()
    }

    pub fn ray(&self, pixel: usize) -> SupervisedRay {
        let w = self.view.width();
        SupervisedRay {
            ray: self.view.pixel_ray(pixel % w, pixel / w),
            color: self.image.pixels()[pixel],
            z_depth: self.depth.values()[pixel],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupervisedRay {
    pub ray: Ray,
    pub color: Rgb,
    pub z_depth: f64,
}

/// Loss settings shared by evaluation and training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub weights: LossWeights,
    #[serde(default)]
    pub transmittance: TransmittanceForm,
    /// Samples per ray.
    pub steps: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            transmittance: TransmittanceForm::default(),
            steps: 192,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rgb: f64,
    pub depth: f64,
    pub transmittance: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.rgb.is_finite() && self.depth.is_finite() && self.transmittance.is_finite() && self.total.is_finite()
    }
}

/// Weighted objective over a ray batch, accumulating its gradient into `grad`.
pub(crate) fn accumulate_batch(
    grid: &RadianceGrid,
    rays: &[SupervisedRay],
    cfg: &LossConfig,
    grad: &mut Gradient,
    tape: &mut RayTape,
) -> Result<LossBreakdown> {
    if cfg.steps < 2 {
        return Err(Error::invalid("at least two samples per ray"));
    }
    let mut out = LossBreakdown::default();
    if rays.is_empty() {
        return Ok(out);
    }
    let n = rays.len() as f64;
    let w = cfg.weights;
    let mut trace_adj = Vec::with_capacity(cfg.steps);
    for sr in rays {
        trace_ray(grid, &sr.ray, cfg.steps, tape);
        let mut color_adj = [0.0; 3];
        for ch in 0..3 {
            let d = tape.rgb[ch] - sr.color[ch];
            out.rgb += d * d;
            color_adj[ch] = 2.0 * d / (3.0 * n);
        }
        let dz = tape.z_depth() - sr.z_depth;
        out.depth += dz * dz;
        let z_adj = if w.depth != 0.0 { w.depth * 2.0 * dz / n } else { 0.0 };
        trace_adj.resize(tape.steps(), 0.0);
        let z_hat = sr.z_depth / tape.z_per_t();
        out.transmittance += transmittance_pixel(tape.trace(), |i| tape.sample_t(i), z_hat, cfg.transmittance, &mut trace_adj);
        let trace = if w.transmittance != 0.0 {
            let k = w.transmittance / n;
            trace_adj.iter_mut().for_each(|a| *a *= k);
            Some(trace_adj.as_slice())
        } else {
            None
        };
        let adj = RayAdjoint {
            color: color_adj,
            z_depth: z_adj,
            trace,
        };
        backprop_ray(grid, tape, &adj, grad);
    }
    out.rgb /= 3.0 * n;
    out.depth /= n;
    out.transmittance /= n;
    out.total = out.rgb + w.depth * out.depth + w.transmittance * out.transmittance;
    Ok(out)
}

/// `L_rgb + w_d L_depth + w_t L_T` over `rays` and its parameter gradient.
pub fn total_loss(grid: &RadianceGrid, rays: &[SupervisedRay], cfg: &LossConfig) -> Result<(LossBreakdown, Gradient)> {
    cfg.weights.validate()?;
    let mut grad = Gradient::zeros_like(grid);
    let loss = accumulate_batch(grid, rays, cfg, &mut grad, &mut RayTape::new())?;
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub loss: LossConfig,
    pub lr: LrSchedule,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            batch_size: 4096,
            loss: LossConfig::default(),
            lr: LrSchedule::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub history: Vec<IterationRecord>,
}

impl FitReport {
    pub fn final_loss(&self) -> Option<LossBreakdown> {
        self.history.last().map(|r| r.loss)
    }
}

/// Adaptive-moment descent on `grid` with ray batches drawn uniformly from
/// all supervised pixels of all targets. Deterministic for a fixed seed.
pub fn fit(grid: &mut RadianceGrid, targets: &[TrainTarget], cfg: &FitConfig) -> Result<FitReport> {
    if targets.is_empty() {
        return Err(Error::invalid("fit needs at least one target"));
    }
    cfg.loss.weights.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut report = FitReport::default();
    if cfg.iterations == 0 {
        return Ok(report);
    }
    let pool: Vec<(u32, u32)> = targets
        .iter()
        .enumerate()
        .flat_map(|(t, target)| {
            target
                .supervised
                .iter()
                .enumerate()
                .filter(|(_, &s)| s)
                .map(move |(p, _)| (t as u32, p as u32))
        })
        .collect();
    if pool.is_empty() {
        return Err(Error::invalid("targets have no supervised pixels"));
    }
    let mut rng = stream_rng(cfg.seed, Stream::RayBatching, 0);
    let mut adam = Adam::new(grid);
    let mut grad = Gradient::zeros_like(grid);
    let mut tape = RayTape::new();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for it in 0..cfg.iterations {
        batch.clear();
        for _ in 0..cfg.batch_size {
            let (t, p) = pool[rng.random_range(0..pool.len())];
            batch.push(targets[t as usize].ray(p as usize));
        }
        grad.clear();
        let loss = accumulate_batch(grid, &batch, &cfg.loss, &mut grad, &mut tape)?;
        if !loss.is_finite() {
            return Err(Error::NumericAbort {
                iteration: it,
                detail: format!(
                    "rgb={} depth={} transmittance={} total={}",
                    loss.rgb, loss.depth, loss.transmittance, loss.total
                ),
            });
        }
        let lr = cfg.lr.at(it, cfg.iterations);
        if !adam.step(grid, &grad, lr) {
            return Err(Error::NumericAbort {
                iteration: it,
                detail: format!("parameters overflowed at learning rate {lr}"),
            });
        }
        report.history.push(IterationRecord {
            iteration: it,
            lr,
            loss,
        });
    }
    Ok(report)
}
