//! TOML run configuration.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::align::{AlignConfig, LocalConfig, MAX_PAIRS};
use crate::camera::{build_trajectory, CameraView, Intrinsics, TrajectoryPattern};
use crate::error::{Error, Result};
use crate::field::{Aabb, DEFAULT_OPACITY_FLOOR};
use crate::optim::{FitConfig, LossConfig, LossWeights, LrSchedule, TransmittanceForm};
use crate::pipeline::{GridConfig, PipelineConfig, ViewOrder};
use crate::provider::{DepthNoise, OracleProvider, OracleScene, RemoteConfig, RemoteProvider, SceneProvider};

/// Environment variable that, when set, switches the run to the remote
/// provider at the given URL.
pub const PROVIDER_URL_ENV: &str = "SCENE_SYNTH_PROVIDER_URL";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub prompt: String,
    #[serde(default)]
    pub seed: u64,
    /// Run directory; relative paths resolve against the config file.
    pub output_dir: String,
    #[serde(default)]
    pub camera: CameraSection,
    /// Trajectory spec, e.g. `orbit:8` or `lattice:yaw=30,pitch=15`.
    pub trajectory: String,
    #[serde(default)]
    pub support: SupportSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub update: UpdateSection,
    #[serde(default)]
    pub align: AlignSection,
    #[serde(default)]
    pub provider: ProviderSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSection {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub position: [f64; 3],
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            fov_deg: 90.0,
            position: [0.0; 3],
        }
    }
}

impl CameraSection {
    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::from_fov(self.fov_deg, self.width, self.height)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupportSection {
    pub count: usize,
    pub shift: f64,
    pub close_pinholes: bool,
}

impl Default for SupportSection {
    fn default() -> Self {
        Self {
            count: 8,
            shift: 0.2,
            close_pinholes: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub init_iterations: usize,
    pub update_iterations: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub depth_weight: f64,
    pub transmittance_weight: f64,
    pub transmittance_form: TransmittanceForm,
}

impl Default for TrainSection {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            init_iterations: fit.iterations,
            update_iterations: 800,
            batch_size: fit.batch_size,
            steps: fit.loss.steps,
            lr_initial: fit.lr.initial,
            lr_final: fit.lr.final_lr,
            depth_weight: fit.loss.weights.depth,
            transmittance_weight: fit.loss.weights.transmittance,
            transmittance_form: fit.loss.transmittance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub resolution: [usize; 3],
    pub density_scale: f64,
    pub initial_density: f64,
    pub initial_color: [f64; 3],
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridConfig::default();
        Self {
            bbox_min: g.bbox.min,
            bbox_max: g.bbox.max,
            resolution: g.resolution,
            density_scale: g.density_scale,
            initial_density: g.initial_density,
            initial_color: g.initial_color,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpdateSection {
    pub candidates: usize,
    pub min_mask_fraction: f64,
    pub opacity_floor: f64,
    pub order: ViewOrder,
}

impl Default for UpdateSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            candidates: p.candidates,
            min_mask_fraction: p.min_mask_fraction,
            opacity_floor: DEFAULT_OPACITY_FLOOR,
            order: p.order,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignSection {
    pub max_pairs: usize,
    pub lattice: usize,
    pub smoothness: f64,
}

impl Default for AlignSection {
    fn default() -> Self {
        let l = LocalConfig::default();
        Self {
            max_pairs: MAX_PAIRS,
            lattice: l.lattice,
            smoothness: l.smoothness,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSection {
    Oracle {
        #[serde(default)]
        scene: OracleScene,
        #[serde(default)]
        noise: DepthNoise,
    },
    Remote(RemoteConfig),
}

impl Default for ProviderSection {
    fn default() -> Self {
        ProviderSection::Oracle {
            scene: OracleScene::default(),
            noise: DepthNoise::default(),
        }
    }
}

impl ProviderSection {
    pub fn build(&self) -> Result<Box<dyn SceneProvider>> {
        Ok(match self {
            ProviderSection::Oracle { scene, noise } => Box::new(
                OracleProvider::new(scene.clone(), *noise).map_err(|e| Error::Config(e.to_string()))?,
            ),
            ProviderSection::Remote(cfg) => Box::new(RemoteProvider::new(cfg.clone())?),
        })
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Switches to the remote provider at `url`, keeping any remote
    /// timeouts already configured.
    pub fn with_remote_url(mut self, url: &str) -> Result<Self> {
        self.provider = match self.provider {
            ProviderSection::Remote(mut r) => {
                r.url = url.to_string();
                ProviderSection::Remote(r)
            }
            ProviderSection::Oracle { .. } => ProviderSection::Remote(RemoteConfig::new(url)),
        };
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.trajectory_pattern()?;
        self.camera.intrinsics().map_err(cfg)?;
        self.pipeline()?.validate()?;
        if self.train.init_iterations == 0 {
            return Err(Error::Config("initialization needs at least one iteration".into()));
        }
        if self.align.max_pairs == 0 {
            return Err(Error::Config("alignment needs at least one point pair".into()));
        }
        if let ProviderSection::Remote(r) = &self.provider {
            r.validate()?;
        }
        if let ProviderSection::Oracle { scene, .. } = &self.provider {
            scene.validate().map_err(cfg)?;
        }
        Ok(())
    }

    pub fn trajectory_pattern(&self) -> Result<TrajectoryPattern> {
        self.trajectory.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn trajectory(&self) -> Result<Vec<CameraView>> {
        build_trajectory(
            &self.trajectory_pattern()?,
            &self.camera.intrinsics()?,
            Vector3::from(self.camera.position),
        )
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let t = &self.train;
        let g = &self.grid;
        Ok(PipelineConfig {
            prompt: self.prompt.clone(),
            grid: GridConfig {
                bbox: Aabb::new(g.bbox_min, g.bbox_max).map_err(|e| Error::Config(e.to_string()))?,
                resolution: g.resolution,
                density_scale: g.density_scale,
                initial_density: g.initial_density,
                initial_color: g.initial_color,
            },
            support_count: self.support.count,
            support_shift: self.support.shift,
            close_pinholes: self.support.close_pinholes,
            fit: FitConfig {
                iterations: t.init_iterations,
                batch_size: t.batch_size,
                loss: LossConfig {
                    weights: LossWeights {
                        depth: t.depth_weight,
                        transmittance: t.transmittance_weight,
                    },
                    transmittance: t.transmittance_form,
                    steps: t.steps,
                },
                lr: LrSchedule {
                    initial: t.lr_initial,
                    final_lr: t.lr_final,
                },
                seed: self.seed,
            },
            update_iterations: t.update_iterations,
            candidates: self.update.candidates,
            min_mask_fraction: self.update.min_mask_fraction,
            align: AlignConfig {
                max_pairs: self.align.max_pairs,
                local: LocalConfig {
                    lattice: self.align.lattice,
                    smoothness: self.align.smoothness,
                },
            },
            opacity_floor: self.update.opacity_floor,
            order: self.update.order,
            seed: self.seed,
        })
    }

    pub fn provider(&self) -> Result<Box<dyn SceneProvider>> {
        self.provider.build()
    }
}
