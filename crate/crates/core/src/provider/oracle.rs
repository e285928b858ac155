//! A procedural room standing in for the generative models, so that every
//! image and depth map the pipeline consumes has a known ground truth.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::align::{distort_depth, Distortion};
use crate::buffers::{ColorImage, DepthMap, Rgb};
use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::field::Aabb;
use crate::rng::{derive_seed, stream_rng, Stream};

use super::{EmbeddingVector, InpaintRequest, SceneProvider};

/// A solid box inside the room, shaded per face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crate {
    pub bounds: Aabb,
    pub color: Rgb,
}

/// Checkered axis-aligned room seen from inside, with crates standing in it.
///
/// Walls are ordered `-x, +x, -y, +y, -z, +z`; with y pointing down, `+y`
/// is the floor. Every checker cell's brightness is jittered by a hash of
/// the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleScene {
    pub room: Aabb,
    /// Checker cell edge length in world units.
    pub checker: f64,
    /// Relative brightness difference between neighboring cells.
    pub contrast: f64,
    /// Largest relative brightness jitter per cell.
    pub jitter: f64,
    pub walls: [Rgb; 6],
    pub crates: Vec<Crate>,
    pub seed: u64,
}

impl Default for OracleScene {
    fn default() -> Self {
        Self {
            room: Aabb {
                min: [-2.0, -1.5, -2.0],
                max: [2.0, 1.5, 2.0],
            },
            checker: 0.5,
            contrast: 0.25,
            jitter: 0.06,
            walls: [
                [0.75, 0.45, 0.35],
                [0.35, 0.55, 0.75],
                [0.85, 0.85, 0.8],
                [0.55, 0.45, 0.3],
                [0.45, 0.7, 0.45],
                [0.7, 0.5, 0.7],
            ],
            crates: vec![
                Crate {
                    bounds: Aabb {
                        min: [0.5, 0.8, 0.9],
                        max: [1.1, 1.5, 1.5],
                    },
                    color: [0.85, 0.65, 0.25],
                },
                Crate {
                    bounds: Aabb {
                        min: [-1.4, 0.7, -1.3],
                        max: [-0.7, 1.5, -0.6],
                    },
                    color: [0.3, 0.6, 0.6],
                },
            ],
            seed: 0,
        }
    }
}

/// First surface along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub color: Rgb,
}

impl OracleScene {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        if !(self.checker > 0.0 && self.checker.is_finite()) {
            return Err(Error::invalid("checker size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.contrast) || !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::invalid("contrast and jitter must lie in [0, 1]"));
        }
        let colors = self.walls.iter().chain(self.crates.iter().map(|c| &c.color));
        if colors.flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("scene colors must lie in [0, 1]"));
        }
        for c in &self.crates {
            c.bounds.validate()?;
        }
        Ok(())
    }

    /// Nearest hit for a ray starting inside the room and outside every crate.
    pub fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<RayHit> {
        let mut best_t = f64::INFINITY;
        let mut best_face = None;
        for axis in 0..3 {
            let d = dir[axis];
            if d == 0.0 {
                continue;
            }
            let (bound, face) = if d > 0.0 {
                (self.room.max[axis], 2 * axis + 1)
            } else {
                (self.room.min[axis], 2 * axis)
            };
            let t = (bound - origin[axis]) / d;
            if t > 0.0 && t < best_t {
                best_t = t;
                best_face = Some(face);
            }
        }
        let face = best_face?;
        let mut hit = RayHit {
            t: best_t,
            color: self.wall_color(face, &(origin + best_t * dir)),
        };
        for c in &self.crates {
            if let Some((t, axis)) = entry(&c.bounds, origin, dir) {
                if t > 0.0 && t < hit.t {
                    let shade = [0.85, 1.0, 0.7][axis];
                    hit = RayHit {
                        t,
                        color: c.color.map(|v| v * shade),
                    };
                }
            }
        }
        Some(hit)
    }

    fn wall_color(&self, face: usize, p: &Vector3<f64>) -> Rgb {
        let axis = face / 2;
        let (u, v) = match axis {
            0 => (p.y, p.z),
            1 => (p.x, p.z),
            _ => (p.x, p.y),
        };
        let (iu, iv) = ((u / self.checker).floor() as i64, (v / self.checker).floor() as i64);
        let parity = if (iu + iv).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let h = derive_seed(self.seed ^ face as u64, Stream::Provider, ((iu as u64) << 32) ^ (iv as u64 & 0xffff_ffff));
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        let gain = 1.0 + 0.5 * parity * self.contrast + self.jitter * (2.0 * unit - 1.0);
        self.walls[face].map(|c| (c * gain).clamp(0.0, 1.0))
    }

    /// Ground-truth color and z-depth through every pixel center of `view`.
    pub fn render(&self, view: &CameraView) -> (ColorImage, DepthMap) {
        let (w, h) = view.dims();
        let mut img = ColorImage::filled(w, h, [0.0; 3]);
        let mut depth = DepthMap::invalid(w, h);
        for y in 0..h {
            for x in 0..w {
                let ray = view.pixel_ray(x, y);
                if let Some(hit) = self.trace(&ray.origin, &ray.dir) {
                    img.set(x, y, hit.color);
                    depth.set(x, y, hit.t * ray.z_per_t);
                }
            }
        }
        (img, depth)
    }
}

/// Entry distance into `b` and the axis of the entered face, for a ray
/// starting outside it.
fn entry(b: &Aabb, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, usize)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut axis = 0;
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a] < b.min[a] || o[a] > b.max[a] {
                return None;
            }
            continue;
        }
        let (mut lo, mut hi) = ((b.min[a] - o[a]) / d[a], (b.max[a] - o[a]) / d[a]);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        if lo > t0 {
            t0 = lo;
            axis = a;
        }
        t1 = t1.min(hi);
    }
    (t0 <= t1 && t0 > 0.0).then_some((t0, axis))
}

/// How the oracle corrupts the depth it reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthNoise {
    #[default]
    Off,
    Fixed { tau1: f64, tau2: f64 },
    /// Parameters drawn per view from the scene seed.
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleProvider {
    pub scene: OracleScene,
    pub noise: DepthNoise,
}

impl OracleProvider {
    pub fn new(scene: OracleScene, noise: DepthNoise) -> Result<Self> {
        scene.validate()?;
        if let DepthNoise::Fixed { tau1, tau2 } = noise {
            Distortion { tau1, tau2 }.validate()?;
        }
        Ok(Self { scene, noise })
    }

    pub fn distortion_for(&self, view: &CameraView) -> Option<Distortion> {
        match self.noise {
            DepthNoise::Off => None,
            DepthNoise::Fixed { tau1, tau2 } => Some(Distortion { tau1, tau2 }),
            DepthNoise::Sampled => Some(Distortion::sample(&mut stream_rng(
                self.scene.seed,
                Stream::Provider,
                view.id as u64,
            ))),
        }
    }
}

impl SceneProvider for OracleProvider {
    fn name(&self) -> &str {
        "oracle"
    }

    fn generate(&self, prompt: &str, view: &CameraView, _seed: u64) -> Result<ColorImage> {
        log::info!("oracle ignores prompt {prompt:?}");
        Ok(self.scene.render(view).0)
    }

    fn inpaint(&self, req: &InpaintRequest, view: &CameraView) -> Result<Vec<ColorImage>> {
        let truth = self.scene.render(view).0;
        Ok(vec![truth; req.candidates])
    }

    fn estimate_depth(&self, _image: &ColorImage, view: &CameraView) -> Result<DepthMap> {
        let depth = self.scene.render(view).1;
        match self.distortion_for(view) {
            Some(d) => distort_depth(&depth, d),
            None => Ok(depth),
        }
    }

    fn embed(&self, image: &ColorImage) -> Result<EmbeddingVector> {
        Ok(proxy_embedding(image))
    }
}

const GRID: usize = 8;
const BINS: usize = 8;

/// Mean-free 8x8 block luminance followed by 8-bin channel histograms, each
/// part scaled to norm `1/sqrt(2)`.
pub(crate) fn proxy_embedding(image: &ColorImage) -> EmbeddingVector {
    let (w, h) = image.dims();
    let mut lum = vec![0.0; GRID * GRID];
    let mut count = vec![0usize; GRID * GRID];
    let mut hist = vec![0.0; 3 * BINS];
    for y in 0..h {
        for x in 0..w {
            let c = image.get(x, y);
            let cell = (y * GRID / h) * GRID + x * GRID / w;
            lum[cell] += 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
            count[cell] += 1;
            for ch in 0..3 {
                let b = ((c[ch].clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1);
                hist[ch * BINS + b] += 1.0;
            }
        }
    }
    for (l, &n) in lum.iter_mut().zip(&count) {
        if n > 0 {
            *l /= n as f64;
        }
    }
    let mean = lum.iter().sum::<f64>() / lum.len() as f64;
    lum.iter_mut().for_each(|l| *l -= mean);
    let scale = |v: &mut Vec<f64>| {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|a| *a /= n * std::f64::consts::SQRT_2);
        }
    };
    scale(&mut lum);
    scale(&mut hist);
    lum.extend(hist);
    EmbeddingVector(lum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Intrinsics, Pose};

    fn view() -> CameraView {
        CameraView::new(Intrinsics::default_for(32, 24).unwrap(), Pose::identity(), 0)
    }

    #[test]
    fn renders_are_deterministic_and_bounded() {
        let s = OracleScene::default();
        let (a, da) = s.render(&view());
        let (b, db) = s.render(&view());
        assert_eq!(a, b);
        assert_eq!(da, db);
        assert_eq!(da.valid_count(), 32 * 24);
        assert!(a.pixels().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn seed_changes_texture() {
        let s = OracleScene::default();
        let t = OracleScene { seed: 9, ..s.clone() };
        assert_ne!(s.render(&view()).0, t.render(&view()).0);
        assert_eq!(s.render(&view()).1, t.render(&view()).1);
    }

    #[test]
    fn crate_occludes_wall() {
        let s = OracleScene::default();
        let o = Vector3::zeros();
        let target = Vector3::new(0.8, 1.2, 1.2);
        let hit = s.trace(&o, &target.normalize()).unwrap();
        assert!(hit.t < target.norm());
    }

    #[test]
    fn embedding_separates_inverted_image() {
        let img = OracleScene::default().render(&view()).0;
        let e = proxy_embedding(&img);
        assert!((e.cosine(&e) - 1.0).abs() < 1e-12);
        assert!(e.cosine(&proxy_embedding(&img.inverted())) < 0.9);
    }
}
