//! Image generation, inpainting, depth estimation and image embedding.
//!
//! Implementations answer the raw requests; the free functions here enforce
//! the contract every caller relies on (resolution, compositing outside the
//! mask, depth sanitization, 8-bit and single-precision quantization) no
//! matter which provider is behind them.

mod oracle;
mod remote;

use serde::{Deserialize, Serialize};

use crate::buffers::{check_dims, ColorImage, DepthMap, RegionMask};
use crate::camera::CameraView;
use crate::error::{Error, Result};

pub use oracle::{Crate, DepthNoise, OracleProvider, OracleScene, RayHit};
pub use remote::{wire, RemoteConfig, RemoteProvider};

/// Default number of inpainting candidates per request.
pub const DEFAULT_CANDIDATES: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct InpaintRequest {
    pub prompt: String,
    pub image: ColorImage,
    pub mask: RegionMask,
    pub candidates: usize,
    pub seed: u64,
}

/// Inpainting results, each equal to the request image outside its mask.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<ColorImage>,
    pub provider: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    /// Cosine similarity; 0 when either vector is zero.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na = self.0.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = other.0.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

/// Raw provider interface. `view` tells the provider where the camera is;
/// model-backed providers only use its resolution.
pub trait SceneProvider {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &str, view: &CameraView, seed: u64) -> Result<ColorImage>;
    fn inpaint(&self, req: &InpaintRequest, view: &CameraView) -> Result<Vec<ColorImage>>;
    fn estimate_depth(&self, image: &ColorImage, view: &CameraView) -> Result<DepthMap>;
    fn embed(&self, image: &ColorImage) -> Result<EmbeddingVector>;
}

fn violation(p: &dyn SceneProvider, message: impl Into<String>) -> Error {
    Error::Provider {
        provider: p.name().to_string(),
        message: message.into(),
    }
}

fn check_resolution(p: &dyn SceneProvider, expected: (usize, usize), got: (usize, usize), what: &str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(violation(
            p,
            format!("{what} is {}x{}, requested {}x{}", got.0, got.1, expected.0, expected.1),
        ))
    }
}

/// The initial image at the view's resolution, quantized to 8 bits.
pub fn generate_initial(p: &dyn SceneProvider, prompt: &str, view: &CameraView, seed: u64) -> Result<ColorImage> {
    let img = p.generate(prompt, view, seed)?;
    check_resolution(p, view.dims(), img.dims(), "generated image")?;
    Ok(img.quantized())
}

/// Inpaints `req.mask`. Empty masks are rejected before dispatch; every
/// returned candidate is quantized and composited so that it equals
/// `req.image` outside the mask bit for bit.
pub fn inpaint(p: &dyn SceneProvider, req: &InpaintRequest, view: &CameraView) -> Result<CandidateSet> {
    check_dims(req.image.dims(), req.mask.dims())?;
    check_dims(view.dims(), req.image.dims())?;
    if req.mask.is_empty() {
        return Err(Error::invalid("inpainting request with an empty mask"));
    }
    if req.candidates == 0 {
        return Err(Error::invalid("inpainting request for zero candidates"));
    }
    let raw = p.inpaint(req, view)?;
    if raw.is_empty() {
        return Err(violation(p, "no inpainting candidates returned"));
    }
    let candidates = raw
        .into_iter()
        .map(|c| {
            check_resolution(p, req.image.dims(), c.dims(), "inpainting candidate")?;
            req.image.composite(&c.quantized(), &req.mask)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet {
        candidates,
        provider: p.name().to_string(),
        seed: req.seed,
    })
}

/// Estimated z-depth in single precision. Non-positive or non-finite
/// values are left invalid and reported.
pub fn estimate_depth(p: &dyn SceneProvider, image: &ColorImage, view: &CameraView) -> Result<DepthMap> {
    let depth = p.estimate_depth(image, view)?;
    check_resolution(p, image.dims(), depth.dims(), "depth map")?;
    let depth = depth.quantized();
    let bad = depth.len() - depth.valid_count();
    if bad > 0 {
        log::warn!("provider `{}` returned {bad} unusable depth values; marked invalid", p.name());
    }
    Ok(depth)
}

pub fn embed(p: &dyn SceneProvider, image: &ColorImage) -> Result<EmbeddingVector> {
    let v = p.embed(image)?;
    if v.0.is_empty() || v.0.iter().any(|x| !x.is_finite()) {
        return Err(violation(p, "embedding is empty or not finite"));
    }
    Ok(v)
}

/// Index of the embedding most cosine-similar to `reference`; the lowest
/// index wins ties.
pub fn most_similar(reference: &EmbeddingVector, candidates: &[EmbeddingVector]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = reference.cosine(c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Picks the candidate whose embedding is closest to the reference image's.
/// A single candidate is returned without embedding anything.
pub fn select_candidate(p: &dyn SceneProvider, set: &CandidateSet, reference: &ColorImage) -> Result<usize> {
    match set.candidates.len() {
        0 => Err(Error::invalid("no candidates to select from")),
        1 => Ok(0),
        _ => {
            let r = embed(p, reference)?;
            let embs = set.candidates.iter().map(|c| embed(p, c)).collect::<Result<Vec<_>>>()?;
            Ok(most_similar(&r, &embs).expect("non-empty"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        let a = EmbeddingVector(vec![1.0, 2.0, 3.0]);
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
        assert_eq!(a.cosine(&EmbeddingVector(vec![0.0; 3])), 0.0);
        let neg = EmbeddingVector(a.0.iter().map(|v| -v).collect());
        assert!((a.cosine(&neg) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let r = EmbeddingVector(vec![1.0, 0.0]);
        let c = vec![
            EmbeddingVector(vec![0.0, 1.0]),
            EmbeddingVector(vec![2.0, 0.0]),
            EmbeddingVector(vec![5.0, 0.0]),
        ];
        assert_eq!(most_similar(&r, &c), Some(1));
        assert_eq!(most_similar(&r, &[]), None);
    }
}
