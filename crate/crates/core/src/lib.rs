//! Progressive text-to-scene synthesis: a radiance field is initialized from
//! one generated RGB-D view plus depth-warped support views, then grown view
//! by view by inpainting only never-seen regions, aligning the estimated
//! depth to the rendered one, and retraining.
//!
//! Generative models sit behind [`provider::SceneProvider`]; the
//! [`provider::OracleProvider`] replaces them with a procedural scene so the
//! geometry and optimization core can be tested against ground truth.

pub mod align;
pub mod buffers;
pub mod camera;
pub mod error;
pub mod field;
pub mod io;
pub mod optim;
pub mod pipeline;
pub mod provider;
pub mod rng;

pub use buffers::{ColorImage, DepthMap, RegionMask, Rgb};
pub use camera::{CameraView, Intrinsics, Pose};
pub use error::{Error, Result};
pub use field::{Aabb, RadianceGrid};
