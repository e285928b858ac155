//! Pinhole cameras, poses, depth-image-based warping and trajectories.
//!
//! Conventions: right-handed, the camera looks along `+z` in camera space,
//! `+x` is image-right and `+y` is image-down. Pixel `(i, j)` has its
//! center at continuous coordinate `(i, j)`. Depth is camera-space z, not
//! distance along the ray.

mod trajectory;
mod warp;

pub use trajectory::{angular_distance, build_trajectory, support_poses, TrajectoryPattern};
pub use warp::{forward_warp, missing_mask, warp_pixel, SplatOptions, WarpOutput};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Ray;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels with the principal point at the image center and the
    /// given horizontal field of view.
    pub fn from_fov(hfov_deg: f64, width: usize, height: usize) -> Result<Self> {
        if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
            return Err(Error::invalid(format!("field of view {hfov_deg} out of (0, 180)")));
        }
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    /// 90 degree horizontal field of view.
    pub fn default_for(width: usize, height: usize) -> Result<Self> {
        Self::from_fov(90.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Camera-space point at depth `z` seen through continuous pixel `q`.
    pub fn unproject(&self, q: [f64; 2], z: f64) -> Vector3<f64> {
        Vector3::new((q[0] - self.cx) / self.fx * z, (q[1] - self.cy) / self.fy * z, z)
    }

    /// Continuous pixel and depth of a camera-space point.
    pub fn project(&self, p: &Vector3<f64>) -> ([f64; 2], f64) {
        (
            [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy],
            p.z,
        )
    }
}

/// World-to-camera rigid transform: `x_cam = rotation * x_world + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if err > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("pose rotation is not a proper rotation"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("pose translation is not finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pose of a camera at `center` whose camera-to-world rotation is
    /// `cam_to_world`.
    pub fn from_center(cam_to_world: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        let rotation = cam_to_world.transpose();
        Self::new(rotation, -(rotation * center))
    }

    /// Camera at `center` turned by `yaw` (positive turns right, towards
    /// `+x`) and then `pitch` (positive looks up, towards `-y`).
    pub fn from_yaw_pitch(yaw_deg: f64, pitch_deg: f64, center: Vector3<f64>) -> Self {
        let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw_deg.to_radians());
        let pitch = Rotation3::from_axis_angle(&Vector3::x_axis(), pitch_deg.to_radians());
        let cam_to_world = (yaw * pitch).into_inner();
        let rotation = cam_to_world.transpose();
        Self {
            rotation,
            translation: -(rotation * center),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Unit viewing direction in world space.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Same orientation, camera center moved to `center`.
    /// Same orientation, center moved by `offset` given in camera axes.
    pub fn shifted(&self, offset: Vector3<f64>) -> Self {
        Self {
            rotation: self.rotation,
            translation: self.translation - offset,
        }
    }

    pub fn with_center(&self, center: Vector3<f64>) -> Self {
        Self {
            rotation: self.rotation,
            translation: -(self.rotation * center),
        }
    }
}

/// A posed pinhole camera. `id` is the view's index within a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraView {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub id: usize,
}

impl CameraView {
    pub fn new(intrinsics: Intrinsics, pose: Pose, id: usize) -> Self {
        Self {
            intrinsics,
            pose,
            id,
        }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.intrinsics.width, self.intrinsics.height)
    }

    /// World point at camera depth `z` behind continuous pixel `q`.
    pub fn unproject(&self, q: [f64; 2], z: f64) -> Vector3<f64> {
        self.pose.camera_to_world(&self.intrinsics.unproject(q, z))
    }

    /// Continuous pixel and camera depth of a world point.
    pub fn project(&self, world: &Vector3<f64>) -> ([f64; 2], f64) {
        self.intrinsics.project(&self.pose.world_to_camera(world))
    }

    /// Ray through the center of pixel `(x, y)`, unbounded until clipped.
    pub fn pixel_ray(&self, x: usize, y: usize) -> Ray {
        let dir_cam = self
            .intrinsics
            .unproject([x as f64, y as f64], 1.0)
            .normalize();
        let dir = self.pose.rotation.transpose() * dir_cam;
        Ray::new(self.pose.center(), dir, 0.0, f64::INFINITY).with_z_per_t(dir_cam.z)
    }
}
