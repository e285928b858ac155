use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CameraView, Intrinsics, Pose};

/// `count` satellite views on a circle of radius `shift` around the camera
/// center, lying in the camera's image plane, with the center orientation.
///
/// Satellite `k` sits at angle `2πk/count` measured from camera-right
/// towards camera-up, so eight satellites cover right, upper-right, up,
/// upper-left, left, lower-left, down and lower-right. Satellites inherit
/// the center's id.
pub fn support_poses(center: &CameraView, shift: f64, count: usize) -> Vec<CameraView> {
    (0..count)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / count as f64;
            // Camera y points down, so up is -y.
            let offset = Vector3::new(shift * theta.cos(), -shift * theta.sin(), 0.0);
            CameraView::new(center.intrinsics, center.pose.shifted(offset), center.id)
        })
        .collect()
}

/// Angle in radians between the viewing directions of two poses.
pub fn angular_distance(a: &Pose, b: &Pose) -> f64 {
    a.forward().dot(&b.forward()).clamp(-1.0, 1.0).acos()
}

/// Outward-facing camera patterns around a fixed position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryPattern {
    /// `steps` poses turning right by `yaw_step_deg` each, at fixed pitch.
    Orbit {
        steps: usize,
        yaw_step_deg: f64,
        #[serde(default)]
        pitch_deg: f64,
    },
    /// A yaw-pitch grid spanning `±yaw_deg` and `±pitch_deg` with
    /// `yaw_steps`/`pitch_steps` samples on each side of the center.
    Lattice {
        yaw_deg: f64,
        pitch_deg: f64,
        #[serde(default = "one")]
        yaw_steps: usize,
        #[serde(default = "one")]
        pitch_steps: usize,
    },
}

fn one() -> usize {
    1
}

impl TrajectoryPattern {
    pub fn orbit(steps: usize) -> Self {
        TrajectoryPattern::Orbit {
            steps,
            yaw_step_deg: if steps == 0 { 0.0 } else { 360.0 / steps as f64 },
            pitch_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TrajectoryPattern::Orbit {
                steps,
                yaw_step_deg,
                pitch_deg,
            } => {
                if steps == 0 {
                    return Err(Error::invalid("orbit needs at least one step"));
                }
                if !yaw_step_deg.is_finite() || !pitch_deg.is_finite() || pitch_deg.abs() >= 90.0 {
                    return Err(Error::invalid("orbit angles out of range"));
                }
            }
            TrajectoryPattern::Lattice {
                yaw_deg,
                pitch_deg,
                yaw_steps,
                pitch_steps,
            } => {
                if !yaw_deg.is_finite() || !pitch_deg.is_finite() || pitch_deg.abs() >= 90.0 {
                    return Err(Error::invalid("lattice angles out of range"));
                }
                if yaw_steps > 64 || pitch_steps > 64 {
                    return Err(Error::invalid("lattice too dense"));
                }
            }
        }
        Ok(())
    }

    /// `(yaw, pitch)` pairs in degrees, first entry is the initial pose.
    pub fn angles(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        Ok(match *self {
            TrajectoryPattern::Orbit {
                steps,
                yaw_step_deg,
                pitch_deg,
            } => (0..steps)
                .map(|i| (i as f64 * yaw_step_deg, pitch_deg))
                .collect(),
            TrajectoryPattern::Lattice {
                yaw_deg,
                pitch_deg,
                yaw_steps,
                pitch_steps,
            } => {
                let axis = |extent: f64, n: usize| -> Vec<f64> {
                    let n = n as isize;
                    (-n..=n)
                        .map(|i| if n == 0 { 0.0 } else { extent * i as f64 / n as f64 })
                        .collect()
                };
                let mut out = vec![(0.0, 0.0)];
                for p in axis(pitch_deg, pitch_steps) {
                    for y in axis(yaw_deg, yaw_steps) {
                        if (y, p) != (0.0, 0.0) {
                            out.push((y, p));
                        }
                    }
                }
                out
            }
        })
    }
}

impl fmt::Display for TrajectoryPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrajectoryPattern::Orbit {
                steps,
                yaw_step_deg,
                pitch_deg,
            } => write!(f, "orbit:steps={steps},yaw_step={yaw_step_deg},pitch={pitch_deg}"),
            TrajectoryPattern::Lattice {
                yaw_deg,
                pitch_deg,
                yaw_steps,
                pitch_steps,
            } => write!(
                f,
                "lattice:yaw={yaw_deg},pitch={pitch_deg},yaw_steps={yaw_steps},pitch_steps={pitch_steps}"
            ),
        }
    }
}

/// Parses `orbit:<steps>`, `orbit:steps=8,yaw_step=45[,pitch=0]` or
/// `lattice:yaw=30,pitch=15[,yaw_steps=1,pitch_steps=1]`.
impl FromStr for TrajectoryPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let bad = |m: &str| Error::invalid(format!("trajectory `{s}`: {m}"));
        let mut keys: Vec<(&str, f64)> = Vec::new();
        let mut bare: Option<f64> = None;
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                Some((k, v)) => {
                    let v: f64 = v.trim().parse().map_err(|_| bad("bad number"))?;
                    if keys.iter().any(|(seen, _)| *seen == k.trim()) {
                        return Err(bad("duplicate key"));
                    }
                    keys.push((k.trim(), v));
                }
                None if bare.is_none() && keys.is_empty() => {
                    bare = Some(part.parse().map_err(|_| bad("bad number"))?);
                }
                None => return Err(bad("unexpected bare value")),
            }
        }
        let get = |k: &str| keys.iter().find(|(n, _)| *n == k).map(|(_, v)| *v);
        let count = |v: f64| -> Result<usize> {
            if v.fract() != 0.0 || !(0.0..=4096.0).contains(&v) {
                Err(bad("count must be a small non-negative integer"))
            } else {
                Ok(v as usize)
            }
        };
        let allowed: &[&str] = match kind {
            "orbit" => &["steps", "yaw_step", "pitch"],
            "lattice" => &["yaw", "pitch", "yaw_steps", "pitch_steps"],
            _ => return Err(bad("unknown pattern")),
        };
        if let Some((k, _)) = keys.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(bad(&format!("unknown key `{k}`")));
        }
        let pattern = match kind {
            "orbit" => {
                let steps = count(bare.or(get("steps")).ok_or_else(|| bad("missing steps"))?)?;
                let default_step = if steps == 0 { 0.0 } else { 360.0 / steps as f64 };
                TrajectoryPattern::Orbit {
                    steps,
                    yaw_step_deg: get("yaw_step").unwrap_or(default_step),
                    pitch_deg: get("pitch").unwrap_or(0.0),
                }
            }
            _ => {
                if bare.is_some() {
                    return Err(bad("lattice takes named values"));
                }
                TrajectoryPattern::Lattice {
                    yaw_deg: get("yaw").ok_or_else(|| bad("missing yaw"))?,
                    pitch_deg: get("pitch").ok_or_else(|| bad("missing pitch"))?,
                    yaw_steps: count(get("yaw_steps").unwrap_or(1.0))?,
                    pitch_steps: count(get("pitch_steps").unwrap_or(1.0))?,
                }
            }
        };
        pattern.validate()?;
        Ok(pattern)
    }
}

/// Deterministic pose list for `pattern`, all cameras at `origin`. The
/// first view is the initialization pose with id 0.
pub fn build_trajectory(
    pattern: &TrajectoryPattern,
    intrinsics: &Intrinsics,
    origin: Vector3<f64>,
) -> Result<Vec<CameraView>> {
    Ok(pattern
        .angles()?
        .into_iter()
        .enumerate()
        .map(|(id, (yaw, pitch))| {
            CameraView::new(*intrinsics, Pose::from_yaw_pitch(yaw, pitch, origin), id)
        })
        .collect())
}
