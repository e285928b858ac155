//! Depth-image-based rendering: per-pixel reprojection, z-buffered forward
//! splatting and missing-region computation.

use crate::buffers::{check_dims, ColorImage, DepthMap, RegionMask};
use crate::error::{Error, Result};

use super::CameraView;

/// Reprojects continuous pixel `q` at depth `z` from `src` into `dst`.
///
/// Equivalent to `K_dst * P_dst * P_src^-1 * K_src^-1 * [q, z]`. The returned
/// depth is the destination camera z and may be non-positive for points
/// behind `dst`; callers filter those.
pub fn warp_pixel(q: [f64; 2], z: f64, src: &CameraView, dst: &CameraView) -> ([f64; 2], f64) {
    let world = src.unproject(q, z);
    let cam = dst.pose.world_to_camera(&world);
    let k = &dst.intrinsics;
    if cam.z == 0.0 {
        return ([f64::NAN, f64::NAN], 0.0);
    }
    ([k.fx * cam.x / cam.z + k.cx, k.fy * cam.y / cam.z + k.cy], cam.z)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SplatOptions {
    /// Fill unhit pixels that sit between two hit neighbors on opposite
    /// sides (horizontal, vertical or diagonal). Closes resampling pinholes
    /// without growing the valid region across true disocclusions.
    pub close_pinholes: bool,
}

impl SplatOptions {
    pub fn closing() -> Self {
        Self {
            close_pinholes: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WarpOutput {
    pub image: ColorImage,
    pub depth: DepthMap,
    pub missing: RegionMask,
}

/// Splats every valid source pixel into `dst` with nearest-pixel rounding
/// and a z-buffer; the nearest depth wins and exact ties keep the lowest
/// source index.
pub fn forward_warp(
    image: &ColorImage,
    depth: &DepthMap,
    src: &CameraView,
    dst: &CameraView,
    opts: SplatOptions,
) -> Result<WarpOutput> {
    check_dims(src.dims(), image.dims())?;
    check_dims(src.dims(), depth.dims())?;
    let (w, h) = dst.dims();
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut color = vec![[0.0; 3]; w * h];
    splat(depth, src, dst, |di, si, z| {
        if z < zbuf[di] {
            zbuf[di] = z;
            color[di] = image.pixels()[si];
        }
    });
    if opts.close_pinholes {
        close_pinholes(w, h, &mut zbuf, Some(&mut color));
    }
    let mut out_depth = DepthMap::invalid(w, h);
    let mut missing = vec![true; w * h];
    for i in 0..w * h {
        if zbuf[i].is_finite() {
            out_depth.set_index(i, zbuf[i]);
            missing[i] = false;
        } else {
            color[i] = [0.0; 3];
        }
    }
    Ok(WarpOutput {
        image: ColorImage::from_pixels(w, h, color)?,
        depth: out_depth,
        missing: RegionMask::from_bools(w, h, missing)?,
    })
}

/// Pixels of `target` that no known view splats into.
///
/// This is the intersection over known views of the per-view unseen sets.
pub fn missing_mask(
    target: &CameraView,
    known: &[(CameraView, &DepthMap)],
    opts: SplatOptions,
) -> Result<RegionMask> {
    if known.is_empty() {
        return Err(Error::invalid("missing_mask needs at least one known view"));
    }
    let (w, h) = target.dims();
    let mut seen = vec![false; w * h];
    for (view, depth) in known {
        check_dims(view.dims(), depth.dims())?;
        let mut zbuf = vec![f64::INFINITY; w * h];
        splat(depth, view, target, |di, _, z| {
            if z < zbuf[di] {
                zbuf[di] = z;
            }
        });
        if opts.close_pinholes {
            close_pinholes(w, h, &mut zbuf, None);
        }
        for (s, z) in seen.iter_mut().zip(&zbuf) {
            *s |= z.is_finite();
        }
    }
    RegionMask::from_bools(w, h, seen.into_iter().map(|s| !s).collect())
}

/// Calls `hit(dst_index, src_index, dst_z)` for every valid source pixel
/// that lands in front of and inside `dst`, in source index order.
fn splat(depth: &DepthMap, src: &CameraView, dst: &CameraView, mut hit: impl FnMut(usize, usize, f64)) {
    let (sw, sh) = src.dims();
    let (w, h) = dst.dims();
    // The source->dst chain is affine in camera coordinates; fold it once.
    let rel_r = dst.pose.rotation() * src.pose.rotation().transpose();
    let rel_t = dst.pose.translation() - rel_r * src.pose.translation();
    let ks = &src.intrinsics;
    let kd = &dst.intrinsics;
    for y in 0..sh {
        for x in 0..sw {
            let si = y * sw + x;
            let Some(z) = depth.get_index(si) else {
                continue;
            };
            let p = ks.unproject([x as f64, y as f64], z);
            let c = rel_r * p + rel_t;
            if c.z <= 0.0 {
                continue;
            }
            let u = (kd.fx * c.x / c.z + kd.cx).round();
            let v = (kd.fy * c.y / c.z + kd.cy).round();
            if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
                continue;
            }
            hit(v as usize * w + u as usize, si, c.z);
        }
    }
}

fn close_pinholes(w: usize, h: usize, zbuf: &mut [f64], mut color: Option<&mut Vec<[f64; 3]>>) {
    const PAIRS: [((isize, isize), (isize, isize)); 4] = [
        ((-1, 0), (1, 0)),
        ((0, -1), (0, 1)),
        ((-1, -1), (1, 1)),
        ((1, -1), (-1, 1)),
    ];
    let src = zbuf.to_vec();
    let at = |x: usize, y: usize, d: (isize, isize)| -> Option<usize> {
        let nx = x as isize + d.0;
        let ny = y as isize + d.1;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
            .then(|| ny as usize * w + nx as usize)
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if src[i].is_finite() {
                continue;
            }
            let mut best: Option<usize> = None;
            for (a, b) in PAIRS {
                let (Some(ia), Some(ib)) = (at(x, y, a), at(x, y, b)) else {
                    continue;
                };
                if src[ia].is_finite() && src[ib].is_finite() {
                    for j in [ia, ib] {
                        if best.is_none_or(|bj| src[j] < src[bj]) {
                            best = Some(j);
                        }
                    }
                }
            }
            if let Some(j) = best {
                zbuf[i] = src[j];
                if let Some(c) = color.as_deref_mut() {
                    c[i] = c[j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Intrinsics, Pose};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn view(pose: Pose) -> CameraView {
        CameraView::new(Intrinsics::new(100.0, 100.0, 64.0, 64.0, 128, 128).unwrap(), pose, 0)
    }

    #[test]
    fn identity_warp_is_identity() {
        let v = view(Pose::from_yaw_pitch(10.0, 3.0, Vector3::new(0.1, 0.0, 0.0)));
        let (q, z) = warp_pixel([12.25, 99.5], 3.0, &v, &v);
        assert_relative_eq!(q[0], 12.25, epsilon = 1e-9);
        assert_relative_eq!(q[1], 99.5, epsilon = 1e-9);
        assert_relative_eq!(z, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_about_principal_axis_point_fixed() {
        let src = view(Pose::identity());
        let dst = view(Pose::from_yaw_pitch(0.0, 0.0, Vector3::zeros()));
        let (q, z) = warp_pixel([64.0, 64.0], 2.0, &src, &dst);
        assert_relative_eq!(q[0], 64.0, epsilon = 1e-12);
        assert_relative_eq!(z, 2.0, epsilon = 1e-12);
        // Roll about the optical axis keeps the principal point fixed.
        let roll = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 0.7).into_inner();
        let dst = view(Pose::from_center(roll, Vector3::zeros()).unwrap());
        let (q, z) = warp_pixel([64.0, 64.0], 2.0, &src, &dst);
        assert_relative_eq!(q[0], 64.0, epsilon = 1e-9);
        assert_relative_eq!(q[1], 64.0, epsilon = 1e-9);
        assert_relative_eq!(z, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_forward_warp() {
        let v = view(Pose::identity());
        let mut img = ColorImage::filled(128, 128, [0.0; 3]);
        let mut depth = DepthMap::invalid(128, 128);
        for y in 0..128 {
            for x in 0..128 {
                img.set(x, y, [x as f64 / 128.0, y as f64 / 128.0, 0.5]);
                depth.set(x, y, 1.0 + (x + y) as f64 * 0.01);
            }
        }
        let out = forward_warp(&img, &depth, &v, &v, SplatOptions::default()).unwrap();
        assert!(out.missing.is_empty());
        assert_eq!(out.image, img);
        assert_eq!(out.depth, depth);
    }

    #[test]
    fn all_invalid_depth_is_fully_missing() {
        let v = view(Pose::identity());
        let out = forward_warp(
            &ColorImage::filled(128, 128, [1.0; 3]),
            &DepthMap::invalid(128, 128),
            &v,
            &v,
            SplatOptions::closing(),
        )
        .unwrap();
        assert_eq!(out.missing.count(), 128 * 128);
        assert_eq!(out.depth.valid_count(), 0);
    }

    #[test]
    fn mismatched_resolution_rejected() {
        let v = view(Pose::identity());
        let r = forward_warp(
            &ColorImage::filled(64, 64, [1.0; 3]),
            &DepthMap::invalid(128, 128),
            &v,
            &v,
            SplatOptions::default(),
        );
        assert!(matches!(r, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn zbuffer_keeps_nearest() {
        // Two source pixels of a 2x1 image collapse onto one dst pixel when
        // dst has a single pixel.
        let k_src = Intrinsics::new(1.0, 1.0, 0.5, 0.0, 2, 1).unwrap();
        let k_dst = Intrinsics::new(1e-3, 1e-3, 0.0, 0.0, 1, 1).unwrap();
        let src = CameraView::new(k_src, Pose::identity(), 0);
        let dst = CameraView::new(k_dst, Pose::identity(), 1);
        let img = ColorImage::from_pixels(2, 1, vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        for (za, zb, want) in [(2.0, 1.0, [0.0, 1.0, 0.0]), (1.0, 2.0, [1.0, 0.0, 0.0])] {
            let d = DepthMap::from_values(2, 1, vec![za, zb]).unwrap();
            let out = forward_warp(&img, &d, &src, &dst, SplatOptions::default()).unwrap();
            assert_eq!(out.image.get(0, 0), want);
            assert_eq!(out.depth.get(0, 0), Some(za.min(zb)));
        }
        // Exact tie: lowest source index wins.
        let d = DepthMap::from_values(2, 1, vec![1.0, 1.0]).unwrap();
        let out = forward_warp(&img, &d, &src, &dst, SplatOptions::default()).unwrap();
        assert_eq!(out.image.get(0, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_mask_requires_known() {
        let v = view(Pose::identity());
        assert!(missing_mask(&v, &[], SplatOptions::default()).is_err());
    }

    #[test]
    fn target_in_known_is_empty() {
        let v = view(Pose::from_yaw_pitch(30.0, 0.0, Vector3::zeros()));
        let d = DepthMap::from_values(128, 128, vec![2.0; 128 * 128]).unwrap();
        let m = missing_mask(&v, &[(v, &d)], SplatOptions::default()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn pinhole_closing_fills_isolated_gaps_only() {
        let mut z = vec![1.0; 25];
        z[12] = f64::INFINITY; // isolated pinhole at the center
        for zi in z.iter_mut().take(5) {
            *zi = f64::INFINITY; // a true hole along the top row
        }
        close_pinholes(5, 5, &mut z, None);
        assert!(z[12].is_finite());
        assert!(z[..5].iter().all(|v| v.is_infinite()));
    }
}
