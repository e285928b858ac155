//! Reference computations shared by the integration suites. Nothing here
//! calls the library routine it is used to check.

#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scene_synth::camera::{CameraView, Intrinsics, Pose};
use scene_synth::field::{logistic, softplus, Aabb, RadianceGrid, Ray, CHANNELS};
use scene_synth::optim::{total_loss, LossConfig, LossWeights, SupervisedRay, TransmittanceForm};
use scene_synth::provider::OracleScene;
use scene_synth::DepthMap;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

pub fn unit_vector(r: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(uniform(r, -1.0, 1.0), uniform(r, -1.0, 1.0), uniform(r, -1.0, 1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// `n^3` grid on `[-1, 1]^3` with random raw parameters.
pub fn random_grid(r: &mut impl Rng, n: usize, density_scale: f64) -> RadianceGrid {
    let raw = (0..n * n * n * CHANNELS)
        .map(|i| {
            if i % CHANNELS == 0 {
                uniform(r, -2.5, 1.0)
            } else {
                uniform(r, -2.0, 2.0)
            }
        })
        .collect();
    RadianceGrid::from_raw(Aabb::cube(1.0).unwrap(), [n; 3], density_scale, raw).unwrap()
}

/// Rays from outside the unit cube aimed through it, with random targets
/// whose depth lands inside the sampled interval.
pub fn random_rays(r: &mut impl Rng, count: usize) -> Vec<SupervisedRay> {
    (0..count)
        .map(|_| {
            let origin = unit_vector(r) * 2.5;
            let aim = Vector3::new(uniform(r, -0.5, 0.5), uniform(r, -0.5, 0.5), uniform(r, -0.5, 0.5));
            let z_per_t = uniform(r, 0.6, 1.0);
            let t_hit = (aim - origin).norm() + uniform(r, -0.5, 0.5);
            SupervisedRay {
                ray: Ray::new(origin, aim - origin, 0.0, 10.0).with_z_per_t(z_per_t),
                color: [r.random(), r.random(), r.random()],
                z_depth: t_hit * z_per_t,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    Rgb,
    Depth,
    Transmittance,
}

impl Term {
    pub const ALL: [Term; 3] = [Term::Rgb, Term::Depth, Term::Transmittance];

    pub fn name(self) -> &'static str {
        match self {
            Term::Rgb => "rgb",
            Term::Depth => "depth",
            Term::Transmittance => "transmittance",
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub term: Term,
    pub params: usize,
    pub nonzero: usize,
    pub failures: usize,
    pub worst_abs: f64,
}

fn loss_cfg(steps: usize, depth: f64, transmittance: f64) -> LossConfig {
    LossConfig {
        weights: LossWeights { depth, transmittance },
        transmittance: TransmittanceForm::Emptiness,
        steps,
    }
}

fn term_value(grid: &RadianceGrid, rays: &[SupervisedRay], steps: usize, term: Term) -> f64 {
    let (l, _) = total_loss(grid, rays, &loss_cfg(steps, 0.0, 0.0)).unwrap();
    match term {
        Term::Rgb => l.rgb,
        Term::Depth => l.depth,
        Term::Transmittance => l.transmittance,
    }
}

/// Analytic gradient of one term alone. The total is linear in the weights,
/// so each term is the difference of two weightings.
pub fn term_gradient(grid: &RadianceGrid, rays: &[SupervisedRay], steps: usize, term: Term) -> Vec<f64> {
    let base = total_loss(grid, rays, &loss_cfg(steps, 0.0, 0.0)).unwrap().1.values;
    let (wd, wt) = match term {
        Term::Rgb => return base,
        Term::Depth => (1.0, 0.0),
        Term::Transmittance => (0.0, 1.0),
    };
    let with = total_loss(grid, rays, &loss_cfg(steps, wd, wt)).unwrap().1.values;
    with.iter().zip(&base).map(|(a, b)| a - b).collect()
}

/// Central differences on every raw parameter.
pub fn gradient_check(
    grid: &RadianceGrid,
    rays: &[SupervisedRay],
    steps: usize,
    term: Term,
    rel_tol: f64,
    abs_tol: f64,
) -> GradCheck {
    let analytic = term_gradient(grid, rays, steps, term);
    let h = 1e-5;
    let mut probe = grid.clone();
    let mut out = GradCheck {
        term,
        params: analytic.len(),
        nonzero: 0,
        failures: 0,
        worst_abs: 0.0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let x = grid.raw()[i];
        probe.set_raw(i, x + h);
        let up = term_value(&probe, rays, steps, term);
        probe.set_raw(i, x - h);
        let down = term_value(&probe, rays, steps, term);
        probe.set_raw(i, x);
        let fd = (up - down) / (2.0 * h);
        let err = (a - fd).abs();
        if fd.abs() > 1e-9 {
            out.nonzero += 1;
        }
        out.worst_abs = out.worst_abs.max(err);
        if err > abs_tol && err > rel_tol * a.abs().max(fd.abs()) {
            out.failures += 1;
        }
    }
    out
}

/// A grid whose activated density and color vary along x only, given per
/// x-node; y and z use two nodes each.
pub fn x_profile_grid(density: &[f64], color: &[[f64; 3]], density_scale: f64) -> RadianceGrid {
    let n = density.len();
    let mut raw = Vec::with_capacity(n * 4 * CHANNELS);
    for _k in 0..2 {
        for _j in 0..2 {
            for i in 0..n {
                raw.push(softplus_inverse(density[i] / density_scale));
                for c in color[i] {
                    raw.push((c / (1.0 - c)).ln());
                }
            }
        }
    }
    RadianceGrid::from_raw(Aabb::new([-1.0; 3], [1.0; 3]).unwrap(), [n, 2, 2], density_scale, raw).unwrap()
}

fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Emission-absorption integral of a piecewise-linear x profile on
/// `[-1, 1]`, by composite Simpson with `n` panels. Returns color, expected
/// distance and final transmittance.
pub fn integrate_x_profile(
    density: &[f64],
    color: &[[f64; 3]],
    origin: Vector3<f64>,
    dir: Vector3<f64>,
    t0: f64,
    t1: f64,
    n: usize,
) -> ([f64; 3], f64, f64) {
    let nodes = density.len();
    let lerp = |x: f64| -> (f64, [f64; 3]) {
        if !(-1.0..=1.0).contains(&x) {
            return (0.0, [0.0; 3]);
        }
        let u = (x + 1.0) / 2.0 * (nodes - 1) as f64;
        let i = (u.floor() as usize).min(nodes - 2);
        let f = u - i as f64;
        let s = density[i] * (1.0 - f) + density[i + 1] * f;
        let mut c = [0.0; 3];
        for ch in 0..3 {
            c[ch] = color[i][ch] * (1.0 - f) + color[i + 1][ch] * f;
        }
        (s, c)
    };
    let n = n + n % 2;
    let h = (t1 - t0) / n as f64;
    // Optical depth by Simpson on each step, accumulated with the integrand.
    let mut tau = 0.0;
    let mut rgb = [0.0; 3];
    let mut depth = 0.0;
    let f = |t: f64| lerp(origin.x + t * dir.x);
    let mut prev = f(t0);
    let mut tau_prev = 0.0;
    for k in 0..n {
        let a = t0 + k as f64 * h;
        let m = a + h / 2.0;
        let b = a + h;
        let (sm, cm) = f(m);
        let (sb, cb) = f(b);
        let tau_m = tau + h / 12.0 * (5.0 * prev.0 + 8.0 * sm - sb);
        let tau_b = tau + h / 6.0 * (prev.0 + 4.0 * sm + sb);
        let g = |s: f64, tt: f64| s * (-tt).exp();
        let (wa, wm, wb) = (g(prev.0, tau_prev), g(sm, tau_m), g(sb, tau_b));
        for ch in 0..3 {
            rgb[ch] += h / 6.0 * (wa * prev.1[ch] + 4.0 * wm * cm[ch] + wb * cb[ch]);
        }
        depth += h / 6.0 * (wa * a + 4.0 * wm * m + wb * b);
        tau = tau_b;
        tau_prev = tau_b;
        prev = (sb, cb);
    }
    (rgb, depth, (-tau).exp())
}

/// Pixel and depth of `q` at `z` carried from `src` to `dst` by explicit
/// 4x4 homogeneous matrices.
pub fn warp_by_matrices(q: [f64; 2], z: f64, src: &CameraView, dst: &CameraView) -> ([f64; 2], f64) {
    let k4 = |k: &Intrinsics| {
        let mut m = Matrix4::identity();
        m[(0, 0)] = k.fx;
        m[(1, 1)] = k.fy;
        m[(0, 2)] = k.cx;
        m[(1, 2)] = k.cy;
        m
    };
    let p4 = |p: &Pose| {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(p.rotation());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(p.translation());
        m
    };
    let chain = k4(&dst.intrinsics)
        * p4(&dst.pose)
        * p4(&src.pose).try_inverse().unwrap()
        * k4(&src.intrinsics).try_inverse().unwrap();
    let h = chain * Vector4::new(q[0] * z, q[1] * z, z, 1.0);
    ([h.x / h.z, h.y / h.z], h.z)
}

/// Random orthonormal rotation.
pub fn random_rotation(r: &mut impl Rng) -> Matrix3<f64> {
    let axis = nalgebra::Unit::new_normalize(unit_vector(r));
    nalgebra::Rotation3::from_axis_angle(&axis, uniform(r, -3.1, 3.1)).into_inner()
}

/// Missing mask of `target` by ray casting: a pixel is seen when the
/// surface point it shows is also the first surface some known view sees
/// along its own ray (within `tol` relative depth).
pub fn visibility_oracle(scene: &OracleScene, target: &CameraView, known: &[CameraView], tol: f64) -> Vec<bool> {
    let (_, tdepth) = scene.render(target);
    let known_depth: Vec<DepthMap> = known.iter().map(|v| scene.render(v).1).collect();
    let (w, h) = target.dims();
    (0..w * h)
        .map(|i| {
            let Some(z) = tdepth.get_index(i) else {
                return true;
            };
            let x = target.unproject([(i % w) as f64, (i / w) as f64], z);
            let seen = known.iter().zip(&known_depth).any(|(v, d)| {
                let (q, zk) = v.project(&x);
                if zk <= 0.0 {
                    return false;
                }
                let (u, y) = (q[0].round(), q[1].round());
                if u < 0.0 || y < 0.0 || u >= v.width() as f64 || y >= v.height() as f64 {
                    return false;
                }
                match d.get(u as usize, y as usize) {
                    Some(dz) => (dz - zk).abs() <= tol * zk,
                    None => false,
                }
            });
            !seen
        })
        .collect()
}

/// Closed-form `rendered ~ a * coarse + b` least squares over `mask`.
pub fn affine_fit(coarse: &DepthMap, rendered: &DepthMap, mask: &[bool]) -> (f64, f64) {
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..mask.len() {
        if let (true, Some(x), Some(y)) = (mask[i], coarse.get_index(i), rendered.get_index(i)) {
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
    }
    let a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (a, (sy - a * sx) / n)
}

pub fn rmse(a: &DepthMap, b: &DepthMap, mask: &[bool]) -> f64 {
    let mut s = 0.0;
    let mut n = 0.0;
    for i in 0..mask.len() {
        if let (true, Some(x), Some(y)) = (mask[i], a.get_index(i), b.get_index(i)) {
            s += (x - y) * (x - y);
            n += 1.0;
        }
    }
    (s / n).sqrt()
}

/// Activated values at a point by explicit trilinear blending of the eight
/// surrounding nodes.
pub fn trilinear_reference(grid: &RadianceGrid, p: &Vector3<f64>) -> [f64; 4] {
    let d = grid.dims();
    let bb = grid.bbox();
    let mut idx = [0usize; 3];
    let mut f = [0.0; 3];
    for a in 0..3 {
        let u = (p[a] - bb.min[a]) / (bb.max[a] - bb.min[a]) * (d[a] - 1) as f64;
        let i = (u.floor() as usize).min(d[a] - 2);
        idx[a] = i;
        f[a] = u - i as f64;
    }
    let mut out = [0.0; 4];
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut w = 1.0;
        for a in 0..3 {
            w *= if o[a] == 1 { f[a] } else { 1.0 - f[a] };
        }
        let base = ((idx[2] + o[2]) * d[1] * d[0] + (idx[1] + o[1]) * d[0] + idx[0] + o[0]) * CHANNELS;
        let raw = &grid.raw()[base..base + CHANNELS];
        out[0] += w * grid.density_scale() * softplus(raw[0]);
        for c in 1..4 {
            out[c] += w * logistic(raw[c]);
        }
    }
    out
}
