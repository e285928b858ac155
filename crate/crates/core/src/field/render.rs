//! Emission-absorption quadrature and its reverse-mode derivative.
//!
//! With `n` samples at stratified centers `t_i` and spacing `dt`:
//! `alpha_i = 1 - exp(-sigma_i dt)`, `T_0 = 1`, `T_{i+1} = T_i (1 - alpha_i)`,
//! `w_i = T_i alpha_i`, `C = sum w_i c_i` and ray depth `sum w_i t_i`.

use nalgebra::Vector3;

use crate::buffers::{ColorImage, DepthMap, Rgb};
use crate::camera::CameraView;
use crate::error::{Error, Result};

use super::grid::{RadianceGrid, CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit direction.
    pub dir: Vector3<f64>,
    pub t_near: f64,
    pub t_far: f64,
    /// Camera-space z gained per unit of `t`; converts ray distance to z-depth.
    pub z_per_t: f64,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, dir: Vector3<f64>, t_near: f64, t_far: f64) -> Self {
        Self {
            origin,
            dir: dir.normalize(),
            t_near,
            t_far,
            z_per_t: 1.0,
        }
    }

    pub fn with_z_per_t(mut self, z_per_t: f64) -> Self {
        self.z_per_t = z_per_t;
        self
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + t * self.dir
    }

    /// Sampling interval: `[t_near, t_far]` clipped to the grid box.
    pub fn bounds_in(&self, grid: &RadianceGrid) -> Option<(f64, f64)> {
        let (a, b) = grid.bbox().intersect(&self.origin, &self.dir)?;
        let t0 = a.max(self.t_near).max(0.0);
        let t1 = b.min(self.t_far);
        (t1 > t0).then_some((t0, t1))
    }
}

/// Rendered quantities of one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderSample {
    pub color: Rgb,
    /// Expected distance along the ray.
    pub depth: f64,
    /// Camera-space z-depth of the expected hit.
    pub z_depth: f64,
    /// `1 - T_final`.
    pub opacity: f64,
    /// `T_i` before each sample (`T_0 = 1`).
    pub trace: Vec<f64>,
    /// Sample positions `t_i` matching `trace`.
    pub sample_t: Vec<f64>,
}

/// Forward record of a ray march, reusable across rays.
#[derive(Clone, Debug, Default)]
pub struct RayTape {
    t0: f64,
    dt: f64,
    z_per_t: f64,
    origin: Vector3<f64>,
    dir: Vector3<f64>,
    sigma: Vec<f64>,
    color: Vec<Rgb>,
    /// `steps + 1` transmittances.
    trans: Vec<f64>,
    pub rgb: Rgb,
    pub depth: f64,
}

impl RayTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> usize {
        self.sigma.len()
    }

    pub fn sample_t(&self, i: usize) -> f64 {
        self.t0 + (i as f64 + 0.5) * self.dt
    }

    /// `T_i` before each sample.
    pub fn trace(&self) -> &[f64] {
        &self.trans[..self.sigma.len()]
    }

    pub fn opacity(&self) -> f64 {
        1.0 - self.trans.last().copied().unwrap_or(1.0)
    }

    pub fn z_depth(&self) -> f64 {
        self.depth * self.z_per_t
    }

    pub fn z_per_t(&self) -> f64 {
        self.z_per_t
    }

    pub fn to_sample(&self) -> RenderSample {
        RenderSample {
            color: self.rgb,
            depth: self.depth,
            z_depth: self.z_depth(),
            opacity: self.opacity(),
            trace: self.trace().to_vec(),
            sample_t: (0..self.steps()).map(|i| self.sample_t(i)).collect(),
        }
    }
}

/// Marches `ray` through `grid` with `steps` samples, filling `tape`.
pub fn trace_ray(grid: &RadianceGrid, ray: &Ray, steps: usize, tape: &mut RayTape) {
    tape.sigma.clear();
    tape.color.clear();
    tape.trans.clear();
    tape.trans.push(1.0);
    tape.rgb = [0.0; 3];
    tape.depth = 0.0;
    tape.z_per_t = ray.z_per_t;
    tape.origin = ray.origin;
    tape.dir = ray.dir;
    let Some((t0, t1)) = ray.bounds_in(grid) else {
        tape.t0 = ray.t_near;
        tape.dt = 0.0;
        return;
    };
    let dt = (t1 - t0) / steps as f64;
    tape.t0 = t0;
    tape.dt = dt;
    let mut t_acc = 1.0;
    for i in 0..steps {
        let t = t0 + (i as f64 + 0.5) * dt;
        let (s, c) = match grid.locate(&(ray.origin + t * ray.dir)) {
            Some(cell) => {
                let v = grid.interpolate(&cell);
                (v[0], [v[1], v[2], v[3]])
            }
            None => (0.0, [0.0; 3]),
        };
        let next = t_acc * (-s * dt).exp();
        let w = t_acc - next;
        for ch in 0..3 {
            tape.rgb[ch] += w * c[ch];
        }
        tape.depth += w * t;
        tape.sigma.push(s);
        tape.color.push(c);
        tape.trans.push(next);
        t_acc = next;
    }
}

/// Renders one ray; `steps >= 2`.
pub fn render_ray(grid: &RadianceGrid, ray: &Ray, steps: usize) -> Result<RenderSample> {
    if steps < 2 {
        return Err(Error::invalid("render_ray needs at least two samples"));
    }
    let mut tape = RayTape::new();
    trace_ray(grid, ray, steps, &mut tape);
    Ok(tape.to_sample())
}

/// Loss sensitivities for one ray.
#[derive(Clone, Copy, Debug, Default)]
pub struct RayAdjoint<'a> {
    pub color: Rgb,
    /// Sensitivity to the z-depth.
    pub z_depth: f64,
    /// Sensitivity to each `T_i` of the trace.
    pub trace: Option<&'a [f64]>,
}

/// Dense gradient buffer with the grid's parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(grid: &RadianceGrid) -> Self {
        Self {
            values: vec![0.0; grid.param_count()],
        }
    }

    pub fn clear(&mut self) {
        self.values.fill(0.0);
    }

    pub fn add_scaled(&mut self, other: &Gradient, k: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += k * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Accumulates `d(adjoint . outputs)/d(raw params)` of a traced ray into `grad`.
pub fn backprop_ray(grid: &RadianceGrid, tape: &RayTape, adj: &RayAdjoint<'_>, grad: &mut Gradient) {
    let n = tape.steps();
    if n == 0 {
        return;
    }
    let g_depth = adj.z_depth * tape.z_per_t;
    let gc = adj.color;
    // Suffix sums over i > j of e_i w_i and gT_i T_i.
    let mut suffix = 0.0;
    for j in (0..n).rev() {
        let t = tape.sample_t(j);
        let c = tape.color[j];
        let tj = tape.trans[j];
        let tn = tape.trans[j + 1];
        let w = tj - tn;
        let e = gc[0] * c[0] + gc[1] * c[1] + gc[2] * c[2] + g_depth * t;
        let d_tau = tn * e - suffix;
        suffix += e * w;
        if let Some(trace) = adj.trace {
            suffix += trace[j] * tj;
        }
        let d_sigma = d_tau * tape.dt;
        if d_sigma == 0.0 && w == 0.0 {
            continue;
        }
        let Some(cell) = grid.locate(&(tape.origin + t * tape.dir)) else {
            continue;
        };
        let dc = [w * gc[0], w * gc[1], w * gc[2]];
        for (o, wt) in grid.corners(&cell) {
            let g = &mut grad.values[o..o + CHANNELS];
            g[0] += wt * d_sigma * grid.activation_slope(o);
            g[1] += wt * dc[0] * grid.activation_slope(o + 1);
            g[2] += wt * dc[1] * grid.activation_slope(o + 2);
            g[3] += wt * dc[2] * grid.activation_slope(o + 3);
        }
    }
}

/// Rendered image, z-depth and opacity of a view.
#[derive(Clone, Debug)]
pub struct RenderedView {
    pub image: ColorImage,
    /// Invalid where opacity is below the floor.
    pub depth: DepthMap,
    pub opacity: Vec<f64>,
}

pub const DEFAULT_OPACITY_FLOOR: f64 = 0.5;

pub fn render_view(
    grid: &RadianceGrid,
    view: &CameraView,
    steps: usize,
    opacity_floor: f64,
) -> Result<RenderedView> {
    if steps < 2 {
        return Err(Error::invalid("render_view needs at least two samples"));
    }
    let (w, h) = view.dims();
    let mut pixels = Vec::with_capacity(w * h);
    let mut depth = DepthMap::invalid(w, h);
    let mut opacity = Vec::with_capacity(w * h);
    let mut tape = RayTape::new();
    for y in 0..h {
        for x in 0..w {
            trace_ray(grid, &view.pixel_ray(x, y), steps, &mut tape);
            pixels.push(tape.rgb);
            let a = tape.opacity();
            opacity.push(a);
            if a >= opacity_floor {
                depth.set_index(y * w + x, tape.z_depth());
            }
        }
    }
    Ok(RenderedView {
        image: ColorImage::from_pixels(w, h, pixels)?,
        depth,
        opacity,
    })
}

/// Per-pixel sensitivities of a whole view.
#[derive(Clone, Debug, Default)]
pub struct ViewAdjoints {
    pub color: Vec<Rgb>,
    pub z_depth: Vec<f64>,
    /// Per-pixel trace sensitivities; each entry must match `steps`.
    pub trace: Option<Vec<Vec<f64>>>,
}

/// Exact gradient of `sum_p adjoint_p . render_p` w.r.t. every grid parameter.
pub fn render_with_gradients(
    grid: &RadianceGrid,
    view: &CameraView,
    steps: usize,
    adjoints: &ViewAdjoints,
) -> Result<Gradient> {
    let (w, h) = view.dims();
    let n = w * h;
    if adjoints.color.len() != n || adjoints.z_depth.len() != n {
        return Err(Error::shape(n, adjoints.color.len().min(adjoints.z_depth.len())));
    }
    if let Some(tr) = &adjoints.trace {
        if tr.len() != n {
            return Err(Error::shape(n, tr.len()));
        }
    }
    let mut grad = Gradient::zeros_like(grid);
    let mut tape = RayTape::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            trace_ray(grid, &view.pixel_ray(x, y), steps, &mut tape);
            let trace = match &adjoints.trace {
                Some(tr) => {
                    let t = &tr[p];
                    if t.len() != tape.steps() && !(tape.steps() == 0 && t.is_empty()) {
                        return Err(Error::shape(tape.steps(), t.len()));
                    }
                    Some(t.as_slice())
                }
                None => None,
            };
            let adj = RayAdjoint {
                color: adjoints.color[p],
                z_depth: adjoints.z_depth[p],
                trace,
            };
            backprop_ray(grid, &tape, &adj, &mut grad);
        }
    }
    Ok(grad)
}
