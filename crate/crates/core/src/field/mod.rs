//! Dense voxel radiance field and differentiable volume rendering.

mod grid;
mod render;

pub use grid::{logistic, logit, softplus, softplus_inv, Aabb, RadianceGrid, CHANNELS};
pub use render::{
    backprop_ray, render_ray, render_view, render_with_gradients, trace_ray, Gradient, Ray,
    RayAdjoint, RayTape, RenderSample, RenderedView, ViewAdjoints, DEFAULT_OPACITY_FLOOR,
};
