//! Differentiable CPU rasterizer for 3D Gaussian splats.
//!
//! The forward pass projects Gaussians to screen space, bins them into
//! pixel tiles, depth-sorts per tile and alpha-blends color, depth and
//! accumulated alpha front-to-back. The backward pass replays the blend
//! in reverse and produces analytic gradients for every Gaussian parameter
//! and, optionally, for the camera pose.

mod backward;
mod forward;

pub use backward::{backward, ParamGradients, PoseGradient};
pub use forward::{project_gaussian, render, ProjectOutcome, ProjectedGaussian};

use nalgebra::{Matrix2, Vector2};

use crate::image2d::{ColorMap, ScalarMap};

/// Rasterization constants. The defaults follow common splatting practice.
#[derive(Clone, Copy, Debug)]
pub struct RenderConfig {
    pub tile_size: usize,
    /// Low-pass dilation added to each diagonal entry of the 2D covariance, px^2.
    pub dilation: f64,
    pub alpha_clamp: f64,
    pub alpha_skip: f64,
    pub transmittance_min: f64,
    /// Binning extent in units of the largest 2D standard deviation.
    pub sigma_radius: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            dilation: 0.3,
            alpha_clamp: 0.999,
            alpha_skip: 1.0 / 255.0,
            transmittance_min: 1e-4,
            sigma_radius: 3.0,
        }
    }
}

/// One front-to-back blending contribution at a pixel.
#[derive(Clone, Copy, Debug)]
pub struct BlendRecord {
    /// Index into `RenderedFrame::projected`.
    pub proj_index: u32,
    pub alpha: f64,
    pub transmittance: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RenderDiagnostics {
    pub culled: usize,
    pub non_finite: usize,
    pub singular: usize,
}

/// Output of the forward pass, with enough blending state to replay
/// compositing in reverse.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub color: ColorMap,
    pub depth: ScalarMap,
    pub alpha: ScalarMap,
    pub projected: Vec<ProjectedGaussian>,
    /// Per-pixel contributions in front-to-back order; empty unless
    /// rendered with records enabled.
    pub blend: Vec<Vec<BlendRecord>>,
    pub has_records: bool,
    pub diagnostics: RenderDiagnostics,
    /// Length of the source Gaussian list (gradient vector sizing).
    pub num_gaussians: usize,
}

impl RenderedFrame {
    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }
}

#[inline]
pub(crate) fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    0.5 * (m + m.transpose())
}

#[inline]
pub(crate) fn largest_eigenvalue2(m: &Matrix2<f64>) -> f64 {
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    mid + (mid * mid - det).max(0.0).sqrt()
}

#[inline]
pub(crate) fn pixel_coord(x: usize, y: usize) -> Vector2<f64> {
    Vector2::new(x as f64, y as f64)
}
