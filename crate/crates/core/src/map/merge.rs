use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Gaussian3D};
use crate::loss::color_loss;
use crate::optim::{AdamState, ParamGroupConfig};
use crate::render::{backward, render, RenderConfig};

use super::{Keyframe, NeighborGrid, SubMap};

/// Concatenate finished sub-maps into one global Gaussian list, dropping
/// Gaussians that fall within `rho` of one already accepted. Sub-maps are
/// visited in creation order, so earlier sub-maps win ties.
pub fn merge_submaps(submaps: &[SubMap], rho: f64) -> Vec<Gaussian3D> {
    let mut merged: Vec<Gaussian3D> = Vec::new();
    let mut grid = NeighborGrid::new(rho.max(f64::MIN_POSITIVE));
    for submap in submaps {
        for g in &submap.gaussians {
            if rho > 0.0 && grid.has_neighbor_within(&g.mean, rho) {
                continue;
            }
            grid.insert(g.mean);
            merged.push(*g);
        }
    }
    merged
}

#[derive(Clone, Debug, Default)]
pub struct RefineReport {
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Color-only refinement of the merged map against its keyframes.
///
/// Geometry (means, rotations, scales, opacities) stays frozen; only the
/// per-Gaussian colors are optimized with Adam against the L1+SSIM color
/// objective, one uniformly sampled keyframe per iteration.
pub fn refine_global_colors(
    gaussians: &mut [Gaussian3D],
    keyframes: &[Keyframe],
    cam: &CameraIntrinsics,
    render_cfg: &RenderConfig,
    lambda_ssim: f64,
    color_lr: f64,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RefineReport> {
    let mut report = RefineReport::default();
    if gaussians.is_empty() || keyframes.is_empty() || iters == 0 {
        return Ok(report);
    }
    let cfg = ParamGroupConfig::new("color", color_lr);
    let mut state = AdamState::new(gaussians.len() * 3);
    for it in 1..=iters {
        let kf = keyframes.choose(rng).expect("non-empty keyframes");
        let frame = render(gaussians, &kf.pose, cam, render_cfg, true);
        let loss = color_loss(&frame.color, &kf.frame.color, lambda_ssim)?;
        if !loss.loss.is_finite() {
            return Err(Error::Diverged(format!(
                "color refinement loss non-finite at iteration {it}"
            )));
        }
        if it == 1 {
            report.initial_loss = loss.loss;
        }
        report.final_loss = loss.loss;
        report.iterations = it;
        let zero_scalar = crate::image2d::ScalarMap::zeros(cam.width, cam.height);
        let grads = backward(
            &frame,
            &loss.grad,
            &zero_scalar,
            &zero_scalar,
            gaussians,
            &kf.pose,
            cam,
            render_cfg,
            false,
        )?;
        let mut colors: Vec<f64> = gaussians.iter().flat_map(|g| g.color).collect();
        let color_g: Vec<f64> = grads.color.iter().flatten().copied().collect();
        state.step(&cfg, &mut colors, &color_g);
        for (i, g) in gaussians.iter_mut().enumerate() {
            g.color = [colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]];
        }
    }
    Ok(report)
}
