use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Gaussian3D};
use crate::loss::{joint_mapping_loss, IsotropicMode, LossWeights};
use crate::optim::{AdamState, GaussianLearningRates, ParamGroupConfig};
use crate::render::{backward, render, ParamGradients, RenderConfig};

use super::{MappingConfig, SubMap};

/// Adam over the five Gaussian parameter groups, with quaternion
/// renormalization after each step and state that tracks appends/prunes.
#[derive(Clone, Debug)]
pub struct GaussianAdam {
    cfg_mean: ParamGroupConfig,
    cfg_rotation: ParamGroupConfig,
    cfg_log_scales: ParamGroupConfig,
    cfg_opacity: ParamGroupConfig,
    cfg_color: ParamGroupConfig,
    mean: AdamState,
    rotation: AdamState,
    log_scales: AdamState,
    opacity: AdamState,
    color: AdamState,
}

impl GaussianAdam {
    pub fn new(lrs: &GaussianLearningRates) -> Self {
        Self {
            cfg_mean: ParamGroupConfig::new("mean", lrs.mean),
            cfg_rotation: ParamGroupConfig::new("rotation", lrs.rotation),
            cfg_log_scales: ParamGroupConfig::new("log_scales", lrs.log_scales),
            cfg_opacity: ParamGroupConfig::new("opacity_logit", lrs.opacity_logit),
            cfg_color: ParamGroupConfig::new("color", lrs.color),
            mean: AdamState::default(),
            rotation: AdamState::default(),
            log_scales: AdamState::default(),
            opacity: AdamState::default(),
            color: AdamState::default(),
        }
    }

    /// Grow moment state to cover `n` Gaussians; new entries start at zero.
    pub fn ensure_len(&mut self, n: usize) {
        self.mean.grow(n * 3);
        self.rotation.grow(n * 4);
        self.log_scales.grow(n * 3);
        self.opacity.grow(n);
        self.color.grow(n * 3);
    }

    /// Drop state for pruned Gaussians; `keep` has one flag per Gaussian.
    pub fn retain(&mut self, keep: &[bool]) {
        self.mean.retain_blocks(keep, 3);
        self.rotation.retain_blocks(keep, 4);
        self.log_scales.retain_blocks(keep, 3);
        self.opacity.retain_blocks(keep, 1);
        self.color.retain_blocks(keep, 3);
    }

    /// Apply one step to all parameter groups.
    pub fn step(&mut self, gaussians: &mut [Gaussian3D], grads: &ParamGradients) {
        let n = gaussians.len();
        assert_eq!(grads.mean.len(), n);
        self.ensure_len(n);

        let mut mean_p: Vec<f64> = gaussians
            .iter()
            .flat_map(|g| [g.mean.x, g.mean.y, g.mean.z])
            .collect();
        let mean_g: Vec<f64> = grads.mean.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        self.mean.step(&self.cfg_mean, &mut mean_p, &mean_g);

        let mut rot_p: Vec<f64> = gaussians
            .iter()
            .flat_map(|g| [g.rotation.w, g.rotation.x, g.rotation.y, g.rotation.z])
            .collect();
        let rot_g: Vec<f64> = grads.rotation.iter().flatten().copied().collect();
        self.rotation.step(&self.cfg_rotation, &mut rot_p, &rot_g);

        let mut scale_p: Vec<f64> = gaussians
            .iter()
            .flat_map(|g| [g.log_scales.x, g.log_scales.y, g.log_scales.z])
            .collect();
        let scale_g: Vec<f64> = grads
            .log_scales
            .iter()
            .flat_map(|v| [v.x, v.y, v.z])
            .collect();
        self.log_scales
            .step(&self.cfg_log_scales, &mut scale_p, &scale_g);

        let mut opac_p: Vec<f64> = gaussians.iter().map(|g| g.opacity_logit).collect();
        self.opacity
            .step(&self.cfg_opacity, &mut opac_p, &grads.opacity_logit);

        let mut color_p: Vec<f64> = gaussians.iter().flat_map(|g| g.color).collect();
        let color_g: Vec<f64> = grads.color.iter().flatten().copied().collect();
        self.color.step(&self.cfg_color, &mut color_p, &color_g);

        for (i, g) in gaussians.iter_mut().enumerate() {
            g.mean.x = mean_p[3 * i];
            g.mean.y = mean_p[3 * i + 1];
            g.mean.z = mean_p[3 * i + 2];
            g.rotation = crate::geom::Quat::new(
                rot_p[4 * i],
                rot_p[4 * i + 1],
                rot_p[4 * i + 2],
                rot_p[4 * i + 3],
            )
            .normalized();
            g.log_scales.x = scale_p[3 * i];
            g.log_scales.y = scale_p[3 * i + 1];
            g.log_scales.z = scale_p[3 * i + 2];
            g.opacity_logit = opac_p[i];
            g.color = [color_p[3 * i], color_p[3 * i + 1], color_p[3 * i + 2]];
        }
    }
}

/// Remove Gaussians with opacity below the threshold, keeping optimizer
/// state aligned. Returns the number removed.
pub fn prune_gaussians(submap: &mut SubMap, opt: &mut GaussianAdam, o_thre: f64) -> usize {
    opt.ensure_len(submap.gaussians.len());
    let keep: Vec<bool> = submap
        .gaussians
        .iter()
        .map(|g| g.opacity() >= o_thre)
        .collect();
    let removed = keep.iter().filter(|&&k| !k).count();
    if removed > 0 {
        let mut i = 0;
        submap.gaussians.retain(|_| {
            let k = keep[i];
            i += 1;
            k
        });
        opt.retain(&keep);
    }
    removed
}

#[derive(Clone, Debug, Default)]
pub struct OptimizeReport {
    pub loss_trace: Vec<f64>,
    pub pruned: usize,
}

/// Jointly optimize the active sub-map for `iters` iterations.
///
/// Each iteration renders one keyframe (the newest with probability
/// `new_kf_fraction`, otherwise uniform among the rest), applies the joint
/// mapping loss and steps all Gaussian parameters. Gaussians are pruned by
/// opacity at the midpoint and at the end.
#[allow(clippy::too_many_arguments)]
pub fn optimize_submap(
    submap: &mut SubMap,
    opt: &mut GaussianAdam,
    iters: usize,
    cfg: &MappingConfig,
    weights: &LossWeights,
    iso_mode: IsotropicMode,
    cam: &CameraIntrinsics,
    render_cfg: &RenderConfig,
    rng: &mut ChaCha8Rng,
) -> Result<OptimizeReport> {
    let mut report = OptimizeReport::default();
    if iters == 0 || submap.gaussians.is_empty() {
        return Ok(report);
    }
    let prune_points = [iters / 2, iters];
    for it in 1..=iters {
        let kf_count = submap.keyframes.len();
        let kf_idx = if kf_count == 1 || rng.gen::<f64>() < cfg.new_kf_fraction {
            kf_count - 1
        } else {
            rng.gen_range(0..kf_count - 1)
        };
        let kf = &submap.keyframes[kf_idx];
        let frame = render(&submap.gaussians, &kf.pose, cam, render_cfg, true);
        let loss = joint_mapping_loss(&frame, &kf.frame, &submap.gaussians, weights, iso_mode)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged(format!(
                "mapping loss non-finite at iteration {it}"
            )));
        }
        report.loss_trace.push(loss.total);
        let zero_alpha = crate::image2d::ScalarMap::zeros(cam.width, cam.height);
        let mut grads = backward(
            &frame,
            &loss.grad_color,
            &loss.grad_depth,
            &zero_alpha,
            &submap.gaussians,
            &kf.pose,
            cam,
            render_cfg,
            false,
        )?;
        for (g, reg) in grads.log_scales.iter_mut().zip(loss.grad_log_scales.iter()) {
            *g += reg;
        }
        opt.step(&mut submap.gaussians, &grads);
        if prune_points.contains(&it) {
            report.pruned += prune_gaussians(submap, opt, cfg.o_thre);
        }
    }
    Ok(report)
}
