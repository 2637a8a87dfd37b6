//! Scalar objectives with analytic gradients w.r.t. the rendered maps:
//! depth L1, color L1+SSIM, isotropic scale regularization, the joint
//! mapping loss, and the masked tracking loss.

pub mod ssim;

pub use ssim::{ssim, ssim_plane, SsimPlane, SsimResult};

use crate::dataset::RGBDFrame;
use crate::error::{Error, Result};
use crate::geom::Gaussian3D;
use crate::image2d::{BoolMap, ColorMap, ScalarMap};
use crate::render::RenderedFrame;
use nalgebra::Vector3;

/// Weights for the mapping and tracking objectives.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub lambda_color: f64,
    pub lambda_depth: f64,
    pub lambda_reg: f64,
    /// SSIM share inside the color loss.
    pub lambda_ssim: f64,
    /// Color/depth balance in the tracking loss.
    pub lambda_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_color: 1.0,
            lambda_depth: 1.0,
            lambda_reg: 1.0,
            lambda_ssim: 0.2,
            lambda_c: 0.5,
        }
    }
}

/// How the reference scale in the isotropic regularizer is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IsotropicMode {
    /// Mean of each Gaussian's own three scale components.
    #[default]
    PerGaussian,
    /// Per-axis mean over the whole sub-map.
    SubmapMean,
}

pub struct DepthL1 {
    pub loss: f64,
    pub grad: ScalarMap,
    /// Set when the valid mask was empty.
    pub empty_mask: bool,
}

/// Mean absolute depth error over valid pixels.
pub fn depth_l1(rendered: &ScalarMap, target: &ScalarMap, valid: &BoolMap) -> Result<DepthL1> {
    if !rendered.same_shape(target) || !rendered.same_shape(valid) {
        return Err(Error::ShapeMismatch("depth_l1 inputs".into()));
    }
    let n = valid.data().iter().filter(|&&v| v).count();
    let mut grad = ScalarMap::zeros(rendered.width(), rendered.height());
    if n == 0 {
        return Ok(DepthL1 {
            loss: 0.0,
            grad,
            empty_mask: true,
        });
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    for i in 0..rendered.len() {
        if valid.data()[i] {
            let e = rendered.data()[i] - target.data()[i];
            loss += e.abs() * inv;
            grad.data_mut()[i] = e.signum() * inv;
        }
    }
    Ok(DepthL1 {
        loss,
        grad,
        empty_mask: false,
    })
}

pub struct ColorLoss {
    pub loss: f64,
    pub grad: ColorMap,
    pub ssim_value: f64,
}

/// Weighted L1 + SSIM color objective: (1-λ)·mean|Î-I| + λ·(1-SSIM).
pub fn color_loss(rendered: &ColorMap, target: &ColorMap, lambda_ssim: f64) -> Result<ColorLoss> {
    if !rendered.same_shape(target) {
        return Err(Error::ShapeMismatch("color_loss images".into()));
    }
    let n = (rendered.len() * 3) as f64;
    let mut l1 = 0.0;
    let mut grad = ColorMap::black(rendered.width(), rendered.height());
    for i in 0..rendered.len() {
        for ch in 0..3 {
            let e = rendered.data()[i][ch] - target.data()[i][ch];
            l1 += e.abs() / n;
            grad.data_mut()[i][ch] = (1.0 - lambda_ssim) * e.signum() / n;
        }
    }
    let s = ssim(rendered, target)?;
    for i in 0..rendered.len() {
        for ch in 0..3 {
            grad.data_mut()[i][ch] -= lambda_ssim * s.grad.data()[i][ch];
        }
    }
    Ok(ColorLoss {
        loss: (1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - s.mean),
        grad,
        ssim_value: s.mean,
    })
}

pub struct IsotropicReg {
    pub loss: f64,
    /// Gradient w.r.t. each Gaussian's log-scales.
    pub grad_log_scales: Vec<Vector3<f64>>,
}

/// Anisotropy penalty: mean L1 distance of realized scales from the
/// reference scale, chained through the exp storage.
pub fn isotropic_reg(gaussians: &[Gaussian3D], mode: IsotropicMode) -> IsotropicReg {
    let n = gaussians.len();
    if n == 0 {
        return IsotropicReg {
            loss: 0.0,
            grad_log_scales: Vec::new(),
        };
    }
    let inv = 1.0 / n as f64;
    let scales: Vec<Vector3<f64>> = gaussians.iter().map(|g| g.scales()).collect();
    let mut loss = 0.0;
    let mut grad = vec![Vector3::zeros(); n];
    match mode {
        IsotropicMode::PerGaussian => {
            for (k, s) in scales.iter().enumerate() {
                let mean = (s.x + s.y + s.z) / 3.0;
                let signs = Vector3::new(
                    (s.x - mean).signum() * (s.x - mean != 0.0) as u8 as f64,
                    (s.y - mean).signum() * (s.y - mean != 0.0) as u8 as f64,
                    (s.z - mean).signum() * (s.z - mean != 0.0) as u8 as f64,
                );
                loss += ((s.x - mean).abs() + (s.y - mean).abs() + (s.z - mean).abs()) * inv;
                let sign_sum = signs.x + signs.y + signs.z;
                for i in 0..3 {
                    // d/ds_i of sum_j |s_j - mean|, mean depends on s_i
                    let d = signs[i] - sign_sum / 3.0;
                    grad[k][i] = inv * d * s[i];
                }
            }
        }
        IsotropicMode::SubmapMean => {
            let mut mean = Vector3::zeros();
            for s in &scales {
                mean += s * inv;
            }
            let mut sign_sums = Vector3::<f64>::zeros();
            let mut signs = vec![Vector3::<f64>::zeros(); n];
            for (k, s) in scales.iter().enumerate() {
                for i in 0..3 {
                    let e: f64 = s[i] - mean[i];
                    loss += e.abs() * inv;
                    signs[k][i] = if e == 0.0 { 0.0 } else { e.signum() };
                    sign_sums[i] += signs[k][i];
                }
            }
            for (k, s) in scales.iter().enumerate() {
                for i in 0..3 {
                    let d = signs[k][i] - sign_sums[i] * inv;
                    grad[k][i] = inv * d * s[i];
                }
            }
        }
    }
    IsotropicReg {
        loss,
        grad_log_scales: grad,
    }
}

pub struct TrackingLoss {
    pub loss: f64,
    pub grad_color: ColorMap,
    pub grad_depth: ScalarMap,
    pub masked_pixel_count: usize,
}

/// Masked tracking objective, summed over pixels:
/// Σ M_inlier · M_alpha · (λ_c · mean_ch|Î-I| + (1-λ_c)·|D̂-D|).
pub fn tracking_loss(
    rendered: &RenderedFrame,
    target: &RGBDFrame,
    m_alpha: &ScalarMap,
    m_inlier: &BoolMap,
    lambda_c: f64,
) -> Result<TrackingLoss> {
    if !rendered.color.same_shape(&target.color) || !m_alpha.same_shape(&target.depth) {
        return Err(Error::ShapeMismatch("tracking_loss inputs".into()));
    }
    let active = m_inlier.data().iter().filter(|&&v| v).count();
    if active == 0 {
        return Err(Error::TrackingFailed("all pixels masked out".into()));
    }
    let (w, h) = (rendered.width(), rendered.height());
    let mut loss = 0.0;
    let mut grad_color = ColorMap::black(w, h);
    let mut grad_depth = ScalarMap::zeros(w, h);
    for i in 0..w * h {
        if !m_inlier.data()[i] {
            continue;
        }
        let wgt = m_alpha.data()[i];
        if wgt == 0.0 {
            continue;
        }
        let mut cerr = 0.0;
        for ch in 0..3 {
            let e = rendered.color.data()[i][ch] - target.color.data()[i][ch];
            cerr += e.abs() / 3.0;
            grad_color.data_mut()[i][ch] = wgt * lambda_c * e.signum() / 3.0;
        }
        let de = rendered.depth.data()[i] - target.depth.data()[i];
        grad_depth.data_mut()[i] = wgt * (1.0 - lambda_c) * de.signum();
        loss += wgt * (lambda_c * cerr + (1.0 - lambda_c) * de.abs());
    }
    Ok(TrackingLoss {
        loss,
        grad_color,
        grad_depth,
        masked_pixel_count: active,
    })
}

pub struct MappingLoss {
    pub total: f64,
    pub color: f64,
    pub depth: f64,
    pub reg: f64,
    pub ssim_value: f64,
    pub grad_color: ColorMap,
    pub grad_depth: ScalarMap,
    pub grad_log_scales: Vec<Vector3<f64>>,
}

/// Joint mapping objective: λ_color·L_color + λ_depth·L_depth + λ_reg·L_reg,
/// with the depth term restricted to valid-depth pixels.
pub fn joint_mapping_loss(
    rendered: &RenderedFrame,
    keyframe: &RGBDFrame,
    gaussians: &[Gaussian3D],
    weights: &LossWeights,
    iso_mode: IsotropicMode,
) -> Result<MappingLoss> {
    let valid = keyframe.valid_depth_mask();
    let c = color_loss(&rendered.color, &keyframe.color, weights.lambda_ssim)?;
    let d = depth_l1(&rendered.depth, &keyframe.depth, &valid)?;
    let r = isotropic_reg(gaussians, iso_mode);

    let mut grad_color = c.grad;
    for px in grad_color.data_mut() {
        for v in px.iter_mut() {
            *v *= weights.lambda_color;
        }
    }
    let mut grad_depth = d.grad;
    for v in grad_depth.data_mut() {
        *v *= weights.lambda_depth;
    }
    let grad_log_scales = r
        .grad_log_scales
        .iter()
        .map(|g| g * weights.lambda_reg)
        .collect();

    Ok(MappingLoss {
        total: weights.lambda_color * c.loss + weights.lambda_depth * d.loss
            + weights.lambda_reg * r.loss,
        color: c.loss,
        depth: d.loss,
        reg: r.loss,
        ssim_value: c.ssim_value,
        grad_color,
        grad_depth,
        grad_log_scales,
    })
}
