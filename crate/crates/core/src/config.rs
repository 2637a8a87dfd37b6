//! Run configuration: a flat `key = value` text format with namespaced
//! keys (`mapping.d_thre`, `tracking.iters`, `dataset.depth_scale`, ...).
//! Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use crate::dataset::TrajectoryKind;
use crate::error::{Error, Result};
use crate::loss::{IsotropicMode, LossWeights};
use crate::map::{MappingConfig, RotationTrigger};
use crate::optim::GaussianLearningRates;
use crate::render::RenderConfig;
use crate::track::TrackingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DatasetKind {
    Tum,
    Generic,
    #[default]
    Synthetic,
}

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub path: Option<PathBuf>,
    pub max_frames: Option<usize>,
    /// Override for the 16-bit depth encoding (ticks per meter).
    pub depth_scale: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Synthetic,
            path: None,
            max_frames: None,
            depth_scale: None,
        }
    }
}

/// Synthetic sequence parameters (only used with `dataset.kind = synthetic`).
#[derive(Clone, Copy, Debug)]
pub struct SyntheticConfig {
    pub num_gaussians: usize,
    pub num_frames: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub scene_radius: f64,
    pub orbit: bool,
    pub orbit_radius: f64,
    pub arc_degrees: f64,
    pub line_length: f64,
    pub line_distance: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_gaussians: 400,
            num_frames: 20,
            width: 128,
            height: 128,
            focal: 120.0,
            scene_radius: 0.5,
            orbit: true,
            orbit_radius: 2.0,
            arc_degrees: 40.0,
            line_length: 0.6,
            line_distance: 2.0,
        }
    }
}

impl SyntheticConfig {
    pub fn trajectory(&self) -> TrajectoryKind {
        if self.orbit {
            TrajectoryKind::Orbit {
                radius: self.orbit_radius,
                arc_degrees: self.arc_degrees,
            }
        } else {
            TrajectoryKind::Line {
                length: self.line_length,
                distance: self.line_distance,
            }
        }
    }
}

/// Pipeline-level knobs not owned by any single module.
#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub seed: u64,
    /// Deduplication radius when merging sub-maps, meters.
    pub merge_rho: f64,
    /// Color-only refinement iterations after the merge.
    pub refine_iters: usize,
    pub refine_color_lr: f64,
    /// Evaluation stride in frames.
    pub eval_every: usize,
    pub mesh: bool,
    pub mesh_voxel: f64,
    pub mesh_truncation: f64,
    /// Meshing fusion stride in frames.
    pub mesh_every: usize,
    pub eval: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            merge_rho: 0.01,
            refine_iters: 500,
            refine_color_lr: 2.5e-3,
            eval_every: 5,
            mesh: false,
            mesh_voxel: 0.01,
            mesh_truncation: 0.04,
            mesh_every: 5,
            eval: true,
        }
    }
}

/// Full run configuration.
#[derive(Clone, Debug, Default)]
pub struct SlamConfig {
    pub dataset: DatasetConfig,
    pub synthetic: SyntheticConfig,
    pub mapping: MappingConfig,
    pub tracking: TrackingConfig,
    pub render: RenderConfig,
    pub loss: LossWeights,
    pub iso_mode: IsotropicMode,
    pub learning_rates: GaussianLearningRates,
    pub run: RunConfig,
}

impl SlamConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value': {raw}", lineno + 1))
            })?;
            cfg.apply(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Set one configuration key. Unknown keys are an error.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value for {key}: {value}")))
        }
        match key {
            "dataset.kind" => {
                self.dataset.kind = match value {
                    "tum" => DatasetKind::Tum,
                    "generic" => DatasetKind::Generic,
                    "synthetic" => DatasetKind::Synthetic,
                    _ => {
                        return Err(Error::Config(format!(
                            "dataset.kind must be tum|generic|synthetic, got {value}"
                        )))
                    }
                }
            }
            "dataset.path" => self.dataset.path = Some(PathBuf::from(value)),
            "dataset.max_frames" => self.dataset.max_frames = Some(parse(key, value)?),
            "dataset.depth_scale" => self.dataset.depth_scale = Some(parse(key, value)?),

            "synthetic.num_gaussians" => self.synthetic.num_gaussians = parse(key, value)?,
            "synthetic.num_frames" => self.synthetic.num_frames = parse(key, value)?,
            "synthetic.width" => self.synthetic.width = parse(key, value)?,
            "synthetic.height" => self.synthetic.height = parse(key, value)?,
            "synthetic.focal" => self.synthetic.focal = parse(key, value)?,
            "synthetic.scene_radius" => self.synthetic.scene_radius = parse(key, value)?,
            "synthetic.trajectory" => {
                self.synthetic.orbit = match value {
                    "orbit" => true,
                    "line" => false,
                    _ => {
                        return Err(Error::Config(format!(
                            "synthetic.trajectory must be orbit|line, got {value}"
                        )))
                    }
                }
            }
            "synthetic.orbit_radius" => self.synthetic.orbit_radius = parse(key, value)?,
            "synthetic.arc_degrees" => self.synthetic.arc_degrees = parse(key, value)?,
            "synthetic.line_length" => self.synthetic.line_length = parse(key, value)?,
            "synthetic.line_distance" => self.synthetic.line_distance = parse(key, value)?,

            "mapping.d_thre" => self.mapping.d_thre = parse(key, value)?,
            "mapping.theta_thre" => self.mapping.theta_thre = parse(key, value)?,
            "mapping.rotation_trigger" => {
                self.mapping.rotation_trigger = match value {
                    "geodesic" => RotationTrigger::Geodesic,
                    "max_euler_axis" => RotationTrigger::MaxEulerAxis,
                    _ => {
                        return Err(Error::Config(format!(
                            "mapping.rotation_trigger must be geodesic|max_euler_axis, got {value}"
                        )))
                    }
                }
            }
            "mapping.keyframe_every" => self.mapping.keyframe_every = parse(key, value)?,
            "mapping.m_uniform" => self.mapping.m_uniform = parse(key, value)?,
            "mapping.m_color" => self.mapping.m_color = parse(key, value)?,
            "mapping.m_keyframe" => self.mapping.m_keyframe = parse(key, value)?,
            "mapping.alpha_n" => self.mapping.alpha_n = parse(key, value)?,
            "mapping.rho" => self.mapping.rho = parse(key, value)?,
            "mapping.iters_first_kf" => self.mapping.iters_first_kf = parse(key, value)?,
            "mapping.iters_kf" => self.mapping.iters_kf = parse(key, value)?,
            "mapping.new_kf_fraction" => self.mapping.new_kf_fraction = parse(key, value)?,
            "mapping.o_thre" => self.mapping.o_thre = parse(key, value)?,
            "mapping.opacity_init" => self.mapping.opacity_init = parse(key, value)?,
            "mapping.color_gradient_percentile" => {
                self.mapping.color_gradient_percentile = parse(key, value)?
            }
            "mapping.scale_min" => self.mapping.scale_min = parse(key, value)?,
            "mapping.scale_max" => self.mapping.scale_max = parse(key, value)?,

            "tracking.iters" => self.tracking.iters = parse(key, value)?,
            "tracking.convergence_eps" => self.tracking.convergence_eps = parse(key, value)?,
            "tracking.inlier_multiplier" => self.tracking.inlier_multiplier = parse(key, value)?,
            "tracking.alpha_exponent" => self.tracking.alpha_exponent = parse(key, value)?,
            "tracking.lambda_c" => self.tracking.lambda_c = parse(key, value)?,
            "tracking.lr_translation" => {
                self.tracking.learning_rates.translation = parse(key, value)?
            }
            "tracking.lr_rotation" => self.tracking.learning_rates.rotation = parse(key, value)?,

            "render.tile_size" => self.render.tile_size = parse(key, value)?,
            "render.dilation" => self.render.dilation = parse(key, value)?,
            "render.alpha_clamp" => self.render.alpha_clamp = parse(key, value)?,
            "render.alpha_skip" => self.render.alpha_skip = parse(key, value)?,
            "render.transmittance_min" => self.render.transmittance_min = parse(key, value)?,
            "render.sigma_radius" => self.render.sigma_radius = parse(key, value)?,

            "loss.lambda_color" => self.loss.lambda_color = parse(key, value)?,
            "loss.lambda_depth" => self.loss.lambda_depth = parse(key, value)?,
            "loss.lambda_reg" => self.loss.lambda_reg = parse(key, value)?,
            "loss.lambda_ssim" => self.loss.lambda_ssim = parse(key, value)?,
            "loss.iso_mode" => {
                self.iso_mode = match value {
                    "per_gaussian" => IsotropicMode::PerGaussian,
                    "submap_mean" => IsotropicMode::SubmapMean,
                    _ => {
                        return Err(Error::Config(format!(
                            "loss.iso_mode must be per_gaussian|submap_mean, got {value}"
                        )))
                    }
                }
            }

            "lr.mean" => self.learning_rates.mean = parse(key, value)?,
            "lr.rotation" => self.learning_rates.rotation = parse(key, value)?,
            "lr.log_scales" => self.learning_rates.log_scales = parse(key, value)?,
            "lr.opacity" => self.learning_rates.opacity_logit = parse(key, value)?,
            "lr.color" => self.learning_rates.color = parse(key, value)?,

            "run.seed" => self.run.seed = parse(key, value)?,
            "run.merge_rho" => self.run.merge_rho = parse(key, value)?,
            "run.refine_iters" => self.run.refine_iters = parse(key, value)?,
            "run.refine_color_lr" => self.run.refine_color_lr = parse(key, value)?,
            "run.eval_every" => self.run.eval_every = parse(key, value)?,
            "run.mesh" => self.run.mesh = parse(key, value)?,
            "run.mesh_voxel" => self.run.mesh_voxel = parse(key, value)?,
            "run.mesh_truncation" => self.run.mesh_truncation = parse(key, value)?,
            "run.mesh_every" => self.run.mesh_every = parse(key, value)?,
            "run.eval" => self.run.eval = parse(key, value)?,

            _ => return Err(Error::Config(format!("unknown key: {key}"))),
        }
        Ok(())
    }

    /// The configuration re-serialized as the flat key=value format, with
    /// every key present (a run snapshot that reproduces this config).
    pub fn snapshot(&self) -> String {
        let kind = match self.dataset.kind {
            DatasetKind::Tum => "tum",
            DatasetKind::Generic => "generic",
            DatasetKind::Synthetic => "synthetic",
        };
        let mut out = String::new();
        out.push_str(&format!("dataset.kind = {kind}\n"));
        if let Some(p) = &self.dataset.path {
            out.push_str(&format!("dataset.path = {}\n", p.display()));
        }
        if let Some(m) = self.dataset.max_frames {
            out.push_str(&format!("dataset.max_frames = {m}\n"));
        }
        if let Some(s) = self.dataset.depth_scale {
            out.push_str(&format!("dataset.depth_scale = {s}\n"));
        }
        let s = &self.synthetic;
        out.push_str(&format!(
            "synthetic.num_gaussians = {}\nsynthetic.num_frames = {}\nsynthetic.width = {}\n\
             synthetic.height = {}\nsynthetic.focal = {}\nsynthetic.scene_radius = {}\n\
             synthetic.trajectory = {}\nsynthetic.orbit_radius = {}\nsynthetic.arc_degrees = {}\n\
             synthetic.line_length = {}\nsynthetic.line_distance = {}\n",
            s.num_gaussians,
            s.num_frames,
            s.width,
            s.height,
            s.focal,
            s.scene_radius,
            if s.orbit { "orbit" } else { "line" },
            s.orbit_radius,
            s.arc_degrees,
            s.line_length,
            s.line_distance
        ));
        let m = &self.mapping;
        out.push_str(&format!(
            "mapping.d_thre = {}\nmapping.theta_thre = {}\nmapping.rotation_trigger = {}\n\
             mapping.keyframe_every = {}\nmapping.m_uniform = {}\nmapping.m_color = {}\n\
             mapping.m_keyframe = {}\nmapping.alpha_n = {}\nmapping.rho = {}\n\
             mapping.iters_first_kf = {}\nmapping.iters_kf = {}\nmapping.new_kf_fraction = {}\n\
             mapping.o_thre = {}\nmapping.opacity_init = {}\n\
             mapping.color_gradient_percentile = {}\nmapping.scale_min = {}\nmapping.scale_max = {}\n",
            m.d_thre,
            m.theta_thre,
            match m.rotation_trigger {
                RotationTrigger::Geodesic => "geodesic",
                RotationTrigger::MaxEulerAxis => "max_euler_axis",
            },
            m.keyframe_every,
            m.m_uniform,
            m.m_color,
            m.m_keyframe,
            m.alpha_n,
            m.rho,
            m.iters_first_kf,
            m.iters_kf,
            m.new_kf_fraction,
            m.o_thre,
            m.opacity_init,
            m.color_gradient_percentile,
            m.scale_min,
            m.scale_max
        ));
        let t = &self.tracking;
        out.push_str(&format!(
            "tracking.iters = {}\ntracking.convergence_eps = {}\ntracking.inlier_multiplier = {}\n\
             tracking.alpha_exponent = {}\ntracking.lambda_c = {}\ntracking.lr_translation = {}\n\
             tracking.lr_rotation = {}\n",
            t.iters,
            t.convergence_eps,
            t.inlier_multiplier,
            t.alpha_exponent,
            t.lambda_c,
            t.learning_rates.translation,
            t.learning_rates.rotation
        ));
        let r = &self.render;
        out.push_str(&format!(
            "render.tile_size = {}\nrender.dilation = {}\nrender.alpha_clamp = {}\n\
             render.alpha_skip = {}\nrender.transmittance_min = {}\nrender.sigma_radius = {}\n",
            r.tile_size, r.dilation, r.alpha_clamp, r.alpha_skip, r.transmittance_min, r.sigma_radius
        ));
        let l = &self.loss;
        out.push_str(&format!(
            "loss.lambda_color = {}\nloss.lambda_depth = {}\nloss.lambda_reg = {}\n\
             loss.lambda_ssim = {}\nloss.iso_mode = {}\n",
            l.lambda_color,
            l.lambda_depth,
            l.lambda_reg,
            l.lambda_ssim,
            match self.iso_mode {
                IsotropicMode::PerGaussian => "per_gaussian",
                IsotropicMode::SubmapMean => "submap_mean",
            }
        ));
        let lr = &self.learning_rates;
        out.push_str(&format!(
            "lr.mean = {}\nlr.rotation = {}\nlr.log_scales = {}\nlr.opacity = {}\nlr.color = {}\n",
            lr.mean, lr.rotation, lr.log_scales, lr.opacity_logit, lr.color
        ));
        let run = &self.run;
        out.push_str(&format!(
            "run.seed = {}\nrun.merge_rho = {}\nrun.refine_iters = {}\nrun.refine_color_lr = {}\n\
             run.eval_every = {}\nrun.mesh = {}\nrun.mesh_voxel = {}\nrun.mesh_truncation = {}\n\
             run.mesh_every = {}\nrun.eval = {}\n",
            run.seed,
            run.merge_rho,
            run.refine_iters,
            run.refine_color_lr,
            run.eval_every,
            run.mesh,
            run.mesh_voxel,
            run.mesh_truncation,
            run.mesh_every,
            run.eval
        ));
        out
    }
}
