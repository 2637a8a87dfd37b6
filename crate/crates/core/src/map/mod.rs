//! Sub-map lifecycle: creation triggers, Gaussian seeding, optimization
//! scheduling, pruning, merging into a global map and color refinement.

mod grid;
mod io;
mod merge;
mod optimize;
mod seed;
mod submap;

pub use grid::NeighborGrid;
pub use io::{load_submap, save_submap, StoredSubMap};
pub use merge::{merge_submaps, refine_global_colors, RefineReport};
pub use optimize::{optimize_submap, prune_gaussians, GaussianAdam, OptimizeReport};
pub use seed::seed_gaussians;
pub use submap::{Keyframe, SubMap};

use crate::geom::Pose;

/// How the rotation trigger for new sub-maps is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RotationTrigger {
    /// Total geodesic rotation angle.
    #[default]
    Geodesic,
    /// Largest per-axis Euler angle (ZYX convention).
    MaxEulerAxis,
}

/// Mapping parameters. Defaults follow the real-data settings; sample
/// counts are sized for desk-scale runs and fully configurable.
#[derive(Clone, Copy, Debug)]
pub struct MappingConfig {
    /// Translation threshold for starting a new sub-map, meters.
    pub d_thre: f64,
    /// Rotation threshold for starting a new sub-map, degrees.
    pub theta_thre: f64,
    pub rotation_trigger: RotationTrigger,
    /// Every n-th frame is a keyframe.
    pub keyframe_every: usize,
    /// Uniform samples for a sub-map's first keyframe.
    pub m_uniform: usize,
    /// High-color-gradient samples for a sub-map's first keyframe.
    pub m_color: usize,
    /// Uniform samples in low-alpha regions for follow-up keyframes.
    pub m_keyframe: usize,
    /// Alpha threshold below which a pixel counts as sparsely covered.
    pub alpha_n: f64,
    /// Neighbor search radius, meters.
    pub rho: f64,
    pub iters_first_kf: usize,
    pub iters_kf: usize,
    /// Probability of optimizing the newest keyframe per iteration.
    pub new_kf_fraction: f64,
    /// Opacity pruning threshold.
    pub o_thre: f64,
    pub opacity_init: f64,
    /// Percentile of Sobel magnitude defining "high color gradient".
    pub color_gradient_percentile: f64,
    /// Scale initialization clamp, meters.
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            d_thre: 0.5,
            theta_thre: 50.0,
            rotation_trigger: RotationTrigger::Geodesic,
            keyframe_every: 5,
            m_uniform: 5000,
            m_color: 1000,
            m_keyframe: 2000,
            alpha_n: 0.6,
            rho: 0.01,
            iters_first_kf: 100,
            iters_kf: 100,
            new_kf_fraction: 0.4,
            o_thre: 0.1,
            opacity_init: 0.5,
            color_gradient_percentile: 95.0,
            scale_min: 0.005,
            scale_max: 0.1,
        }
    }
}

/// True when camera motion relative to the sub-map anchor exceeds the
/// translation or rotation threshold.
pub fn should_start_submap(current: &Pose, anchor: &Pose, cfg: &MappingConfig) -> bool {
    let translation = current.translation_distance(anchor);
    if translation > cfg.d_thre {
        return true;
    }
    let angle_deg = match cfg.rotation_trigger {
        RotationTrigger::Geodesic => current.rotation_angle_to(anchor).to_degrees(),
        RotationTrigger::MaxEulerAxis => {
            let rel = anchor.rotation.conjugate().mul(&current.rotation).normalized();
            let m = rel.to_matrix();
            // ZYX Euler extraction
            let sy = (-m[(2, 0)]).clamp(-1.0, 1.0);
            let pitch = sy.asin();
            let yaw = m[(1, 0)].atan2(m[(0, 0)]);
            let roll = m[(2, 1)].atan2(m[(2, 2)]);
            yaw.abs().max(pitch.abs()).max(roll.abs()).to_degrees()
        }
    };
    angle_deg > cfg.theta_thre
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Quat;
    use nalgebra::Vector3;

    #[test]
    fn identical_poses_do_not_trigger() {
        let p = Pose::identity();
        assert!(!should_start_submap(&p, &p, &MappingConfig::default()));
    }

    #[test]
    fn translation_beyond_half_meter_triggers() {
        let anchor = Pose::identity();
        let current = Pose::new(Quat::identity(), Vector3::new(0.6, 0.0, 0.0));
        assert!(should_start_submap(&current, &anchor, &MappingConfig::default()));
    }

    #[test]
    fn small_motion_does_not_trigger() {
        let anchor = Pose::identity();
        let current = Pose::new(
            Quat::from_axis_angle(Vector3::y(), 49.0_f64.to_radians()),
            Vector3::new(0.1, 0.0, 0.0),
        );
        assert!(!should_start_submap(&current, &anchor, &MappingConfig::default()));
    }

    #[test]
    fn rotation_beyond_threshold_triggers() {
        let anchor = Pose::identity();
        let current = Pose::new(
            Quat::from_axis_angle(Vector3::y(), 51.0_f64.to_radians()),
            Vector3::zeros(),
        );
        assert!(should_start_submap(&current, &anchor, &MappingConfig::default()));
    }
}
