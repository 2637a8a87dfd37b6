//! Frame-to-model camera tracking.
//!
//! The pose of each incoming frame is initialized by constant-velocity
//! extrapolation and refined by gradient descent on a masked photometric +
//! depth objective against a render of the frozen map. Soft alpha weighting
//! suppresses poorly observed regions and a median-based inlier test drops
//! gross outliers; both masks are recomputed every iteration but treated as
//! constants by the gradient.

use crate::dataset::RGBDFrame;
use crate::error::{Error, Result};
use crate::geom::{constant_velocity_init, CameraIntrinsics, Gaussian3D, Pose, Quat};
use crate::image2d::{BoolMap, ScalarMap};
use crate::loss::tracking_loss;
use crate::optim::{AdamState, ParamGroupConfig, PoseLearningRates};
use crate::render::{backward, render, RenderConfig, RenderedFrame};

#[derive(Clone, Copy, Debug)]
pub struct TrackingConfig {
    pub iters: usize,
    /// Stop when the relative loss change falls below this.
    pub convergence_eps: f64,
    /// Inlier cutoff as a multiple of the median per-pixel error.
    pub inlier_multiplier: f64,
    /// Exponent of the rendered alpha in the soft mask.
    pub alpha_exponent: i32,
    /// Color/depth balance in the tracking objective.
    pub lambda_c: f64,
    pub learning_rates: PoseLearningRates,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            iters: 60,
            convergence_eps: 1e-6,
            inlier_multiplier: 50.0,
            alpha_exponent: 3,
            lambda_c: 0.5,
            learning_rates: PoseLearningRates::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrackingResult {
    pub pose: Pose,
    pub initial_pose: Pose,
    pub iterations: usize,
    pub final_loss: f64,
    pub converged: bool,
    /// Set when optimization never produced a usable iterate and the
    /// initialization was returned unchanged.
    pub fell_back_to_init: bool,
}

/// Soft alpha weights and median-based inlier mask for one tracking iterate.
///
/// A pixel is an inlier when its depth error and its mean color error are
/// both within `inlier_multiplier` times the respective medians over pixels
/// with valid target depth. Pixels without valid target depth are excluded.
pub fn compute_masks(
    rendered: &RenderedFrame,
    target: &RGBDFrame,
    cfg: &TrackingConfig,
) -> (ScalarMap, BoolMap) {
    let (w, h) = (rendered.width(), rendered.height());
    let mut m_alpha = ScalarMap::zeros(w, h);
    for (out, &a) in m_alpha.data_mut().iter_mut().zip(rendered.alpha.data()) {
        *out = a.max(0.0).powi(cfg.alpha_exponent);
    }

    let n = w * h;
    let mut depth_err = vec![0.0f64; n];
    let mut color_err = vec![0.0f64; n];
    let mut valid = vec![false; n];
    let mut valid_depth_errs = Vec::new();
    let mut valid_color_errs = Vec::new();
    for i in 0..n {
        if target.depth.data()[i] <= 0.0 {
            continue;
        }
        valid[i] = true;
        depth_err[i] = (rendered.depth.data()[i] - target.depth.data()[i]).abs();
        let mut ce = 0.0;
        for ch in 0..3 {
            ce += (rendered.color.data()[i][ch] - target.color.data()[i][ch]).abs();
        }
        color_err[i] = ce / 3.0;
        valid_depth_errs.push(depth_err[i]);
        valid_color_errs.push(color_err[i]);
    }

    let median = |mut v: Vec<f64>| -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let mid = v.len() / 2;
        v.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
        v[mid]
    };
    let depth_cut = cfg.inlier_multiplier * median(valid_depth_errs);
    let color_cut = cfg.inlier_multiplier * median(valid_color_errs);

    let mut m_inlier = BoolMap::new(w, h, false);
    for i in 0..n {
        if !valid[i] {
            continue;
        }
        // a zero median (e.g. perfect alignment) disables that cutoff
        let depth_ok = depth_cut <= 0.0 || depth_err[i] <= depth_cut;
        let color_ok = color_cut <= 0.0 || color_err[i] <= color_cut;
        m_inlier.data_mut()[i] = depth_ok && color_ok;
    }
    (m_alpha, m_inlier)
}

/// Optimize the camera pose of `frame` against the frozen `gaussians`.
///
/// `history` holds the two most recent estimated poses, newest first, for
/// constant-velocity initialization; with fewer than two the last (or
/// identity) pose is reused. Returns the best iterate by loss.
pub fn track_frame(
    gaussians: &[Gaussian3D],
    frame: &RGBDFrame,
    history: &[Pose],
    cam: &CameraIntrinsics,
    cfg: &TrackingConfig,
    render_cfg: &RenderConfig,
) -> Result<TrackingResult> {
    if gaussians.is_empty() {
        return Err(Error::EmptyInput("track_frame gaussians"));
    }
    let init = match history {
        [] => Pose::identity(),
        [prev] => *prev,
        [prev, prev2, ..] => constant_velocity_init(prev, prev2),
    };

    let rot_cfg = ParamGroupConfig::new("pose_rotation", cfg.learning_rates.rotation);
    let trans_cfg = ParamGroupConfig::new("pose_translation", cfg.learning_rates.translation);
    let mut rot_state = AdamState::new(4);
    let mut trans_state = AdamState::new(3);

    let mut pose = init;
    let mut best_pose = init;
    let mut best_loss = f64::INFINITY;
    let mut prev_loss = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.iters {
        iterations += 1;
        let rendered = render(gaussians, &pose, cam, render_cfg, true);
        let (m_alpha, m_inlier) = compute_masks(&rendered, frame, cfg);
        let loss = match tracking_loss(&rendered, frame, &m_alpha, &m_inlier, cfg.lambda_c) {
            Ok(l) => l,
            Err(Error::TrackingFailed(_)) => break,
            Err(e) => return Err(e),
        };
        if !loss.loss.is_finite() {
            break;
        }
        if loss.loss < best_loss {
            best_loss = loss.loss;
            best_pose = pose;
        }
        if prev_loss.is_finite() {
            let denom = prev_loss.abs().max(1e-12);
            if ((prev_loss - loss.loss) / denom).abs() < cfg.convergence_eps {
                converged = true;
                break;
            }
        }
        prev_loss = loss.loss;

        let zero_alpha = ScalarMap::zeros(cam.width, cam.height);
        let grads = backward(
            &rendered,
            &loss.grad_color,
            &loss.grad_depth,
            &zero_alpha,
            gaussians,
            &pose,
            cam,
            render_cfg,
            true,
        )?;
        let pg = grads.pose.expect("pose gradient requested");

        let mut q = [
            pose.rotation.w,
            pose.rotation.x,
            pose.rotation.y,
            pose.rotation.z,
        ];
        rot_state.step(&rot_cfg, &mut q, &pg.rotation);
        let mut t = [pose.translation.x, pose.translation.y, pose.translation.z];
        trans_state.step(
            &trans_cfg,
            &mut t,
            &[pg.translation.x, pg.translation.y, pg.translation.z],
        );
        let next = Pose::new(
            Quat::new(q[0], q[1], q[2], q[3]),
            nalgebra::Vector3::new(t[0], t[1], t[2]),
        );
        if !next.is_finite() {
            break;
        }
        pose = next;
    }

    let fell_back_to_init = !best_loss.is_finite();
    Ok(TrackingResult {
        pose: if fell_back_to_init { init } else { best_pose },
        initial_pose: init,
        iterations,
        final_loss: best_loss,
        converged,
        fell_back_to_init,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::logit;
    use crate::image2d::ColorMap;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_scene(seed: u64, n: usize) -> Vec<Gaussian3D> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Gaussian3D {
                mean: Vector3::new(
                    rng.gen_range(-0.4..0.4),
                    rng.gen_range(-0.4..0.4),
                    rng.gen_range(0.8..1.6),
                ),
                rotation: Quat::from_axis_angle(
                    Vector3::new(rng.gen(), rng.gen(), rng.gen()),
                    rng.gen_range(0.0..3.0),
                ),
                log_scales: Vector3::new(
                    rng.gen_range(-3.2..-2.4),
                    rng.gen_range(-3.2..-2.4),
                    rng.gen_range(-3.2..-2.4),
                ),
                opacity_logit: logit(rng.gen_range(0.6..0.95)),
                color: [rng.gen(), rng.gen(), rng.gen()],
            })
            .collect()
    }

    fn frame_from_render(
        gaussians: &[Gaussian3D],
        pose: &Pose,
        cam: &CameraIntrinsics,
    ) -> RGBDFrame {
        let r = render(gaussians, pose, cam, &RenderConfig::default(), false);
        let depth: Vec<f64> = r
            .alpha
            .data()
            .iter()
            .zip(r.depth.data())
            .map(|(&a, &d)| if a > 0.5 { d } else { 0.0 })
            .collect();
        RGBDFrame {
            color: r.color,
            depth: ScalarMap::from_vec(cam.width, cam.height, depth),
            timestamp: 0.0,
            gt_pose: Some(*pose),
        }
    }

    #[test]
    fn perfect_init_stays_put() {
        let cam = CameraIntrinsics::new(50.0, 50.0, 24.0, 24.0, 48, 48);
        let gaussians = test_scene(3, 120);
        let pose = Pose::identity();
        let frame = frame_from_render(&gaussians, &pose, &cam);
        let result = track_frame(
            &gaussians,
            &frame,
            &[pose],
            &cam,
            &TrackingConfig::default(),
            &RenderConfig::default(),
        )
        .unwrap();
        assert!(result.pose.translation_distance(&pose) < 1e-3);
        assert!(result.pose.rotation_angle_to(&pose) < 1e-3);
    }

    #[test]
    fn recovers_small_perturbation() {
        let cam = CameraIntrinsics::new(50.0, 50.0, 24.0, 24.0, 48, 48);
        let gaussians = test_scene(4, 150);
        let truth = Pose::identity();
        let frame = frame_from_render(&gaussians, &truth, &cam);
        let start = Pose::new(
            Quat::from_axis_angle(Vector3::y(), 0.01),
            Vector3::new(0.01, -0.005, 0.008),
        );
        let cfg = TrackingConfig {
            iters: 120,
            ..Default::default()
        };
        let result = track_frame(
            &gaussians,
            &frame,
            &[start],
            &cam,
            &cfg,
            &RenderConfig::default(),
        )
        .unwrap();
        let before = start.translation_distance(&truth);
        let after = result.pose.translation_distance(&truth);
        assert!(
            after < before,
            "translation error {before} -> {after}"
        );
        assert!(
            result.pose.rotation_angle_to(&truth) < start.rotation_angle_to(&truth),
            "rotation did not improve"
        );
    }

    #[test]
    fn constant_velocity_history_is_used() {
        let cam = CameraIntrinsics::new(50.0, 50.0, 16.0, 16.0, 32, 32);
        let gaussians = test_scene(5, 60);
        let frame = frame_from_render(&gaussians, &Pose::identity(), &cam);
        let prev2 = Pose::new(Quat::identity(), Vector3::new(0.0, 0.0, -0.02));
        let prev = Pose::new(Quat::identity(), Vector3::new(0.0, 0.0, -0.01));
        let result = track_frame(
            &gaussians,
            &frame,
            &[prev, prev2],
            &cam,
            &TrackingConfig {
                iters: 1,
                ..Default::default()
            },
            &RenderConfig::default(),
        )
        .unwrap();
        // extrapolation lands exactly on the ground truth
        assert!((result.initial_pose.translation - Vector3::zeros()).norm() < 1e-12);
    }

    #[test]
    fn empty_map_is_an_error() {
        let cam = CameraIntrinsics::new(50.0, 50.0, 16.0, 16.0, 32, 32);
        let frame = RGBDFrame {
            color: ColorMap::black(32, 32),
            depth: ScalarMap::new(32, 32, 1.0),
            timestamp: 0.0,
            gt_pose: None,
        };
        assert!(matches!(
            track_frame(
                &[],
                &frame,
                &[],
                &cam,
                &TrackingConfig::default(),
                &RenderConfig::default()
            ),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn masks_exclude_invalid_depth_and_weight_by_alpha_cube() {
        let cam = CameraIntrinsics::new(50.0, 50.0, 16.0, 16.0, 32, 32);
        let gaussians = test_scene(6, 80);
        let mut frame = frame_from_render(&gaussians, &Pose::identity(), &cam);
        frame.depth.set(0, 0, 0.0);
        let rendered = render(
            &gaussians,
            &Pose::identity(),
            &cam,
            &RenderConfig::default(),
            true,
        );
        let (m_alpha, m_inlier) = compute_masks(&rendered, &frame, &TrackingConfig::default());
        assert!(!*m_inlier.get(0, 0));
        for i in 0..m_alpha.len() {
            let a = rendered.alpha.data()[i];
            assert!((m_alpha.data()[i] - a * a * a).abs() < 1e-12);
        }
    }
}
