//! Run evaluation: trajectory error with rigid alignment, photometric
//! quality of re-rendered frames, and depth accuracy.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::dataset::RGBDFrame;
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Gaussian3D, Pose};
use crate::image2d::ColorMap;
use crate::loss::{depth_l1, ssim};
use crate::render::{render, RenderConfig};

/// PSNR reported for identical images, dB.
pub const PSNR_CAP: f64 = 100.0;

/// Peak signal-to-noise ratio over all pixels and channels, images in [0,1].
pub fn psnr(a: &ColorMap, b: &ColorMap) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("psnr images".into()));
    }
    if a.len() == 0 {
        return Err(Error::EmptyInput("psnr images"));
    }
    let n = (a.len() * 3) as f64;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(pa, pb)| {
            (0..3)
                .map(|ch| (pa[ch] - pb[ch]) * (pa[ch] - pb[ch]))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Closed-form rigid alignment (rotation + translation, no scale) of
/// `source` points onto `target`, minimizing the sum of squared distances.
pub fn rigid_align(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if source.len() != target.len() {
        return Err(Error::ShapeMismatch("rigid_align point counts".into()));
    }
    if source.len() < 2 {
        return Err(Error::EmptyInput("rigid_align needs >= 2 points"));
    }
    let n = source.len() as f64;
    let sc: Vector3<f64> = source.iter().sum::<Vector3<f64>>() / n;
    let tc: Vector3<f64> = target.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target.iter()) {
        h += (t - tc) * (s - sc).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or(Error::NonFinite("rigid_align svd"))?;
    let v_t = svd.v_t.ok_or(Error::NonFinite("rigid_align svd"))?;
    let d = (u * v_t).determinant();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum()));
    let r = u * correction * v_t;
    let t = tc - r * sc;
    Ok((r, t))
}

/// Absolute trajectory error: RMSE of camera-center distances after rigid
/// alignment, in centimeters.
pub fn ate_rmse(estimated: &[Pose], ground_truth: &[Pose]) -> Result<f64> {
    if estimated.len() != ground_truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "trajectory lengths {} vs {}",
            estimated.len(),
            ground_truth.len()
        )));
    }
    let est: Vec<Vector3<f64>> = estimated.iter().map(Pose::center).collect();
    let gt: Vec<Vector3<f64>> = ground_truth.iter().map(Pose::center).collect();
    let (r, t) = rigid_align(&est, &gt)?;
    let mse: f64 = est
        .iter()
        .zip(gt.iter())
        .map(|(e, g)| (r * e + t - g).norm_squared())
        .sum::<f64>()
        / est.len() as f64;
    Ok(mse.sqrt() * 100.0)
}

#[derive(Clone, Debug, Default)]
pub struct MetricReport {
    /// Centimeters; absent without ground truth.
    pub ate_rmse_cm: Option<f64>,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    /// Centimeters, over valid-depth pixels.
    pub depth_l1_cm: f64,
    /// Frame indices that were rendered and scored.
    pub frame_indices: Vec<usize>,
    pub psnr_per_frame: Vec<f64>,
    pub ssim_per_frame: Vec<f64>,
    pub depth_l1_cm_per_frame: Vec<f64>,
}

impl MetricReport {
    /// Machine-readable flat key=value form.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        if let Some(ate) = self.ate_rmse_cm {
            out.push_str(&format!("ate_rmse_cm={ate:.6}\n"));
        }
        out.push_str(&format!("psnr_mean_db={:.6}\n", self.psnr_mean));
        out.push_str(&format!("ssim_mean={:.6}\n", self.ssim_mean));
        out.push_str(&format!("depth_l1_cm={:.6}\n", self.depth_l1_cm));
        out.push_str(&format!("eval_frames={}\n", self.frame_indices.len()));
        for (i, &f) in self.frame_indices.iter().enumerate() {
            out.push_str(&format!(
                "frame_{f}_psnr_db={:.6}\nframe_{f}_ssim={:.6}\nframe_{f}_depth_l1_cm={:.6}\n",
                self.psnr_per_frame[i], self.ssim_per_frame[i], self.depth_l1_cm_per_frame[i]
            ));
        }
        out
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::from("metric            value\n");
        if let Some(ate) = self.ate_rmse_cm {
            out.push_str(&format!("ate_rmse_cm       {ate:.3}\n"));
        } else {
            out.push_str("ate_rmse_cm       n/a (no ground truth)\n");
        }
        out.push_str(&format!("psnr_mean_db      {:.3}\n", self.psnr_mean));
        out.push_str(&format!("ssim_mean         {:.4}\n", self.ssim_mean));
        out.push_str(&format!("depth_l1_cm       {:.3}\n", self.depth_l1_cm));
        out.push_str(&format!("eval_frames       {}\n", self.frame_indices.len()));
        out
    }
}

/// Render every `every_n`-th frame from the global map at its estimated
/// pose and score it against the input sequence. ATE is included when every
/// evaluated frame has ground truth and at least two frames are evaluated.
pub fn evaluate_run(
    gaussians: &[Gaussian3D],
    estimated: &[Pose],
    frames: &[RGBDFrame],
    cam: &CameraIntrinsics,
    render_cfg: &RenderConfig,
    every_n: usize,
) -> Result<MetricReport> {
    if estimated.len() != frames.len() {
        return Err(Error::ShapeMismatch(format!(
            "poses {} vs frames {}",
            estimated.len(),
            frames.len()
        )));
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput("evaluate_run frames"));
    }
    let every_n = every_n.max(1);
    let indices: Vec<usize> = (0..frames.len()).step_by(every_n).collect();

    let per_frame: Vec<(f64, f64, f64)> = indices
        .par_iter()
        .map(|&i| -> Result<(f64, f64, f64)> {
            let rendered = render(gaussians, &estimated[i], cam, render_cfg, false);
            let p = psnr(&rendered.color, &frames[i].color)?;
            let s = ssim(&rendered.color, &frames[i].color)?.mean;
            let valid = frames[i].valid_depth_mask();
            let d = depth_l1(&rendered.depth, &frames[i].depth, &valid)?.loss * 100.0;
            Ok((p, s, d))
        })
        .collect::<Result<_>>()?;

    let n = per_frame.len() as f64;
    let mut report = MetricReport {
        psnr_mean: per_frame.iter().map(|x| x.0).sum::<f64>() / n,
        ssim_mean: per_frame.iter().map(|x| x.1).sum::<f64>() / n,
        depth_l1_cm: per_frame.iter().map(|x| x.2).sum::<f64>() / n,
        psnr_per_frame: per_frame.iter().map(|x| x.0).collect(),
        ssim_per_frame: per_frame.iter().map(|x| x.1).collect(),
        depth_l1_cm_per_frame: per_frame.iter().map(|x| x.2).collect(),
        frame_indices: indices.clone(),
        ate_rmse_cm: None,
    };

    let gt: Option<Vec<Pose>> = indices
        .iter()
        .map(|&i| frames[i].gt_pose)
        .collect();
    if let Some(gt) = gt {
        if gt.len() >= 2 {
            let est: Vec<Pose> = indices.iter().map(|&i| estimated[i]).collect();
            report.ate_rmse_cm = Some(ate_rmse(&est, &gt)?);
        }
    }
    Ok(report)
}

/// Estimated trajectory in TUM format (camera-to-world), one line per pose.
pub fn format_trajectory(timestamps: &[f64], poses: &[Pose]) -> String {
    timestamps
        .iter()
        .zip(poses.iter())
        .map(|(&t, p)| crate::dataset::format_trajectory_line(t, p))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Quat;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng) -> Pose {
        Pose::new(
            Quat::from_axis_angle(
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                rng.gen_range(-3.0..3.0),
            ),
            Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
        )
    }

    #[test]
    fn psnr_identical_hits_cap() {
        let img = ColorMap::new(8, 8, [0.3, 0.5, 0.7]);
        assert_eq!(psnr(&img, &img).unwrap(), 100.0);
    }

    #[test]
    fn psnr_known_mse() {
        // uniform offset 0.1 in every channel: MSE = 0.01 -> 20 dB
        let a = ColorMap::new(8, 8, [0.4; 3]);
        let b = ColorMap::new(8, 8, [0.5; 3]);
        assert_abs_diff_eq!(psnr(&a, &b).unwrap(), 20.0, epsilon = 1e-9);
        // offset 0.01: MSE = 1e-4 -> 40 dB
        let c = ColorMap::new(8, 8, [0.41; 3]);
        assert_abs_diff_eq!(psnr(&a, &c).unwrap(), 40.0, epsilon = 1e-6);
    }

    #[test]
    fn psnr_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ColorMap::from_vec(4, 4, (0..16).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect());
        let b = ColorMap::from_vec(4, 4, (0..16).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect());
        assert_abs_diff_eq!(
            psnr(&a, &b).unwrap(),
            psnr(&b, &a).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ate_identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let traj: Vec<Pose> = (0..10).map(|_| random_pose(&mut rng)).collect();
        assert_abs_diff_eq!(ate_rmse(&traj, &traj).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn ate_absorbs_rigid_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt: Vec<Pose> = (0..12).map(|_| random_pose(&mut rng)).collect();
        let offset = random_pose(&mut rng);
        // transform every pose by the same rigid motion
        let est: Vec<Pose> = gt.iter().map(|p| p.compose(&offset)).collect();
        assert!(ate_rmse(&est, &gt).unwrap() < 1e-6);
    }

    #[test]
    fn ate_invariant_under_common_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt: Vec<Pose> = (0..8).map(|_| random_pose(&mut rng)).collect();
        let est: Vec<Pose> = gt
            .iter()
            .map(|p| {
                Pose::new(
                    p.rotation,
                    p.translation + Vector3::new(rng.gen_range(-0.01..0.01), 0.0, 0.0),
                )
            })
            .collect();
        let base = ate_rmse(&est, &gt).unwrap();
        let common = random_pose(&mut rng);
        let gt2: Vec<Pose> = gt.iter().map(|p| p.compose(&common)).collect();
        let est2: Vec<Pose> = est.iter().map(|p| p.compose(&common)).collect();
        assert_abs_diff_eq!(ate_rmse(&est2, &gt2).unwrap(), base, epsilon = 1e-6);
    }

    #[test]
    fn ate_matches_brute_force_on_tiny_instance() {
        // three coplanar points with one 2 cm outlier: grid-search over
        // z-rotation + translation and compare with the closed form
        let gt_centers = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let est_centers = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.02, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let to_pose = |c: &Vector3<f64>| Pose::new(Quat::identity(), -c);
        let gt: Vec<Pose> = gt_centers.iter().map(to_pose).collect();
        let est: Vec<Pose> = est_centers.iter().map(to_pose).collect();
        let closed = ate_rmse(&est, &gt).unwrap();

        // brute force: for a fixed rotation the optimal translation matches
        // the centroids, so only scan rotation about z (the data is planar)
        let mut best = f64::INFINITY;
        let n = est_centers.len() as f64;
        let sc: Vector3<f64> = est_centers.iter().sum::<Vector3<f64>>() / n;
        let tc: Vector3<f64> = gt_centers.iter().sum::<Vector3<f64>>() / n;
        let steps = 2_000_000;
        for k in 0..steps {
            let th = (k as f64 / steps as f64 - 0.5) * 0.2;
            let r = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), th);
            let mse: f64 = est_centers
                .iter()
                .zip(gt_centers.iter())
                .map(|(e, g)| (r * (e - sc) + tc - g).norm_squared())
                .sum::<f64>()
                / n;
            best = best.min(mse.sqrt() * 100.0);
        }
        assert_abs_diff_eq!(closed, best, epsilon = 1e-6);
    }

    #[test]
    fn ate_length_mismatch_errors() {
        let p = Pose::identity();
        assert!(ate_rmse(&[p, p], &[p]).is_err());
    }

    #[test]
    fn evaluate_perfect_map_is_a_fixed_point() {
        use crate::geom::{logit, Gaussian3D};
        use crate::image2d::ScalarMap;
        let cam = CameraIntrinsics::new(40.0, 40.0, 16.0, 16.0, 32, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gaussians: Vec<Gaussian3D> = (0..40)
            .map(|_| Gaussian3D {
                mean: Vector3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(0.8..1.2),
                ),
                rotation: Quat::identity(),
                log_scales: Vector3::new(0.06f64.ln(), 0.06f64.ln(), 0.06f64.ln()),
                opacity_logit: logit(0.8),
                color: [rng.gen(), rng.gen(), rng.gen()],
            })
            .collect();
        let render_cfg = RenderConfig::default();
        let poses = [
            Pose::identity(),
            Pose::new(Quat::identity(), Vector3::new(0.02, 0.0, 0.0)),
        ];
        let frames: Vec<RGBDFrame> = poses
            .iter()
            .map(|p| {
                let r = render(&gaussians, p, &cam, &render_cfg, false);
                RGBDFrame {
                    color: r.color,
                    depth: ScalarMap::from_vec(
                        32,
                        32,
                        r.alpha
                            .data()
                            .iter()
                            .zip(r.depth.data())
                            .map(|(&a, &d)| if a > 0.5 { d } else { 0.0 })
                            .collect(),
                    ),
                    timestamp: 0.0,
                    gt_pose: Some(*p),
                }
            })
            .collect();
        let report = evaluate_run(&gaussians, &poses, &frames, &cam, &render_cfg, 1).unwrap();
        assert_eq!(report.psnr_mean, 100.0);
        // rendered depth in masked regions matches the stored depth exactly
        assert!(report.depth_l1_cm < 1e-9);
        assert!(report.ate_rmse_cm.unwrap() < 1e-9);
        assert!(report.ssim_mean > 0.999);

        // every_n sub-sampling keeps per-frame values on shared frames
        let every2 = evaluate_run(&gaussians, &poses, &frames, &cam, &render_cfg, 2).unwrap();
        assert_eq!(every2.frame_indices, vec![0]);
        assert_eq!(every2.psnr_per_frame[0], report.psnr_per_frame[0]);
    }
}
