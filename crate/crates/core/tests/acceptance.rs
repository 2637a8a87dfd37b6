//! End-to-end quality gates. Each test covers one release criterion and
//! prints a single PASS/FAIL line for it.

use std::sync::Arc;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatmap_core::config::SlamConfig;
use splatmap_core::dataset::RGBDFrame;
use splatmap_core::geom::{logit, sigmoid, CameraIntrinsics, Gaussian3D, Pose, Quat};
use splatmap_core::image2d::{ColorMap, ScalarMap};
use splatmap_core::loss::{
    joint_mapping_loss, ssim, tracking_loss, IsotropicMode, LossWeights,
};
use splatmap_core::map::{
    prune_gaussians, seed_gaussians, GaussianAdam, MappingConfig, NeighborGrid, SubMap,
};
use splatmap_core::metrics::{ate_rmse, psnr};
use splatmap_core::optim::GaussianLearningRates;
use splatmap_core::pipeline::run_slam;
use splatmap_core::render::{backward, render, RenderConfig};
use splatmap_core::track::{compute_masks, track_frame, TrackingConfig};
use splatmap_core::tsdf::{extract_mesh, TSDFVolume};

fn report(criterion: u32, desc: &str, pass: bool) {
    println!(
        "criterion {criterion:2} | {desc}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {desc}");
}

fn small_cam() -> CameraIntrinsics {
    CameraIntrinsics::new(35.0, 35.0, 16.0, 16.0, 32, 32)
}

fn random_quat(rng: &mut ChaCha8Rng) -> Quat {
    Quat::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
    .normalized()
}

#[allow(clippy::too_many_arguments)]
fn random_cloud(
    rng: &mut ChaCha8Rng,
    n: usize,
    spread: f64,
    z_near: f64,
    z_far: f64,
    opacity_lo: f64,
    opacity_hi: f64,
    scale_lo: f64,
    scale_hi: f64,
) -> Vec<Gaussian3D> {
    (0..n)
        .map(|_| Gaussian3D {
            mean: Vector3::new(
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
                rng.gen_range(z_near..z_far),
            ),
            rotation: random_quat(rng),
            log_scales: Vector3::new(
                rng.gen_range(scale_lo..scale_hi).ln(),
                rng.gen_range(scale_lo..scale_hi).ln(),
                rng.gen_range(scale_lo..scale_hi).ln(),
            ),
            opacity_logit: logit(rng.gen_range(opacity_lo..opacity_hi)),
            color: [
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
            ],
        })
        .collect()
}

/// Render a ground-truth RGBD observation; depth below the alpha cutoff is
/// marked invalid.
fn frame_from_render(
    gaussians: &[Gaussian3D],
    pose: &Pose,
    cam: &CameraIntrinsics,
    rcfg: &RenderConfig,
    alpha_min: f64,
) -> RGBDFrame {
    let r = render(gaussians, pose, cam, rcfg, false);
    let mut depth = r.depth;
    for (d, &a) in depth.data_mut().iter_mut().zip(r.alpha.data()) {
        if a < alpha_min {
            *d = 0.0;
        }
    }
    RGBDFrame {
        color: r.color,
        depth,
        timestamp: 0.0,
        gt_pose: Some(*pose),
    }
}

/// 14 scalar parameters per Gaussian: mean(3), raw quaternion(4),
/// log scales(3), opacity logit(1), color(3).
const PARAMS_PER_GAUSSIAN: usize = 14;

fn with_param(gaussians: &[Gaussian3D], k: usize, p: usize, h: f64) -> Vec<Gaussian3D> {
    let mut out = gaussians.to_vec();
    let g = &mut out[k];
    match p {
        0..=2 => g.mean[p] += h,
        3 => g.rotation.w += h,
        4 => g.rotation.x += h,
        5 => g.rotation.y += h,
        6 => g.rotation.z += h,
        7..=9 => g.log_scales[p - 7] += h,
        10 => g.opacity_logit += h,
        _ => g.color[p - 11] += h,
    }
    out
}

fn pose_with(pose: &Pose, p: usize, h: f64) -> Pose {
    let mut q = pose.rotation;
    let mut t = pose.translation;
    match p {
        0 => q.w += h,
        1 => q.x += h,
        2 => q.y += h,
        3 => q.z += h,
        _ => t[p - 4] += h,
    }
    Pose::new(q, t)
}

struct GradCheck {
    checked: usize,
    failures: usize,
    /// Points where the finite difference is not self-consistent: the
    /// objective has a kink (an |x| crossing zero) inside the bracket.
    kinks: usize,
    worst: f64,
    samples: Vec<String>,
}

const FD_STEP: f64 = 1e-5;

impl GradCheck {
    fn new() -> Self {
        Self {
            checked: 0,
            failures: 0,
            kinks: 0,
            worst: 0.0,
            samples: Vec::new(),
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs())
    }

    /// Compare `analytic` against a central difference; `fd_at` evaluates
    /// (f(x+h) - f(x-h)) / 2h for a given h.
    fn check(&mut self, analytic: f64, what: &str, mut fd_at: impl FnMut(f64) -> f64) {
        let fd = fd_at(FD_STEP);
        if analytic.abs().max(fd.abs()) < 1e-5 {
            // both effectively zero; difference noise dominates
            if (analytic - fd).abs() > 1e-6 {
                self.failures += 1;
            }
            return;
        }
        if Self::rel(analytic, fd) < 1e-4 {
            self.checked += 1;
            self.worst = self.worst.max(Self::rel(analytic, fd));
            return;
        }
        // suspicious point: re-estimate with a smaller step
        let fd2 = fd_at(FD_STEP / 4.0);
        if Self::rel(analytic, fd2) < 1e-4 {
            // plain truncation error in the first estimate
            self.checked += 1;
            self.worst = self.worst.max(Self::rel(analytic, fd2));
            return;
        }
        if (fd - fd2).abs() > 1e-3 * fd.abs().max(fd2.abs()).max(1e-6) {
            // the difference quotient itself does not converge: kink in
            // the bracket, not evidence against the analytic gradient
            self.kinks += 1;
            return;
        }
        self.checked += 1;
        self.worst = self.worst.max(Self::rel(analytic, fd2));
        self.failures += 1;
        if self.samples.len() < 8 {
            self.samples.push(format!(
                "{what}: analytic {analytic:+.6e} fd {fd2:+.6e} rel {:.2e}",
                Self::rel(analytic, fd2)
            ));
        }
    }
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let cam = small_cam();
    let rcfg = RenderConfig::default();
    let weights = LossWeights::default();
    let tcfg = TrackingConfig::default();
    let zero = ScalarMap::zeros(cam.width, cam.height);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut map_check = GradCheck::new();
    let mut track_check = GradCheck::new();
    let mut pose_check = GradCheck::new();

    for _scene in 0..20 {
        let n = rng.gen_range(8..=14);
        let gaussians = random_cloud(&mut rng, n, 0.45, 1.2, 2.6, 0.08, 0.30, 0.06, 0.14);
        let mut jittered = gaussians.clone();
        for g in &mut jittered {
            g.mean += Vector3::new(
                rng.gen_range(-0.02..0.02),
                rng.gen_range(-0.02..0.02),
                rng.gen_range(-0.02..0.02),
            );
            for c in &mut g.color {
                *c = (*c + rng.gen_range(-0.06..0.06)).clamp(0.0, 1.0);
            }
        }
        let pose = Pose::identity();
        let mut target = frame_from_render(&jittered, &pose, &cam, &rcfg, 0.08);
        // bias the observation so per-pixel errors stay away from zero and
        // the L1 terms are differentiable at the evaluation point
        for px in target.color.data_mut() {
            for c in px.iter_mut() {
                *c += 0.07;
            }
        }
        for d in target.depth.data_mut() {
            if *d > 0.0 {
                *d += 0.04;
            }
        }

        // joint mapping objective over all Gaussian parameters
        let frame = render(&gaussians, &pose, &cam, &rcfg, true);
        let ml = joint_mapping_loss(
            &frame,
            &target,
            &gaussians,
            &weights,
            IsotropicMode::PerGaussian,
        )
        .unwrap();
        let grads = backward(
            &frame,
            &ml.grad_color,
            &ml.grad_depth,
            &zero,
            &gaussians,
            &pose,
            &cam,
            &rcfg,
            false,
        )
        .unwrap();
        let map_total = |gs: &[Gaussian3D]| {
            let f = render(gs, &pose, &cam, &rcfg, false);
            joint_mapping_loss(&f, &target, gs, &weights, IsotropicMode::PerGaussian)
                .unwrap()
                .total
        };
        for k in 0..n {
            for p in 0..PARAMS_PER_GAUSSIAN {
                let analytic = match p {
                    0..=2 => grads.mean[k][p],
                    3..=6 => grads.rotation[k][p - 3],
                    7..=9 => grads.log_scales[k][p - 7] + ml.grad_log_scales[k][p - 7],
                    10 => grads.opacity_logit[k],
                    _ => grads.color[k][p - 11],
                };
                map_check.check(analytic, &format!("scene {_scene} map g{k} p{p}"), |h| {
                    (map_total(&with_param(&gaussians, k, p, h))
                        - map_total(&with_param(&gaussians, k, p, -h)))
                        / (2.0 * h)
                });
            }
        }

        // tracking objective over Gaussian parameters and the camera pose;
        // the alpha/inlier masks are fixed at the evaluation point, matching
        // their treatment in the analytic gradient
        let tracked_pose = Pose::new(
            Quat::from_axis_angle(Vector3::new(0.2, 1.0, -0.4), 0.01),
            Vector3::new(0.004, -0.003, 0.002),
        );
        let tframe = render(&gaussians, &tracked_pose, &cam, &rcfg, true);
        let (m_alpha, m_inlier) = compute_masks(&tframe, &target, &tcfg);
        let tl = tracking_loss(&tframe, &target, &m_alpha, &m_inlier, tcfg.lambda_c).unwrap();
        let tg = backward(
            &tframe,
            &tl.grad_color,
            &tl.grad_depth,
            &zero,
            &gaussians,
            &tracked_pose,
            &cam,
            &rcfg,
            true,
        )
        .unwrap();
        let track_total = |gs: &[Gaussian3D], pose: &Pose| {
            let f = render(gs, pose, &cam, &rcfg, false);
            tracking_loss(&f, &target, &m_alpha, &m_inlier, tcfg.lambda_c)
                .unwrap()
                .loss
        };
        for k in 0..n {
            for p in 0..PARAMS_PER_GAUSSIAN {
                let analytic = match p {
                    0..=2 => tg.mean[k][p],
                    3..=6 => tg.rotation[k][p - 3],
                    7..=9 => tg.log_scales[k][p - 7],
                    10 => tg.opacity_logit[k],
                    _ => tg.color[k][p - 11],
                };
                track_check.check(analytic, &format!("scene {_scene} track g{k} p{p}"), |h| {
                    (track_total(&with_param(&gaussians, k, p, h), &tracked_pose)
                        - track_total(&with_param(&gaussians, k, p, -h), &tracked_pose))
                        / (2.0 * h)
                });
            }
        }
        let pg = tg.pose.as_ref().unwrap();
        for p in 0..7 {
            let analytic = if p < 4 {
                pg.rotation[p]
            } else {
                pg.translation[p - 4]
            };
            pose_check.check(analytic, &format!("scene {_scene} pose p{p}"), |h| {
                (track_total(&gaussians, &pose_with(&tracked_pose, p, h))
                    - track_total(&gaussians, &pose_with(&tracked_pose, p, -h)))
                    / (2.0 * h)
            });
        }
    }

    println!(
        "  mapping grads: {} checked, worst rel {:.2e}; tracking grads: {} checked, worst rel {:.2e}; pose grads: {} checked, worst rel {:.2e}",
        map_check.checked, map_check.worst, track_check.checked, track_check.worst,
        pose_check.checked, pose_check.worst
    );
    println!(
        "  failures: map {} track {} pose {}; non-smooth points skipped: {}",
        map_check.failures,
        track_check.failures,
        pose_check.failures,
        map_check.kinks + track_check.kinks + pose_check.kinks
    );
    for s in map_check.samples.iter().chain(&track_check.samples).chain(&pose_check.samples) {
        println!("    {s}");
    }
    let total = map_check.checked + track_check.checked + pose_check.checked;
    let kinks = map_check.kinks + track_check.kinks + pose_check.kinks;
    assert!(
        kinks * 50 < total,
        "too many non-smooth points ({kinks} of {total}) for a meaningful check"
    );
    report(
        1,
        "analytic gradients of mapping/tracking objectives match central differences (rel < 1e-4)",
        map_check.failures == 0 && track_check.failures == 0 && pose_check.failures == 0,
    );
}

/// Reference front-to-back blend of depth, used to perturb alphas directly.
fn blend_depth(alphas: &[f64], depths: &[f64]) -> f64 {
    let mut t = 1.0;
    let mut d = 0.0;
    for (&a, &z) in alphas.iter().zip(depths) {
        d += a * t * z;
        t *= 1.0 - a;
    }
    d
}

#[test]
fn criterion_2_depth_alpha_derivative_oracle() {
    let cam = small_cam();
    let rcfg = RenderConfig::default();
    // three Gaussians stacked on the optical axis through the center pixel
    let gaussians: Vec<Gaussian3D> = [1.0, 1.6, 2.2]
        .iter()
        .enumerate()
        .map(|(i, &z)| Gaussian3D {
            mean: Vector3::new(0.0, 0.0, z),
            rotation: Quat::identity(),
            log_scales: Vector3::repeat(0.09f64.ln()),
            opacity_logit: logit(0.45 + 0.1 * i as f64),
            color: [0.5; 3],
        })
        .collect();
    let pose = Pose::identity();
    let frame = render(&gaussians, &pose, &cam, &rcfg, true);
    let px = (16, 16);
    let idx = px.1 * cam.width + px.0;
    let records = &frame.blend[idx];
    assert!(records.len() >= 3, "need 3 contributors at the center pixel");

    let mut dl_ddepth = ScalarMap::zeros(cam.width, cam.height);
    dl_ddepth.set(px.0, px.1, 1.0);
    let zero = ScalarMap::zeros(cam.width, cam.height);
    let zero_c = ColorMap::black(cam.width, cam.height);
    let grads = backward(
        &frame, &zero_c, &dl_ddepth, &zero, &gaussians, &pose, &cam, &rcfg, false,
    )
    .unwrap();

    let alphas: Vec<f64> = records.iter().map(|r| r.alpha).collect();
    let depths: Vec<f64> = records
        .iter()
        .map(|r| frame.projected[r.proj_index as usize].cam_depth)
        .collect();

    let mut ok = true;
    let h = 1e-7;
    for (j, r) in records.iter().enumerate() {
        let gi = frame.projected[r.proj_index as usize].source_index;
        let o = sigmoid(gaussians[gi].opacity_logit);
        // alpha = o * G at this pixel, so d alpha / d logit = alpha * (1 - o)
        let analytic = grads.opacity_logit[gi] / (r.alpha * (1.0 - o));
        let mut up = alphas.clone();
        let mut dn = alphas.clone();
        up[j] += h;
        dn[j] -= h;
        let fd = (blend_depth(&up, &depths) - blend_depth(&dn, &depths)) / (2.0 * h);
        if (analytic - fd).abs() > 1e-6 * fd.abs().max(1.0) {
            ok = false;
        }
    }

    // single contributor: the derivative is exactly the splat depth
    let single = vec![gaussians[0].clone()];
    let sframe = render(&single, &pose, &cam, &rcfg, true);
    let srec = &sframe.blend[idx];
    let sg = backward(
        &sframe, &zero_c, &dl_ddepth, &zero, &single, &pose, &cam, &rcfg, false,
    )
    .unwrap();
    let o = sigmoid(single[0].opacity_logit);
    let analytic = sg.opacity_logit[0] / (srec[0].alpha * (1.0 - o));
    let splat_depth = sframe.projected[srec[0].proj_index as usize].cam_depth;
    if (analytic - splat_depth).abs() > 1e-9 {
        ok = false;
    }

    report(
        2,
        "depth/alpha blend derivative matches numeric perturbation (1e-6); single splat equals its depth",
        ok,
    );
}

#[test]
fn criterion_3_blending_invariants() {
    let cam = CameraIntrinsics::new(25.0, 25.0, 12.0, 12.0, 24, 24);
    let rcfg = RenderConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut violations = 0usize;
    for _ in 0..100 {
        let gaussians = random_cloud(&mut rng, 10, 0.5, 0.8, 3.0, 0.1, 0.95, 0.05, 0.25);
        let frame = render(&gaussians, &Pose::identity(), &cam, &rcfg, true);
        for &a in frame.alpha.data() {
            if !(0.0..=1.0 + 1e-12).contains(&a) {
                violations += 1;
            }
        }
        for recs in &frame.blend {
            for w in recs.windows(2) {
                if w[1].transmittance > w[0].transmittance + 1e-12 {
                    violations += 1;
                }
            }
        }
        let mut shuffled = gaussians.clone();
        shuffled.shuffle(&mut rng);
        let frame2 = render(&shuffled, &Pose::identity(), &cam, &rcfg, false);
        let color_diff = frame
            .color
            .data()
            .iter()
            .zip(frame2.color.data())
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0f64, f64::max);
        let depth_diff = frame
            .depth
            .data()
            .iter()
            .zip(frame2.depth.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if color_diff > 1e-12 || depth_diff > 1e-12 {
            violations += 1;
        }
    }
    report(
        3,
        "alpha in [0,1], transmittance monotone, rendering permutation-invariant (100 scenes)",
        violations == 0,
    );
}

#[test]
fn criterion_4_synthetic_closed_loop() {
    let mut cfg = SlamConfig::default();
    cfg.synthetic.num_gaussians = 500;
    cfg.synthetic.num_frames = 50;
    cfg.synthetic.width = 128;
    cfg.synthetic.height = 128;
    cfg.mapping.m_uniform = 2000;
    cfg.mapping.m_color = 400;
    cfg.mapping.m_keyframe = 800;
    cfg.synthetic.arc_degrees = 20.0;
    cfg.mapping.iters_first_kf = 200;
    cfg.mapping.iters_kf = 100;
    cfg.tracking.iters = 100;
    cfg.run.refine_iters = 150;
    cfg.run.eval = true;
    cfg.run.eval_every = 5;

    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let out = run_slam(&cfg, dir.path()).expect("pipeline run failed");
    let report_data = out.report.expect("evaluation report missing");
    let ate = report_data.ate_rmse_cm.expect("no ground-truth ATE");
    println!(
        "  closed loop: ATE {ate:.3} cm, mean PSNR {:.2} dB, {} gaussians, {:.0}s",
        report_data.psnr_mean,
        out.global_map.len(),
        start.elapsed().as_secs_f64()
    );
    report(
        4,
        "50-frame synthetic closed loop: ATE < 1.0 cm and mean PSNR > 30 dB",
        ate < 1.0 && report_data.psnr_mean > 30.0,
    );
}

#[test]
fn criterion_5_alpha_mask_improves_tracking_under_clutter() {
    let cam = CameraIntrinsics::new(55.0, 55.0, 32.0, 32.0, 64, 64);
    let rcfg = RenderConfig::default();
    let mut wins = 0;
    let seeds = 5;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        // mapped scene in the central frustum
        let scene = random_cloud(&mut rng, 160, 0.55, 1.5, 2.5, 0.5, 0.9, 0.08, 0.16);
        // unmapped clutter off to the image periphery
        let clutter: Vec<Gaussian3D> = random_cloud(&mut rng, 60, 0.35, 1.2, 2.0, 0.6, 0.9, 0.08, 0.16)
            .into_iter()
            .map(|mut g| {
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                if rng.gen_bool(0.5) {
                    g.mean.x = side * rng.gen_range(0.85..1.25);
                } else {
                    g.mean.y = side * rng.gen_range(0.85..1.25);
                }
                g
            })
            .collect();
        let mut full = scene.clone();
        full.extend(clutter);

        let n_frames = 12;
        let gt: Vec<Pose> = (0..n_frames)
            .map(|i| {
                Pose::new(
                    Quat::from_axis_angle(Vector3::y(), 0.004 * i as f64),
                    Vector3::new(-0.02 * i as f64, 0.005 * i as f64, 0.0),
                )
            })
            .collect();
        let frames: Vec<RGBDFrame> = gt
            .iter()
            .map(|p| frame_from_render(&full, p, &cam, &rcfg, 0.5))
            .collect();

        let run_tracking = |alpha_exponent: i32| -> f64 {
            let cfg = TrackingConfig {
                iters: 30,
                alpha_exponent,
                inlier_multiplier: 0.0,
                ..TrackingConfig::default()
            };
            let mut est = vec![gt[0]];
            for frame in frames.iter().take(n_frames).skip(1) {
                let history: Vec<Pose> = est.iter().rev().take(2).copied().collect();
                let r = track_frame(&scene, frame, &history, &cam, &cfg, &rcfg).unwrap();
                est.push(r.pose);
            }
            ate_rmse(&est, &gt).unwrap()
        };
        let ate_masked = run_tracking(3);
        let ate_unmasked = run_tracking(0);
        println!(
            "  seed {seed}: ATE with alpha mask {ate_masked:.3} cm, without {ate_unmasked:.3} cm"
        );
        if ate_masked < ate_unmasked {
            wins += 1;
        }
    }
    report(
        5,
        "soft alpha mask reduces ATE under 20% unmapped clutter in >= 4 of 5 seeds",
        wins >= 4,
    );
}

#[test]
fn criterion_6_seeding_and_pruning_properties() {
    let cam = CameraIntrinsics::new(55.0, 55.0, 32.0, 32.0, 64, 64);
    let rcfg = RenderConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut ok = true;

    // post-seed spacing: no pair of seeded centers within rho (brute force)
    let scene = random_cloud(&mut rng, 200, 0.5, 1.4, 2.4, 0.5, 0.9, 0.08, 0.16);
    let pose = Pose::identity();
    let frame = Arc::new(frame_from_render(&scene, &pose, &cam, &rcfg, 0.5));
    let cfg = MappingConfig {
        m_uniform: 1200,
        m_color: 200,
        ..MappingConfig::default()
    };
    let mut submap = SubMap::new(0, pose, frame.clone());
    seed_gaussians(&frame, &pose, &mut submap, true, &cfg, &cam, &rcfg, 99);
    assert!(submap.gaussians.len() > 100, "seeding produced too few Gaussians");
    let means: Vec<Vector3<f64>> = submap.gaussians.iter().map(|g| g.mean).collect();
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            if (means[i] - means[j]).norm() < cfg.rho - 1e-12 {
                ok = false;
            }
        }
    }

    // spatial grid nearest neighbor equals brute force on 1000 queries
    let points: Vec<Vector3<f64>> = (0..1000)
        .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
        .collect();
    let grid = NeighborGrid::from_points(0.05, points.iter());
    for _ in 0..1000 {
        let q = Vector3::new(rng.gen(), rng.gen(), rng.gen());
        let brute = points
            .iter()
            .map(|p| (p - q).norm())
            .fold(f64::INFINITY, f64::min);
        let fast = grid.nearest_distance(&q, None, 4.0).unwrap();
        if (fast - brute).abs() > 1e-12 {
            ok = false;
        }
    }

    // pruning removes exactly the sub-threshold opacity set
    let o_thre = 0.3;
    for (i, g) in submap.gaussians.iter_mut().enumerate() {
        g.opacity_logit = logit(if i % 3 == 0 { 0.1 } else { 0.8 });
        g.color[0] = i as f64;
    }
    let expected: Vec<f64> = submap
        .gaussians
        .iter()
        .filter(|g| g.opacity() >= o_thre)
        .map(|g| g.color[0])
        .collect();
    let mut opt = GaussianAdam::new(&GaussianLearningRates::default());
    prune_gaussians(&mut submap, &mut opt, o_thre);
    let survivors: Vec<f64> = submap.gaussians.iter().map(|g| g.color[0]).collect();
    if survivors != expected {
        ok = false;
    }

    report(
        6,
        "seed spacing >= rho, grid NN == brute force, pruning removes exactly the sub-threshold set",
        ok,
    );
}

/// Direct per-window SSIM reference (no separable convolution) used as an
/// independent implementation for cross-checking.
fn ssim_reference(x: &ColorMap, y: &ColorMap) -> f64 {
    const WIN: usize = 11;
    const SIGMA: f64 = 1.5;
    let c = WIN / 2;
    let mut kernel = [[0.0f64; WIN]; WIN];
    let mut sum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let di = i as f64 - c as f64;
            let dj = j as f64 - c as f64;
            *v = (-(di * di + dj * dj) / (2.0 * SIGMA * SIGMA)).exp();
            sum += *v;
        }
    }
    for row in &mut kernel {
        for v in row {
            *v /= sum;
        }
    }
    let (w, h) = (x.width(), x.height());
    let (c1, c2) = (0.01f64 * 0.01, 0.03f64 * 0.03);
    let mut total = 0.0;
    for ch in 0..3 {
        let mut mean = 0.0;
        let mut count = 0.0;
        for py in c..h - c {
            for px in c..w - c {
                let (mut ux, mut uy, mut uxx, mut uyy, mut uxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in kernel.iter().enumerate() {
                    for (j, &kv) in row.iter().enumerate() {
                        let a = x.get(px + j - c, py + i - c)[ch];
                        let b = y.get(px + j - c, py + i - c)[ch];
                        ux += kv * a;
                        uy += kv * b;
                        uxx += kv * a * a;
                        uyy += kv * b * b;
                        uxy += kv * a * b;
                    }
                }
                let (vx, vy, vxy) = (uxx - ux * ux, uyy - uy * uy, uxy - ux * uy);
                mean += ((2.0 * ux * uy + c1) * (2.0 * vxy + c2))
                    / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        total += mean / count / 3.0;
    }
    total
}

#[test]
fn criterion_7_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut ok = true;

    // ATE is zero under a rigid offset of the whole trajectory
    let traj: Vec<Pose> = (0..12)
        .map(|_| {
            Pose::new(
                random_quat(&mut rng),
                Vector3::new(rng.gen(), rng.gen(), rng.gen()),
            )
        })
        .collect();
    let offset = Pose::new(
        Quat::from_axis_angle(Vector3::new(1.0, 0.4, -0.2), 0.7),
        Vector3::new(0.3, -1.1, 2.0),
    );
    let moved: Vec<Pose> = traj.iter().map(|p| p.compose(&offset)).collect();
    if ate_rmse(&moved, &traj).unwrap() > 1e-9 {
        ok = false;
    }

    // PSNR spot values
    let base = ColorMap::from_vec(16, 16, vec![[0.5; 3]; 256]);
    let off_psnr = |delta: f64| {
        let shifted = base.map(|p| [p[0] + delta, p[1] + delta, p[2] + delta]);
        psnr(&base, &shifted).unwrap()
    };
    if (off_psnr(0.1) - 20.0).abs() > 1e-9 || (off_psnr(0.01) - 40.0).abs() > 1e-9 {
        ok = false;
    }

    // SSIM self-similarity and cross-implementation agreement
    let img_a = ColorMap::from_vec(
        32,
        32,
        (0..32 * 32)
            .map(|i| {
                let (x, y) = ((i % 32) as f64, (i / 32) as f64);
                [
                    0.5 + 0.3 * (0.3 * x).sin() * (0.2 * y).cos(),
                    0.5 + 0.2 * (0.15 * (x + y)).sin(),
                    rng.gen_range(0.2..0.8),
                ]
            })
            .collect(),
    );
    let noise: Vec<[f64; 3]> = (0..32 * 32)
        .map(|_| {
            [
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            ]
        })
        .collect();
    let img_b = ColorMap::from_vec(
        32,
        32,
        img_a
            .data()
            .iter()
            .zip(&noise)
            .map(|(p, n)| {
                [
                    (p[0] + n[0]).clamp(0.0, 1.0),
                    (p[1] + n[1]).clamp(0.0, 1.0),
                    (p[2] + n[2]).clamp(0.0, 1.0),
                ]
            })
            .collect(),
    );
    if (ssim(&img_a, &img_a).unwrap().mean - 1.0).abs() > 1e-12 {
        ok = false;
    }
    let ours = ssim(&img_a, &img_b).unwrap().mean;
    let reference = ssim_reference(&img_a, &img_b);
    if (ours - reference).abs() > 1e-6 {
        ok = false;
    }

    report(
        7,
        "ATE rigid-offset zero, PSNR spot values, SSIM self = 1 and cross-implementation 1e-6",
        ok,
    );
}

#[test]
fn criterion_8_sphere_meshing_oracle() {
    let r = 0.5;
    let voxel = 0.01;
    let truncation = 0.04;
    let mut vol = TSDFVolume::new(voxel, truncation);
    let reach = ((r + 2.0 * truncation) / voxel).ceil() as i64;
    for kx in -reach..=reach {
        for ky in -reach..=reach {
            for kz in -reach..=reach {
                let key = (kx, ky, kz);
                let sdf = vol.voxel_center(&key).norm() - r;
                if sdf.abs() <= 1.5 * truncation {
                    vol.fuse_sample(key, sdf, [1.0; 3]);
                }
            }
        }
    }
    let mesh = extract_mesh(&vol);

    let mean_err = mesh
        .vertices
        .iter()
        .map(|v| (v.norm() - r).abs())
        .sum::<f64>()
        / mesh.vertices.len().max(1) as f64;

    // watertight: every undirected edge shared by exactly two triangles
    let mut edges: std::collections::HashMap<(u32, u32), usize> = std::collections::HashMap::new();
    for t in &mesh.triangles {
        for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (e.0.min(e.1), e.0.max(e.1));
            *edges.entry(key).or_default() += 1;
        }
    }
    let watertight = !mesh.triangles.is_empty() && edges.values().all(|&c| c == 2);

    println!(
        "  sphere mesh: {} vertices, mean radial error {mean_err:.4} m",
        mesh.vertices.len()
    );
    report(
        8,
        "analytic sphere marching cubes: mean radial error < 1 cm and watertight topology",
        mesh.vertices.len() > 1000 && mean_err < 0.01 && watertight,
    );
}

#[test]
fn criterion_9_scale_regularization_reduces_anisotropy() {
    use splatmap_core::map::optimize_submap;

    let cam = small_cam();
    let rcfg = RenderConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let scene = random_cloud(&mut rng, 120, 0.5, 1.4, 2.4, 0.5, 0.9, 0.08, 0.16);
    let pose = Pose::identity();
    let mut frame = frame_from_render(&scene, &pose, &cam, &rcfg, 0.5);
    // corrupt the supervising depth
    for d in frame.depth.data_mut() {
        if *d > 0.0 {
            *d = (*d + rng.gen_range(-0.05..0.05)).max(0.05);
        }
    }
    let frame = Arc::new(frame);

    let cfg = MappingConfig {
        m_uniform: 250,
        m_color: 50,
        ..MappingConfig::default()
    };
    let mut base = SubMap::new(0, pose, frame.clone());
    seed_gaussians(&frame, &pose, &mut base, true, &cfg, &cam, &rcfg, 7);
    // start from an anisotropic population
    for g in &mut base.gaussians {
        g.log_scales += Vector3::new(
            rng.gen_range(-1.4..1.4),
            rng.gen_range(-1.4..1.4),
            rng.gen_range(-1.4..1.4),
        );
    }

    let anisotropic_fraction = |gaussians: &[Gaussian3D]| {
        let n = gaussians
            .iter()
            .filter(|g| {
                let s = g.scales();
                s.max() / s.min() > 10.0
            })
            .count();
        n as f64 / gaussians.len() as f64
    };

    let run = |lambda_reg: f64| {
        let mut submap = base.clone();
        let mut opt = GaussianAdam::new(&GaussianLearningRates::default());
        let weights = LossWeights {
            lambda_reg,
            ..LossWeights::default()
        };
        let cfg = MappingConfig {
            o_thre: 0.0, // keep the population fixed for a fair comparison
            ..cfg.clone()
        };
        let mut opt_rng = ChaCha8Rng::seed_from_u64(17);
        optimize_submap(
            &mut submap,
            &mut opt,
            400,
            &cfg,
            &weights,
            IsotropicMode::PerGaussian,
            &cam,
            &rcfg,
            &mut opt_rng,
        )
        .unwrap();
        anisotropic_fraction(&submap.gaussians)
    };

    let start = anisotropic_fraction(&base.gaussians);
    let with_reg = run(1.0);
    let without_reg = run(0.0);
    println!(
        "  anisotropic fraction (>10x): start {start:.3}, with regularizer {with_reg:.3}, without {without_reg:.3}"
    );
    report(
        9,
        "isotropic regularizer reduces the fraction of Gaussians with >10x scale anisotropy",
        start > 0.0 && with_reg < without_reg,
    );
}

/// Real-data smoke run; needs a local copy of a TUM-style fr1/desk sequence
/// (set TUM_DESK_DIR). Long-running, so excluded from the default suite.
#[test]
#[ignore]
fn criterion_10_tum_desk_smoke() {
    let Ok(dir) = std::env::var("TUM_DESK_DIR") else {
        println!("criterion 10 | TUM desk smoke: SKIP (TUM_DESK_DIR not set)");
        return;
    };
    let mut cfg = SlamConfig::default();
    cfg.dataset.kind = splatmap_core::config::DatasetKind::Tum;
    cfg.dataset.path = Some(dir.into());
    cfg.dataset.max_frames = Some(120);
    cfg.mapping.m_uniform = 2000;
    cfg.mapping.m_color = 400;
    cfg.mapping.m_keyframe = 800;
    cfg.mapping.iters_first_kf = 150;
    cfg.mapping.iters_kf = 80;
    cfg.tracking.iters = 40;
    cfg.run.refine_iters = 100;
    cfg.run.eval = true;

    let out_dir = tempfile::tempdir().unwrap();
    let out = run_slam(&cfg, out_dir.path()).expect("pipeline run failed");
    let ate = out
        .report
        .as_ref()
        .and_then(|r| r.ate_rmse_cm)
        .expect("no ATE available");
    println!("  TUM desk: ATE {ate:.2} cm over {} frames", out.poses.len());
    report(10, "TUM desk smoke run completes with ATE < 15 cm", ate < 15.0);
}
