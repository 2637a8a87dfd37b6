use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geom::{rotation_grad_to_quat, CameraIntrinsics, Gaussian3D, Pose};
use crate::image2d::{ColorMap, ScalarMap};

use super::{pixel_coord, symmetrize2, RenderConfig, RenderedFrame};

/// Gradient of the camera pose (raw quaternion 4-vector plus translation).
#[derive(Clone, Copy, Debug, Default)]
pub struct PoseGradient {
    pub rotation: [f64; 4],
    pub translation: Vector3<f64>,
}

/// Per-Gaussian parameter gradients, aligned with the source Gaussian list.
#[derive(Clone, Debug)]
pub struct ParamGradients {
    pub mean: Vec<Vector3<f64>>,
    pub rotation: Vec<[f64; 4]>,
    pub log_scales: Vec<Vector3<f64>>,
    pub opacity_logit: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    pub pose: Option<PoseGradient>,
}

impl ParamGradients {
    pub fn zeros(n: usize, want_pose: bool) -> Self {
        Self {
            mean: vec![Vector3::zeros(); n],
            rotation: vec![[0.0; 4]; n],
            log_scales: vec![Vector3::zeros(); n],
            opacity_logit: vec![0.0; n],
            color: vec![[0.0; 3]; n],
            pose: want_pose.then(PoseGradient::default),
        }
    }
}

/// Screen-space gradient accumulator for one projected Gaussian.
#[derive(Clone, Copy, Default)]
struct ScreenGrad {
    mean_2d: Vector2<f64>,
    conic: Matrix2<f64>,
    opacity: f64,
    cam_z: f64,
    color: [f64; 3],
}

/// Backward pass: per-pixel loss gradients on the rendered color/depth/alpha
/// maps are pulled back to every Gaussian parameter and, optionally, the
/// camera pose.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    frame: &RenderedFrame,
    dl_dcolor: &ColorMap,
    dl_ddepth: &ScalarMap,
    dl_dalpha: &ScalarMap,
    gaussians: &[Gaussian3D],
    pose: &Pose,
    cam: &CameraIntrinsics,
    cfg: &RenderConfig,
    want_pose_grad: bool,
) -> Result<ParamGradients> {
    if !frame.has_records {
        return Err(Error::MissingBlendRecords);
    }
    if !dl_dcolor.same_shape(&frame.color)
        || !dl_ddepth.same_shape(&frame.depth)
        || !dl_dalpha.same_shape(&frame.alpha)
    {
        return Err(Error::ShapeMismatch(
            "gradient maps must match the rendered frame".into(),
        ));
    }

    let (w, h) = (frame.width(), frame.height());
    let mut screen = vec![ScreenGrad::default(); frame.projected.len()];

    // Phase 1: replay compositing back-to-front per pixel, with running
    // suffix accumulators instead of the explicit division by (1 - alpha).
    for py in 0..h {
        for px in 0..w {
            let records = &frame.blend[py * w + px];
            if records.is_empty() {
                continue;
            }
            let gc = *dl_dcolor.get(px, py);
            let gd = *dl_ddepth.get(px, py);
            let ga = *dl_dalpha.get(px, py);
            if gc == [0.0; 3] && gd == 0.0 && ga == 0.0 {
                continue;
            }
            let pix = pixel_coord(px, py);
            let mut accum_c = [0.0; 3];
            let mut accum_d = 0.0;
            let mut accum_a = 0.0;
            for rec in records.iter().rev() {
                let p = &frame.projected[rec.proj_index as usize];
                let sg = &mut screen[rec.proj_index as usize];
                let (alpha, trans) = (rec.alpha, rec.transmittance);
                let weight = alpha * trans;

                // direct color / depth-value chains
                for ch in 0..3 {
                    sg.color[ch] += gc[ch] * weight;
                }
                sg.cam_z += gd * weight;

                // dL/d(alpha_j): suffix accumulators hold
                // sum_{u>j} v_u alpha_u prod_{j<k<u}(1-alpha_k)
                let mut g_alpha = 0.0;
                for ch in 0..3 {
                    g_alpha += gc[ch] * trans * (p.color[ch] - accum_c[ch]);
                }
                g_alpha += gd * trans * (p.cam_depth - accum_d);
                g_alpha += ga * trans * (1.0 - accum_a);

                for ch in 0..3 {
                    accum_c[ch] = p.color[ch] * alpha + (1.0 - alpha) * accum_c[ch];
                }
                accum_d = p.cam_depth * alpha + (1.0 - alpha) * accum_d;
                accum_a = alpha + (1.0 - alpha) * accum_a;

                // alpha clamped: no gradient flows to opacity or geometry
                if alpha >= cfg.alpha_clamp {
                    continue;
                }

                // alpha = o * exp(-sigma)
                sg.opacity += g_alpha * alpha / p.opacity;
                let g_sigma = -alpha * g_alpha;
                let delta = pix - p.mean_2d;
                let g_delta = g_sigma * (p.conic * delta);
                sg.mean_2d -= g_delta;
                sg.conic += g_sigma * 0.5 * (delta * delta.transpose());
            }
        }
    }

    // Phase 2: chain screen-space gradients through projection and the
    // covariance factorization to the world-frame parameters.
    let mut grads = ParamGradients::zeros(frame.num_gaussians, want_pose_grad);
    let r_wc = pose.rotation.to_matrix();
    let mut pose_rot_grad = Matrix3::zeros();
    let mut pose_t_grad = Vector3::zeros();

    for (p, sg) in frame.projected.iter().zip(screen.iter()) {
        let gi = p.source_index;
        let g = &gaussians[gi];

        grads.color[gi] = sg.color;

        // opacity logit
        let o = p.opacity;
        grads.opacity_logit[gi] = sg.opacity * o * (1.0 - o);

        // conic -> 2D covariance (conic = cov^-1)
        let g_conic = symmetrize2(&sg.conic);
        let g_cov2d = -(p.conic * g_conic * p.conic);

        // cov2d = J Sigma_cam J^T (+ dilation)
        let pc = p.cam_point;
        let j = cam.projection_jacobian(&pc);
        let sigma = g.covariance();
        let sigma_cam = r_wc * sigma * r_wc.transpose();
        let g_sigma_cam = j.transpose() * g_cov2d * j;
        let g_j = 2.0 * g_cov2d * j * sigma_cam;

        // camera-frame point gradient: projection of the mean, the depth
        // value itself, and the J dependency
        let mut g_p = j.transpose() * sg.mean_2d;
        g_p.z += sg.cam_z;
        let (fx, fy) = (cam.fx, cam.fy);
        let z_inv2 = 1.0 / (pc.z * pc.z);
        let z_inv3 = z_inv2 / pc.z;
        g_p.x += g_j[(0, 2)] * (-fx * z_inv2);
        g_p.y += g_j[(1, 2)] * (-fy * z_inv2);
        g_p.z += g_j[(0, 0)] * (-fx * z_inv2)
            + g_j[(0, 2)] * (2.0 * fx * pc.x * z_inv3)
            + g_j[(1, 1)] * (-fy * z_inv2)
            + g_j[(1, 2)] * (2.0 * fy * pc.y * z_inv3);

        // world mean
        grads.mean[gi] = r_wc.transpose() * g_p;

        // world covariance factors: Sigma = M M^T with M = R_g diag(exp(s))
        let g_sigma_world = r_wc.transpose() * g_sigma_cam * r_wc;
        let rot_g = g.rotation.to_matrix();
        let scales = g.scales();
        let m = rot_g * Matrix3::from_diagonal(&scales);
        let g_m = 2.0 * g_sigma_world * m;
        let g_rot = g_m * Matrix3::from_diagonal(&scales);
        grads.rotation[gi] = rotation_grad_to_quat(&g.rotation, &g_rot);
        let rt_gm = rot_g.transpose() * g_m;
        grads.log_scales[gi] = Vector3::new(
            rt_gm[(0, 0)] * scales.x,
            rt_gm[(1, 1)] * scales.y,
            rt_gm[(2, 2)] * scales.z,
        );

        if want_pose_grad {
            pose_t_grad += g_p;
            pose_rot_grad += g_p * g.mean.transpose() + 2.0 * g_sigma_cam * r_wc * sigma;
        }
    }

    if let Some(pg) = grads.pose.as_mut() {
        pg.translation = pose_t_grad;
        pg.rotation = rotation_grad_to_quat(&pose.rotation, &pose_rot_grad);
    }

    Ok(grads)
}
