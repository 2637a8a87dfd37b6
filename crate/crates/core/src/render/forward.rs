use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use crate::geom::{CameraIntrinsics, Gaussian3D, Pose};
use crate::image2d::{ColorMap, ScalarMap};

use super::{
    largest_eigenvalue2, pixel_coord, symmetrize2, BlendRecord, RenderConfig, RenderDiagnostics,
    RenderedFrame,
};

/// A Gaussian splatted into screen space.
#[derive(Clone, Copy, Debug)]
pub struct ProjectedGaussian {
    pub mean_2d: Vector2<f64>,
    /// 2D covariance after low-pass dilation.
    pub cov_2d: Matrix2<f64>,
    /// Inverse of `cov_2d`.
    pub conic: Matrix2<f64>,
    /// z of the camera-frame mean, meters.
    pub cam_depth: f64,
    /// Full camera-frame mean (kept for the backward pass).
    pub cam_point: Vector3<f64>,
    /// Binning extent in pixels.
    pub radius_px: i64,
    /// Index into the source Gaussian list.
    pub source_index: usize,
    pub opacity: f64,
    pub color: [f64; 3],
}

#[derive(Clone, Copy, Debug)]
pub enum ProjectOutcome {
    Projected(ProjectedGaussian),
    Culled,
    NonFinite,
    Singular,
}

/// Project one Gaussian into screen space, or cull it.
pub fn project_gaussian(
    g: &Gaussian3D,
    pose: &Pose,
    cam: &CameraIntrinsics,
    cfg: &RenderConfig,
    source_index: usize,
) -> ProjectOutcome {
    let r_wc = pose.rotation.to_matrix();
    let p = r_wc * g.mean + pose.translation;
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return ProjectOutcome::NonFinite;
    }
    if p.z < cam.z_near || p.z > cam.z_far {
        return ProjectOutcome::Culled;
    }
    let mean_2d = cam.project(&p);
    let j = cam.projection_jacobian(&p);
    let sigma_cam = r_wc * g.covariance() * r_wc.transpose();
    let mut cov_2d = symmetrize2(&(j * sigma_cam * j.transpose()));
    cov_2d[(0, 0)] += cfg.dilation;
    cov_2d[(1, 1)] += cfg.dilation;
    let radius_px = (cfg.sigma_radius * largest_eigenvalue2(&cov_2d).sqrt()).ceil() as i64;
    if !(mean_2d.x.is_finite() && mean_2d.y.is_finite()) || !cov_2d.iter().all(|v| v.is_finite()) {
        return ProjectOutcome::NonFinite;
    }
    let r = radius_px as f64;
    if mean_2d.x < -r
        || mean_2d.x > (cam.width as f64 - 1.0) + r
        || mean_2d.y < -r
        || mean_2d.y > (cam.height as f64 - 1.0) + r
    {
        return ProjectOutcome::Culled;
    }
    let det = cov_2d[(0, 0)] * cov_2d[(1, 1)] - cov_2d[(0, 1)] * cov_2d[(1, 0)];
    if det <= 0.0 || !det.is_finite() {
        return ProjectOutcome::Singular;
    }
    let conic = Matrix2::new(
        cov_2d[(1, 1)] / det,
        -cov_2d[(0, 1)] / det,
        -cov_2d[(1, 0)] / det,
        cov_2d[(0, 0)] / det,
    );
    ProjectOutcome::Projected(ProjectedGaussian {
        mean_2d,
        cov_2d,
        conic,
        cam_depth: p.z,
        cam_point: p,
        radius_px,
        source_index,
        opacity: g.opacity(),
        color: g.color,
    })
}

struct TileResult {
    tile_index: usize,
    color: Vec<[f64; 3]>,
    depth: Vec<f64>,
    alpha: Vec<f64>,
    blend: Vec<Vec<BlendRecord>>,
}

/// Render a Gaussian list at a pose. With `keep_records` the per-pixel
/// blending state needed by the backward pass is retained.
pub fn render(
    gaussians: &[Gaussian3D],
    pose: &Pose,
    cam: &CameraIntrinsics,
    cfg: &RenderConfig,
    keep_records: bool,
) -> RenderedFrame {
    let (w, h) = (cam.width, cam.height);
    let mut diagnostics = RenderDiagnostics::default();
    let mut projected = Vec::with_capacity(gaussians.len());
    for (i, g) in gaussians.iter().enumerate() {
        match project_gaussian(g, pose, cam, cfg, i) {
            ProjectOutcome::Projected(p) => projected.push(p),
            ProjectOutcome::Culled => diagnostics.culled += 1,
            ProjectOutcome::NonFinite => diagnostics.non_finite += 1,
            ProjectOutcome::Singular => diagnostics.singular += 1,
        }
    }

    let ts = cfg.tile_size;
    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);
    let mut tile_bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (pi, p) in projected.iter().enumerate() {
        let r = p.radius_px as f64;
        let x0 = (((p.mean_2d.x - r).floor() as i64).max(0) as usize) / ts;
        let y0 = (((p.mean_2d.y - r).floor() as i64).max(0) as usize) / ts;
        let x1 = ((p.mean_2d.x + r).ceil() as i64).min(w as i64 - 1).max(0) as usize / ts;
        let y1 = ((p.mean_2d.y + r).ceil() as i64).min(h as i64 - 1).max(0) as usize / ts;
        if p.mean_2d.x + r < 0.0 || p.mean_2d.y + r < 0.0 {
            continue;
        }
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                tile_bins[ty * tiles_x + tx].push(pi as u32);
            }
        }
    }
    // depth sort within each tile, ties broken by source index
    for bin in &mut tile_bins {
        bin.sort_by(|&a, &b| {
            let (pa, pb) = (&projected[a as usize], &projected[b as usize]);
            pa.cam_depth
                .partial_cmp(&pb.cam_depth)
                .unwrap()
                .then(pa.source_index.cmp(&pb.source_index))
        });
    }

    let results: Vec<TileResult> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|tile_index| {
            let tx = tile_index % tiles_x;
            let ty = tile_index / tiles_x;
            let x_start = tx * ts;
            let y_start = ty * ts;
            let x_end = (x_start + ts).min(w);
            let y_end = (y_start + ts).min(h);
            let tw = x_end - x_start;
            let th = y_end - y_start;
            let mut out = TileResult {
                tile_index,
                color: vec![[0.0; 3]; tw * th],
                depth: vec![0.0; tw * th],
                alpha: vec![0.0; tw * th],
                blend: if keep_records {
                    vec![Vec::new(); tw * th]
                } else {
                    Vec::new()
                },
            };
            let bin = &tile_bins[tile_index];
            if bin.is_empty() {
                return out;
            }
            for py in y_start..y_end {
                for px in x_start..x_end {
                    let local = (py - y_start) * tw + (px - x_start);
                    let pix = pixel_coord(px, py);
                    let mut trans = 1.0;
                    let mut color = [0.0; 3];
                    let mut depth = 0.0;
                    let mut alpha_acc = 0.0;
                    for &pi in bin {
                        let p = &projected[pi as usize];
                        let delta = pix - p.mean_2d;
                        let sigma = 0.5 * (delta.transpose() * p.conic * delta)[(0, 0)];
                        if sigma < 0.0 || !sigma.is_finite() {
                            continue;
                        }
                        let alpha = (p.opacity * (-sigma).exp()).min(cfg.alpha_clamp);
                        if alpha < cfg.alpha_skip {
                            continue;
                        }
                        for ch in 0..3 {
                            color[ch] += p.color[ch] * alpha * trans;
                        }
                        depth += p.cam_depth * alpha * trans;
                        alpha_acc += alpha * trans;
                        if keep_records {
                            out.blend[local].push(BlendRecord {
                                proj_index: pi,
                                alpha,
                                transmittance: trans,
                            });
                        }
                        trans *= 1.0 - alpha;
                        if trans < cfg.transmittance_min {
                            break;
                        }
                    }
                    out.color[local] = color;
                    out.depth[local] = depth;
                    out.alpha[local] = alpha_acc;
                }
            }
            out
        })
        .collect();

    let mut color = ColorMap::black(w, h);
    let mut depth = ScalarMap::zeros(w, h);
    let mut alpha = ScalarMap::zeros(w, h);
    let mut blend = if keep_records {
        vec![Vec::new(); w * h]
    } else {
        Vec::new()
    };
    for mut tr in results {
        let tx = tr.tile_index % tiles_x;
        let ty = tr.tile_index / tiles_x;
        let x_start = tx * ts;
        let y_start = ty * ts;
        let tw = (x_start + ts).min(w) - x_start;
        let th = (y_start + ts).min(h) - y_start;
        for ly in 0..th {
            for lx in 0..tw {
                let local = ly * tw + lx;
                let (px, py) = (x_start + lx, y_start + ly);
                color.set(px, py, tr.color[local]);
                depth.set(px, py, tr.depth[local]);
                alpha.set(px, py, tr.alpha[local]);
                if keep_records {
                    blend[py * w + px] = std::mem::take(&mut tr.blend[local]);
                }
            }
        }
    }

    RenderedFrame {
        color,
        depth,
        alpha,
        projected,
        blend,
        has_records: keep_records,
        diagnostics,
        num_gaussians: gaussians.len(),
    }
}
