use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::RGBDFrame;
use crate::geom::{logit, CameraIntrinsics, Gaussian3D, Pose, Quat};
use crate::image2d::ScalarMap;
use crate::render::{render, RenderConfig};

use super::{MappingConfig, NeighborGrid, SubMap};

/// Grayscale Sobel gradient magnitude.
fn sobel_magnitude(frame: &RGBDFrame) -> ScalarMap {
    let (w, h) = (frame.width(), frame.height());
    let gray = frame
        .color
        .map(|c| 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]);
    let mut mag = ScalarMap::zeros(w, h);
    if w < 3 || h < 3 {
        return mag;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = |dx: i32, dy: i32| {
                *gray.get((x as i32 + dx) as usize, (y as i32 + dy) as usize)
            };
            let gx = -p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1) + p(1, -1) + 2.0 * p(1, 0) + p(1, 1);
            let gy = -p(-1, -1) - 2.0 * p(0, -1) - p(1, -1) + p(-1, 1) + 2.0 * p(0, 1) + p(1, 1);
            mag.set(x, y, (gx * gx + gy * gy).sqrt());
        }
    }
    mag
}

fn percentile(mut values: Vec<f64>, pct: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((pct / 100.0) * (values.len() - 1) as f64).round() as usize;
    values[idx.min(values.len() - 1)]
}

/// Sample `count` elements uniformly without replacement, in a stable order.
fn sample_without_replacement<T: Copy>(
    items: &[T],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<T> {
    if items.len() <= count {
        return items.to_vec();
    }
    let mut indices: Vec<usize> = (0..items.len()).collect();
    indices.shuffle(rng);
    indices.truncate(count);
    indices.sort_unstable();
    indices.into_iter().map(|i| items[i]).collect()
}

/// Seed new Gaussians from a keyframe into the active sub-map.
///
/// For a new sub-map, pixels are sampled uniformly plus from high
/// color-gradient regions; for follow-up keyframes, uniformly among pixels
/// where the rendered alpha is below the coverage threshold. Candidates
/// with an existing neighbor within `rho` are rejected; accepted points get
/// isotropic scales from the nearest-neighbor distance after the batch.
///
/// Returns the number of appended Gaussians.
#[allow(clippy::too_many_arguments)]
pub fn seed_gaussians(
    frame: &RGBDFrame,
    pose: &Pose,
    submap: &mut SubMap,
    is_new_submap: bool,
    cfg: &MappingConfig,
    cam: &CameraIntrinsics,
    render_cfg: &RenderConfig,
    rng_seed: u64,
) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (w, h) = (frame.width(), frame.height());
    let valid: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| *frame.depth.get(x, y) > 0.0)
        .collect();
    if valid.is_empty() {
        return 0;
    }

    let mut candidates: Vec<(usize, usize)> = Vec::new();
    if is_new_submap {
        candidates.extend(sample_without_replacement(&valid, cfg.m_uniform, &mut rng));
        let sobel = sobel_magnitude(frame);
        let threshold = percentile(
            valid.iter().map(|&(x, y)| *sobel.get(x, y)).collect(),
            cfg.color_gradient_percentile,
        );
        let high_grad: Vec<(usize, usize)> = valid
            .iter()
            .copied()
            .filter(|&(x, y)| *sobel.get(x, y) > threshold)
            .collect();
        candidates.extend(sample_without_replacement(&high_grad, cfg.m_color, &mut rng));
    } else {
        let rendered = render(&submap.gaussians, pose, cam, render_cfg, false);
        let uncovered: Vec<(usize, usize)> = valid
            .iter()
            .copied()
            .filter(|&(x, y)| *rendered.alpha.get(x, y) < cfg.alpha_n)
            .collect();
        candidates.extend(sample_without_replacement(
            &uncovered,
            cfg.m_keyframe,
            &mut rng,
        ));
    }

    let cam_to_world = pose.inverse();
    let mut grid = NeighborGrid::from_points(cfg.rho, submap.gaussians.iter().map(|g| &g.mean));
    let existing = submap.gaussians.len();
    for (x, y) in candidates {
        let depth = *frame.depth.get(x, y);
        let point = cam_to_world.apply(&cam.unproject(x as f64, y as f64, depth));
        if grid.has_neighbor_within(&point, cfg.rho) {
            continue;
        }
        grid.insert(point);
        submap.gaussians.push(Gaussian3D {
            mean: point,
            rotation: Quat::identity(),
            log_scales: Vector3::zeros(), // filled in below
            opacity_logit: logit(cfg.opacity_init),
            color: *frame.color.get(x, y),
        });
    }

    // isotropic scale init from nearest-neighbor distance after the batch
    for i in existing..submap.gaussians.len() {
        let mean = submap.gaussians[i].mean;
        let nn = grid
            .nearest_distance(&mean, Some(i as u32), cfg.scale_max)
            .unwrap_or(cfg.scale_max);
        let s = nn.clamp(cfg.scale_min, cfg.scale_max).ln();
        submap.gaussians[i].log_scales = Vector3::new(s, s, s);
    }
    submap.gaussians.len() - existing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image2d::ColorMap;
    use std::sync::Arc;

    fn flat_frame(w: usize, h: usize, depth: f64) -> RGBDFrame {
        RGBDFrame {
            color: ColorMap::new(w, h, [0.5, 0.4, 0.3]),
            depth: ScalarMap::new(w, h, depth),
            timestamp: 0.0,
            gt_pose: None,
        }
    }

    fn test_cam(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(60.0, 60.0, w as f64 / 2.0, h as f64 / 2.0, w, h)
    }

    #[test]
    fn batch_respects_min_spacing() {
        let frame = flat_frame(32, 32, 1.0);
        let cam = test_cam(32, 32);
        let pose = Pose::identity();
        let mut submap = SubMap::new(0, pose, Arc::new(frame.clone()));
        let cfg = MappingConfig {
            m_uniform: 200,
            m_color: 50,
            ..Default::default()
        };
        let n = seed_gaussians(
            &frame,
            &pose,
            &mut submap,
            true,
            &cfg,
            &cam,
            &RenderConfig::default(),
            42,
        );
        assert!(n > 0);
        // brute-force pairwise check
        for i in 0..submap.gaussians.len() {
            for j in 0..i {
                let d = (submap.gaussians[i].mean - submap.gaussians[j].mean).norm();
                assert!(d >= cfg.rho, "pair ({i},{j}) at distance {d}");
            }
        }
    }

    #[test]
    fn fully_covered_frame_adds_nothing() {
        // a follow-up keyframe over an opaque wall of splats
        let frame = flat_frame(32, 32, 1.0);
        let cam = test_cam(32, 32);
        let pose = Pose::identity();
        let mut submap = SubMap::new(0, pose, Arc::new(frame.clone()));
        let cfg = MappingConfig {
            m_uniform: 500,
            m_color: 0,
            m_keyframe: 500,
            ..Default::default()
        };
        seed_gaussians(
            &frame,
            &pose,
            &mut submap,
            true,
            &cfg,
            &cam,
            &RenderConfig::default(),
            1,
        );
        // make every splat opaque and large enough to saturate alpha
        for g in &mut submap.gaussians {
            g.opacity_logit = logit(0.99);
            g.log_scales = Vector3::new(0.05f64.ln(), 0.05f64.ln(), 0.05f64.ln());
        }
        let before = submap.gaussians.len();
        let added = seed_gaussians(
            &frame,
            &pose,
            &mut submap,
            false,
            &cfg,
            &cam,
            &RenderConfig::default(),
            2,
        );
        assert_eq!(added, 0);
        assert_eq!(submap.gaussians.len(), before);
    }

    #[test]
    fn seeding_is_deterministic_given_seed() {
        let frame = flat_frame(24, 24, 0.8);
        let cam = test_cam(24, 24);
        let pose = Pose::identity();
        let cfg = MappingConfig {
            m_uniform: 100,
            m_color: 20,
            ..Default::default()
        };
        let run = || {
            let mut submap = SubMap::new(0, pose, Arc::new(frame.clone()));
            seed_gaussians(
                &frame,
                &pose,
                &mut submap,
                true,
                &cfg,
                &cam,
                &RenderConfig::default(),
                7,
            );
            submap.gaussians
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.mean, y.mean);
            assert_eq!(x.log_scales, y.log_scales);
        }
    }

    #[test]
    fn no_valid_depth_appends_nothing() {
        let frame = flat_frame(16, 16, 0.0);
        let cam = test_cam(16, 16);
        let pose = Pose::identity();
        let mut submap = SubMap::new(0, pose, Arc::new(frame.clone()));
        let n = seed_gaussians(
            &frame,
            &pose,
            &mut submap,
            true,
            &MappingConfig::default(),
            &cam,
            &RenderConfig::default(),
            3,
        );
        assert_eq!(n, 0);
    }
}
