//! TUM-style RGBD directory loader.
//!
//! Expects `rgb.txt`, `depth.txt` and optionally `groundtruth.txt` in the
//! sequence root, each listing `timestamp path` (or `timestamp tx ty tz qx
//! qy qz qw` for ground truth) with `#` comment lines. Color, depth and
//! ground truth are associated by nearest timestamp within a tolerance.

use std::path::Path;

use crate::error::Result;
use crate::geom::{CameraIntrinsics, Pose};

use super::{dataset_err, load_color_png, load_depth_png, pose_from_tum_fields, LoadedSequence, RGBDFrame};

/// Default association tolerance, seconds.
const MAX_TIME_DIFF: f64 = 0.02;
/// Default depth encoding: 16-bit ticks per meter.
const DEPTH_SCALE: f64 = 5000.0;

/// Freiburg-1 style defaults for 640x480 sequences.
fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(517.3, 516.5, 318.6, 255.3, 640, 480)
}

fn parse_stamped_lines(path: &Path) -> Result<Vec<(f64, Vec<String>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let stamp: f64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| dataset_err(path, format!("bad timestamp line: {line}")))?;
        out.push((stamp, fields.map(str::to_string).collect()));
    }
    if !out.windows(2).all(|w| w[0].0 <= w[1].0) {
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }
    Ok(out)
}

/// Index of the entry with the nearest timestamp, if within tolerance.
fn nearest_index(stamps: &[(f64, Vec<String>)], t: f64, tol: f64) -> Option<usize> {
    if stamps.is_empty() {
        return None;
    }
    let mut lo = stamps.partition_point(|(s, _)| *s < t);
    if lo == stamps.len() {
        lo -= 1;
    }
    let mut best = lo;
    if lo > 0 && (stamps[lo - 1].0 - t).abs() < (stamps[best].0 - t).abs() {
        best = lo - 1;
    }
    ((stamps[best].0 - t).abs() <= tol).then_some(best)
}

/// Load a TUM-style sequence, associating depth and ground truth to each
/// color frame by nearest timestamp. Color frames without a depth match
/// within tolerance are skipped; ground truth is optional per frame.
/// `depth_scale` overrides the default 5000 ticks/meter encoding.
pub fn load_tum_sequence(
    root: &Path,
    max_frames: Option<usize>,
    depth_scale: Option<f64>,
) -> Result<LoadedSequence> {
    let depth_scale = depth_scale.unwrap_or(DEPTH_SCALE);
    let rgb_list = parse_stamped_lines(&root.join("rgb.txt"))?;
    let depth_list = parse_stamped_lines(&root.join("depth.txt"))?;
    if rgb_list.is_empty() || depth_list.is_empty() {
        return Err(dataset_err(root, "empty rgb.txt or depth.txt"));
    }
    let gt_path = root.join("groundtruth.txt");
    let gt_list = if gt_path.exists() {
        parse_stamped_lines(&gt_path)?
    } else {
        Vec::new()
    };

    let mut frames = Vec::new();
    let limit = max_frames.unwrap_or(usize::MAX);
    let mut camera: Option<CameraIntrinsics> = None;
    for (stamp, fields) in &rgb_list {
        if frames.len() >= limit {
            break;
        }
        let rgb_rel = fields
            .first()
            .ok_or_else(|| dataset_err(root, format!("rgb.txt entry at {stamp} has no path")))?;
        let Some(di) = nearest_index(&depth_list, *stamp, MAX_TIME_DIFF) else {
            continue;
        };
        let depth_rel = depth_list[di].1.first().ok_or_else(|| {
            dataset_err(root, format!("depth.txt entry at {} has no path", depth_list[di].0))
        })?;
        let color = load_color_png(&root.join(rgb_rel))?;
        let depth = load_depth_png(&root.join(depth_rel), depth_scale)?;
        if !color.same_shape(&depth) {
            return Err(dataset_err(
                root,
                format!("color/depth size mismatch for frame at {stamp}"),
            ));
        }
        let gt_pose = nearest_index(&gt_list, *stamp, MAX_TIME_DIFF).and_then(|gi| {
            let f = &gt_list[gi].1;
            if f.len() < 7 {
                return None;
            }
            let mut vals = [0.0f64; 7];
            for (v, s) in vals.iter_mut().zip(f.iter()) {
                *v = s.parse().ok()?;
            }
            Some(pose_from_tum_fields(&vals))
        });
        let cam = camera.get_or_insert_with(|| {
            let mut c = default_intrinsics();
            if c.width != color.width() || c.height != color.height() {
                // keep the field of view, rescale to the actual resolution
                let sx = color.width() as f64 / c.width as f64;
                let sy = color.height() as f64 / c.height as f64;
                c = CameraIntrinsics::new(
                    c.fx * sx,
                    c.fy * sy,
                    c.cx * sx,
                    c.cy * sy,
                    color.width(),
                    color.height(),
                );
            }
            c
        });
        if cam.width != color.width() || cam.height != color.height() {
            return Err(dataset_err(root, "inconsistent image sizes in sequence"));
        }
        frames.push(RGBDFrame {
            color,
            depth,
            timestamp: *stamp,
            gt_pose,
        });
    }
    if frames.is_empty() {
        return Err(dataset_err(root, "no associated color/depth pairs"));
    }
    let camera = camera.unwrap();
    Ok(LoadedSequence { frames, camera })
}

/// Format one trajectory line: `timestamp tx ty tz qx qy qz qw`, with the
/// pose reported camera-to-world.
pub fn format_trajectory_line(timestamp: f64, world_to_camera: &Pose) -> String {
    let c2w = world_to_camera.inverse();
    let q = c2w.rotation.normalized();
    let t = c2w.translation;
    format!(
        "{timestamp:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        t.x, t.y, t.z, q.x, q.y, q.z, q.w
    )
}
