//! Generic numbered-frame RGBD directory loader.
//!
//! Layout under the sequence root:
//! - `color/NNNNNN.png` — 8-bit RGB frames, consecutive indices from 0
//! - `depth/NNNNNN.png` — 16-bit depth, same indices
//! - `intrinsics.txt` — `fx fy cx cy depth_scale` on one line
//! - `poses.txt` (optional) — per frame `tx ty tz qx qy qz qw`,
//!   camera-to-world
//!
//! Frame indices are zero-padded to six digits; timestamps are synthesized
//! at 30 Hz.

use std::path::Path;

use crate::error::Result;
use crate::geom::CameraIntrinsics;

use super::{dataset_err, load_color_png, load_depth_png, pose_from_tum_fields, LoadedSequence, RGBDFrame};

fn parse_intrinsics(path: &Path) -> Result<(f64, f64, f64, f64, f64)> {
    let text = std::fs::read_to_string(path)?;
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| dataset_err(path, "no intrinsics line"))?;
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| dataset_err(path, format!("bad intrinsics line: {line}")))?;
    match vals.as_slice() {
        [fx, fy, cx, cy] => Ok((*fx, *fy, *cx, *cy, 5000.0)),
        [fx, fy, cx, cy, scale] => Ok((*fx, *fy, *cx, *cy, *scale)),
        _ => Err(dataset_err(
            path,
            "expected 'fx fy cx cy [depth_scale]'".to_string(),
        )),
    }
}

/// Load numbered color/depth pairs until the first missing index.
/// `depth_scale` overrides the scale from `intrinsics.txt`.
pub fn load_generic_sequence(
    root: &Path,
    max_frames: Option<usize>,
    depth_scale: Option<f64>,
) -> Result<LoadedSequence> {
    let (fx, fy, cx, cy, file_scale) = parse_intrinsics(&root.join("intrinsics.txt"))?;
    let depth_scale = depth_scale.unwrap_or(file_scale);

    let poses_path = root.join("poses.txt");
    let gt_poses: Vec<[f64; 7]> = if poses_path.exists() {
        let text = std::fs::read_to_string(&poses_path)?;
        let mut out = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| dataset_err(&poses_path, format!("bad pose line: {line}")))?;
            let arr: [f64; 7] = vals
                .try_into()
                .map_err(|_| dataset_err(&poses_path, "pose lines need 7 values"))?;
            out.push(arr);
        }
        out
    } else {
        Vec::new()
    };

    let limit = max_frames.unwrap_or(usize::MAX);
    let mut frames = Vec::new();
    let mut size: Option<(usize, usize)> = None;
    for i in 0.. {
        if frames.len() >= limit {
            break;
        }
        let color_path = root.join(format!("color/{i:06}.png"));
        let depth_path = root.join(format!("depth/{i:06}.png"));
        if !color_path.exists() {
            break;
        }
        let color = load_color_png(&color_path)?;
        let depth = load_depth_png(&depth_path, depth_scale)?;
        if !color.same_shape(&depth) {
            return Err(dataset_err(root, format!("frame {i} color/depth size mismatch")));
        }
        match size {
            None => size = Some((color.width(), color.height())),
            Some(s) if s != (color.width(), color.height()) => {
                return Err(dataset_err(root, "inconsistent image sizes in sequence"))
            }
            _ => {}
        }
        frames.push(RGBDFrame {
            gt_pose: gt_poses.get(i).map(pose_from_tum_fields),
            color,
            depth,
            timestamp: i as f64 / 30.0,
        });
    }
    if frames.is_empty() {
        return Err(dataset_err(root, "no frames found under color/"));
    }
    let (w, h) = size.unwrap();
    Ok(LoadedSequence {
        frames,
        camera: CameraIntrinsics::new(fx, fy, cx, cy, w, h),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma, Rgb};
    use nalgebra::Vector3;

    fn write_sequence(root: &Path, n: usize, with_poses: bool) {
        std::fs::create_dir_all(root.join("color")).unwrap();
        std::fs::create_dir_all(root.join("depth")).unwrap();
        std::fs::write(root.join("intrinsics.txt"), "100 100 8 6 1000\n").unwrap();
        let mut poses = String::new();
        for i in 0..n {
            let rgb: ImageBuffer<Rgb<u8>, Vec<u8>> =
                ImageBuffer::from_fn(16, 12, |x, y| Rgb([(x + y) as u8, i as u8, 0]));
            rgb.save(root.join(format!("color/{i:06}.png"))).unwrap();
            let depth: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_fn(16, 12, |_, _| Luma([2000]));
            depth.save(root.join(format!("depth/{i:06}.png"))).unwrap();
            poses.push_str(&format!("{} 0 0 0 0 0 1\n", i as f64 * 0.05));
        }
        if with_poses {
            std::fs::write(root.join("poses.txt"), poses).unwrap();
        }
    }

    #[test]
    fn loads_sequence_with_poses() {
        let dir = tempfile::tempdir().unwrap();
        write_sequence(dir.path(), 3, true);
        let seq = load_generic_sequence(dir.path(), None, None).unwrap();
        assert_eq!(seq.frames.len(), 3);
        assert_eq!(seq.camera.fx, 100.0);
        assert_eq!(seq.camera.width, 16);
        assert!((seq.frames[0].depth.get(3, 3) - 2.0).abs() < 1e-12);
        let p = seq.frames[2].gt_pose.unwrap();
        assert!((p.center() - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn missing_poses_file_is_fine() {
        let dir = tempfile::tempdir().unwrap();
        write_sequence(dir.path(), 2, false);
        let seq = load_generic_sequence(dir.path(), None, None).unwrap();
        assert!(seq.frames.iter().all(|f| f.gt_pose.is_none()));
    }

    #[test]
    fn empty_directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("intrinsics.txt"), "100 100 8 6\n").unwrap();
        assert!(load_generic_sequence(dir.path(), None, None).is_err());
    }
}
