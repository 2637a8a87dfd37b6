//! End-to-end pipeline: tracking every frame, keyframe mapping with
//! bounded sub-maps, merge + color refinement, and artifact output.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetKind, SlamConfig};
use crate::dataset::{
    generate_synthetic, load_generic_sequence, load_tum_sequence, LoadedSequence,
    SyntheticSceneSpec,
};
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Gaussian3D, Pose, Quat};
use crate::image2d::ScalarMap;
use crate::map::{
    load_submap, merge_submaps, optimize_submap, refine_global_colors, save_submap,
    seed_gaussians, should_start_submap, GaussianAdam, Keyframe, SubMap,
};
use crate::metrics::{evaluate_run, format_trajectory, MetricReport};
use crate::render::render;
use crate::track::track_frame;
use crate::tsdf::{extract_mesh, write_ply, TSDFVolume};

#[derive(Clone, Copy, Debug, Default)]
pub struct FrameTiming {
    pub frame: usize,
    pub tracking_ms: f64,
    pub mapping_ms: f64,
}

/// Everything needed to reproduce and audit a run.
#[derive(Clone, Debug, Default)]
pub struct RunManifest {
    pub config_snapshot: String,
    pub dataset_path: String,
    pub output_dir: String,
    pub seed: u64,
    pub timings: Vec<FrameTiming>,
    /// Frame indices at which each sub-map was started.
    pub submap_boundaries: Vec<usize>,
    /// Largest number of Gaussians resident in memory at any point.
    pub peak_resident_gaussians: usize,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dataset_path = {}\n", self.dataset_path));
        out.push_str(&format!("output_dir = {}\n", self.output_dir));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!(
            "submap_boundaries = {}\n",
            self.submap_boundaries
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        out.push_str(&format!(
            "peak_resident_gaussians = {}\n",
            self.peak_resident_gaussians
        ));
        for t in &self.timings {
            out.push_str(&format!(
                "frame_{}_tracking_ms = {:.3}\nframe_{}_mapping_ms = {:.3}\n",
                t.frame, t.tracking_ms, t.frame, t.mapping_ms
            ));
        }
        out.push_str("--- config ---\n");
        out.push_str(&self.config_snapshot);
        out
    }
}

#[derive(Debug)]
pub struct SlamOutput {
    pub poses: Vec<Pose>,
    pub timestamps: Vec<f64>,
    pub global_map: Vec<Gaussian3D>,
    pub camera: CameraIntrinsics,
    pub report: Option<MetricReport>,
    pub manifest: RunManifest,
}

/// Stage-tagged error context.
fn stage_err(stage: &str, frame: usize, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("[{stage} frame {frame}] {m}")),
        Error::TrackingFailed(m) => Error::TrackingFailed(format!("[{stage} frame {frame}] {m}")),
        Error::Diverged(m) => Error::Diverged(format!("[{stage} frame {frame}] {m}")),
        other => Error::Config(format!("[{stage} frame {frame}] {other}")),
    }
}

pub fn load_dataset(cfg: &SlamConfig) -> Result<LoadedSequence> {
    match cfg.dataset.kind {
        DatasetKind::Synthetic => {
            let s = &cfg.synthetic;
            let spec = SyntheticSceneSpec {
                seed: cfg.run.seed,
                num_gaussians: s.num_gaussians,
                num_frames: s.num_frames,
                width: s.width,
                height: s.height,
                focal: s.focal,
                scene_radius: s.scene_radius,
                trajectory: s.trajectory(),
                alpha_threshold: 0.5,
            };
            Ok(generate_synthetic(&spec).into_loaded())
        }
        DatasetKind::Tum => {
            let path = cfg
                .dataset
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("dataset.path required for tum".into()))?;
            load_tum_sequence(path, cfg.dataset.max_frames, cfg.dataset.depth_scale)
        }
        DatasetKind::Generic => {
            let path = cfg
                .dataset
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("dataset.path required for generic".into()))?;
            load_generic_sequence(path, cfg.dataset.max_frames, cfg.dataset.depth_scale)
        }
    }
}

/// Run the full pipeline and write all artifacts under `output_dir`.
pub fn run_slam(cfg: &SlamConfig, output_dir: &Path) -> Result<SlamOutput> {
    let sequence = load_dataset(cfg)?;
    run_slam_on_sequence(cfg, sequence, output_dir)
}

pub fn run_slam_on_sequence(
    cfg: &SlamConfig,
    sequence: LoadedSequence,
    output_dir: &Path,
) -> Result<SlamOutput> {
    if sequence.frames.is_empty() {
        return Err(Error::EmptyInput("sequence has no frames"));
    }
    std::fs::create_dir_all(output_dir)?;
    let submap_dir = output_dir.join("submaps");
    std::fs::create_dir_all(&submap_dir)?;

    let cam = sequence.camera;
    let frames: Vec<Arc<crate::dataset::RGBDFrame>> =
        sequence.frames.into_iter().map(Arc::new).collect();

    let mut manifest = RunManifest {
        config_snapshot: cfg.snapshot(),
        dataset_path: cfg
            .dataset
            .path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "<synthetic>".into()),
        output_dir: output_dir.display().to_string(),
        seed: cfg.run.seed,
        ..Default::default()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut poses: Vec<Pose> = Vec::with_capacity(frames.len());
    let mut submap_files: Vec<PathBuf> = Vec::new();
    let mut all_keyframes: Vec<Keyframe> = Vec::new();
    let mut peak = 0usize;

    // frame 0: anchor at ground truth if available, else identity
    let first_pose = frames[0].gt_pose.unwrap_or_else(Pose::identity);
    let mut active = SubMap::new(0, first_pose, frames[0].clone());
    let mut opt = GaussianAdam::new(&cfg.learning_rates);
    manifest.submap_boundaries.push(0);

    let map_start = Instant::now();
    seed_gaussians(
        &frames[0],
        &first_pose,
        &mut active,
        true,
        &cfg.mapping,
        &cam,
        &cfg.render,
        cfg.run.seed ^ 0x5eed,
    );
    optimize_submap(
        &mut active,
        &mut opt,
        cfg.mapping.iters_first_kf,
        &cfg.mapping,
        &cfg.loss,
        cfg.iso_mode,
        &cam,
        &cfg.render,
        &mut rng,
    )
    .map_err(|e| stage_err("mapping", 0, e))?;
    poses.push(first_pose);
    manifest.timings.push(FrameTiming {
        frame: 0,
        tracking_ms: 0.0,
        mapping_ms: map_start.elapsed().as_secs_f64() * 1000.0,
    });
    peak = peak.max(active.len());

    for i in 1..frames.len() {
        // tracking against the frozen active sub-map
        let track_start = Instant::now();
        let history: Vec<Pose> = poses.iter().rev().take(2).copied().collect();
        let tracked = track_frame(
            &active.gaussians,
            &frames[i],
            &history,
            &cam,
            &cfg.tracking,
            &cfg.render,
        )
        .map_err(|e| stage_err("tracking", i, e))?;
        let pose = tracked.pose;
        poses.push(pose);
        let tracking_ms = track_start.elapsed().as_secs_f64() * 1000.0;

        let mut mapping_ms = 0.0;
        if i % cfg.mapping.keyframe_every.max(1) == 0 {
            let map_start = Instant::now();
            let new_submap = should_start_submap(&pose, &active.anchor_pose, &cfg.mapping);
            if new_submap {
                // finalize the active sub-map to disk and start fresh
                let path = submap_dir.join(format!("submap_{:03}.bin", submap_files.len()));
                save_submap(&path, &active)?;
                all_keyframes.extend(active.keyframes.iter().cloned());
                submap_files.push(path);
                manifest.submap_boundaries.push(i);
                active = SubMap::new(i, pose, frames[i].clone());
                opt = GaussianAdam::new(&cfg.learning_rates);
            } else {
                active.add_keyframe(i, pose, frames[i].clone());
            }
            seed_gaussians(
                &frames[i],
                &pose,
                &mut active,
                new_submap,
                &cfg.mapping,
                &cam,
                &cfg.render,
                cfg.run.seed ^ (i as u64).wrapping_mul(0x9e37_79b9),
            );
            let iters = if new_submap {
                cfg.mapping.iters_first_kf
            } else {
                cfg.mapping.iters_kf
            };
            optimize_submap(
                &mut active,
                &mut opt,
                iters,
                &cfg.mapping,
                &cfg.loss,
                cfg.iso_mode,
                &cam,
                &cfg.render,
                &mut rng,
            )
            .map_err(|e| stage_err("mapping", i, e))?;
            mapping_ms = map_start.elapsed().as_secs_f64() * 1000.0;
        }
        peak = peak.max(active.len());
        manifest.timings.push(FrameTiming {
            frame: i,
            tracking_ms,
            mapping_ms,
        });
    }

    // finalize the last sub-map
    let path = submap_dir.join(format!("submap_{:03}.bin", submap_files.len()));
    save_submap(&path, &active)?;
    all_keyframes.extend(active.keyframes.iter().cloned());
    submap_files.push(path);
    let active_len = active.len();
    drop(active);

    // merge from disk; resident set = merge buffer only
    let mut stored = Vec::with_capacity(submap_files.len());
    for p in &submap_files {
        let mut sm = SubMap {
            gaussians: Vec::new(),
            anchor_pose: Pose::identity(),
            keyframes: Vec::new(),
        };
        let loaded = load_submap(p)?;
        sm.gaussians = loaded.gaussians;
        sm.anchor_pose = loaded.anchor_pose;
        stored.push(sm);
    }
    let mut global_map = merge_submaps(&stored, cfg.run.merge_rho);
    drop(stored);
    peak = peak.max(active_len + global_map.len());
    manifest.peak_resident_gaussians = peak;

    refine_global_colors(
        &mut global_map,
        &all_keyframes,
        &cam,
        &cfg.render,
        cfg.loss.lambda_ssim,
        cfg.run.refine_color_lr,
        cfg.run.refine_iters,
        &mut rng,
    )
    .map_err(|e| stage_err("refine", frames.len() - 1, e))?;

    // artifacts
    let timestamps: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
    std::fs::write(
        output_dir.join("trajectory.txt"),
        format_trajectory(&timestamps, &poses),
    )?;
    std::fs::write(output_dir.join("config.txt"), cfg.snapshot())?;
    save_global_map(&output_dir.join("global_map.bin"), &global_map)?;
    save_camera(&output_dir.join("camera.txt"), &cam)?;

    let report = if cfg.run.eval {
        let frame_refs: Vec<crate::dataset::RGBDFrame> =
            frames.iter().map(|f| (**f).clone()).collect();
        let report = evaluate_run(
            &global_map,
            &poses,
            &frame_refs,
            &cam,
            &cfg.render,
            cfg.run.eval_every,
        )?;
        std::fs::write(output_dir.join("metrics.txt"), report.to_key_values())?;
        std::fs::write(output_dir.join("metrics_table.txt"), report.to_table())?;
        Some(report)
    } else {
        None
    };

    if cfg.run.mesh {
        let mesh = mesh_from_map(&global_map, &poses, &cam, cfg)?;
        write_ply(&output_dir.join("mesh.ply"), &mesh)?;
    }

    std::fs::write(output_dir.join("manifest.txt"), manifest.to_text())?;

    Ok(SlamOutput {
        poses,
        timestamps,
        global_map,
        camera: cam,
        report,
        manifest,
    })
}

/// Fuse rendered depth/color of the global map at every `mesh_every`-th
/// pose and run marching cubes.
pub fn mesh_from_map(
    global_map: &[Gaussian3D],
    poses: &[Pose],
    cam: &CameraIntrinsics,
    cfg: &SlamConfig,
) -> Result<crate::tsdf::Mesh> {
    let mut volume = TSDFVolume::new(cfg.run.mesh_voxel, cfg.run.mesh_truncation);
    if !global_map.is_empty() {
        for pose in poses.iter().step_by(cfg.run.mesh_every.max(1)) {
            let r = render(global_map, pose, cam, &cfg.render, false);
            let depth: Vec<f64> = r
                .alpha
                .data()
                .iter()
                .zip(r.depth.data())
                .map(|(&a, &d)| if a >= 0.5 { d } else { 0.0 })
                .collect();
            let depth = ScalarMap::from_vec(cam.width, cam.height, depth);
            volume.integrate(&depth, &r.color, pose, cam);
        }
    }
    Ok(extract_mesh(&volume))
}

/// Persist the global map in the sub-map binary format (no keyframes).
pub fn save_global_map(path: &Path, gaussians: &[Gaussian3D]) -> Result<()> {
    let sm = SubMap {
        gaussians: gaussians.to_vec(),
        anchor_pose: Pose::identity(),
        keyframes: Vec::new(),
    };
    save_submap(path, &sm)
}

pub fn load_global_map(path: &Path) -> Result<Vec<Gaussian3D>> {
    Ok(load_submap(path)?.gaussians)
}

pub fn save_camera(path: &Path, cam: &CameraIntrinsics) -> Result<()> {
    Ok(std::fs::write(
        path,
        format!(
            "{} {} {} {} {} {}\n",
            cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height
        ),
    )?)
}

pub fn load_camera(path: &Path) -> Result<CameraIntrinsics> {
    let text = std::fs::read_to_string(path)?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Dataset {
            path: path.to_path_buf(),
            msg: "bad camera file".into(),
        })?;
    if vals.len() != 6 {
        return Err(Error::Dataset {
            path: path.to_path_buf(),
            msg: "camera file needs 'fx fy cx cy width height'".into(),
        });
    }
    Ok(CameraIntrinsics::new(
        vals[0],
        vals[1],
        vals[2],
        vals[3],
        vals[4] as usize,
        vals[5] as usize,
    ))
}

/// Parse a TUM-format trajectory back into world-to-camera poses.
pub fn load_trajectory(path: &Path) -> Result<Vec<(f64, Pose)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Dataset {
                path: path.to_path_buf(),
                msg: format!("bad trajectory line: {line}"),
            })?;
        if vals.len() != 8 {
            return Err(Error::Dataset {
                path: path.to_path_buf(),
                msg: "trajectory lines need 8 values".into(),
            });
        }
        let cam_to_world = Pose::new(
            Quat::new(vals[7], vals[4], vals[5], vals[6]),
            nalgebra::Vector3::new(vals[1], vals[2], vals[3]),
        );
        out.push((vals[0], cam_to_world.inverse()));
    }
    Ok(out)
}

/// Render the global map at the given poses and write one PNG per pose.
pub fn render_map_to_pngs(
    gaussians: &[Gaussian3D],
    poses: &[Pose],
    cam: &CameraIntrinsics,
    cfg: &SlamConfig,
    out_dir: &Path,
) -> Result<usize> {
    std::fs::create_dir_all(out_dir)?;
    for (i, pose) in poses.iter().enumerate() {
        let r = render(gaussians, pose, cam, &cfg.render, false);
        let mut img = image::RgbImage::new(cam.width as u32, cam.height as u32);
        for y in 0..cam.height {
            for x in 0..cam.width {
                let c = r.color.get(x, y);
                img.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgb([
                        (c[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                        (c[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                        (c[2].clamp(0.0, 1.0) * 255.0).round() as u8,
                    ]),
                );
            }
        }
        img.save(out_dir.join(format!("render_{i:06}.png")))
            .map_err(Error::Image)?;
    }
    Ok(poses.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SlamConfig {
        let mut cfg = SlamConfig::default();
        // small enough to run in seconds
        cfg.synthetic.num_gaussians = 120;
        cfg.synthetic.num_frames = 6;
        cfg.synthetic.width = 48;
        cfg.synthetic.height = 48;
        cfg.synthetic.focal = 45.0;
        cfg.synthetic.arc_degrees = 8.0;
        cfg.mapping.m_uniform = 300;
        cfg.mapping.m_color = 60;
        cfg.mapping.m_keyframe = 120;
        cfg.mapping.iters_first_kf = 30;
        cfg.mapping.iters_kf = 20;
        cfg.mapping.o_thre = 0.1;
        cfg.tracking.iters = 12;
        cfg.run.refine_iters = 10;
        cfg.run.eval = true;
        cfg.run.eval_every = 5;
        cfg
    }

    #[test]
    fn synthetic_run_produces_artifacts_and_is_deterministic() {
        let cfg = tiny_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let out_a = run_slam(&cfg, dir_a.path()).unwrap();
        let out_b = run_slam(&cfg, dir_b.path()).unwrap();

        for name in [
            "trajectory.txt",
            "config.txt",
            "metrics.txt",
            "manifest.txt",
            "global_map.bin",
            "camera.txt",
        ] {
            assert!(dir_a.path().join(name).exists(), "missing {name}");
        }
        let traj_a = std::fs::read(dir_a.path().join("trajectory.txt")).unwrap();
        let traj_b = std::fs::read(dir_b.path().join("trajectory.txt")).unwrap();
        assert_eq!(traj_a, traj_b, "trajectories differ between runs");
        let met_a = std::fs::read(dir_a.path().join("metrics.txt")).unwrap();
        let met_b = std::fs::read(dir_b.path().join("metrics.txt")).unwrap();
        assert_eq!(met_a, met_b, "metric files differ between runs");

        assert_eq!(out_a.poses.len(), 6);
        assert_eq!(out_a.manifest.timings.len(), 6);
        assert_eq!(out_a.manifest.submap_boundaries[0], 0);
        assert!(out_a.manifest.peak_resident_gaussians > 0);
        assert_eq!(out_a.global_map.len(), out_b.global_map.len());
        assert!(out_a.report.is_some());
    }

    #[test]
    fn global_map_round_trips_through_disk() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let out = run_slam(&cfg, dir.path()).unwrap();
        let loaded = load_global_map(&dir.path().join("global_map.bin")).unwrap();
        assert_eq!(loaded.len(), out.global_map.len());
        let cam = load_camera(&dir.path().join("camera.txt")).unwrap();
        assert_eq!(cam.width, 48);
        let traj = load_trajectory(&dir.path().join("trajectory.txt")).unwrap();
        assert_eq!(traj.len(), 6);
        // f32 storage + 6-decimal text round trip
        assert!(traj[3].1.translation_distance(&out.poses[3]) < 1e-4);
    }
}
