//! Deterministic synthetic RGBD sequences rendered from a random Gaussian
//! scene, for closed-loop testing with exact ground truth.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{logit, CameraIntrinsics, Gaussian3D, Pose, Quat};
use crate::image2d::ScalarMap;
use crate::render::{render, RenderConfig};

use super::{LoadedSequence, RGBDFrame};

#[derive(Clone, Copy, Debug)]
pub enum TrajectoryKind {
    /// Sweep an arc around the scene center at fixed radius, always looking
    /// at the center.
    Orbit { radius: f64, arc_degrees: f64 },
    /// Translate sideways at fixed distance, looking at the scene center.
    Line { length: f64, distance: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    pub num_gaussians: usize,
    pub num_frames: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Gaussians are placed inside a ball of this radius around the origin.
    pub scene_radius: f64,
    pub trajectory: TrajectoryKind,
    /// Depth is valid only where the rendered alpha exceeds this.
    pub alpha_threshold: f64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            num_gaussians: 400,
            num_frames: 20,
            width: 128,
            height: 128,
            focal: 120.0,
            scene_radius: 0.5,
            trajectory: TrajectoryKind::Orbit {
                radius: 2.0,
                arc_degrees: 40.0,
            },
            alpha_threshold: 0.5,
        }
    }
}

/// A generated sequence plus the ground-truth scene it was rendered from.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub frames: Vec<RGBDFrame>,
    pub camera: CameraIntrinsics,
    pub gaussians: Vec<Gaussian3D>,
}

impl SyntheticSequence {
    pub fn into_loaded(self) -> LoadedSequence {
        LoadedSequence {
            frames: self.frames,
            camera: self.camera,
        }
    }
}

/// World-to-camera pose at `eye` looking at `target` (camera z forward).
fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Pose {
    let forward = (target - eye).normalize();
    let mut right = up.cross(&forward);
    if right.norm() < 1e-9 {
        right = Vector3::x();
    } else {
        right = right.normalize();
    }
    let down = forward.cross(&right);
    let r_cam_to_world = Matrix3::from_columns(&[right, down, forward]);
    let rotation = quat_from_matrix(&r_cam_to_world.transpose());
    let translation = -(r_cam_to_world.transpose() * eye);
    Pose::new(rotation, translation)
}

/// Rotation matrix to quaternion via nalgebra.
fn quat_from_matrix(m: &Matrix3<f64>) -> Quat {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
    let uq = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    Quat::new(uq.w, uq.i, uq.j, uq.k)
}

fn trajectory_pose(kind: &TrajectoryKind, t: f64) -> Pose {
    match *kind {
        TrajectoryKind::Orbit {
            radius,
            arc_degrees,
        } => {
            let theta = (t - 0.5) * arc_degrees.to_radians();
            let eye = Vector3::new(radius * theta.sin(), 0.0, -radius * theta.cos());
            look_at(eye, Vector3::zeros(), Vector3::y())
        }
        TrajectoryKind::Line { length, distance } => {
            let eye = Vector3::new((t - 0.5) * length, 0.0, -distance);
            look_at(eye, Vector3::zeros(), Vector3::y())
        }
    }
}

/// Render a deterministic sequence from a random scene.
pub fn generate_synthetic(spec: &SyntheticSceneSpec) -> SyntheticSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let camera = CameraIntrinsics::new(
        spec.focal,
        spec.focal,
        spec.width as f64 / 2.0,
        spec.height as f64 / 2.0,
        spec.width,
        spec.height,
    );
    // typical spacing of `num_gaussians` points on the shell, used to size
    // the splats so the surface closes up without large overlaps
    let spacing = spec.scene_radius
        * (4.0 * std::f64::consts::PI / spec.num_gaussians.max(1) as f64).sqrt();
    let gaussians: Vec<Gaussian3D> = (0..spec.num_gaussians)
        .map(|_| {
            // near-opaque splats on a jittered spherical shell: RGBD frames
            // come from surfaces, so the scene should be one
            let dir = loop {
                let p = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let n = p.norm();
                if n > 1e-3 && n <= 1.0 {
                    break p / n;
                }
            };
            let mean = dir * spec.scene_radius * rng.gen_range(0.97..1.03);
            let s = spacing * rng.gen_range(0.5..1.0);
            Gaussian3D {
                mean,
                rotation: Quat::from_axis_angle(
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ),
                    rng.gen_range(0.0..3.0),
                ),
                log_scales: Vector3::new(
                    (s * rng.gen_range(0.7..1.4)).ln(),
                    (s * rng.gen_range(0.7..1.4)).ln(),
                    (s * rng.gen_range(0.7..1.4)).ln(),
                ),
                opacity_logit: logit(rng.gen_range(0.85..0.98)),
                color: [rng.gen(), rng.gen(), rng.gen()],
            }
        })
        .collect();

    let render_cfg = RenderConfig::default();
    let frames = (0..spec.num_frames)
        .map(|i| {
            let t = if spec.num_frames > 1 {
                i as f64 / (spec.num_frames - 1) as f64
            } else {
                0.5
            };
            let pose = trajectory_pose(&spec.trajectory, t);
            let r = render(&gaussians, &pose, &camera, &render_cfg, false);
            let depth: Vec<f64> = r
                .alpha
                .data()
                .iter()
                .zip(r.depth.data())
                .map(|(&a, &d)| if a > spec.alpha_threshold { d } else { 0.0 })
                .collect();
            RGBDFrame {
                color: r.color,
                depth: ScalarMap::from_vec(spec.width, spec.height, depth),
                timestamp: i as f64 / 30.0,
                gt_pose: Some(pose),
            }
        })
        .collect();

    SyntheticSequence {
        frames,
        camera,
        gaussians,
    }
}
