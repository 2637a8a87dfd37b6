//! Foundational geometry: quaternions, SE(3) poses, camera intrinsics and
//! the 3D Gaussian parameterization.

mod camera;
mod gaussian;
mod pose;
mod quat;

pub use camera::CameraIntrinsics;
pub use gaussian::{logit, sigmoid, Gaussian3D};
pub use pose::{constant_velocity_init, Pose};
pub use quat::{quat_to_matrix, rotation_grad_to_quat, Quat};
