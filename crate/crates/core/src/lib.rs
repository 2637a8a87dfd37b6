//! Dense RGBD SLAM with a 3D Gaussian scene representation.
//!
//! The scene is organized into sub-maps of anisotropic 3D Gaussians that are
//! rendered with a differentiable CPU rasterizer (color, depth, alpha).
//! Mapping optimizes the active sub-map against its keyframes; tracking
//! estimates camera poses frame-to-model against renderings of the map.
//! Finished maps can be fused into a TSDF volume and meshed, and runs are
//! scored with standard trajectory/rendering metrics.

pub mod config;
pub mod dataset;
pub mod error;
pub mod geom;
pub mod image2d;
pub mod loss;
pub mod map;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod render;
pub mod track;
pub mod tsdf;

pub use error::Error;
