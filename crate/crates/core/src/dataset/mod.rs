//! RGBD sequence ingestion: TUM-RGBD and generic directory layouts, plus
//! synthetic sequence generation for closed-loop testing.

mod generic;
mod synthetic;
mod tum;

pub use generic::load_generic_sequence;
pub use synthetic::{generate_synthetic, SyntheticSceneSpec, SyntheticSequence, TrajectoryKind};
pub use tum::{format_trajectory_line, load_tum_sequence};

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Pose};
use crate::image2d::{ColorMap, ScalarMap};

/// One input frame: color in [0,1], depth in meters (0 = invalid).
#[derive(Clone, Debug)]
pub struct RGBDFrame {
    pub color: ColorMap,
    pub depth: ScalarMap,
    pub timestamp: f64,
    pub gt_pose: Option<Pose>,
}

impl RGBDFrame {
    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    /// Mask of pixels with a valid (positive) depth measurement.
    pub fn valid_depth_mask(&self) -> crate::image2d::BoolMap {
        self.depth.map(|&d| d > 0.0)
    }
}

/// A loaded sequence plus the camera it was captured with.
#[derive(Clone, Debug)]
pub struct LoadedSequence {
    pub frames: Vec<RGBDFrame>,
    pub camera: CameraIntrinsics,
}

pub(crate) fn dataset_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Dataset {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Read an 8-bit color PNG into [0,1] RGB.
pub(crate) fn load_color_png(path: &Path) -> Result<ColorMap> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .pixels()
        .map(|p| {
            [
                p.0[0] as f64 / 255.0,
                p.0[1] as f64 / 255.0,
                p.0[2] as f64 / 255.0,
            ]
        })
        .collect();
    Ok(ColorMap::from_vec(w, h, data))
}

/// Read a 16-bit grayscale PNG into metric depth; zero stays invalid.
pub(crate) fn load_depth_png(path: &Path, depth_scale: f64) -> Result<ScalarMap> {
    if depth_scale <= 0.0 {
        return Err(dataset_err(path, "depth scale must be positive"));
    }
    let img = image::open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0[0] as f64 / depth_scale).collect();
    Ok(ScalarMap::from_vec(w, h, data))
}

/// Parse "tx ty tz qx qy qz qw" (camera-to-world) into a world-to-camera pose.
pub(crate) fn pose_from_tum_fields(fields: &[f64; 7]) -> Pose {
    let cam_to_world = Pose::new(
        crate::geom::Quat::new(fields[6], fields[3], fields[4], fields[5]),
        nalgebra::Vector3::new(fields[0], fields[1], fields[2]),
    );
    cam_to_world.inverse()
}
