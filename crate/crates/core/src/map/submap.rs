use std::sync::Arc;

use crate::dataset::RGBDFrame;
use crate::geom::{Gaussian3D, Pose};

/// A keyframe contributing supervision to a sub-map.
#[derive(Clone, Debug)]
pub struct Keyframe {
    pub frame_index: usize,
    pub pose: Pose,
    pub frame: Arc<RGBDFrame>,
}

/// A bounded Gaussian collection plus its keyframes and anchor pose.
#[derive(Clone, Debug)]
pub struct SubMap {
    pub gaussians: Vec<Gaussian3D>,
    pub anchor_pose: Pose,
    pub keyframes: Vec<Keyframe>,
}

impl SubMap {
    /// Start a sub-map at its first keyframe; the anchor is that keyframe's pose.
    pub fn new(frame_index: usize, pose: Pose, frame: Arc<RGBDFrame>) -> Self {
        Self {
            gaussians: Vec::new(),
            anchor_pose: pose,
            keyframes: vec![Keyframe {
                frame_index,
                pose,
                frame,
            }],
        }
    }

    pub fn add_keyframe(&mut self, frame_index: usize, pose: Pose, frame: Arc<RGBDFrame>) {
        self.keyframes.push(Keyframe {
            frame_index,
            pose,
            frame,
        });
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}
