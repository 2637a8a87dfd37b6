//! Truncated signed distance fusion and triangle-mesh extraction.
//!
//! Depth maps are fused into a sparse voxel grid by projective signed
//! distance with a weighted running average; the surface is extracted by
//! marching cubes with linear interpolation along edges.

mod mesh;
mod tables;

pub use mesh::{extract_mesh, write_ply, Mesh};

use std::collections::{HashMap, HashSet};

use nalgebra::Vector3;

use crate::geom::{CameraIntrinsics, Pose};
use crate::image2d::{ColorMap, ScalarMap};

#[derive(Clone, Copy, Debug, Default)]
pub struct Voxel {
    /// Truncated signed distance in [-1, 1] (units of the truncation).
    pub tsdf: f64,
    pub weight: f64,
    /// Weighted RGB accumulator (divide by weight for the mean color).
    pub color: [f64; 3],
}

/// Sparse TSDF volume keyed by integer voxel coordinates.
#[derive(Clone, Debug)]
pub struct TSDFVolume {
    pub voxel_size: f64,
    pub truncation: f64,
    voxels: HashMap<(i64, i64, i64), Voxel>,
}

impl TSDFVolume {
    pub fn new(voxel_size: f64, truncation: f64) -> Self {
        assert!(voxel_size > 0.0 && truncation > 0.0);
        Self {
            voxel_size,
            truncation,
            voxels: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxel(&self, key: &(i64, i64, i64)) -> Option<&Voxel> {
        self.voxels.get(key)
    }

    pub fn voxels(&self) -> impl Iterator<Item = (&(i64, i64, i64), &Voxel)> {
        self.voxels.iter()
    }

    /// World-space center of a voxel.
    pub fn voxel_center(&self, key: &(i64, i64, i64)) -> Vector3<f64> {
        Vector3::new(
            (key.0 as f64 + 0.5) * self.voxel_size,
            (key.1 as f64 + 0.5) * self.voxel_size,
            (key.2 as f64 + 0.5) * self.voxel_size,
        )
    }

    fn key_of(&self, p: &Vector3<f64>) -> (i64, i64, i64) {
        (
            (p.x / self.voxel_size).floor() as i64,
            (p.y / self.voxel_size).floor() as i64,
            (p.z / self.voxel_size).floor() as i64,
        )
    }

    /// Directly fuse one signed-distance observation into a voxel
    /// (used for analytic test volumes as well as by `integrate`).
    pub fn fuse_sample(&mut self, key: (i64, i64, i64), sdf: f64, color: [f64; 3]) {
        let tsdf = (sdf / self.truncation).clamp(-1.0, 1.0);
        let v = self.voxels.entry(key).or_default();
        v.tsdf = (v.tsdf * v.weight + tsdf) / (v.weight + 1.0);
        for ch in 0..3 {
            v.color[ch] += color[ch];
        }
        v.weight += 1.0;
    }

    /// Fuse one depth + color frame taken from world-to-camera pose `pose`.
    ///
    /// The set of voxels a frame updates depends only on that frame: each
    /// valid depth pixel marks the voxels along its ray within the
    /// truncation band, and every marked voxel receives one projective
    /// signed-distance observation. Replayed in any frame order, the same
    /// (frame, voxel) updates occur, so fusion is order-independent up to
    /// floating-point rounding in the running average.
    pub fn integrate(
        &mut self,
        depth: &ScalarMap,
        color: &ColorMap,
        pose: &Pose,
        cam: &CameraIntrinsics,
    ) {
        assert!(depth.same_shape(color));
        let cam_to_world = pose.inverse();
        let mut touched: HashSet<(i64, i64, i64)> = HashSet::new();
        let step = 0.5 * self.voxel_size;
        for y in 0..depth.height() {
            for x in 0..depth.width() {
                let d = *depth.get(x, y);
                if d <= 0.0 {
                    continue;
                }
                let lo = (d - self.truncation).max(cam.z_near);
                let hi = d + self.truncation;
                let mut z = lo;
                while z <= hi {
                    let p_cam = cam.unproject(x as f64, y as f64, z);
                    touched.insert(self.key_of(&cam_to_world.apply(&p_cam)));
                    z += step;
                }
            }
        }
        for key in touched {
            let center_world = self.voxel_center(&key);
            let p_cam = pose.apply(&center_world);
            if p_cam.z <= cam.z_near {
                continue;
            }
            let uv = cam.project(&p_cam);
            let (u, v) = (uv.x.round(), uv.y.round());
            if u < 0.0 || v < 0.0 || u >= cam.width as f64 || v >= cam.height as f64 {
                continue;
            }
            let (ui, vi) = (u as usize, v as usize);
            let d = *depth.get(ui, vi);
            if d <= 0.0 {
                continue;
            }
            let sdf = d - p_cam.z;
            if sdf < -self.truncation {
                continue;
            }
            self.fuse_sample(key, sdf.min(self.truncation), *color.get(ui, vi));
        }
    }
}
