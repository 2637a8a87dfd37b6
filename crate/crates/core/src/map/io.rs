//! Compact binary serialization for finished sub-maps, so the pipeline can
//! keep only the active sub-map in memory.
//!
//! Layout (little-endian): magic, version, anchor pose as 7 f64
//! (quaternion w,x,y,z then translation), keyframe count plus per-keyframe
//! frame index (u64) and pose (7 f64), then the Gaussian count and one
//! 14-f32 record per Gaussian (mean, quaternion, log-scales, opacity logit,
//! color). Pixel data is not stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{Gaussian3D, Pose, Quat};

use super::SubMap;

const MAGIC: &[u8; 4] = b"GSMP";
const VERSION: u32 = 1;

fn write_pose(w: &mut impl Write, pose: &Pose) -> Result<()> {
    for v in [
        pose.rotation.w,
        pose.rotation.x,
        pose.rotation.y,
        pose.rotation.z,
        pose.translation.x,
        pose.translation.y,
        pose.translation.z,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_pose(r: &mut impl Read) -> Result<Pose> {
    let qw = read_f64(r)?;
    let qx = read_f64(r)?;
    let qy = read_f64(r)?;
    let qz = read_f64(r)?;
    let tx = read_f64(r)?;
    let ty = read_f64(r)?;
    let tz = read_f64(r)?;
    Ok(Pose::new(Quat::new(qw, qx, qy, qz), Vector3::new(tx, ty, tz)))
}

pub fn save_submap(path: &Path, submap: &SubMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_pose(&mut w, &submap.anchor_pose)?;
    w.write_all(&(submap.keyframes.len() as u32).to_le_bytes())?;
    for kf in &submap.keyframes {
        w.write_all(&(kf.frame_index as u64).to_le_bytes())?;
        write_pose(&mut w, &kf.pose)?;
    }
    w.write_all(&(submap.gaussians.len() as u32).to_le_bytes())?;
    for g in &submap.gaussians {
        for v in [
            g.mean.x,
            g.mean.y,
            g.mean.z,
            g.rotation.w,
            g.rotation.x,
            g.rotation.y,
            g.rotation.z,
            g.log_scales.x,
            g.log_scales.y,
            g.log_scales.z,
            g.opacity_logit,
            g.color[0],
            g.color[1],
            g.color[2],
        ] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A sub-map read back from disk: Gaussians, anchor pose and keyframe
/// trajectory, without pixel data.
#[derive(Clone, Debug)]
pub struct StoredSubMap {
    pub gaussians: Vec<Gaussian3D>,
    pub anchor_pose: Pose,
    pub keyframe_poses: Vec<(usize, Pose)>,
}

pub fn load_submap(path: &Path) -> Result<StoredSubMap> {
    let bad = |msg: &str| Error::Dataset {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a sub-map file (bad magic)"));
    }
    if read_u32(&mut r)? != VERSION {
        return Err(bad("unsupported sub-map version"));
    }
    let anchor_pose = read_pose(&mut r)?;
    let kf_count = read_u32(&mut r)? as usize;
    let mut keyframe_poses = Vec::with_capacity(kf_count);
    for _ in 0..kf_count {
        let idx = read_u64(&mut r)? as usize;
        keyframe_poses.push((idx, read_pose(&mut r)?));
    }
    let n = read_u32(&mut r)? as usize;
    let mut gaussians = Vec::with_capacity(n);
    for _ in 0..n {
        let mut vals = [0.0f64; 14];
        for v in vals.iter_mut() {
            *v = read_f32(&mut r)? as f64;
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite Gaussian record"));
        }
        gaussians.push(Gaussian3D {
            mean: Vector3::new(vals[0], vals[1], vals[2]),
            rotation: Quat::new(vals[3], vals[4], vals[5], vals[6]),
            log_scales: Vector3::new(vals[7], vals[8], vals[9]),
            opacity_logit: vals[10],
            color: [vals[11], vals[12], vals[13]],
        });
    }
    Ok(StoredSubMap {
        gaussians,
        anchor_pose,
        keyframe_poses,
    })
}
