use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::Result;

use super::tables::{CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};
use super::TSDFVolume;

/// Triangle mesh with per-vertex colors in [0,1].
#[derive(Clone, Debug, Default)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

/// A zero-crossing edge of the voxel grid: lower corner plus axis (0..3).
type EdgeKey = ((i64, i64, i64), u8);

/// Marching cubes over all cells whose 8 corners carry observations.
///
/// Vertices are welded through a global edge index, so shared cell faces
/// reuse identical vertices and closed surfaces come out watertight.
pub fn extract_mesh(volume: &TSDFVolume) -> Mesh {
    let mut mesh = Mesh::default();
    let mut edge_vertices: HashMap<EdgeKey, u32> = HashMap::new();

    // visit each cell once, in a deterministic order
    let mut cells: Vec<(i64, i64, i64)> = volume.voxels().map(|(k, _)| *k).collect();
    cells.sort_unstable();

    for base in cells {
        let mut values = [0.0f64; 8];
        let mut colors = [[0.0f64; 3]; 8];
        let mut complete = true;
        for (i, off) in CORNER_OFFSETS.iter().enumerate() {
            let key = (base.0 + off.0, base.1 + off.1, base.2 + off.2);
            match volume.voxel(&key) {
                Some(v) if v.weight > 0.0 => {
                    values[i] = v.tsdf;
                    colors[i] = [
                        v.color[0] / v.weight,
                        v.color[1] / v.weight,
                        v.color[2] / v.weight,
                    ];
                }
                _ => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            continue;
        }

        let mut case = 0usize;
        for (i, &v) in values.iter().enumerate() {
            if v < 0.0 {
                case |= 1 << i;
            }
        }
        if EDGE_TABLE[case] == 0 {
            continue;
        }

        let mut cell_edge_vertex = [u32::MAX; 12];
        for (k, &(a, b)) in EDGE_CORNERS.iter().enumerate() {
            if EDGE_TABLE[case] & (1 << k) == 0 {
                continue;
            }
            let ca = CORNER_OFFSETS[a];
            let cb = CORNER_OFFSETS[b];
            let ga = (base.0 + ca.0, base.1 + ca.1, base.2 + ca.2);
            let gb = (base.0 + cb.0, base.1 + cb.1, base.2 + cb.2);
            let (lo, hi, axis) = if ga <= gb {
                (ga, gb, edge_axis(&ca, &cb))
            } else {
                (gb, ga, edge_axis(&ca, &cb))
            };
            let _ = hi;
            let key: EdgeKey = (lo, axis);
            let idx = *edge_vertices.entry(key).or_insert_with(|| {
                let (va, vb) = (values[a], values[b]);
                let denom = va - vb;
                let t = if denom.abs() < 1e-12 {
                    0.5
                } else {
                    (va / denom).clamp(0.0, 1.0)
                };
                let pa = volume.voxel_center(&ga);
                let pb = volume.voxel_center(&gb);
                let pos = pa + t * (pb - pa);
                let col = [
                    colors[a][0] + t * (colors[b][0] - colors[a][0]),
                    colors[a][1] + t * (colors[b][1] - colors[a][1]),
                    colors[a][2] + t * (colors[b][2] - colors[a][2]),
                ];
                let idx = mesh.vertices.len() as u32;
                mesh.vertices.push(pos);
                mesh.colors.push(col);
                idx
            });
            cell_edge_vertex[k] = idx;
        }

        let tris = &TRI_TABLE[case];
        let mut i = 0;
        while tris[i] >= 0 {
            let v0 = cell_edge_vertex[tris[i] as usize];
            let v1 = cell_edge_vertex[tris[i + 1] as usize];
            let v2 = cell_edge_vertex[tris[i + 2] as usize];
            // degenerate triangles can occur when an interpolated vertex
            // lands exactly on a shared corner
            if v0 != v1 && v1 != v2 && v0 != v2 {
                mesh.triangles.push([v0, v1, v2]);
            }
            i += 3;
        }
    }
    mesh
}

fn edge_axis(a: &(i64, i64, i64), b: &(i64, i64, i64)) -> u8 {
    if a.0 != b.0 {
        0
    } else if a.1 != b.1 {
        1
    } else {
        2
    }
}

/// Write a binary little-endian PLY with colored vertices and triangles.
pub fn write_ply(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\n\
         element vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         element face {}\n\
         property list uchar int vertex_indices\n\
         end_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for (v, c) in mesh.vertices.iter().zip(mesh.colors.iter()) {
        for coord in [v.x, v.y, v.z] {
            w.write_all(&(coord as f32).to_le_bytes())?;
        }
        for ch in c {
            w.write_all(&[(ch.clamp(0.0, 1.0) * 255.0).round() as u8])?;
        }
    }
    for t in &mesh.triangles {
        w.write_all(&[3u8])?;
        for &i in t {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
