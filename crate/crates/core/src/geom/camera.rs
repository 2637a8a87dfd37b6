use nalgebra::{Matrix2x3, Vector2, Vector3};

/// Pinhole camera intrinsics with culling depths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub z_near: f64,
    pub z_far: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        assert!(fx > 0.0 && fy > 0.0);
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            z_near: 0.01,
            z_far: 100.0,
        }
    }

    pub fn with_clip(mut self, z_near: f64, z_far: f64) -> Self {
        assert!(z_near > 0.0 && z_near < z_far);
        self.z_near = z_near;
        self.z_far = z_far;
        self
    }

    /// Project a camera-frame point to pixel coordinates.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Back-project pixel (u, v) at depth z (meters) to a camera-frame point.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Perspective Jacobian d(u,v)/d(x,y,z) at a camera-frame point.
    pub fn projection_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let z_inv = 1.0 / p.z;
        let z_inv2 = z_inv * z_inv;
        Matrix2x3::new(
            self.fx * z_inv,
            0.0,
            -self.fx * p.x * z_inv2,
            0.0,
            self.fy * z_inv,
            -self.fy * p.y * z_inv2,
        )
    }
}
