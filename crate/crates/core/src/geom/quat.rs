use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Quaternion in (w, x, y, z) ordering.
///
/// Storage is not forced to unit norm: optimization treats the four
/// components as free parameters and normalizes where a rotation is realized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    /// Rotation of `angle` radians about a (not necessarily unit) axis.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        let half = 0.5 * angle;
        let s = half.sin() / n;
        Self::new(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, other: &Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Hamilton product.
    pub fn mul(&self, rhs: &Quat) -> Self {
        Self::new(
            self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z,
            self.w * rhs.x + self.x * rhs.w + self.y * rhs.z - self.z * rhs.y,
            self.w * rhs.y - self.x * rhs.z + self.y * rhs.w + self.z * rhs.x,
            self.w * rhs.z + self.x * rhs.y - self.y * rhs.x + self.z * rhs.w,
        )
    }

    /// Rotation matrix of the normalized quaternion.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let q = self.normalized();
        let (w, x, y, z) = (q.w, q.x, q.y, q.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.to_matrix() * v
    }

    /// Rotation angle in radians of the normalized quaternion, in [0, pi].
    pub fn angle(&self) -> f64 {
        let q = self.normalized();
        2.0 * q.w.abs().min(1.0).acos()
    }

    /// Partial derivatives of `to_matrix` (without normalization) with
    /// respect to the four components, evaluated at a unit quaternion.
    ///
    /// Callers chain through normalization separately; see
    /// [`normalization_jacobian_chain`].
    pub fn rotation_matrix_derivatives(&self) -> [Matrix3<f64>; 4] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let dw = Matrix3::new(
            0.0, -2.0 * z, 2.0 * y, //
            2.0 * z, 0.0, -2.0 * x, //
            -2.0 * y, 2.0 * x, 0.0,
        );
        let dx = Matrix3::new(
            0.0, 2.0 * y, 2.0 * z, //
            2.0 * y, -4.0 * x, -2.0 * w, //
            2.0 * z, 2.0 * w, -4.0 * x,
        );
        let dy = Matrix3::new(
            -4.0 * y, 2.0 * x, 2.0 * w, //
            2.0 * x, 0.0, 2.0 * z, //
            -2.0 * w, 2.0 * z, -4.0 * y,
        );
        let dz = Matrix3::new(
            -4.0 * z, -2.0 * w, 2.0 * x, //
            2.0 * w, -4.0 * z, 2.0 * y, //
            2.0 * x, 2.0 * y, 0.0,
        );
        [dw, dx, dy, dz]
    }
}

/// Pull a gradient w.r.t. the rotation matrix back to the raw quaternion
/// storage, chaining through normalization q_hat = q / |q|.
pub fn rotation_grad_to_quat(q: &Quat, grad_rot: &Matrix3<f64>) -> [f64; 4] {
    let n = q.norm();
    let qh = q.normalized();
    let derivs = qh.rotation_matrix_derivatives();
    // gradient w.r.t. the unit quaternion
    let mut g_hat = [0.0; 4];
    for (gi, d) in g_hat.iter_mut().zip(derivs.iter()) {
        *gi = grad_rot.component_mul(d).sum();
    }
    // chain through normalization: d q_hat / d q = (I - q_hat q_hat^T) / |q|
    let qv = [qh.w, qh.x, qh.y, qh.z];
    let dot: f64 = g_hat.iter().zip(qv.iter()).map(|(a, b)| a * b).sum();
    let mut g = [0.0; 4];
    for i in 0..4 {
        g[i] = (g_hat[i] - dot * qv[i]) / n;
    }
    g
}

/// Checked conversion of a unit quaternion to its rotation matrix.
pub fn quat_to_matrix(q: &Quat) -> Result<Matrix3<f64>> {
    if !q.is_finite() {
        return Err(Error::NonFinite("quaternion"));
    }
    let norm = q.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotUnitQuaternion { norm });
    }
    Ok(q.to_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng) -> Quat {
        loop {
            let q = Quat::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if q.norm() > 1e-3 {
                return q.normalized();
            }
        }
    }

    #[test]
    fn identity_maps_to_identity_matrix() {
        let m = quat_to_matrix(&Quat::identity()).unwrap();
        assert_abs_diff_eq!(m, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn quarter_turn_about_z() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = Quat::new(h, 0.0, 0.0, h);
        let v = quat_to_matrix(&q).unwrap() * Vector3::new(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(v, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn random_quats_give_orthonormal_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = random_unit(&mut rng);
            let m = quat_to_matrix(&q).unwrap();
            assert_abs_diff_eq!(m.transpose() * m, Matrix3::identity(), epsilon = 1e-9);
            assert_abs_diff_eq!(m.determinant(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_non_unit_and_non_finite() {
        assert!(quat_to_matrix(&Quat::new(2.0, 0.0, 0.0, 0.0)).is_err());
        assert!(quat_to_matrix(&Quat::new(f64::NAN, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn hamilton_product_composes_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_unit(&mut rng);
            let b = random_unit(&mut rng);
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let lhs = a.mul(&b).rotate(&v);
            let rhs = a.rotate(&b.rotate(&v));
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn matrix_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_unit(&mut rng);
        let derivs = q.rotation_matrix_derivatives();
        let h = 1e-6;
        for (i, d) in derivs.iter().enumerate() {
            let mut qp = q;
            let mut qm = q;
            match i {
                0 => {
                    qp.w += h;
                    qm.w -= h;
                }
                1 => {
                    qp.x += h;
                    qm.x -= h;
                }
                2 => {
                    qp.y += h;
                    qm.y -= h;
                }
                _ => {
                    qp.z += h;
                    qm.z -= h;
                }
            }
            // raw (unnormalized) matrix formula for the finite difference
            let raw = |q: &Quat| {
                let (w, x, y, z) = (q.w, q.x, q.y, q.z);
                Matrix3::new(
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                )
            };
            let fd = (raw(&qp) - raw(&qm)) / (2.0 * h);
            assert_abs_diff_eq!(*d, fd, epsilon = 1e-8);
        }
    }
}
