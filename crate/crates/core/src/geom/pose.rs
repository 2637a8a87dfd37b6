use nalgebra::Vector3;

use super::quat::Quat;

/// SE(3) transform stored as unit quaternion (w,x,y,z) plus translation.
///
/// Interpreted as world-to-camera unless stated otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Quat,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Quat, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation.normalized(),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Quat::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Apply the transform to a point: R p + t.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.to_matrix() * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let q_inv = self.rotation.conjugate().normalized();
        let t_inv = -(q_inv.to_matrix() * self.translation);
        Pose {
            rotation: q_inv,
            translation: t_inv,
        }
    }

    /// Composition: (self ∘ other)(p) = self(other(p)).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.mul(&other.rotation).normalized(),
            translation: self.rotation.to_matrix() * other.translation + self.translation,
        }
    }

    /// Translation distance to another pose, comparing camera centers.
    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.center() - other.center()).norm()
    }

    /// Geodesic rotation angle to another pose, in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.conjugate().mul(&other.rotation).angle()
    }

    /// Camera center in world coordinates (for a world-to-camera pose).
    pub fn center(&self) -> Vector3<f64> {
        self.inverse().translation
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.is_finite()
            && self.translation.x.is_finite()
            && self.translation.y.is_finite()
            && self.translation.z.is_finite()
    }
}

/// Constant-velocity pose extrapolation: component-wise on translation and
/// quaternion, with the older quaternion flipped onto the newer one's
/// hemisphere before extrapolating and the result renormalized.
pub fn constant_velocity_init(prev: &Pose, prev2: &Pose) -> Pose {
    let t = 2.0 * prev.translation - prev2.translation;
    let mut q2 = prev2.rotation;
    if prev.rotation.dot(&q2) < 0.0 {
        q2 = Quat::new(-q2.w, -q2.x, -q2.y, -q2.z);
    }
    let q = Quat::new(
        2.0 * prev.rotation.w - q2.w,
        2.0 * prev.rotation.x - q2.x,
        2.0 * prev.rotation.y - q2.y,
        2.0 * prev.rotation.z - q2.z,
    );
    if q.norm() < 1e-6 || !q.is_finite() {
        return *prev;
    }
    Pose::new(q, t)
}
