use nalgebra::{Matrix3, Vector3};

use super::quat::Quat;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse sigmoid, clamped away from 0 and 1.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

/// One anisotropic splat: world-frame mean, rotation, log-scales, opacity
/// logit and RGB color.
///
/// Scale and opacity are stored unconstrained (log / logit) so gradient
/// updates stay inside the valid parameter domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian3D {
    pub mean: Vector3<f64>,
    pub rotation: Quat,
    pub log_scales: Vector3<f64>,
    pub opacity_logit: f64,
    pub color: [f64; 3],
}

impl Gaussian3D {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> Vector3<f64> {
        self.log_scales.map(f64::exp)
    }

    /// Realized covariance Σ = R S Sᵀ Rᵀ, symmetric PSD by construction.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_matrix();
        let s = self.scales();
        let m = r * Matrix3::from_diagonal(&s);
        let sigma = m * m.transpose();
        // enforce exact symmetry against floating-point drift
        0.5 * (sigma + sigma.transpose())
    }
}
