//! Rotation group primitives shared by the SE2(3) x T(6) maps.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Largest rotation angle accepted by the logarithm.
pub const CHART_LIMIT: f64 = std::f64::consts::PI - 1e-6;

/// Below this angle the trigonometric coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-7;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] on the antisymmetric part of `m`.
pub fn unskew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// Rodrigues formula.
pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(phi);
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation angle of `r`, computed from both the trace and the skew part so
/// it stays accurate near 0 and near pi.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = unskew(r).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let w = unskew(r);
    let s = w.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if !theta.is_finite() {
        return Err(Error::NonFinite("rotation matrix".into()));
    }
    if theta >= CHART_LIMIT {
        return Err(Error::OutOfChart { angle: theta });
    }
    if theta < SMALL_ANGLE {
        return Ok(w * (1.0 + theta * theta / 6.0));
    }
    if c > -0.9 {
        return Ok(w * (theta / s));
    }
    // Close to pi the skew part vanishes; read the axis from the symmetric
    // part instead, (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) a a^T.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
    let one_minus_c = 1.0 - c;
    let i = (0..3).max_by(|&i, &j| sym[(i, i)].total_cmp(&sym[(j, j)])).unwrap_or(0);
    let ai = (sym[(i, i)] / one_minus_c).max(0.0).sqrt();
    let mut axis: Vector3<f64> = sym.column(i) / (one_minus_c * ai);
    axis.normalize_mut();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Left Jacobian of SO(3).
pub fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (b, c) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    let k = skew(phi);
    Matrix3::identity() + k * b + k * k * c
}

pub fn left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let d = if theta < 1e-4 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let k = skew(phi);
    Matrix3::identity() - k * 0.5 + k * k * d
}

/// Projects a nearly orthonormal matrix back onto SO(3) with one Newton
/// step of the polar decomposition.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let rtr = r.transpose() * r;
    r * (Matrix3::identity() * 3.0 - rtr) * 0.5
}

pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn expm_series(phi: &Vector3<f64>) -> Matrix3<f64> {
        let k = skew(phi);
        let mut term = Matrix3::identity();
        let mut sum = Matrix3::identity();
        for n in 1..20 {
            term = term * k / n as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(so3_exp(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_x() {
        let r = so3_exp(&Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let y = r * Vector3::y();
        assert_relative_eq!(y, Vector3::z(), epsilon = 1e-12);
        assert_relative_eq!(
            r,
            expm_series(&Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0)),
            epsilon = 1e-10
        );
    }

    #[test]
    fn log_roundtrip_small_vector() {
        let phi = Vector3::new(0.1, -0.2, 0.3);
        assert_relative_eq!(so3_log(&so3_exp(&phi)).unwrap(), phi, epsilon = 1e-10);
    }

    #[test]
    fn log_near_pi_branch() {
        let phi = Vector3::new(1.0, -2.0, 0.5).normalize() * (std::f64::consts::PI - 1e-3);
        assert_relative_eq!(so3_log(&so3_exp(&phi)).unwrap(), phi, epsilon = 1e-9);
    }

    #[test]
    fn log_rejects_half_turn() {
        let r = so3_exp(&Vector3::new(0.0, 0.0, std::f64::consts::PI));
        assert!(matches!(so3_log(&r), Err(Error::OutOfChart { .. })));
    }

    #[test]
    fn log_identity_is_zero() {
        assert_eq!(so3_log(&Matrix3::identity()).unwrap(), Vector3::zeros());
    }

    #[test]
    fn jacobian_inverse_matches() {
        for phi in [
            Vector3::new(1e-9, 0.0, 0.0),
            Vector3::new(1e-5, 2e-5, -1e-5),
            Vector3::new(0.3, -1.2, 2.0),
        ] {
            let prod = left_jacobian(&phi) * left_jacobian_inverse(&phi);
            assert_relative_eq!(prod, Matrix3::identity(), epsilon = 1e-12);
        }
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let r = so3_exp(&Vector3::new(0.4, 0.1, -0.7)) * (1.0 + 1e-7);
        assert!(orthonormality_error(&orthonormalize(&r)) < 1e-13);
    }
}
