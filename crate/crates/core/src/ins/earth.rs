//! WGS-84 constants, normal gravity and geodetic frame conversions.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
/// Earth rotation rate (rad/s).
pub const EARTH_RATE: f64 = 7.292_115e-5;

/// Somigliana normal gravity at the equator (m/s^2).
pub const GAMMA_EQUATOR: f64 = 9.780_325_335_9;
pub const SOMIGLIANA_K: f64 = 0.001_931_852_652_41;
/// Linear free-air gradient (1/s^2).
pub const FREE_AIR_GRADIENT: f64 = 3.086e-6;

/// Positions closer than this to the geocenter are rejected by the gravity model.
const MIN_GRAVITY_RADIUS: f64 = 6.2e6;

/// Earth rotation vector resolved in ECEF.
pub fn earth_rate_ecef() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, EARTH_RATE)
}

/// Geodetic coordinates, latitude/longitude in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geodetic {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl Geodetic {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Self {
        Self { lat, lon, alt }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, alt: f64) -> Self {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), alt)
    }

    pub fn to_ecef(&self) -> Vector3<f64> {
        let (sl, cl) = self.lat.sin_cos();
        let (so, co) = self.lon.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * sl * sl).sqrt();
        Vector3::new(
            (n + self.alt) * cl * co,
            (n + self.alt) * cl * so,
            (n * (1.0 - WGS84_E2) + self.alt) * sl,
        )
    }

    pub fn from_ecef(p: &Vector3<f64>) -> Self {
        let lon = p.y.atan2(p.x);
        let rho = p.x.hypot(p.y);
        let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
        for _ in 0..10 {
            let sl = lat.sin();
            let n = WGS84_A / (1.0 - WGS84_E2 * sl * sl).sqrt();
            let next = (p.z + WGS84_E2 * n * sl).atan2(rho);
            let done = (next - lat).abs() < 1e-15;
            lat = next;
            if done {
                break;
            }
        }
        let (sl, cl) = lat.sin_cos();
        let alt = rho * cl + p.z * sl - WGS84_A * (1.0 - WGS84_E2 * sl * sl).sqrt();
        Self { lat, lon, alt }
    }

    /// Rotation from the local North-East-Down frame to ECEF, `C_n^e`.
    pub fn ned_to_ecef(&self) -> Matrix3<f64> {
        let (sl, cl) = self.lat.sin_cos();
        let (so, co) = self.lon.sin_cos();
        Matrix3::new(
            -sl * co,
            -so,
            -cl * co, //
            -sl * so,
            co,
            -cl * so, //
            cl,
            0.0,
            -sl,
        )
    }
}

/// Magnitude of normal gravity at geodetic latitude `lat` and height `alt`.
pub fn normal_gravity(lat: f64, alt: f64) -> f64 {
    let s2 = lat.sin().powi(2);
    GAMMA_EQUATOR * (1.0 + SOMIGLIANA_K * s2) / (1.0 - WGS84_E2 * s2).sqrt() - FREE_AIR_GRADIENT * alt
}

/// Plumb-bob gravity (gravitation plus centrifugal) resolved in ECEF,
/// directed along the local geodetic down axis.
pub fn gravity_ecef(p: &Vector3<f64>) -> Result<Vector3<f64>> {
    let norm = p.norm();
    if !norm.is_finite() || norm <= MIN_GRAVITY_RADIUS {
        return Err(Error::InvalidPosition { norm });
    }
    let geo = Geodetic::from_ecef(p);
    let down = geo.ned_to_ecef().column(2).into_owned();
    Ok(down * normal_gravity(geo.lat, geo.alt))
}

/// Jacobian of [`gravity_ecef`] with respect to position, by central
/// differences with a 1 m step (the field is smooth on that scale).
pub fn gravity_gradient(p: &Vector3<f64>) -> Result<Matrix3<f64>> {
    const STEP: f64 = 1.0;
    let mut out = Matrix3::zeros();
    for j in 0..3 {
        let mut dp = Vector3::zeros();
        dp[j] = STEP;
        let col = (gravity_ecef(&(p + dp))? - gravity_ecef(&(p - dp))?) / (2.0 * STEP);
        out.set_column(j, &col);
    }
    Ok(out)
}

/// `C_b^n` from roll, pitch, yaw (ZYX convention), radians.
pub fn euler_to_dcm(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Inverse of [`euler_to_dcm`]: `(roll, pitch, yaw)` in radians.
pub fn dcm_to_euler(c: &Matrix3<f64>) -> (f64, f64, f64) {
    let roll = c[(2, 1)].atan2(c[(2, 2)]);
    let pitch = -c[(2, 0)].clamp(-1.0, 1.0).asin();
    let yaw = c[(1, 0)].atan2(c[(0, 0)]);
    (roll, pitch, yaw)
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}
