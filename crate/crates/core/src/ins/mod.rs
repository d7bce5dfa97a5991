//! ECEF strapdown navigation model embedded in SE2(3) x T(6).
//!
//! The state's left velocity is
//!
//! ```text
//! phi: w_ib - b_g - C^T w_ie
//! nu : f_ib - b_a - 2 C^T [w_ie]x v + C^T g(p)
//! rho: C^T v
//! dba, dbg: 0
//! ```
//!
//! and the GNSS antenna position is `p + C l`.

pub mod earth;

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::lie::{skew, GroupElement, Matrix15, TangentVector, DBA, DBG, NU, PHI, RHO};
use crate::units::Unit;

pub use earth::{earth_rate_ecef, gravity_ecef, gravity_gradient, Geodetic};

pub type Matrix3x15 = SMatrix<f64, 3, 15>;

/// One IMU record: angular rate (rad/s) and specific force (m/s^2) in body axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { t, gyro, accel }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.gyro.iter().all(|v| v.is_finite()) && self.accel.iter().all(|v| v.is_finite())
    }
}

/// Continuous-time IMU noise densities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuNoiseParams {
    /// Gyro white noise, rad/s/sqrt(Hz).
    pub gyro_noise: f64,
    /// Accelerometer white noise, m/s^2/sqrt(Hz).
    pub accel_noise: f64,
    /// Accelerometer bias diffusion, m/s^2/sqrt(s).
    pub accel_bias_walk: f64,
    /// Gyro bias diffusion, rad/s/sqrt(s).
    pub gyro_bias_walk: f64,
}

impl ImuNoiseParams {
    /// From datasheet figures: VRW in (m/s)/sqrt(h), ARW in deg/sqrt(h),
    /// accelerometer bias instability in ug and gyro bias instability in deg/h.
    pub fn from_datasheet(vrw: f64, arw: f64, accel_instability_ug: f64, gyro_instability_dph: f64) -> Self {
        Self {
            gyro_noise: Unit::DegPerSqrtHour.convert(arw),
            accel_noise: Unit::MeterPerSecondPerSqrtHour.convert(vrw),
            accel_bias_walk: Unit::MicroG.convert(accel_instability_ug),
            gyro_bias_walk: Unit::DegPerHour.convert(gyro_instability_dph),
        }
    }

    /// ADIS16495-class MEMS unit used throughout the simulations.
    pub fn mems_default() -> Self {
        Self::from_datasheet(0.008, 0.09, 3.2, 0.8)
    }

    pub fn zero() -> Self {
        Self {
            gyro_noise: 0.0,
            accel_noise: 0.0,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gyro_noise,
            self.accel_noise,
            self.accel_bias_walk,
            self.gyro_bias_walk,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "noise parameters must be non-negative: {self:?}"
            )))
        }
    }
}

impl Default for ImuNoiseParams {
    fn default() -> Self {
        Self::mems_default()
    }
}

/// RTK position solution in ECEF with per-axis standard deviations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnssFix {
    pub t: f64,
    pub pos: Vector3<f64>,
    pub sigma: Vector3<f64>,
}

impl GnssFix {
    pub fn new(t: f64, pos: Vector3<f64>, sigma: Vector3<f64>) -> Self {
        Self { t, pos, sigma }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.pos.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("GNSS fix at t = {}", self.t)));
        }
        if !self.sigma.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "GNSS sigma must be positive at t = {}",
                self.t
            )));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.sigma.component_mul(&self.sigma))
    }
}

/// IMU to antenna phase centre offset in body axes (m).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LeverArm(pub Vector3<f64>);

impl LeverArm {
    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }
}

/// Left velocity `Omega(X, u)` in per-second units.
pub fn omega_fn(x: &GroupElement, u: &ImuSample) -> Result<TangentVector> {
    let rt = x.rot.transpose();
    let w_ie = earth_rate_ecef();
    let g = gravity_ecef(&x.pos)?;
    let phi = u.gyro - x.gyro_bias() - rt * w_ie;
    let nu = u.accel - x.accel_bias() + rt * (g - 2.0 * w_ie.cross(&x.vel));
    let rho = rt * x.vel;
    Ok(TangentVector::from_parts(
        phi,
        nu,
        rho,
        Vector3::zeros(),
        Vector3::zeros(),
    ))
}

/// `d/d eps Omega(X exp(eps), u)` at `eps = 0`.
pub fn jacobian_c(x: &GroupElement, u: &ImuSample) -> Result<Matrix15> {
    let _ = u;
    let rt = x.rot.transpose();
    let w_ie = earth_rate_ecef();
    let g = gravity_ecef(&x.pos)?;
    let w_body = rt * w_ie;
    let accel_terms = rt * (g - 2.0 * w_ie.cross(&x.vel));

    let mut c = Matrix15::zeros();
    c.fixed_view_mut::<3, 3>(PHI, PHI).copy_from(&(-skew(&w_body)));
    c.fixed_view_mut::<3, 3>(PHI, DBG).copy_from(&(-Matrix3::identity()));

    c.fixed_view_mut::<3, 3>(NU, PHI).copy_from(&skew(&accel_terms));
    c.fixed_view_mut::<3, 3>(NU, NU).copy_from(&(-2.0 * skew(&w_body)));
    c.fixed_view_mut::<3, 3>(NU, RHO)
        .copy_from(&(rt * gravity_gradient(&x.pos)? * x.rot));
    c.fixed_view_mut::<3, 3>(NU, DBA).copy_from(&(-Matrix3::identity()));

    c.fixed_view_mut::<3, 3>(RHO, PHI).copy_from(&skew(&(rt * x.vel)));
    c.fixed_view_mut::<3, 3>(RHO, NU).copy_from(&Matrix3::identity());
    Ok(c)
}

/// Discrete process noise `Q_k = Gamma Gamma^T dt`: gyro white noise drives
/// the attitude slot, accelerometer white noise the velocity slot, the bias
/// diffusions their own slots, and the position slot gets none.
pub fn process_noise(params: &ImuNoiseParams, dt: f64) -> Matrix15 {
    let mut q = Matrix15::zeros();
    let blocks = [
        (PHI, params.gyro_noise),
        (NU, params.accel_noise),
        (DBA, params.accel_bias_walk),
        (DBG, params.gyro_bias_walk),
    ];
    for (offset, density) in blocks {
        for i in offset..offset + 3 {
            q[(i, i)] = density * density * dt;
        }
    }
    q
}

/// Predicted antenna position `p + C l`.
pub fn measurement_h(x: &GroupElement, lever: &LeverArm) -> Vector3<f64> {
    x.pos + x.rot * lever.0
}

/// `d/d eps h(X exp(eps))` at `eps = 0`.
pub fn jacobian_h(x: &GroupElement, lever: &LeverArm) -> Matrix3x15 {
    let mut h = Matrix3x15::zeros();
    h.fixed_view_mut::<3, 3>(0, PHI).copy_from(&(-x.rot * skew(&lever.0)));
    h.fixed_view_mut::<3, 3>(0, RHO).copy_from(&x.rot);
    h
}
