//! Discrete EKF on the group, innovation gating, and the RTS smoother.

mod ekf;
mod filter;
mod rts;

use nalgebra::{Matrix3, Vector3};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::ins::{self, ImuNoiseParams, ImuSample, LeverArm, Matrix3x15};
use crate::lie::{GroupElement, Matrix15, TangentVector};

pub use ekf::{ekf_predict, ekf_update, predict, update, Prediction};
pub use filter::{run_filter, visit_filter, FilterEpoch, FilterOptions};
pub use rts::{nees, nees_single, rts_smooth};

/// Continuous-time dynamics `dX/dt = X hat(Omega(X, u))`.
pub trait ProcessModel {
    type Input;

    fn omega(&self, x: &GroupElement, u: &Self::Input) -> Result<TangentVector>;

    /// `d/d eps Omega(X exp(eps), u)` at zero.
    fn omega_jacobian(&self, x: &GroupElement, u: &Self::Input) -> Result<Matrix15>;

    /// Discrete process noise for a step of length `dt`.
    fn process_noise(&self, dt: f64) -> Matrix15;
}

/// Three-dimensional observation `y = h(X) + v`.
pub trait MeasurementModel {
    fn predict(&self, x: &GroupElement) -> Vector3<f64>;

    /// `d/d eps h(X exp(eps))` at zero.
    fn jacobian(&self, x: &GroupElement) -> Matrix3x15;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InsModel {
    pub noise: ImuNoiseParams,
}

impl InsModel {
    pub fn new(noise: ImuNoiseParams) -> Self {
        Self { noise }
    }
}

impl ProcessModel for InsModel {
    type Input = ImuSample;

    fn omega(&self, x: &GroupElement, u: &ImuSample) -> Result<TangentVector> {
        ins::omega_fn(x, u)
    }

    fn omega_jacobian(&self, x: &GroupElement, u: &ImuSample) -> Result<Matrix15> {
        ins::jacobian_c(x, u)
    }

    fn process_noise(&self, dt: f64) -> Matrix15 {
        ins::process_noise(&self.noise, dt)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GnssModel {
    pub lever: LeverArm,
}

impl GnssModel {
    pub fn new(lever: LeverArm) -> Self {
        Self { lever }
    }
}

impl MeasurementModel for GnssModel {
    fn predict(&self, x: &GroupElement) -> Vector3<f64> {
        ins::measurement_h(x, &self.lever)
    }

    fn jacobian(&self, x: &GroupElement) -> Matrix3x15 {
        ins::jacobian_h(x, &self.lever)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateMode {
    /// Skip the update when `zeta > kappa`.
    Hard,
    /// Scale the innovation by `min(1, kappa / zeta)`.
    Soft,
    /// Always apply the full update.
    Off,
}

impl std::str::FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" | "hard-reject" => Ok(GateMode::Hard),
            "soft" | "soft-scale" => Ok(GateMode::Soft),
            "off" | "none" => Ok(GateMode::Off),
            other => Err(Error::InvalidParameter(format!("unknown gate mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateConfig {
    pub kappa: f64,
    pub mode: GateMode,
}

impl GateConfig {
    pub fn new(kappa: f64, mode: GateMode) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { kappa, mode })
    }

    pub fn off() -> Self {
        Self {
            kappa: default_kappa(0.999),
            mode: GateMode::Off,
        }
    }

    /// `min(1, kappa / zeta)`.
    pub fn gamma(&self, zeta: f64) -> f64 {
        if zeta <= self.kappa {
            1.0
        } else {
            self.kappa / zeta
        }
    }
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            kappa: default_kappa(0.999),
            mode: GateMode::Soft,
        }
    }
}

/// Per-fix diagnostics of the measurement update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateReport {
    pub zeta: f64,
    pub gamma: f64,
    pub accepted: bool,
    /// Scale actually applied to the correction (0 when rejected).
    pub weight: f64,
    pub innovation: Vector3<f64>,
    pub innovation_cov: Matrix3<f64>,
}

impl GateReport {
    /// Gaussian negative log-likelihood of the innovation,
    /// `1/2 log|2 pi S| + 1/2 zeta`.
    pub fn neg_log_likelihood(&self) -> f64 {
        let det = (self.innovation_cov * std::f64::consts::TAU).determinant();
        0.5 * det.ln() + 0.5 * self.zeta
    }
}

/// Normalized residue squared `z^T Xi^-1 z`.
pub fn nrs(innovation: &Vector3<f64>, xi: &Matrix3<f64>) -> Result<f64> {
    let chol = xi.cholesky().ok_or(Error::SingularInnovation)?;
    let w = chol.solve(innovation);
    Ok(innovation.dot(&w).max(0.0))
}

/// Quantile of the chi-square distribution with 3 degrees of freedom.
/// The library inverse is only accurate to about 1e-5, so the result is
/// polished with Newton steps on the CDF.
pub fn default_kappa(confidence: f64) -> f64 {
    let chi2 = ChiSquared::new(3.0).expect("3 degrees of freedom is valid");
    let mut x = chi2.inverse_cdf(confidence);
    for _ in 0..4 {
        let pdf = chi2.pdf(x);
        if !(pdf > 0.0) {
            break;
        }
        x -= (chi2.cdf(x) - confidence) / pdf;
    }
    x
}
