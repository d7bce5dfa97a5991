use nalgebra::{Matrix3, Vector3};

use super::{GateConfig, GateMode, GateReport, GnssModel, InsModel, MeasurementModel, ProcessModel};
use crate::error::{Error, Result};
use crate::ins::{GnssFix, ImuNoiseParams, ImuSample, LeverArm};
use crate::lie::{adjoint, group_exp, right_jacobian, ConcentratedGaussian, Matrix15};

/// Output of one propagation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub state: ConcentratedGaussian,
    /// The applied increment `Omega dt`.
    pub omega_dt: crate::lie::TangentVector,
    /// Error-state transition `F`.
    pub transition: Matrix15,
}

pub(crate) fn symmetrize(p: &Matrix15) -> Matrix15 {
    (p + p.transpose()) * 0.5
}

/// Propagates `state` through `model` over `dt`:
///
/// ```text
/// X' = X exp(Omega dt)
/// F  = Ad(exp(-Omega dt)) + J_r(Omega dt) C dt
/// P' = F P F^T + J_r Q J_r^T
/// ```
pub fn predict<M: ProcessModel>(model: &M, state: &ConcentratedGaussian, u: &M::Input, dt: f64) -> Result<Prediction> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let omega_dt = model.omega(&state.mean, u)? * dt;
    if !omega_dt.is_finite() {
        return Err(Error::NonFinite("propagation increment".into()));
    }
    let c = model.omega_jacobian(&state.mean, u)?;
    let mean = state.mean.retract(&omega_dt)?;

    let jr = right_jacobian(&omega_dt);
    let f = adjoint(&group_exp(&-omega_dt)?) + jr * c * dt;
    let q = model.process_noise(dt);
    let cov = f * state.cov * f.transpose() + jr * q * jr.transpose();
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("predicted covariance".into()));
    }
    Ok(Prediction {
        state: ConcentratedGaussian::from_parts(mean, symmetrize(&cov)),
        omega_dt,
        transition: f,
    })
}

/// Fuses observation `y` with covariance `r`, gating per `gate`.
///
/// The covariance is always updated in Joseph form with the unscaled gain
/// whenever the update is applied.
pub fn update<M: MeasurementModel>(
    model: &M,
    state: &ConcentratedGaussian,
    y: &Vector3<f64>,
    r: &Matrix3<f64>,
    gate: &GateConfig,
) -> Result<(ConcentratedGaussian, GateReport)> {
    if !y.iter().all(|v| v.is_finite()) || !r.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("measurement".into()));
    }
    let p = &state.cov;
    let h = model.jacobian(&state.mean);
    let z = y - model.predict(&state.mean);
    let hp = h * p;
    let s = hp * h.transpose() + r;
    let s = (s + s.transpose()) * 0.5;
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    let zeta = z.dot(&chol.solve(&z)).max(0.0);
    // K = P H^T S^-1 = (S^-1 H P)^T for symmetric P.
    let k = chol.solve(&hp).transpose();

    let gamma = gate.gamma(zeta);
    let accepted = zeta <= gate.kappa;
    let weight = match gate.mode {
        GateMode::Off => 1.0,
        GateMode::Soft => gamma,
        GateMode::Hard if accepted => 1.0,
        GateMode::Hard => 0.0,
    };
    let report = GateReport {
        zeta,
        gamma,
        accepted,
        weight,
        innovation: z,
        innovation_cov: s,
    };
    if weight == 0.0 {
        return Ok((*state, report));
    }

    let correction = crate::lie::TangentVector(k * z * weight);
    let mean = state.mean.retract(&correction)?;
    let ikh = Matrix15::identity() - k * h;
    let cov = ikh * p * ikh.transpose() + k * r * k.transpose();
    Ok((ConcentratedGaussian::from_parts(mean, symmetrize(&cov)), report))
}

/// INS propagation with the IMU noise model.
pub fn ekf_predict(
    state: &ConcentratedGaussian,
    u: &ImuSample,
    dt: f64,
    params: &ImuNoiseParams,
) -> Result<Prediction> {
    if !u.is_finite() {
        return Err(Error::NonFinite(format!("IMU sample at t = {}", u.t)));
    }
    predict(&InsModel::new(*params), state, u, dt)
}

/// GNSS position update through the lever arm.
pub fn ekf_update(
    state: &ConcentratedGaussian,
    fix: &GnssFix,
    lever: &LeverArm,
    gate: &GateConfig,
) -> Result<(ConcentratedGaussian, GateReport)> {
    fix.validate()?;
    update(&GnssModel::new(*lever), state, &fix.pos, &fix.covariance(), gate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ins::{earth_rate_ecef, gravity_ecef, Geodetic};
    use crate::lie::{GroupElement, RHO};
    use approx::assert_relative_eq;
    use nalgebra::Vector6;

    fn start() -> ConcentratedGaussian {
        let geo = Geodetic::from_degrees(10.0, 20.0, 100.0);
        let mean = GroupElement::new(geo.ned_to_ecef(), Vector3::zeros(), geo.to_ecef(), Vector6::zeros());
        ConcentratedGaussian::from_parts(mean, Matrix15::identity() * 1e-4)
    }

    fn equilibrium_input(x: &GroupElement) -> ImuSample {
        let rt = x.rot.transpose();
        ImuSample::new(0.0, rt * earth_rate_ecef(), -(rt * gravity_ecef(&x.pos).unwrap()))
    }

    #[test]
    fn equilibrium_predict_adds_process_noise() {
        let mut s = start();
        s.cov = Matrix15::zeros();
        let u = equilibrium_input(&s.mean);
        let params = ImuNoiseParams::mems_default();
        let pred = ekf_predict(&s, &u, 0.005, &params).unwrap();
        assert!((pred.state.mean.pos - s.mean.pos).amax() < 1e-12);
        assert!(pred.omega_dt.as_vector().amax() < 1e-15);
        let q = crate::ins::process_noise(&params, 0.005);
        let growth = pred.state.cov - s.cov;
        assert!((growth - q).amax() < 1e-20);
    }

    #[test]
    fn rejects_bad_step() {
        let s = start();
        let u = equilibrium_input(&s.mean);
        assert!(ekf_predict(&s, &u, 0.0, &ImuNoiseParams::zero()).is_err());
        let mut bad = u;
        bad.gyro.x = f64::NAN;
        assert!(matches!(
            ekf_predict(&s, &bad, 0.005, &ImuNoiseParams::zero()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn perfect_measurement_leaves_mean() {
        let s = start();
        let fix = GnssFix::new(0.0, s.mean.pos, Vector3::new(0.01, 0.01, 0.03));
        let (post, rep) = ekf_update(&s, &fix, &LeverArm::zero(), &GateConfig::default()).unwrap();
        assert_eq!(rep.zeta, 0.0);
        assert_eq!(rep.gamma, 1.0);
        assert!(rep.accepted);
        assert!((post.mean.pos - s.mean.pos).amax() < 1e-12);
        assert!(post.cov[(RHO, RHO)] < s.cov[(RHO, RHO)]);
    }

    #[test]
    fn hard_gate_rejects_and_soft_gate_scales() {
        let s = start();
        let mut fix = GnssFix::new(0.0, s.mean.pos, Vector3::new(0.01, 0.01, 0.03));
        fix.pos.x += 5.0;
        let hard = GateConfig::new(16.27, GateMode::Hard).unwrap();
        let (post, rep) = ekf_update(&s, &fix, &LeverArm::zero(), &hard).unwrap();
        assert!(!rep.accepted);
        assert_eq!(rep.weight, 0.0);
        assert_eq!(post, s);

        let soft = GateConfig::new(16.27, GateMode::Soft).unwrap();
        let (post_soft, rep) = ekf_update(&s, &fix, &LeverArm::zero(), &soft).unwrap();
        let (post_off, _) = ekf_update(&s, &fix, &LeverArm::zero(), &GateConfig::off()).unwrap();
        let ds = (post_soft.mean.pos - s.mean.pos).norm();
        let dx = (post_off.mean.pos - s.mean.pos).norm();
        assert_relative_eq!(ds / dx, rep.gamma, max_relative = 1e-4);
        assert_eq!(post_soft.cov, post_off.cov);
    }

    #[test]
    fn huge_measurement_noise_is_ignored() {
        let s = start();
        let mut fix = GnssFix::new(0.0, s.mean.pos, Vector3::repeat(1e6));
        fix.pos.y += 1.0;
        let (post, _) = ekf_update(&s, &fix, &LeverArm::zero(), &GateConfig::off()).unwrap();
        assert!((post.mean.pos - s.mean.pos).amax() < 1e-9);
        assert!(((post.cov - s.cov).amax() / s.cov.amax()) < 1e-6);
    }
}
