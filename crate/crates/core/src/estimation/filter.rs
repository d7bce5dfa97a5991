use log::warn;

use super::ekf::{predict, update};
use super::{GateConfig, GateReport, GnssModel, InsModel};
use crate::error::{Error, Result};
use crate::ins::{GnssFix, ImuNoiseParams, ImuSample, LeverArm};
use crate::lie::{ConcentratedGaussian, Matrix15, TangentVector};

/// One filter epoch, aligned with an IMU sample.
///
/// `omega_dt` and `transition` belong to the predict step that produced
/// `predicted`; the first epoch carries zero and the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterEpoch {
    pub t: f64,
    pub predicted: ConcentratedGaussian,
    /// Posterior after a GNSS update, absent when no fix was fused.
    pub posterior: Option<ConcentratedGaussian>,
    pub omega_dt: TangentVector,
    pub transition: Matrix15,
    pub gate: Option<GateReport>,
}

impl FilterEpoch {
    /// The filtered state `X_{k|k}`; equals `predicted` when no fix was fused.
    pub fn updated(&self) -> &ConcentratedGaussian {
        self.posterior.as_ref().unwrap_or(&self.predicted)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterOptions {
    pub noise: ImuNoiseParams,
    pub lever: LeverArm,
    pub gate: GateConfig,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            noise: ImuNoiseParams::default(),
            lever: LeverArm::zero(),
            gate: GateConfig::default(),
        }
    }
}

/// Runs the filter over `imu`, fusing each fix at the first IMU epoch whose
/// time is at or after the fix time, provided the gap is under half an IMU
/// period. Other fixes are dropped with a warning. `visit` sees every epoch
/// in order; returning an error aborts the run.
pub fn visit_filter<V>(
    initial: &ConcentratedGaussian,
    imu: &[ImuSample],
    fixes: &[GnssFix],
    opts: &FilterOptions,
    mut visit: V,
) -> Result<()>
where
    V: FnMut(usize, &FilterEpoch) -> Result<()>,
{
    if imu.is_empty() {
        return Err(Error::InvalidParameter("IMU stream is empty".into()));
    }
    opts.noise.validate()?;
    let process = InsModel::new(opts.noise);
    let measurement = GnssModel::new(opts.lever);
    let half_period = if imu.len() > 1 {
        0.5 * (imu[imu.len() - 1].t - imu[0].t) / (imu.len() - 1) as f64
    } else {
        0.0
    };

    let mut next_fix = 0;
    let mut epoch = FilterEpoch {
        t: imu[0].t,
        predicted: *initial,
        posterior: None,
        omega_dt: TangentVector::zeros(),
        transition: Matrix15::identity(),
        gate: None,
    };
    for k in 0..imu.len() {
        if k > 0 {
            let u = &imu[k - 1];
            if !u.is_finite() {
                return Err(Error::NonFinite(format!("IMU sample at t = {}", u.t)));
            }
            let dt = imu[k].t - u.t;
            let pred = predict(&process, epoch.updated(), u, dt)?;
            epoch = FilterEpoch {
                t: imu[k].t,
                predicted: pred.state,
                posterior: None,
                omega_dt: pred.omega_dt,
                transition: pred.transition,
                gate: None,
            };
        }

        let t = epoch.t;
        let tol = half_period.max(1e-9);
        while next_fix < fixes.len() && t - fixes[next_fix].t >= tol {
            warn!(
                "dropping GNSS fix at t = {}: no IMU epoch within half a period",
                fixes[next_fix].t
            );
            next_fix += 1;
        }
        if next_fix < fixes.len() && fixes[next_fix].t <= t + 1e-9 {
            let fix = &fixes[next_fix];
            fix.validate()?;
            let (post, report) = update(&measurement, epoch.updated(), &fix.pos, &fix.covariance(), &opts.gate)?;
            if !post.mean.is_finite() {
                return Err(Error::NonFinite(format!("state after update at t = {t}")));
            }
            epoch.posterior = Some(post);
            epoch.gate = Some(report);
            next_fix += 1;
        }
        visit(k, &epoch)?;
    }
    if next_fix < fixes.len() {
        warn!(
            "{} GNSS fixes after the last IMU epoch were ignored",
            fixes.len() - next_fix
        );
    }
    Ok(())
}

/// [`visit_filter`] collecting the full history for smoothing.
pub fn run_filter(
    initial: &ConcentratedGaussian,
    imu: &[ImuSample],
    fixes: &[GnssFix],
    opts: &FilterOptions,
) -> Result<Vec<FilterEpoch>> {
    let mut history = Vec::with_capacity(imu.len());
    visit_filter(initial, imu, fixes, opts, |_, e| {
        history.push(e.clone());
        Ok(())
    })?;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ins::{earth_rate_ecef, gravity_ecef, Geodetic};
    use crate::lie::GroupElement;
    use nalgebra::{Vector3, Vector6};

    fn stationary(n: usize) -> (ConcentratedGaussian, Vec<ImuSample>) {
        let geo = Geodetic::from_degrees(-23.2, -45.9, 600.0);
        let mean = GroupElement::new(geo.ned_to_ecef(), Vector3::zeros(), geo.to_ecef(), Vector6::zeros());
        let rt = mean.rot.transpose();
        let gyro = rt * earth_rate_ecef();
        let accel = -(rt * gravity_ecef(&mean.pos).unwrap());
        let imu = (0..n).map(|k| ImuSample::new(k as f64 * 0.005, gyro, accel)).collect();
        (ConcentratedGaussian::from_parts(mean, Matrix15::identity() * 1e-6), imu)
    }

    #[test]
    fn fixes_land_on_matching_epochs() {
        let (init, imu) = stationary(401);
        let fixes: Vec<_> = [0.0, 1.0, 1.0012, 2.0]
            .iter()
            .map(|&t| GnssFix::new(t, init.mean.pos, Vector3::repeat(0.01)))
            .collect();
        let history = run_filter(&init, &imu, &fixes, &FilterOptions::default()).unwrap();
        let fused: Vec<usize> = history
            .iter()
            .enumerate()
            .filter(|(_, e)| e.gate.is_some())
            .map(|(k, _)| k)
            .collect();
        // The fix at 1.0012 s would land on 1.005 s, 3.8 ms late.
        assert_eq!(fused, vec![0, 200, 400]);
        assert_eq!(history[0].transition, Matrix15::identity());
        assert_eq!(history[1].updated(), &history[1].predicted);
    }

    #[test]
    fn stationary_filter_stays_put() {
        let (init, imu) = stationary(201);
        let fixes = vec![GnssFix::new(0.5, init.mean.pos, Vector3::repeat(0.01))];
        let history = run_filter(&init, &imu, &fixes, &FilterOptions::default()).unwrap();
        let last = history.last().unwrap().updated();
        assert!((last.mean.pos - init.mean.pos).norm() < 1e-6);
    }

    #[test]
    fn empty_imu_is_error() {
        let (init, _) = stationary(1);
        assert!(run_filter(&init, &[], &[], &FilterOptions::default()).is_err());
    }
}
