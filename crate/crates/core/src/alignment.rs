//! Initialization: static detection, leveling, initial state and
//! heading alignment from three filter runs.

use log::warn;
use nalgebra::{Matrix3, Vector3, Vector6};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{visit_filter, FilterOptions, GateConfig};
use crate::ins::earth::{euler_to_dcm, Geodetic};
use crate::ins::{earth_rate_ecef, GnssFix, ImuSample, LeverArm};
use crate::lie::{ConcentratedGaussian, GroupElement, Matrix15, DBA, DBG, NU, PHI, RHO};
use crate::units::{Unit, STANDARD_GRAVITY};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticDetection {
    pub window_s: f64,
    /// Threshold on the windowed std of the gyro norm (rad/s).
    pub gyro_std: f64,
    /// Threshold on the windowed std of the accel norm, also applied to the
    /// drift of the window-mean accel vector from the running mean (m/s^2).
    pub accel_std: f64,
    pub min_samples: usize,
}

impl Default for StaticDetection {
    fn default() -> Self {
        Self {
            window_s: 1.0,
            gyro_std: 0.02,
            accel_std: 0.15,
            min_samples: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub start_index: usize,
    /// Exclusive.
    pub end_index: usize,
    pub mean_accel: Vector3<f64>,
    pub mean_gyro: Vector3<f64>,
    pub sample_count: usize,
}

fn norm_std(samples: &[ImuSample], f: impl Fn(&ImuSample) -> f64) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().map(&f).sum::<f64>() / n;
    (samples.iter().map(|s| (f(s) - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn mean_vec(samples: &[ImuSample], f: impl Fn(&ImuSample) -> Vector3<f64>) -> Vector3<f64> {
    samples.iter().map(f).sum::<Vector3<f64>>() / samples.len() as f64
}

/// Longest stationary prefix of `imu`, grown one window at a time. When a
/// window fails, the last accepted window is discarded as well, since the
/// motion may have begun inside it.
pub fn detect_static(imu: &[ImuSample], opts: &StaticDetection) -> Result<StaticInterval> {
    if imu.len() < 2 {
        return Err(Error::Alignment("IMU stream too short for static detection".into()));
    }
    let dt = (imu[imu.len() - 1].t - imu[0].t) / (imu.len() - 1) as f64;
    let w = ((opts.window_s / dt).round() as usize).max(2);
    if imu.len() < w {
        return Err(Error::Alignment(format!(
            "IMU stream shorter than the {} s detection window",
            opts.window_s
        )));
    }

    let mut end = 0;
    let mut accel_sum = Vector3::zeros();
    let mut moved = false;
    while end + w <= imu.len() {
        let win = &imu[end..end + w];
        let gyro_std = norm_std(win, |s| s.gyro.norm());
        let accel_std = norm_std(win, |s| s.accel.norm());
        let win_mean = mean_vec(win, |s| s.accel);
        let drift = if end == 0 {
            0.0
        } else {
            (win_mean - accel_sum / end as f64).norm()
        };
        if gyro_std > opts.gyro_std || accel_std > opts.accel_std || drift > opts.accel_std {
            moved = true;
            break;
        }
        accel_sum += win.iter().map(|s| s.accel).sum::<Vector3<f64>>();
        end += w;
    }
    if moved {
        end = end.saturating_sub(w);
    } else {
        end = imu.len();
    }
    if end < opts.min_samples.max(2) {
        return Err(Error::Alignment(format!(
            "stationary prefix has {end} samples, need at least {}",
            opts.min_samples
        )));
    }
    let span = &imu[..end];
    Ok(StaticInterval {
        t_start: imu[0].t,
        t_end: imu[end - 1].t,
        start_index: 0,
        end_index: end,
        mean_accel: mean_vec(span, |s| s.accel),
        mean_gyro: mean_vec(span, |s| s.gyro),
        sample_count: end,
    })
}

/// Pitch and roll from the mean specific force: `(theta, phi)` in radians.
pub fn leveling(mean_accel: &Vector3<f64>) -> Result<(f64, f64)> {
    let n = mean_accel.norm();
    if !n.is_finite() || (n - STANDARD_GRAVITY).abs() > 0.2 * STANDARD_GRAVITY {
        return Err(Error::Alignment(format!(
            "mean specific force {n:.4} m/s^2 is not within 20% of gravity; not stationary"
        )));
    }
    let (fx, fy, fz) = (mean_accel.x, mean_accel.y, mean_accel.z);
    let theta = (fx / (fy * fy + fz * fz).sqrt()).atan();
    let phi = (-fy).atan2(-fz);
    Ok((theta, phi))
}

/// Initial standard deviations, with attitude given on NED roll/pitch/yaw axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialUncertainty {
    pub attitude: Vector3<f64>,
    pub velocity: f64,
    pub position: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
}

impl Default for InitialUncertainty {
    /// One third of the expected worst-case error of each state, with the
    /// gyro bias bounded by 15 deg/h.
    fn default() -> Self {
        Self {
            gyro_bias: Unit::DegPerHour.convert(15.0 / 3.0),
            ..Self::listed()
        }
    }
}

impl InitialUncertainty {
    /// The listed values taken literally, including a 15 deg/s gyro-bias
    /// bound. That bound leaves yaw unconstrained during the static prefix
    /// and defeats heading alignment.
    pub fn listed() -> Self {
        Self {
            attitude: Vector3::new(1.0 / 3.0, 1.0 / 3.0, 5.0 / 3.0).map(f64::to_radians),
            velocity: 0.001 / 3.0,
            position: 0.1 / 3.0,
            accel_bias: Unit::MilliG.convert(1.0 / 3.0),
            gyro_bias: Unit::DegPerSecond.convert(15.0 / 3.0),
        }
    }

    /// Covariance in tangent coordinates for body attitude `c_bn`; the
    /// attitude block is rotated from NED axes into body axes.
    pub fn covariance(&self, c_bn: &Matrix3<f64>) -> Matrix15 {
        let mut p = Matrix15::zeros();
        let att = Matrix3::from_diagonal(&self.attitude.component_mul(&self.attitude));
        p.fixed_view_mut::<3, 3>(PHI, PHI)
            .copy_from(&(c_bn.transpose() * att * c_bn));
        let blocks = [
            (NU, self.velocity),
            (RHO, self.position),
            (DBA, self.accel_bias),
            (DBG, self.gyro_bias),
        ];
        for (offset, s) in blocks {
            for i in offset..offset + 3 {
                p[(i, i)] = s * s;
            }
        }
        p
    }
}

/// Initial state at the start of the static interval with heading `psi0`.
pub fn init_state(
    stat: &StaticInterval,
    gnss: &[GnssFix],
    psi0: f64,
    lever: &LeverArm,
    p0: &InitialUncertainty,
) -> Result<ConcentratedGaussian> {
    let inside: Vec<&GnssFix> = gnss
        .iter()
        .filter(|f| f.t >= stat.t_start - 1e-9 && f.t <= stat.t_end + 1e-9)
        .collect();
    if inside.len() < 3 {
        return Err(Error::Alignment(format!(
            "{} GNSS fixes inside the static interval, need at least 3",
            inside.len()
        )));
    }
    let antenna = inside.iter().map(|f| f.pos).sum::<Vector3<f64>>() / inside.len() as f64;
    let (theta, phi) = leveling(&stat.mean_accel)?;
    let c_bn = euler_to_dcm(phi, theta, psi0);
    let rot = Geodetic::from_ecef(&antenna).ned_to_ecef() * c_bn;
    let pos = antenna - rot * lever.0;
    let mut bias = Vector6::zeros();
    let earth = rot.transpose() * earth_rate_ecef();
    bias.fixed_rows_mut::<3>(3).copy_from(&(stat.mean_gyro - earth));
    let mean = GroupElement::new(rot, Vector3::zeros(), pos, bias);
    ConcentratedGaussian::new(mean, p0.covariance(&c_bn))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentOptions {
    pub guesses: [f64; 3],
    pub sigma_psi: f64,
    pub prior_mean: f64,
    /// Seconds of data after the static interval used per candidate run;
    /// `None` runs over everything.
    pub prefix_after_static: Option<f64>,
    pub allow_extrapolation: bool,
    pub detection: StaticDetection,
    pub p0: InitialUncertainty,
}

impl Default for AlignmentOptions {
    fn default() -> Self {
        Self {
            guesses: [-30f64.to_radians(), 0.0, 30f64.to_radians()],
            sigma_psi: 60f64.to_radians(),
            prior_mean: 0.0,
            prefix_after_static: Some(120.0),
            allow_extrapolation: false,
            detection: StaticDetection::default(),
            p0: InitialUncertainty::default(),
        }
    }
}

/// Read-only view of one dataset for alignment runs.
#[derive(Clone, Copy, Debug)]
pub struct AlignmentData<'a> {
    pub imu: &'a [ImuSample],
    pub gnss: &'a [GnssFix],
    pub stat: &'a StaticInterval,
    pub filter: &'a FilterOptions,
}

/// Negative log posterior of the initial heading:
/// `sum_k 1/2 log|2 pi S_k| + 1/2 z_k^T S_k^-1 z_k + (psi0 - mu)^2 / (2 sigma^2)`,
/// from a filter run with gating disabled. A diverging run costs `+inf`.
pub fn heading_log_likelihood(data: &AlignmentData<'_>, psi0: f64, opts: &AlignmentOptions) -> Result<f64> {
    let init = init_state(data.stat, data.gnss, psi0, &data.filter.lever, &opts.p0)?;
    let end = match opts.prefix_after_static {
        Some(s) => {
            let t_stop = data.stat.t_end + s;
            data.imu.partition_point(|u| u.t <= t_stop)
        }
        None => data.imu.len(),
    };
    let imu = &data.imu[data.stat.start_index..end];
    let t_last = imu.last().map_or(f64::NEG_INFINITY, |u| u.t);
    let gnss = &data.gnss[..data.gnss.partition_point(|f| f.t <= t_last + 1e-9)];
    let mut filter = *data.filter;
    filter.gate = GateConfig::off();
    let mut cost = 0.0;
    let run = visit_filter(&init, imu, gnss, &filter, |_, epoch| {
        if let Some(g) = &epoch.gate {
            cost += g.neg_log_likelihood();
        }
        Ok(())
    });
    let dpsi = psi0 - opts.prior_mean;
    let prior = dpsi * dpsi / (2.0 * opts.sigma_psi * opts.sigma_psi);
    match run {
        Ok(()) if cost.is_finite() => Ok(cost + prior),
        Ok(()) => {
            warn!("heading candidate {:.3} deg gave a non-finite cost", psi0.to_degrees());
            Ok(f64::INFINITY)
        }
        Err(e @ (Error::NonFinite(_) | Error::OutOfChart { .. } | Error::SingularInnovation)) => {
            warn!("heading candidate {:.3} deg diverged: {e}", psi0.to_degrees());
            Ok(f64::INFINITY)
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadingPosterior {
    pub psi_star: f64,
    pub curvature: f64,
    pub samples: [(f64, f64); 3],
    pub sigma_psi_star: f64,
}

/// Exact parabola `c = m1 psi^2 + m2 psi + m3` through three samples.
pub fn fit_parabola(samples: [(f64, f64); 3], allow_extrapolation: bool) -> Result<HeadingPosterior> {
    let psi = samples.map(|s| s.0);
    for i in 0..3 {
        if !samples[i].1.is_finite() {
            return Err(Error::Alignment(format!(
                "cost at heading {:.3} deg is not finite",
                psi[i].to_degrees()
            )));
        }
        for j in i + 1..3 {
            if (psi[i] - psi[j]).abs() < 1e-12 {
                return Err(Error::InvalidParameter("heading guesses must be distinct".into()));
            }
        }
    }
    let a = Matrix3::from_fn(|r, c| psi[r].powi(2 - c as i32));
    let c = Vector3::from_fn(|r, _| samples[r].1);
    let m = a
        .lu()
        .solve(&c)
        .ok_or_else(|| Error::InvalidParameter("heading guesses must be distinct".into()))?;
    if !(m[0] > 0.0) {
        return Err(Error::NonConvexFit { curvature: m[0] });
    }
    let psi_star = -m[1] / (2.0 * m[0]);
    let lo = psi.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !allow_extrapolation && !(psi_star > lo && psi_star < hi) {
        return Err(Error::Alignment(format!(
            "heading estimate {:.2} deg lies outside the guesses [{:.2}, {:.2}] deg",
            psi_star.to_degrees(),
            lo.to_degrees(),
            hi.to_degrees()
        )));
    }
    Ok(HeadingPosterior {
        psi_star,
        curvature: m[0],
        samples,
        sigma_psi_star: 1.0 / m[0].sqrt(),
    })
}

/// Evaluates the heading cost at the three guesses (in parallel) and fits
/// the parabola.
pub fn heading_align(data: &AlignmentData<'_>, opts: &AlignmentOptions) -> Result<HeadingPosterior> {
    let costs: Vec<f64> = opts
        .guesses
        .par_iter()
        .map(|&psi| heading_log_likelihood(data, psi, opts))
        .collect::<Result<_>>()?;
    let samples = [
        (opts.guesses[0], costs[0]),
        (opts.guesses[1], costs[1]),
        (opts.guesses[2], costs[2]),
    ];
    fit_parabola(samples, opts.allow_extrapolation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn still(n: usize, accel: Vector3<f64>) -> Vec<ImuSample> {
        (0..n)
            .map(|k| ImuSample::new(k as f64 * 0.005, Vector3::new(1e-5, 0.0, 3e-5), accel))
            .collect()
    }

    #[test]
    fn level_case() {
        let (theta, phi) = leveling(&Vector3::new(0.0, 0.0, -9.81)).unwrap();
        assert_eq!((theta, phi), (0.0, 0.0));
    }

    #[test]
    fn tilted_cases() {
        let g = 9.81;
        let ten = 10f64.to_radians();
        let (theta, _) = leveling(&Vector3::new(g * ten.sin(), 0.0, -g * ten.cos())).unwrap();
        assert!((theta - ten).abs() < 1e-9);
        let five = 5f64.to_radians();
        let (_, phi) = leveling(&Vector3::new(0.0, g * five.sin(), -g * five.cos())).unwrap();
        assert!((phi + five).abs() < 1e-9);
        assert!(leveling(&Vector3::new(0.0, 0.0, -2.0)).is_err());
    }

    #[test]
    fn full_stationary_stream() {
        let imu = still(4000, Vector3::new(0.0, 0.0, -9.8));
        let s = detect_static(&imu, &StaticDetection::default()).unwrap();
        assert_eq!(s.sample_count, 4000);
        assert_eq!(s.t_end, imu[3999].t);
        assert_relative_eq!(s.mean_accel, Vector3::new(0.0, 0.0, -9.8), epsilon = 1e-12);
    }

    #[test]
    fn motion_ends_interval() {
        let mut imu = still(4000, Vector3::new(0.0, 0.0, -9.8));
        for u in imu.iter_mut().filter(|u| u.t >= 12.0) {
            u.accel.x = 1.0;
            u.gyro.z = 0.3;
        }
        let s = detect_static(&imu, &StaticDetection::default()).unwrap();
        assert!(s.t_end <= 12.0, "{}", s.t_end);
        assert!(s.t_end >= 10.0);
        assert!(detect_static(&[], &StaticDetection::default()).is_err());
        let mut early = still(4000, Vector3::new(0.0, 0.0, -9.8));
        for u in early.iter_mut().filter(|u| u.t >= 5.0) {
            u.accel.x = 1.0;
        }
        assert!(detect_static(&early, &StaticDetection::default()).is_err());
    }

    #[test]
    fn p0_diagonal_in_si() {
        let p = InitialUncertainty::listed().covariance(&Matrix3::identity());
        let d = p.diagonal();
        assert_relative_eq!(d[0], (1f64 / 3.0).to_radians().powi(2), max_relative = 1e-12);
        assert_relative_eq!(d[2], (5f64 / 3.0).to_radians().powi(2), max_relative = 1e-12);
        assert_relative_eq!(d[3], (0.001f64 / 3.0).powi(2), max_relative = 1e-12);
        assert_relative_eq!(d[6], (0.1f64 / 3.0).powi(2), max_relative = 1e-12);
        assert_relative_eq!(d[9], (9.80665e-3 / 3.0f64).powi(2), max_relative = 1e-12);
        assert_relative_eq!(d[12], (5f64).to_radians().powi(2), max_relative = 1e-12);
        let dflt = InitialUncertainty::default().covariance(&Matrix3::identity());
        assert_relative_eq!(
            dflt[(12, 12)],
            (5f64 / 3600.0).to_radians().powi(2),
            max_relative = 1e-12
        );
        assert_eq!(dflt[(0, 0)], d[0]);
    }

    #[test]
    fn symmetric_costs_give_zero() {
        let g = [-0.5, 0.0, 0.5];
        let h = fit_parabola([(g[0], 3.0), (g[1], 1.0), (g[2], 3.0)], false).unwrap();
        assert!(h.psi_star.abs() < 1e-15);
        assert_relative_eq!(h.curvature, 8.0);
    }

    #[test]
    fn exact_parabola_recovers_minimum() {
        let star = 3.72f64.to_radians();
        let f = |x: f64| 40.0 * (x - star).powi(2) + 7.0;
        let g = [-30f64.to_radians(), 0.0, 30f64.to_radians()];
        let h = fit_parabola(g.map(|x| (x, f(x))), false).unwrap();
        assert!((h.psi_star - star).abs() < 1e-9);
        let shifted = fit_parabola(g.map(|x| (x, f(x) + 1e3)), false).unwrap();
        assert!((shifted.psi_star - h.psi_star).abs() < 1e-12);
    }

    #[test]
    fn concave_fit_is_rejected() {
        let r = fit_parabola([(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)], false);
        assert!(matches!(r, Err(Error::NonConvexFit { .. })));
        let r = fit_parabola([(-1.0, 1.0), (0.0, 1.0), (0.0, 1.0)], false);
        assert!(r.is_err());
    }
}
