use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ReferenceTrajectory, SigmaFrame, SimNoiseConfig};
use crate::error::{Error, Result};
use crate::ins::{Geodetic, GnssFix, LeverArm};

/// Floor applied to the reported sigma so noise-free fixes stay usable.
const MIN_REPORTED_SIGMA: f64 = 1e-6;

/// Antenna positions at `rate_hz`, with `N(0, diag(sigma^2))` noise on the
/// axes selected by `cfg.sigma_frame`.
pub fn gen_gnss<R: Rng + ?Sized>(
    reference: &ReferenceTrajectory,
    lever: &LeverArm,
    cfg: &SimNoiseConfig,
    rate_hz: f64,
    rng: &mut R,
) -> Result<Vec<GnssFix>> {
    cfg.validate()?;
    let ratio = reference.rate / rate_hz;
    let step = ratio.round();
    if !(rate_hz > 0.0) || step < 1.0 || (ratio - step).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "GNSS rate {rate_hz} Hz must divide the IMU rate {} Hz",
            reference.rate
        )));
    }
    let step = step as usize;
    let sigma = cfg.sigma_xyz;
    let mut fixes = Vec::with_capacity(reference.len() / step + 1);
    for e in reference.epochs.iter().step_by(step) {
        let w = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let scaled = w.component_mul(&sigma);
        let (noise, reported) = match cfg.sigma_frame {
            SigmaFrame::Ecef => (scaled, sigma),
            SigmaFrame::Ned => {
                let c = Geodetic::from_ecef(&e.pos).ned_to_ecef();
                let cov = c * Matrix3::from_diagonal(&sigma.component_mul(&sigma)) * c.transpose();
                (c * scaled, cov.diagonal().map(f64::sqrt))
            }
        };
        let reported = reported.map(|s| s.max(MIN_REPORTED_SIGMA));
        fixes.push(GnssFix::new(e.t, e.pos + e.rot * lever.0 + noise, reported));
    }
    Ok(fixes)
}

/// Adds a bias of `magnitude_m` in a uniformly random direction to each of
/// the listed fixes; sigma fields are left untouched.
pub fn inject_outliers<R: Rng + ?Sized>(
    fixes: &[GnssFix],
    epochs: &[usize],
    magnitude_m: f64,
    rng: &mut R,
) -> Result<Vec<GnssFix>> {
    let mut out = fixes.to_vec();
    for &k in epochs {
        let fix = out
            .get_mut(k)
            .ok_or_else(|| Error::InvalidParameter(format!("outlier epoch {k} outside {} fixes", fixes.len())))?;
        let dir = loop {
            let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let n = v.norm();
            if n > 1e-12 {
                break v / n;
            }
        };
        fix.pos += dir * magnitude_m;
    }
    Ok(out)
}
