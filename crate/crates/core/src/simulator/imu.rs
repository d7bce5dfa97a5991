use nalgebra::{Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ReferenceTrajectory, SimNoiseConfig};
use crate::error::{Error, Result};
use crate::ins::{earth_rate_ecef, gravity_ecef, ImuSample};
use crate::lie::{group_log, GroupElement};

/// Ideal IMU signals reproducing `reference` under `X exp(Omega dt)`.
/// The final sample repeats the previous increment.
pub fn inverse_mechanization(reference: &ReferenceTrajectory) -> Result<Vec<ImuSample>> {
    let epochs = &reference.epochs;
    if epochs.len() < 2 {
        return Err(Error::InvalidParameter("reference needs at least two epochs".into()));
    }
    let w_ie = earth_rate_ecef();
    let mut out = Vec::with_capacity(epochs.len());
    for k in 0..epochs.len() {
        let j = k.min(epochs.len() - 2);
        let a = &epochs[j];
        let b = &epochs[j + 1];
        let dt = b.t - a.t;
        let rt = a.rot.transpose();
        // S_k^-1 S_{k+1} in factored form, built from differences to keep
        // the ECEF magnitudes out of the subtraction.
        let rel = GroupElement::new(rt * b.rot, rt * (b.vel - a.vel), rt * (b.pos - a.pos), Vector6::zeros());
        let omega = group_log(&rel)? * (1.0 / dt);

        let e = &epochs[k];
        let rt = e.rot.transpose();
        let gyro = omega.phi() + rt * w_ie;
        let accel = omega.nu() + 2.0 * rt * w_ie.cross(&e.vel) - rt * gravity_ecef(&e.pos)?;
        out.push(ImuSample::new(e.t, gyro, accel));
    }
    Ok(out)
}

/// One explicit Ornstein-Uhlenbeck step
/// `b' = b + tau (beta - b) dt + B sqrt(dt) w`, with `tau` a rate (1/s).
pub fn ou_bias_step<R: Rng + ?Sized>(
    b: &Vector3<f64>,
    tau: f64,
    beta: &Vector3<f64>,
    diffusion: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vector3<f64>> {
    if !(dt > 0.0) || tau < 0.0 || tau * dt >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "OU step needs dt > 0 and 0 <= tau dt < 1 (tau = {tau}, dt = {dt})"
        )));
    }
    let w = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(b + (beta - b) * (tau * dt) + w * (diffusion * dt.sqrt()))
}

/// Corrupted IMU stream and the true `(b_a, b_g)` at every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedImu {
    pub samples: Vec<ImuSample>,
    pub bias: Vec<Vector6<f64>>,
    /// The OU means `(beta_a, beta_g)` used for this run.
    pub turn_on: Vector6<f64>,
}

/// Draws turn-on biases `beta ~ N(0, diag(beta_cfg^2))` and corrupts `ideal`
/// starting from `b(0) = beta`.
pub fn corrupt_imu<R: Rng + ?Sized>(ideal: &[ImuSample], cfg: &SimNoiseConfig, rng: &mut R) -> Result<CorruptedImu> {
    let (beta_a, beta_g) = cfg.turn_on_sigma();
    let mut beta = Vector6::zeros();
    for i in 0..3 {
        beta[i] = beta_a * rng.sample::<f64, _>(StandardNormal);
        beta[3 + i] = beta_g * rng.sample::<f64, _>(StandardNormal);
    }
    corrupt_imu_from(ideal, cfg, &beta, &beta, rng)
}

/// Corrupts `ideal` with bias starting at `initial` and reverting to `beta`.
pub fn corrupt_imu_from<R: Rng + ?Sized>(
    ideal: &[ImuSample],
    cfg: &SimNoiseConfig,
    initial: &Vector6<f64>,
    beta: &Vector6<f64>,
    rng: &mut R,
) -> Result<CorruptedImu> {
    cfg.validate()?;
    let params = cfg.imu_params();
    let dt = if ideal.len() > 1 {
        (ideal[ideal.len() - 1].t - ideal[0].t) / (ideal.len() - 1) as f64
    } else {
        1.0
    };
    let sqrt_fs = (1.0 / dt).sqrt();
    let gyro_std = params.gyro_noise * sqrt_fs;
    let accel_std = params.accel_noise * sqrt_fs;
    let beta_a = beta.fixed_rows::<3>(0).into_owned();
    let beta_g = beta.fixed_rows::<3>(3).into_owned();
    let mut b_a = initial.fixed_rows::<3>(0).into_owned();
    let mut b_g = initial.fixed_rows::<3>(3).into_owned();

    let mut samples = Vec::with_capacity(ideal.len());
    let mut bias = Vec::with_capacity(ideal.len());
    for (k, u) in ideal.iter().enumerate() {
        if k > 0 {
            let step = u.t - ideal[k - 1].t;
            b_a = ou_bias_step(&b_a, cfg.tau_a, &beta_a, params.accel_bias_walk, step, rng)?;
            b_g = ou_bias_step(&b_g, cfg.tau_g, &beta_g, params.gyro_bias_walk, step, rng)?;
        }
        let wg = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let wa = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        samples.push(ImuSample::new(
            u.t,
            u.gyro + b_g + wg * gyro_std,
            u.accel + b_a + wa * accel_std,
        ));
        let mut b = Vector6::zeros();
        b.fixed_rows_mut::<3>(0).copy_from(&b_a);
        b.fixed_rows_mut::<3>(3).copy_from(&b_g);
        bias.push(b);
    }
    Ok(CorruptedImu {
        samples,
        bias,
        turn_on: *beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{make_reference, ProfileKind, ProfileParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ou_fixed_point_and_single_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let beta = Vector3::repeat(1.0);
        assert_eq!(ou_bias_step(&beta, 1.0, &beta, 0.0, 0.005, &mut rng).unwrap(), beta);
        let b = ou_bias_step(&Vector3::zeros(), 1.0, &beta, 0.0, 0.005, &mut rng).unwrap();
        assert_eq!(b, Vector3::repeat(0.005));
        assert!(ou_bias_step(&b, 300.0, &beta, 0.0, 0.005, &mut rng).is_err());
    }

    #[test]
    fn stationary_segment_senses_earth_rate_and_gravity() {
        let p = ProfileParams::new(ProfileKind::Circular);
        let r = make_reference(&p, 200.0).unwrap();
        let imu = inverse_mechanization(&r).unwrap();
        for k in [0, 100, 1000] {
            let e = &r.epochs[k];
            let rt = e.rot.transpose();
            assert!((imu[k].gyro - rt * earth_rate_ecef()).amax() < 1e-9);
            assert!((imu[k].accel + rt * gravity_ecef(&e.pos).unwrap()).amax() < 1e-9);
        }
    }

    #[test]
    fn zero_config_is_bit_exact() {
        let p = ProfileParams::new(ProfileKind::Circular);
        let r = make_reference(&p, 100.0).unwrap();
        let imu = inverse_mechanization(&r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = corrupt_imu(&imu, &SimNoiseConfig::zero(), &mut rng).unwrap();
        assert_eq!(out.samples, imu);
        assert!(out.bias.iter().all(|b| *b == Vector6::zeros()));
    }
}
