//! Synthetic flights: reference trajectories, ideal and corrupted IMU
//! signals, and GNSS fixes.

mod gnss;
mod imu;
mod trajectory;

use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ins::{GnssFix, ImuNoiseParams, ImuSample, LeverArm};
use crate::lie::GroupElement;
use crate::units::Unit;

pub use gnss::{gen_gnss, inject_outliers};
pub use imu::{corrupt_imu, corrupt_imu_from, inverse_mechanization, ou_bias_step, CorruptedImu};
pub use trajectory::{attitude_euler, make_reference, ProfileKind, ProfileParams, ReferenceEpoch, ReferenceTrajectory};

/// Axes on which the GNSS standard deviations apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaFrame {
    Ecef,
    Ned,
}

/// Sensor error budget in datasheet units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimNoiseConfig {
    /// Velocity random walk, (m/s)/sqrt(h).
    pub na: f64,
    /// Angle random walk, deg/sqrt(h).
    pub ng: f64,
    /// Accelerometer bias instability, ug.
    pub ba: f64,
    /// Gyro bias instability, deg/h.
    pub bg: f64,
    /// Turn-on bias spread, ug.
    pub beta_a: f64,
    /// Turn-on bias spread, deg/h.
    pub beta_g: f64,
    /// Mean-reversion rates (1/s).
    pub tau_a: f64,
    pub tau_g: f64,
    /// GNSS standard deviations (m).
    pub sigma_xyz: Vector3<f64>,
    pub sigma_frame: SigmaFrame,
    pub seed: u64,
}

impl SimNoiseConfig {
    pub fn zero() -> Self {
        Self {
            na: 0.0,
            ng: 0.0,
            ba: 0.0,
            bg: 0.0,
            beta_a: 0.0,
            beta_g: 0.0,
            tau_a: 0.0,
            tau_g: 0.0,
            sigma_xyz: Vector3::zeros(),
            sigma_frame: SigmaFrame::Ecef,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.na,
            self.ng,
            self.ba,
            self.bg,
            self.beta_a,
            self.beta_g,
            self.tau_a,
            self.tau_g,
            self.sigma_xyz.x,
            self.sigma_xyz.y,
            self.sigma_xyz.z,
        ];
        if fields.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "noise configuration must be non-negative: {self:?}"
            )))
        }
    }

    pub fn imu_params(&self) -> ImuNoiseParams {
        ImuNoiseParams::from_datasheet(self.na, self.ng, self.ba, self.bg)
    }

    /// `(beta_a, beta_g)` in m/s^2 and rad/s.
    pub fn turn_on_sigma(&self) -> (f64, f64) {
        (Unit::MicroG.convert(self.beta_a), Unit::DegPerHour.convert(self.beta_g))
    }
}

impl Default for SimNoiseConfig {
    fn default() -> Self {
        Self {
            na: 0.008,
            ng: 0.09,
            ba: 3.2,
            bg: 0.8,
            beta_a: 500.0,
            beta_g: 10.0,
            tau_a: 1.0,
            tau_g: 1.0,
            sigma_xyz: Vector3::new(0.01, 0.01, 0.03),
            sigma_frame: SigmaFrame::Ecef,
            seed: 0,
        }
    }
}

/// Everything one simulated flight produces.
#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    pub reference: ReferenceTrajectory,
    pub imu: Vec<ImuSample>,
    pub gnss: Vec<GnssFix>,
    /// Reference states with the true biases, one per IMU sample.
    pub truth: Vec<GroupElement>,
    pub lever: LeverArm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationOptions {
    pub profile: ProfileParams,
    pub noise: SimNoiseConfig,
    pub imu_rate: f64,
    pub gnss_rate: f64,
    pub lever: LeverArm,
}

impl SimulationOptions {
    pub fn new(kind: ProfileKind) -> Self {
        Self {
            profile: ProfileParams::new(kind),
            noise: SimNoiseConfig::default(),
            imu_rate: 200.0,
            gnss_rate: 1.0,
            lever: LeverArm::zero(),
        }
    }
}

/// Reference, corrupted IMU and GNSS from one seeded RNG stream.
pub fn simulate(opts: &SimulationOptions) -> Result<SimulatedDataset> {
    let reference = make_reference(&opts.profile, opts.imu_rate)?;
    let ideal = inverse_mechanization(&reference)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.noise.seed);
    let corrupted = corrupt_imu(&ideal, &opts.noise, &mut rng)?;
    let gnss = gen_gnss(&reference, &opts.lever, &opts.noise, opts.gnss_rate, &mut rng)?;
    Ok(assemble(reference, corrupted, gnss, opts.lever))
}

pub(crate) fn assemble(
    reference: ReferenceTrajectory,
    corrupted: CorruptedImu,
    gnss: Vec<GnssFix>,
    lever: LeverArm,
) -> SimulatedDataset {
    let truth = truth_states(&reference, &corrupted.bias);
    SimulatedDataset {
        reference,
        imu: corrupted.samples,
        gnss,
        truth,
        lever,
    }
}

/// Pairs reference epochs with bias histories.
pub fn truth_states(reference: &ReferenceTrajectory, bias: &[Vector6<f64>]) -> Vec<GroupElement> {
    reference
        .epochs
        .iter()
        .zip(bias)
        .map(|(e, b)| GroupElement::new(e.rot, e.vel, e.pos, *b))
        .collect()
}
