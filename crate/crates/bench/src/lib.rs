//! Shared fixtures for the criterion benches.

use lienav_core::alignment::{init_state, InitialUncertainty, StaticInterval};
use lienav_core::lie::ConcentratedGaussian;
use lienav_core::simulator::{simulate, ProfileKind, SimulatedDataset, SimulationOptions};

/// A seeded circular flight of `duration` seconds.
pub fn dataset(duration: f64) -> SimulatedDataset {
    let mut o = SimulationOptions::new(ProfileKind::Circular);
    o.profile.duration = duration;
    o.noise.seed = 7;
    simulate(&o).expect("simulation")
}

/// Initial state at the true heading from the first 20 s.
pub fn initial(data: &SimulatedDataset) -> ConcentratedGaussian {
    let n = 20 * data.reference.rate as usize;
    let span = &data.imu[..n];
    let stat = StaticInterval {
        t_start: span[0].t,
        t_end: span[n - 1].t,
        start_index: 0,
        end_index: n,
        mean_accel: span.iter().map(|s| s.accel).sum::<nalgebra::Vector3<f64>>() / n as f64,
        mean_gyro: span.iter().map(|s| s.gyro).sum::<nalgebra::Vector3<f64>>() / n as f64,
        sample_count: n,
    };
    init_state(
        &stat,
        &data.gnss,
        data.reference.params.heading,
        &data.lever,
        &InitialUncertainty::default(),
    )
    .expect("initial state")
}
