use std::fmt;
use std::time::Duration;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::ins::earth::{wrap_pi, Geodetic};
use crate::lie::GroupElement;
use crate::simulator::attitude_euler;

pub const CHANNELS: [&str; 6] = ["roll", "pitch", "heading", "longitude", "latitude", "altitude"];

/// RMSE per channel: roll, pitch, heading in degrees; longitude (east),
/// latitude (north), altitude (down) in metres.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChannelRmse(pub [f64; 6]);

impl ChannelRmse {
    pub fn roll(&self) -> f64 {
        self.0[0]
    }
    pub fn pitch(&self) -> f64 {
        self.0[1]
    }
    pub fn heading(&self) -> f64 {
        self.0[2]
    }
    pub fn longitude(&self) -> f64 {
        self.0[3]
    }
    pub fn latitude(&self) -> f64 {
        self.0[4]
    }
    pub fn altitude(&self) -> f64 {
        self.0[5]
    }
}

/// Signed per-epoch errors in report units, ordered as [`CHANNELS`].
pub fn channel_errors(estimate: &GroupElement, truth: &GroupElement) -> [f64; 6] {
    let (r_e, p_e, y_e) = attitude_euler(&estimate.rot, &truth.pos);
    let (r_t, p_t, y_t) = attitude_euler(&truth.rot, &truth.pos);
    let c_ne = Geodetic::from_ecef(&truth.pos).ned_to_ecef();
    let d: Vector3<f64> = c_ne.transpose() * (estimate.pos - truth.pos);
    [
        wrap_pi(r_e - r_t).to_degrees(),
        wrap_pi(p_e - p_t).to_degrees(),
        wrap_pi(y_e - y_t).to_degrees(),
        d.y,
        d.x,
        d.z,
    ]
}

/// Running sums of squared channel errors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RmseAccumulator {
    sum_sq: [f64; 6],
    count: usize,
}

impl RmseAccumulator {
    pub fn add(&mut self, estimate: &GroupElement, truth: &GroupElement) {
        for (s, e) in self.sum_sq.iter_mut().zip(channel_errors(estimate, truth)) {
            *s += e * e;
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &RmseAccumulator) {
        for (s, o) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *s += o;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(&self) -> Result<ChannelRmse> {
        if self.count == 0 {
            return Err(Error::Misaligned("no epochs to evaluate".into()));
        }
        Ok(ChannelRmse(self.sum_sq.map(|s| (s / self.count as f64).sqrt())))
    }
}

/// Per-channel RMSE of aligned sequences.
pub fn rmse(estimates: &[GroupElement], truth: &[GroupElement]) -> Result<ChannelRmse> {
    if estimates.len() != truth.len() {
        return Err(Error::Misaligned(format!(
            "{} estimates vs {} truth epochs",
            estimates.len(),
            truth.len()
        )));
    }
    let mut acc = RmseAccumulator::default();
    for (e, t) in estimates.iter().zip(truth) {
        acc.add(e, t);
    }
    acc.finish()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseReport {
    pub filtered: ChannelRmse,
    pub smoothed: ChannelRmse,
    pub trials: usize,
    pub diverged: usize,
    /// Wall-clock time; not part of the text form.
    pub runtime: Duration,
}

impl RmseReport {
    /// Channels where the smoother did worse than the filter.
    pub fn dominance_violations(&self) -> Vec<&'static str> {
        CHANNELS
            .iter()
            .enumerate()
            .filter(|(i, _)| self.smoothed.0[*i] > self.filtered.0[*i])
            .map(|(_, n)| *n)
            .collect()
    }
}

impl fmt::Display for RmseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trials,{}", self.trials)?;
        writeln!(f, "diverged,{}", self.diverged)?;
        writeln!(
            f,
            "estimate,roll[deg],pitch[deg],heading[deg],longitude[m],latitude[m],altitude[m]"
        )?;
        for (name, r) in [("filtered", &self.filtered), ("smoothed", &self.smoothed)] {
            let cells: Vec<String> = r.0.iter().map(|v| super::io::fmt_num(*v)).collect();
            writeln!(f, "{name},{}", cells.join(","))?;
        }
        let v = self.dominance_violations();
        if v.is_empty() {
            writeln!(f, "smoother_dominance,ok")
        } else {
            writeln!(f, "smoother_dominance,violated:{}", v.join(";"))
        }
    }
}
