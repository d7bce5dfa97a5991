//! Flat `key = value [unit]` configuration.
//!
//! ```text
//! # filter
//! arw = 0.09 deg/sqrt(h)
//! lever_arm = 0.1, 0.0, -0.25 m
//! gate = soft
//! heading_guesses = -30, 0, 30 deg
//! ```

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::alignment::{AlignmentOptions, InitialUncertainty};
use crate::error::{Error, Result};
use crate::estimation::{default_kappa, FilterOptions, GateConfig, GateMode};
use crate::ins::{Geodetic, LeverArm};
use crate::simulator::{ProfileKind, SigmaFrame, SimulationOptions};
use crate::units::{Quantity, Unit};

/// Everything the pipeline needs besides the data itself.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSettings {
    pub filter: FilterOptions,
    pub align: AlignmentOptions,
    /// Seconds after the stationary prefix excluded from RMSE.
    pub skip_seconds: f64,
    /// Bypasses heading alignment when set (rad).
    pub fixed_heading: Option<f64>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            filter: FilterOptions::default(),
            align: AlignmentOptions::default(),
            skip_seconds: 0.0,
            fixed_heading: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub imu_path: Option<PathBuf>,
    pub gnss_path: Option<PathBuf>,
    pub truth_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub settings: PipelineSettings,
    /// Units assumed for IMU columns without a bracketed unit.
    pub gyro_unit: Unit,
    pub accel_unit: Unit,
    /// Fallback GNSS sigma for rows without sigma columns (m).
    pub gnss_sigma: Vector3<f64>,
    pub simulation: SimulationOptions,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            imu_path: None,
            gnss_path: None,
            truth_path: None,
            output_dir: PathBuf::from("out"),
            settings: PipelineSettings::default(),
            gyro_unit: Unit::RadPerSecond,
            accel_unit: Unit::MeterPerSecond2,
            gnss_sigma: Vector3::new(0.01, 0.01, 0.03),
            simulation: SimulationOptions::new(ProfileKind::Circular),
            trials: 100,
            seed: 0,
        }
    }
}

/// A parsed right-hand side: numbers plus an optional unit, or a word.
struct Value<'a> {
    raw: &'a str,
    numbers: Vec<f64>,
    unit: Option<Unit>,
}

fn parse_value(raw: &str) -> std::result::Result<Value<'_>, String> {
    let raw = raw.trim();
    let mut tokens: Vec<&str> = raw
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    let word = Value {
        raw,
        numbers: Vec::new(),
        unit: None,
    };
    if tokens.first().is_none_or(|t| t.parse::<f64>().is_err()) {
        return Ok(word);
    }
    let mut unit = None;
    if let Some(last) = tokens.last() {
        if last.parse::<f64>().is_err() {
            unit = Some(last.parse::<Unit>().map_err(|e| e.to_string())?);
            tokens.pop();
        }
    }
    let numbers = tokens.iter().filter_map(|t| t.parse::<f64>().ok()).collect::<Vec<_>>();
    if numbers.len() != tokens.len() {
        return Ok(word);
    }
    Ok(Value { raw, numbers, unit })
}

impl Value<'_> {
    fn si(&self, n: usize, quantity: Quantity, default: Unit) -> std::result::Result<Vec<f64>, String> {
        if self.numbers.len() != n {
            return Err(format!("expected {n} number(s), got `{}`", self.raw));
        }
        let unit = self.unit.unwrap_or(default);
        if unit.quantity() != quantity {
            return Err(format!("unit `{unit}` does not measure {quantity:?}"));
        }
        Ok(self.numbers.iter().map(|v| unit.convert(*v)).collect())
    }

    fn scalar(&self, quantity: Quantity, default: Unit) -> std::result::Result<f64, String> {
        Ok(self.si(1, quantity, default)?[0])
    }

    fn vec3(&self, quantity: Quantity, default: Unit) -> std::result::Result<Vector3<f64>, String> {
        Ok(Vector3::from_vec(self.si(3, quantity, default)?))
    }

    /// Value expressed in `target` units (for datasheet-unit fields).
    fn in_unit(&self, quantity: Quantity, default: Unit, target: Unit) -> std::result::Result<f64, String> {
        Ok(self.scalar(quantity, default)? / target.to_si())
    }

    fn non_negative(&self, quantity: Quantity, default: Unit) -> std::result::Result<f64, String> {
        let v = self.scalar(quantity, default)?;
        if v < 0.0 {
            return Err(format!("must be non-negative, got {v}"));
        }
        Ok(v)
    }

    fn count(&self) -> std::result::Result<usize, String> {
        self.raw
            .parse::<usize>()
            .map_err(|_| format!("expected a non-negative integer, got `{}`", self.raw))
    }

    fn boolean(&self) -> std::result::Result<bool, String> {
        match self.raw.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            other => Err(format!("expected a boolean, got `{other}`")),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, raw) = content
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, line_no, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            let value = parse_value(raw).map_err(|m| Error::parse(origin, line_no, format!("{key}: {m}")))?;
            self.apply(key, &value)
                .map_err(|m| Error::parse(origin, line_no, format!("{key}: {m}")))?;
        }
        self.validate()
    }

    fn apply(&mut self, key: &str, v: &Value<'_>) -> std::result::Result<(), String> {
        use Quantity::*;
        let s = &mut self.settings;
        let sim = &mut self.simulation;
        match key {
            "imu" => self.imu_path = Some(PathBuf::from(v.raw)),
            "gnss" => self.gnss_path = Some(PathBuf::from(v.raw)),
            "truth" => self.truth_path = Some(PathBuf::from(v.raw)),
            "out" | "output_dir" => self.output_dir = PathBuf::from(v.raw),
            "gyro_unit" => self.gyro_unit = parse_unit(v.raw, AngularRate)?,
            "accel_unit" => self.accel_unit = parse_unit(v.raw, Acceleration)?,

            "lever_arm" => {
                let l = v.vec3(Length, Unit::Meter)?;
                s.filter.lever = LeverArm(l);
                sim.lever = LeverArm(l);
            }
            "arw" => s.filter.noise.gyro_noise = v.non_negative(AngularRandomWalk, Unit::DegPerSqrtHour)?,
            "vrw" => {
                s.filter.noise.accel_noise = v.non_negative(VelocityRandomWalk, Unit::MeterPerSecondPerSqrtHour)?
            }
            "accel_bias_instability" => s.filter.noise.accel_bias_walk = v.non_negative(Acceleration, Unit::MicroG)?,
            "gyro_bias_instability" => s.filter.noise.gyro_bias_walk = v.non_negative(AngularRate, Unit::DegPerHour)?,
            "gate" => s.filter.gate.mode = v.raw.parse::<GateMode>().map_err(|e| e.to_string())?,
            "kappa" => s.filter.gate.kappa = v.scalar(Dimensionless, Unit::Dimensionless)?,
            "gate_confidence" => {
                let c = v.scalar(Dimensionless, Unit::Dimensionless)?;
                if !(c > 0.0 && c < 1.0) {
                    return Err(format!("confidence must lie in (0, 1), got {c}"));
                }
                s.filter.gate.kappa = default_kappa(c);
            }
            "gnss_sigma" => self.gnss_sigma = v.vec3(Length, Unit::Meter)?,

            "heading_guesses" => {
                let g = v.si(3, Angle, Unit::Deg)?;
                s.align.guesses = [g[0], g[1], g[2]];
            }
            "sigma_psi" => s.align.sigma_psi = v.scalar(Angle, Unit::Deg)?,
            "psi_prior" => s.align.prior_mean = v.scalar(Angle, Unit::Deg)?,
            "align_prefix" => {
                s.align.prefix_after_static = if v.raw.eq_ignore_ascii_case("all") {
                    None
                } else {
                    Some(v.non_negative(Time, Unit::Second)?)
                }
            }
            "allow_extrapolation" => s.align.allow_extrapolation = v.boolean()?,
            "initial_heading" => s.fixed_heading = Some(v.scalar(Angle, Unit::Deg)?),
            "static_window" => s.align.detection.window_s = v.scalar(Time, Unit::Second)?,
            "static_gyro_threshold" => s.align.detection.gyro_std = v.scalar(AngularRate, Unit::RadPerSecond)?,
            "static_accel_threshold" => s.align.detection.accel_std = v.scalar(Acceleration, Unit::MeterPerSecond2)?,
            "static_min_samples" => s.align.detection.min_samples = v.count()?,
            "p0" if v.raw.eq_ignore_ascii_case("listed") => s.align.p0 = InitialUncertainty::listed(),
            "p0_attitude" => s.align.p0.attitude = v.vec3(Angle, Unit::Deg)?,
            "p0_velocity" => s.align.p0.velocity = v.scalar(Velocity, Unit::MeterPerSecond)?,
            "p0_position" => s.align.p0.position = v.scalar(Length, Unit::Meter)?,
            "p0_accel_bias" => s.align.p0.accel_bias = v.scalar(Acceleration, Unit::MilliG)?,
            "p0_gyro_bias" => s.align.p0.gyro_bias = v.scalar(AngularRate, Unit::DegPerHour)?,
            "skip_seconds" => s.skip_seconds = v.non_negative(Time, Unit::Second)?,

            "profile" => sim.profile.kind = v.raw.parse::<ProfileKind>().map_err(|e| e.to_string())?,
            "duration" => sim.profile.duration = v.scalar(Time, Unit::Second)?,
            "static_duration" => sim.profile.static_duration = v.scalar(Time, Unit::Second)?,
            "ramp_duration" => sim.profile.ramp_duration = v.scalar(Time, Unit::Second)?,
            "speed" => sim.profile.speed = v.scalar(Velocity, Unit::MeterPerSecond)?,
            "heading" => sim.profile.heading = v.scalar(Angle, Unit::Deg)?,
            "radius" => sim.profile.radius = v.scalar(Length, Unit::Meter)?,
            "climb_rate" => sim.profile.climb_rate = v.scalar(Velocity, Unit::MeterPerSecond)?,
            "side_a" => sim.profile.side_a = v.scalar(Length, Unit::Meter)?,
            "side_b" => sim.profile.side_b = v.scalar(Length, Unit::Meter)?,
            "corner_length" => sim.profile.corner_length = v.scalar(Length, Unit::Meter)?,
            "bank_factor" => sim.profile.bank_factor = v.scalar(Dimensionless, Unit::Dimensionless)?,
            "origin_lat" => sim.profile.origin.lat = v.scalar(Angle, Unit::Deg)?,
            "origin_lon" => sim.profile.origin.lon = v.scalar(Angle, Unit::Deg)?,
            "origin_alt" => sim.profile.origin.alt = v.scalar(Length, Unit::Meter)?,
            "imu_rate" => sim.imu_rate = v.scalar(Frequency, Unit::Hertz)?,
            "gnss_rate" => sim.gnss_rate = v.scalar(Frequency, Unit::Hertz)?,
            "sim_vrw" => {
                sim.noise.na = v.in_unit(
                    VelocityRandomWalk,
                    Unit::MeterPerSecondPerSqrtHour,
                    Unit::MeterPerSecondPerSqrtHour,
                )?
            }
            "sim_arw" => sim.noise.ng = v.in_unit(AngularRandomWalk, Unit::DegPerSqrtHour, Unit::DegPerSqrtHour)?,
            "sim_accel_bias_instability" => sim.noise.ba = v.in_unit(Acceleration, Unit::MicroG, Unit::MicroG)?,
            "sim_gyro_bias_instability" => sim.noise.bg = v.in_unit(AngularRate, Unit::DegPerHour, Unit::DegPerHour)?,
            "sim_accel_turn_on" => sim.noise.beta_a = v.in_unit(Acceleration, Unit::MicroG, Unit::MicroG)?,
            "sim_gyro_turn_on" => sim.noise.beta_g = v.in_unit(AngularRate, Unit::DegPerHour, Unit::DegPerHour)?,
            "sim_tau_a" => sim.noise.tau_a = v.non_negative(Frequency, Unit::Hertz)?,
            "sim_tau_g" => sim.noise.tau_g = v.non_negative(Frequency, Unit::Hertz)?,
            "sim_gnss_sigma" => sim.noise.sigma_xyz = v.vec3(Length, Unit::Meter)?,
            "sim_sigma_frame" => {
                sim.noise.sigma_frame = match v.raw.to_ascii_lowercase().as_str() {
                    "ecef" => SigmaFrame::Ecef,
                    "ned" => SigmaFrame::Ned,
                    other => return Err(format!("expected ecef or ned, got `{other}`")),
                }
            }
            "trials" => self.trials = v.count()?,
            "seed" => {
                self.seed = v
                    .raw
                    .parse()
                    .map_err(|_| format!("expected an unsigned integer, got `{}`", v.raw))?
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        GateConfig::new(self.settings.filter.gate.kappa, self.settings.filter.gate.mode)?;
        self.settings.filter.noise.validate()?;
        self.simulation.profile.validate()?;
        self.simulation.noise.validate()?;
        if !self.gnss_sigma.iter().all(|s| *s > 0.0) {
            return Err(Error::InvalidParameter("gnss_sigma must be positive".into()));
        }
        if !(self.settings.align.sigma_psi > 0.0) {
            return Err(Error::InvalidParameter("sigma_psi must be positive".into()));
        }
        Ok(())
    }

    /// Filter noise matching the simulator's datasheet values.
    pub fn with_filter_noise_from_simulation(mut self) -> Self {
        self.settings.filter.noise = self.simulation.noise.imu_params();
        self
    }

    pub fn origin(&self) -> Geodetic {
        self.simulation.profile.origin
    }
}

fn parse_unit(raw: &str, quantity: Quantity) -> std::result::Result<Unit, String> {
    let unit: Unit = raw.parse().map_err(|e: Error| e.to_string())?;
    unit.expect(quantity).map_err(|e| e.to_string())
}
