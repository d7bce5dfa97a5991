//! Closed set of physical units accepted in configuration and CSV headers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Standard gravity used for g, mg and ug conversions (m/s^2).
pub const STANDARD_GRAVITY: f64 = 9.806_65;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    Rad,
    Deg,
    Meter,
    MeterPerSecond,
    MeterPerSecond2,
    G,
    MilliG,
    MicroG,
    RadPerSecond,
    DegPerSecond,
    DegPerHour,
    DegPerSqrtHour,
    MeterPerSecondPerSqrtHour,
    RadPerSecondPerSqrtHz,
    MeterPerSecond2PerSqrtHz,
    Second,
    Hertz,
    Dimensionless,
}

/// What a unit measures; used to catch e.g. `m` on a gyro column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Angle,
    Length,
    Velocity,
    Acceleration,
    AngularRate,
    AngularRandomWalk,
    VelocityRandomWalk,
    Time,
    Frequency,
    Dimensionless,
}

impl Unit {
    pub fn quantity(self) -> Quantity {
        use Unit::*;
        match self {
            Rad | Deg => Quantity::Angle,
            Meter => Quantity::Length,
            MeterPerSecond => Quantity::Velocity,
            MeterPerSecond2 | G | MilliG | MicroG => Quantity::Acceleration,
            RadPerSecond | DegPerSecond | DegPerHour => Quantity::AngularRate,
            DegPerSqrtHour | RadPerSecondPerSqrtHz => Quantity::AngularRandomWalk,
            MeterPerSecondPerSqrtHour | MeterPerSecond2PerSqrtHz => Quantity::VelocityRandomWalk,
            Second => Quantity::Time,
            Hertz => Quantity::Frequency,
            Dimensionless => Quantity::Dimensionless,
        }
    }

    /// Multiplier taking a value in this unit to SI (rad, m, s based).
    pub fn to_si(self) -> f64 {
        use Unit::*;
        match self {
            Rad
            | Meter
            | MeterPerSecond
            | MeterPerSecond2
            | RadPerSecond
            | Second
            | Hertz
            | RadPerSecondPerSqrtHz
            | MeterPerSecond2PerSqrtHz
            | Dimensionless => 1.0,
            Deg | DegPerSecond => PI / 180.0,
            G => STANDARD_GRAVITY,
            MilliG => 1e-3 * STANDARD_GRAVITY,
            MicroG => 1e-6 * STANDARD_GRAVITY,
            DegPerHour => PI / 180.0 / 3600.0,
            DegPerSqrtHour => PI / 180.0 / 60.0,
            MeterPerSecondPerSqrtHour => 1.0 / 60.0,
        }
    }

    pub fn convert(self, value: f64) -> f64 {
        value * self.to_si()
    }

    pub fn expect(self, quantity: Quantity) -> Result<Unit> {
        if self.quantity() == quantity {
            Ok(self)
        } else {
            Err(Error::InvalidParameter(format!(
                "unit `{self}` does not measure {quantity:?}"
            )))
        }
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Unit::*;
        let unit = match s.trim() {
            "rad" => Rad,
            "deg" | "°" => Deg,
            "m" => Meter,
            "m/s" => MeterPerSecond,
            "m/s2" | "m/s^2" | "m/s²" => MeterPerSecond2,
            "g" => G,
            "mg" => MilliG,
            "ug" | "µg" | "μg" => MicroG,
            "rad/s" => RadPerSecond,
            "deg/s" | "°/s" => DegPerSecond,
            "deg/h" | "°/h" => DegPerHour,
            "deg/sqrt(h)" | "°/√h" | "deg/rt(h)" => DegPerSqrtHour,
            "(m/s)/sqrt(h)" | "(m/s)/√h" | "m/s/sqrt(h)" => MeterPerSecondPerSqrtHour,
            "rad/s/sqrt(Hz)" | "rad/s/√Hz" => RadPerSecondPerSqrtHz,
            "m/s2/sqrt(Hz)" | "m/s²/√Hz" => MeterPerSecond2PerSqrtHz,
            "s" => Second,
            "Hz" => Hertz,
            "" | "1" => Dimensionless,
            other => return Err(Error::InvalidParameter(format!("unknown unit `{other}`"))),
        };
        Ok(unit)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Unit::*;
        let s = match self {
            Rad => "rad",
            Deg => "deg",
            Meter => "m",
            MeterPerSecond => "m/s",
            MeterPerSecond2 => "m/s2",
            G => "g",
            MilliG => "mg",
            MicroG => "ug",
            RadPerSecond => "rad/s",
            DegPerSecond => "deg/s",
            DegPerHour => "deg/h",
            DegPerSqrtHour => "deg/sqrt(h)",
            MeterPerSecondPerSqrtHour => "(m/s)/sqrt(h)",
            RadPerSecondPerSqrtHz => "rad/s/sqrt(Hz)",
            MeterPerSecond2PerSqrtHz => "m/s2/sqrt(Hz)",
            Second => "s",
            Hertz => "Hz",
            Dimensionless => "1",
        };
        f.write_str(s)
    }
}
