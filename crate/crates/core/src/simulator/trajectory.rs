//! Parametric reference flights in a local NED tangent frame.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::ins::earth::{dcm_to_euler, euler_to_dcm, Geodetic};
use crate::lie::{left_jacobian_inverse, so3_log};
use crate::units::STANDARD_GRAVITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProfileKind {
    Helicoidal,
    Rectangular,
    Circular,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 3] = [ProfileKind::Helicoidal, ProfileKind::Rectangular, ProfileKind::Circular];

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Helicoidal => "helicoidal",
            ProfileKind::Rectangular => "rectangular",
            ProfileKind::Circular => "circular",
        }
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "helicoidal" | "helix" => Ok(ProfileKind::Helicoidal),
            "rectangular" | "rectangle" => Ok(ProfileKind::Rectangular),
            "circular" | "circle" => Ok(ProfileKind::Circular),
            other => Err(Error::InvalidParameter(format!("unknown profile `{other}`"))),
        }
    }
}

impl std::fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape and timing of a reference flight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileParams {
    pub kind: ProfileKind,
    pub origin: Geodetic,
    /// Total length including the stationary prefix (s).
    pub duration: f64,
    pub static_duration: f64,
    /// Time to reach cruise speed after take-off (s).
    pub ramp_duration: f64,
    /// Horizontal cruise speed (m/s).
    pub speed: f64,
    /// Initial heading (rad).
    pub heading: f64,
    /// Circle and helix radius (m).
    pub radius: f64,
    /// Helix climb rate at cruise speed (m/s).
    pub climb_rate: f64,
    /// Rectangle straight-side lengths (m).
    pub side_a: f64,
    pub side_b: f64,
    /// Arc length of each rounded corner (m).
    pub corner_length: f64,
    /// Multiplier on the coordinated-turn bank angle.
    pub bank_factor: f64,
}

impl ProfileParams {
    pub fn new(kind: ProfileKind) -> Self {
        Self {
            kind,
            origin: Geodetic::from_degrees(-23.2, -45.9, 600.0),
            duration: 150.0,
            static_duration: 30.0,
            ramp_duration: 5.0,
            speed: 5.0,
            heading: 0.0,
            radius: 50.0,
            climb_rate: 1.0,
            side_a: 100.0,
            side_b: 60.0,
            corner_length: 30.0,
            bank_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration", self.duration),
            ("ramp_duration", self.ramp_duration),
            ("speed", self.speed),
            ("radius", self.radius),
            ("side_a", self.side_a),
            ("side_b", self.side_b),
            ("corner_length", self.corner_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.static_duration.is_finite() && self.static_duration >= 0.0) {
            return Err(Error::InvalidParameter("static_duration must be non-negative".into()));
        }
        if self.duration < 60.0 {
            return Err(Error::InvalidParameter(format!(
                "duration must be at least 60 s, got {}",
                self.duration
            )));
        }
        if !(self.climb_rate.is_finite() && self.heading.is_finite() && self.bank_factor.is_finite()) {
            return Err(Error::NonFinite("profile parameters".into()));
        }
        Ok(())
    }

    /// Horizontal arc length travelled at time `t`, and the speed fraction
    /// `v(t) / V` (quintic smoothstep during the ramp).
    fn progress(&self, t: f64) -> (f64, f64) {
        let t_move = t - self.static_duration;
        if t_move <= 0.0 {
            return (0.0, 0.0);
        }
        let tr = self.ramp_duration;
        if t_move < tr {
            let x = t_move / tr;
            let x3 = x * x * x;
            let frac = x3 * (10.0 - 15.0 * x + 6.0 * x * x);
            // Integral of the smoothstep: x^6 - 3 x^5 + 5/2 x^4.
            let integral = x3 * x * (2.5 - 3.0 * x + x * x);
            (self.speed * tr * integral, frac)
        } else {
            (self.speed * (0.5 * tr + t_move - tr), 1.0)
        }
    }
}

/// Horizontal state at arc length `s`: north, east, heading, curvature.
#[derive(Clone, Copy, Debug)]
struct PathPoint {
    north: f64,
    east: f64,
    heading: f64,
    curvature: f64,
}

#[derive(Clone, Debug)]
enum Path {
    Circle { radius: f64, heading: f64 },
    Rectangle(RoundedRectangle),
}

impl Path {
    fn new(p: &ProfileParams) -> Self {
        match p.kind {
            ProfileKind::Circular | ProfileKind::Helicoidal => Path::Circle {
                radius: p.radius,
                heading: p.heading,
            },
            ProfileKind::Rectangular => Path::Rectangle(RoundedRectangle::new(p)),
        }
    }

    fn at(&self, s: f64) -> PathPoint {
        match self {
            Path::Circle { radius, heading } => {
                let psi = heading + s / radius;
                PathPoint {
                    north: radius * (psi.sin() - heading.sin()),
                    east: radius * (heading.cos() - psi.cos()),
                    heading: psi,
                    curvature: 1.0 / radius,
                }
            }
            Path::Rectangle(r) => r.at(s),
        }
    }
}

/// Straight sides joined by quarter turns whose curvature follows a raised
/// cosine, so curvature and its derivative vanish at both ends of a corner.
#[derive(Clone, Debug)]
struct RoundedRectangle {
    sides: [f64; 2],
    corner: f64,
    /// Start point of each of the 8 segments in one lap.
    starts: Vec<PathPoint>,
    lap: f64,
    gauss: GaussLegendre,
}

impl RoundedRectangle {
    fn new(p: &ProfileParams) -> Self {
        let gauss = GaussLegendre::new(24);
        let mut r = Self {
            sides: [p.side_a, p.side_b],
            corner: p.corner_length,
            starts: Vec::with_capacity(8),
            lap: 2.0 * (p.side_a + p.side_b) + 4.0 * p.corner_length,
            gauss,
        };
        let mut point = PathPoint {
            north: 0.0,
            east: 0.0,
            heading: p.heading,
            curvature: 0.0,
        };
        for seg in 0..8 {
            r.starts.push(point);
            let len = r.segment_length(seg);
            point = r.advance(seg, &point, len);
        }
        r
    }

    fn segment_length(&self, seg: usize) -> f64 {
        if seg.is_multiple_of(2) {
            self.sides[(seg / 2) % 2]
        } else {
            self.corner
        }
    }

    fn corner_curvature(&self, u: f64) -> f64 {
        (PI / 2.0) / self.corner * (1.0 - (2.0 * PI * u / self.corner).cos())
    }

    fn corner_turn(&self, u: f64) -> f64 {
        let l = self.corner;
        (PI / 2.0) / l * (u - l / (2.0 * PI) * (2.0 * PI * u / l).sin())
    }

    fn advance(&self, seg: usize, start: &PathPoint, u: f64) -> PathPoint {
        if seg.is_multiple_of(2) {
            PathPoint {
                north: start.north + u * start.heading.cos(),
                east: start.east + u * start.heading.sin(),
                heading: start.heading,
                curvature: 0.0,
            }
        } else {
            let (dn, de) = self.gauss.integrate(0.0, u, |w| {
                let psi = start.heading + self.corner_turn(w);
                (psi.cos(), psi.sin())
            });
            PathPoint {
                north: start.north + dn,
                east: start.east + de,
                heading: start.heading + self.corner_turn(u),
                curvature: self.corner_curvature(u),
            }
        }
    }

    fn at(&self, s: f64) -> PathPoint {
        let laps = (s / self.lap).floor();
        let mut rem = s - laps * self.lap;
        for seg in 0..8 {
            let len = self.segment_length(seg);
            if rem < len || seg == 7 {
                let mut p = self.advance(seg, &self.starts[seg], rem.min(len));
                p.heading += laps * 2.0 * PI;
                return p;
            }
            rem -= len;
        }
        unreachable!("segment loop always returns")
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    fn new(n: usize) -> Self {
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        Self { nodes, weights }
    }

    fn integrate<F: Fn(f64) -> (f64, f64)>(&self, a: f64, b: f64, f: F) -> (f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = (0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            acc.0 += w * v.0;
            acc.1 += w * v.1;
        }
        (acc.0 * half, acc.1 * half)
    }
}

/// One reference epoch: body attitude, velocity and position in ECEF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceEpoch {
    pub t: f64,
    pub rot: Matrix3<f64>,
    pub vel: Vector3<f64>,
    pub pos: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrajectory {
    pub rate: f64,
    pub params: ProfileParams,
    pub epochs: Vec<ReferenceEpoch>,
}

impl ReferenceTrajectory {
    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// Number of epochs strictly inside the stationary prefix.
    pub fn static_len(&self) -> usize {
        self.epochs
            .iter()
            .take_while(|e| e.t <= self.params.static_duration)
            .count()
    }
}

/// Local-frame pose at time `t`: `C_b^n` and NED position.
fn local_pose(p: &ProfileParams, path: &Path, t: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let (s, frac) = p.progress(t);
    let pt = path.at(s);
    let v = p.speed * frac;
    let climb_ratio = match p.kind {
        ProfileKind::Helicoidal => p.climb_rate / p.speed,
        _ => 0.0,
    };
    let down = -climb_ratio * s;
    let roll = p.bank_factor * (v * v * pt.curvature / STANDARD_GRAVITY).atan();
    let pitch = climb_ratio.atan() * frac;
    (
        euler_to_dcm(roll, pitch, pt.heading),
        Vector3::new(pt.north, pt.east, down),
    )
}

/// Samples the profile at `rate` Hz. Velocities are chosen so that one
/// step of `X exp(Omega dt)` with the inverse-mechanized input lands
/// exactly on the next reference epoch.
pub fn make_reference(params: &ProfileParams, rate: f64) -> Result<ReferenceTrajectory> {
    params.validate()?;
    if !(rate.is_finite() && rate >= 50.0) {
        return Err(Error::InvalidParameter(format!(
            "sample rate must be at least 50 Hz, got {rate}"
        )));
    }
    let path = Path::new(params);
    let n = (params.duration * rate).round() as usize;
    let c_ne = params.origin.ned_to_ecef();
    let p0 = params.origin.to_ecef();

    let local: Vec<(Matrix3<f64>, Vector3<f64>)> =
        (0..=n).map(|k| local_pose(params, &path, k as f64 / rate)).collect();
    let mut epochs = Vec::with_capacity(n);
    for k in 0..n {
        let rot = c_ne * local[k].0;
        let rot_next = c_ne * local[k + 1].0;
        let dp = c_ne * (local[k + 1].1 - local[k].1);
        let phi = so3_log(&(rot.transpose() * rot_next))?;
        let vel = rot * (left_jacobian_inverse(&phi) * (rot.transpose() * dp)) * rate;
        epochs.push(ReferenceEpoch {
            t: k as f64 / rate,
            rot,
            vel,
            pos: p0 + c_ne * local[k].1,
        });
    }
    Ok(ReferenceTrajectory {
        rate,
        params: *params,
        epochs,
    })
}

/// Roll, pitch, yaw of `C_b^e` relative to the NED frame at `pos`.
pub fn attitude_euler(rot: &Matrix3<f64>, pos: &Vector3<f64>) -> (f64, f64, f64) {
    let c_ne = Geodetic::from_ecef(pos).ned_to_ecef();
    dcm_to_euler(&(c_ne.transpose() * rot))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let g = GaussLegendre::new(24);
        let (a, b) = g.integrate(0.0, 2.0, |x| (x.powi(7), x.cos()));
        assert!((a - 2f64.powi(8) / 8.0).abs() < 1e-10);
        assert!((b - 2f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn progress_is_continuous() {
        let p = ProfileParams::new(ProfileKind::Circular);
        let t1 = p.static_duration + p.ramp_duration;
        let (a, fa) = p.progress(t1 - 1e-9);
        let (b, fb) = p.progress(t1 + 1e-9);
        assert!((a - b).abs() < 1e-7);
        assert!((fa - fb).abs() < 1e-7);
        assert_eq!(p.progress(10.0), (0.0, 0.0));
    }

    #[test]
    fn rectangle_closes_after_a_lap() {
        let p = ProfileParams::new(ProfileKind::Rectangular);
        let r = RoundedRectangle::new(&p);
        let end = r.at(r.lap - 1e-12);
        assert!(end.north.abs() < 1e-9 && end.east.abs() < 1e-9, "{end:?}");
        assert!((end.heading - p.heading - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn circle_radius_is_constant() {
        let mut p = ProfileParams::new(ProfileKind::Circular);
        p.radius = 100.0;
        p.duration = 60.0;
        let r = make_reference(&p, 200.0).unwrap();
        let c_ne = p.origin.ned_to_ecef();
        let p0 = p.origin.to_ecef();
        let centre = Vector3::new(-100.0 * p.heading.sin(), 100.0 * p.heading.cos(), 0.0);
        for e in r.epochs.iter().skip(r.static_len()).step_by(97) {
            let local = c_ne.transpose() * (e.pos - p0);
            assert!(((local - centre).norm() - 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn stationary_prefix_is_at_rest() {
        let p = ProfileParams::new(ProfileKind::Rectangular);
        let r = make_reference(&p, 100.0).unwrap();
        let first = r.epochs[0];
        for e in &r.epochs[..r.static_len() - 1] {
            assert_eq!(e.vel, Vector3::zeros());
            assert_eq!(e.rot, first.rot);
        }
    }

    #[test]
    fn helix_climbs_at_the_configured_rate() {
        let mut p = ProfileParams::new(ProfileKind::Helicoidal);
        p.duration = 120.0;
        let r = make_reference(&p, 200.0).unwrap();
        let alt = |t: f64| {
            let k = (t * 200.0).round() as usize;
            Geodetic::from_ecef(&r.epochs[k].pos).alt
        };
        let gain = alt(100.0) - alt(40.0);
        // Curvature of the Earth over ~60 m horizontal motion is ~0.3 mm.
        assert!((gain - 60.0).abs() < 0.01, "gain {gain}");
    }

    #[test]
    fn rejects_short_or_slow() {
        let mut p = ProfileParams::new(ProfileKind::Circular);
        assert!(make_reference(&p, 20.0).is_err());
        p.duration = 30.0;
        assert!(make_reference(&p, 200.0).is_err());
    }
}
