//! CSV readers and writers. Numbers are written with 12 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::ins::earth::Geodetic;
use crate::ins::{GnssFix, ImuSample};
use crate::lie::{ConcentratedGaussian, GroupElement};
use crate::simulator::attitude_euler;
use crate::units::{Quantity, Unit};

/// Formats with 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

/// Splits `name[unit]` into its parts.
fn split_header(h: &str) -> Result<(String, Option<Unit>)> {
    let h = h.trim();
    match h.find('[') {
        Some(i) if h.ends_with(']') => {
            let unit: Unit = h[i + 1..h.len() - 1].parse()?;
            Ok((h[..i].trim().to_string(), Some(unit)))
        }
        _ => Ok((h.to_string(), None)),
    }
}

struct Columns {
    index: Vec<usize>,
    scale: Vec<f64>,
}

/// Locates `names` in the header, resolving units against `defaults`.
fn resolve(
    path: &Path,
    header: &csv::StringRecord,
    line: u64,
    names: &[(&str, Quantity, Unit)],
    required: usize,
) -> Result<(Columns, usize)> {
    let parsed: Vec<(String, Option<Unit>)> = header
        .iter()
        .map(split_header)
        .collect::<Result<_>>()
        .map_err(|e| Error::parse(path, line, e.to_string()))?;
    let mut index = Vec::new();
    let mut scale = Vec::new();
    for (k, (name, quantity, default)) in names.iter().enumerate() {
        match parsed.iter().position(|(n, _)| n.eq_ignore_ascii_case(name)) {
            Some(i) => {
                let unit = parsed[i].1.unwrap_or(*default);
                if unit.quantity() != *quantity {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("column `{name}` has unit `{unit}`, expected a {quantity:?} unit"),
                    ));
                }
                index.push(i);
                scale.push(unit.to_si());
            }
            None if k < required => {
                return Err(Error::parse(path, line, format!("missing column `{name}`")));
            }
            None => break,
        }
    }
    let found = index.len();
    Ok((Columns { index, scale }, found))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn header_line(r: &mut csv::Reader<File>, path: &Path) -> Result<(csv::StringRecord, u64)> {
    let h = r.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    if h.is_empty() || h.iter().all(|c| c.is_empty()) {
        return Err(Error::parse(path, 1, "missing header row"));
    }
    let line = h.position().map_or(1, |p| p.line());
    Ok((h, line))
}

/// Reads rows, calling `row` with the converted values of the found columns.
fn read_rows<T>(
    path: &Path,
    names: &[(&str, Quantity, Unit)],
    required: usize,
    mut row: impl FnMut(&[f64], u64) -> Result<T>,
) -> Result<Vec<T>> {
    let mut r = reader(path)?;
    let (header, hline) = header_line(&mut r, path)?;
    let (cols, found) = resolve(path, &header, hline, names, required)?;
    let mut out = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    let mut values = vec![0.0; found];
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, (&i, &s)) in cols.index.iter().zip(&cols.scale).enumerate() {
            let field = rec
                .get(i)
                .ok_or_else(|| Error::parse(path, line, format!("missing field `{}`", names[j].0)))?;
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, line, format!("field `{}` is not a number: `{field}`", names[j].0)))?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("field `{}` is not finite", names[j].0),
                ));
            }
            values[j] = v * s;
        }
        if values[0] <= last_t {
            return Err(Error::parse(
                path,
                line,
                format!("timestamp {} is not strictly increasing", values[0]),
            ));
        }
        last_t = values[0];
        out.push(row(&values, line)?);
    }
    Ok(out)
}

/// Reads `t,gx,gy,gz,ax,ay,az`. Columns may carry a unit suffix such as
/// `gx[deg/s]`; otherwise `gyro_unit` and `accel_unit` apply.
pub fn read_imu_csv(path: &Path, gyro_unit: Unit, accel_unit: Unit) -> Result<Vec<ImuSample>> {
    use Quantity::*;
    let names = [
        ("t", Time, Unit::Second),
        ("gx", AngularRate, gyro_unit),
        ("gy", AngularRate, gyro_unit),
        ("gz", AngularRate, gyro_unit),
        ("ax", Acceleration, accel_unit),
        ("ay", Acceleration, accel_unit),
        ("az", Acceleration, accel_unit),
    ];
    read_rows(path, &names, 7, |v, _| {
        Ok(ImuSample::new(
            v[0],
            Vector3::new(v[1], v[2], v[3]),
            Vector3::new(v[4], v[5], v[6]),
        ))
    })
}

/// Reads `t,x,y,z[,sx,sy,sz]` in ECEF metres; missing sigma columns fall
/// back to `default_sigma`.
pub fn read_gnss_csv(path: &Path, default_sigma: &Vector3<f64>) -> Result<Vec<GnssFix>> {
    use Quantity::*;
    let names = [
        ("t", Time, Unit::Second),
        ("x", Length, Unit::Meter),
        ("y", Length, Unit::Meter),
        ("z", Length, Unit::Meter),
        ("sx", Length, Unit::Meter),
        ("sy", Length, Unit::Meter),
        ("sz", Length, Unit::Meter),
    ];
    read_rows(path, &names, 4, |v, line| {
        let sigma = if v.len() == 7 {
            Vector3::new(v[4], v[5], v[6])
        } else {
            *default_sigma
        };
        if !sigma.iter().all(|s| *s > 0.0) {
            return Err(Error::parse(
                path,
                line,
                format!("sigma must be positive, got {sigma:?}"),
            ));
        }
        Ok(GnssFix::new(v[0], Vector3::new(v[1], v[2], v[3]), sigma))
    })
}

/// One truth row: time and the full state with biases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRecord {
    pub t: f64,
    pub state: GroupElement,
}

const TRUTH_COLUMNS: [&str; 22] = [
    "t", "x", "y", "z", "vx", "vy", "vz", "c11", "c12", "c13", "c21", "c22", "c23", "c31", "c32", "c33", "bax", "bay",
    "baz", "bgx", "bgy", "bgz",
];

/// Reads ECEF position, velocity, row-major `C_b^e` and biases (SI units).
pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthRecord>> {
    let names: Vec<(&str, Quantity, Unit)> = TRUTH_COLUMNS
        .iter()
        .enumerate()
        .map(|(i, n)| match i {
            0 => (*n, Quantity::Time, Unit::Second),
            1..=3 => (*n, Quantity::Length, Unit::Meter),
            4..=6 => (*n, Quantity::Velocity, Unit::MeterPerSecond),
            7..=15 => (*n, Quantity::Dimensionless, Unit::Dimensionless),
            16..=18 => (*n, Quantity::Acceleration, Unit::MeterPerSecond2),
            _ => (*n, Quantity::AngularRate, Unit::RadPerSecond),
        })
        .collect();
    read_rows(path, &names, names.len(), |v, _| {
        let rot = Matrix3::from_row_slice(&v[7..16]);
        let state = GroupElement::new(
            rot,
            Vector3::new(v[4], v[5], v[6]),
            Vector3::new(v[1], v[2], v[3]),
            Vector6::from_row_slice(&v[16..22]),
        );
        Ok(TruthRecord { t: v[0], state })
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_rows<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt_num).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_imu_csv(path: &Path, samples: &[ImuSample]) -> Result<()> {
    write_rows(
        path,
        "t[s],gx[rad/s],gy[rad/s],gz[rad/s],ax[m/s2],ay[m/s2],az[m/s2]",
        samples
            .iter()
            .map(|s| vec![s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z]),
    )
}

pub fn write_gnss_csv(path: &Path, fixes: &[GnssFix]) -> Result<()> {
    write_rows(
        path,
        "t,x,y,z,sx,sy,sz",
        fixes
            .iter()
            .map(|f| vec![f.t, f.pos.x, f.pos.y, f.pos.z, f.sigma.x, f.sigma.y, f.sigma.z]),
    )
}

pub fn write_truth_csv(path: &Path, records: &[TruthRecord]) -> Result<()> {
    write_rows(
        path,
        &TRUTH_COLUMNS.join(","),
        records.iter().map(|r| {
            let s = &r.state;
            let mut row = vec![r.t, s.pos.x, s.pos.y, s.pos.z, s.vel.x, s.vel.y, s.vel.z];
            for i in 0..3 {
                for j in 0..3 {
                    row.push(s.rot[(i, j)]);
                }
            }
            row.extend(s.bias.iter());
            row
        }),
    )
}

pub const TRAJECTORY_HEADER: &str = "t,lat,lon,alt,vn,ve,vd,roll,pitch,yaw,bax,bay,baz,bgx,bgy,bgz,\
var_phi_x,var_phi_y,var_phi_z,var_nu_x,var_nu_y,var_nu_z,var_rho_x,var_rho_y,var_rho_z,\
var_bax,var_bay,var_baz,var_bgx,var_bgy,var_bgz";

/// Geodetic trajectory row: latitude, longitude and Euler angles in degrees,
/// NED velocity in m/s, biases in SI units, then the 15 tangent variances.
pub fn trajectory_row(t: f64, est: &ConcentratedGaussian) -> Vec<f64> {
    let x = &est.mean;
    let geo = Geodetic::from_ecef(&x.pos);
    let v_ned = geo.ned_to_ecef().transpose() * x.vel;
    let (roll, pitch, yaw) = attitude_euler(&x.rot, &x.pos);
    let mut row = vec![
        t,
        geo.lat.to_degrees(),
        geo.lon.to_degrees(),
        geo.alt,
        v_ned.x,
        v_ned.y,
        v_ned.z,
        roll.to_degrees(),
        pitch.to_degrees(),
        yaw.to_degrees(),
    ];
    row.extend(x.bias.iter());
    row.extend(est.cov.diagonal().iter());
    row
}

pub fn write_trajectory_csv(path: &Path, times: &[f64], states: &[ConcentratedGaussian]) -> Result<()> {
    if times.len() != states.len() {
        return Err(Error::Misaligned(format!(
            "{} timestamps vs {} states",
            times.len(),
            states.len()
        )));
    }
    write_rows(
        path,
        TRAJECTORY_HEADER,
        times.iter().zip(states).map(|(t, s)| trajectory_row(*t, s)),
    )
}
