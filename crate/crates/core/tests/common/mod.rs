//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use lienav_core::error::Result;
use lienav_core::estimation::{predict, update, FilterEpoch, GateConfig, MeasurementModel, ProcessModel};
use lienav_core::ins::earth::Geodetic;
use lienav_core::ins::{jacobian_c, jacobian_h, measurement_h, omega_fn, ImuSample, LeverArm, Matrix3x15};
use lienav_core::lie::{
    adjoint, group_exp, group_log, hat, right_jacobian, so3_exp, vee, ConcentratedGaussian, GroupElement, Matrix12,
    Matrix15, TangentVector, Vector15,
};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Matrix3x6 = SMatrix<f64, 3, 6>;
pub type Vector6f = SVector<f64, 6>;

pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gauss3<R: Rng>(rng: &mut R, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| s * gauss(rng))
}

/// Tangent vector with `|phi| <= max_angle` (uniform direction and angle).
pub fn random_tangent<R: Rng>(rng: &mut R, max_angle: f64) -> TangentVector {
    let dir = loop {
        let d = gauss3(rng, 1.0);
        if d.norm() > 1e-6 {
            break d.normalize();
        }
    };
    let phi = dir * rng.gen_range(0.0..max_angle);
    TangentVector::from_parts(
        phi,
        gauss3(rng, 5.0),
        gauss3(rng, 50.0),
        gauss3(rng, 1e-2),
        gauss3(rng, 1e-3),
    )
}

/// Plausible navigation state near the Earth's surface.
pub fn random_state<R: Rng>(rng: &mut R) -> GroupElement {
    let geo = Geodetic::from_degrees(
        rng.gen_range(-80.0..80.0),
        rng.gen_range(-180.0..180.0),
        rng.gen_range(-100.0..3000.0),
    );
    let rot = so3_exp(&gauss3(rng, 1.5));
    let mut bias = Vector6::zeros();
    bias.fixed_rows_mut::<3>(0).copy_from(&gauss3(rng, 5e-3));
    bias.fixed_rows_mut::<3>(3).copy_from(&gauss3(rng, 1e-4));
    GroupElement::new(rot, gauss3(rng, 30.0), geo.to_ecef(), bias)
}

pub fn random_imu<R: Rng>(rng: &mut R) -> ImuSample {
    ImuSample::new(0.0, gauss3(rng, 0.5), gauss3(rng, 3.0) + Vector3::new(0.0, 0.0, -9.8))
}

/// Matrix exponential by scaling and squaring of a 40-term Taylor series.
pub fn expm_series(m: &Matrix12) -> Matrix12 {
    let norm = m.abs().row_sum().max();
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let a = m / 2f64.powi(s);
    let mut term = Matrix12::identity();
    let mut sum = Matrix12::identity();
    for k in 1..40 {
        term = term * a / k as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

/// Max-norm relative difference of two equally shaped slices.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Central difference of `f(X exp(eps))` over the 15 tangent directions.
pub fn fd_tangent<const R: usize>(
    x: &GroupElement,
    h: f64,
    f: impl Fn(&GroupElement) -> SVector<f64, R>,
) -> SMatrix<f64, R, 15> {
    let mut j = SMatrix::<f64, R, 15>::zeros();
    for i in 0..15 {
        let mut e = Vector15::zeros();
        e[i] = h;
        let plus = f(&x.compose(&group_exp(&TangentVector(e)).unwrap()));
        let minus = f(&x.compose(&group_exp(&TangentVector(-e)).unwrap()));
        j.set_column(i, &((plus - minus) / (2.0 * h)));
    }
    j
}

pub fn fd_omega(x: &GroupElement, u: &ImuSample, h: f64) -> Matrix15 {
    fd_tangent::<15>(x, h, |g| omega_fn(g, u).unwrap().0)
}

/// Differences `h(X exp(eps))` about the origin-shifted state, which equals
/// `h(X exp(eps)) - p` and avoids cancellation at ECEF magnitudes.
pub fn fd_h(x: &GroupElement, lever: &LeverArm, h: f64) -> Matrix3x15 {
    let shifted = GroupElement::new(x.rot, x.vel, Vector3::zeros(), x.bias);
    fd_tangent::<3>(&shifted, h, |g| measurement_h(g, lever))
}

/// Analytic Jacobians for comparison.
pub fn analytic_c(x: &GroupElement, u: &ImuSample) -> Matrix15 {
    jacobian_c(x, u).unwrap()
}

pub fn analytic_h(x: &GroupElement, lever: &LeverArm) -> Matrix3x15 {
    jacobian_h(x, lever)
}

/// `Ad(g) y` against `vee(G hat(y) G^-1)` computed densely.
pub fn conjugation_error(g: &GroupElement, y: &TangentVector) -> f64 {
    let gm = g.to_matrix();
    let ginv = g.inverse().to_matrix();
    let dense = vee(&(gm * hat(y) * ginv)).unwrap();
    let fast = adjoint(g) * y.0;
    max_abs((fast - dense.0).as_slice()) / max_abs(dense.0.as_slice()).max(1e-300)
}

/// `log(exp(x)^-1 exp(x + d)) ~ J_r(x) d` for small `d`.
pub fn bch_error(x: &TangentVector, d: &TangentVector) -> f64 {
    let lhs = group_log(&group_exp(x).unwrap().inverse().compose(&group_exp(&(*x + *d)).unwrap())).unwrap();
    let rhs = right_jacobian(x) * d.0;
    max_abs((lhs.0 - rhs).as_slice()) / max_abs(rhs.as_slice())
}

/// Chi-square quantile by Simpson integration of the density (after
/// `x = s^2`) and bisection.
pub fn chi2_quantile(dof: u32, p: f64) -> f64 {
    let k = dof as f64;
    let ln_norm = (k / 2.0) * 2f64.ln() + ln_gamma(k / 2.0);
    let integrand = |s: f64| {
        if s == 0.0 {
            return if dof == 1 { 2.0 * (-ln_norm).exp() } else { 0.0 };
        }
        let x = s * s;
        2.0 * s * ((k / 2.0 - 1.0) * x.ln() - x / 2.0 - ln_norm).exp()
    };
    let cdf = |x: f64| {
        let b = x.sqrt();
        let n = 20_000;
        let h = b / n as f64;
        let mut sum = integrand(0.0) + integrand(b);
        for i in 1..n {
            sum += integrand(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, k + 20.0 * (2.0 * k).sqrt() + 50.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lanczos log-gamma (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Linear dynamics `db/dt = A b` acting on the bias block only.
pub struct LinearBias {
    pub a: Matrix6,
    pub q: Matrix6,
}

impl ProcessModel for LinearBias {
    type Input = ();

    fn omega(&self, x: &GroupElement, _: &()) -> Result<TangentVector> {
        let mut v = Vector15::zeros();
        v.fixed_rows_mut::<6>(9).copy_from(&(self.a * x.bias));
        Ok(TangentVector(v))
    }

    fn omega_jacobian(&self, _: &GroupElement, _: &()) -> Result<Matrix15> {
        let mut c = Matrix15::zeros();
        c.fixed_view_mut::<6, 6>(9, 9).copy_from(&self.a);
        Ok(c)
    }

    fn process_noise(&self, dt: f64) -> Matrix15 {
        let mut q = Matrix15::zeros();
        q.fixed_view_mut::<6, 6>(9, 9).copy_from(&(self.q * dt));
        q
    }
}

/// `y = H b`.
pub struct LinearObs {
    pub h: Matrix3x6,
}

impl MeasurementModel for LinearObs {
    fn predict(&self, x: &GroupElement) -> Vector3<f64> {
        self.h * x.bias
    }

    fn jacobian(&self, _: &GroupElement) -> Matrix3x15 {
        let mut j = Matrix3x15::zeros();
        j.fixed_view_mut::<3, 6>(0, 9).copy_from(&self.h);
        j
    }
}

pub struct LinearCase {
    pub model: LinearBias,
    pub obs: LinearObs,
    pub r: Matrix3<f64>,
    pub dt: f64,
    pub x0: Vector6f,
    pub p0: Matrix6,
    /// Observation per step, `None` where no measurement arrives.
    pub ys: Vec<Option<Vector3<f64>>>,
}

pub fn linear_case<R: Rng>(rng: &mut R, steps: usize) -> LinearCase {
    let a = Matrix6::from_fn(|i, j| if i == j { -0.3 } else { 0.2 * gauss(rng) });
    let q = Matrix6::from_diagonal(&Vector6f::from_fn(|_, _| 0.01 + 0.05 * rng.gen::<f64>()));
    let h = Matrix3x6::from_fn(|_, _| gauss(rng));
    let r = Matrix3::from_diagonal(&Vector3::new(0.04, 0.09, 0.01));
    let dt = 0.1;
    let mut truth = Vector6f::from_fn(|_, _| gauss(rng));
    let x0 = Vector6f::zeros();
    let p0 = Matrix6::identity() * 2.0;
    let f = Matrix6::identity() + a * dt;
    let lq = (q * dt).cholesky().unwrap().l();
    let lr = r.cholesky().unwrap().l();
    let mut ys = Vec::with_capacity(steps);
    for k in 0..steps {
        if k > 0 {
            truth = f * truth + lq * Vector6f::from_fn(|_, _| gauss(rng));
        }
        ys.push((k % 3 == 0).then(|| h * truth + lr * gauss3(rng, 1.0)));
    }
    LinearCase {
        model: LinearBias { a, q },
        obs: LinearObs { h },
        r,
        dt,
        x0,
        p0,
        ys,
    }
}

pub type Moments = Vec<(Vector6f, Matrix6)>;

/// Textbook Kalman filter and RTS smoother: `(filtered, smoothed)` as
/// `(mean, cov)` pairs.
pub fn textbook_kf_rts(c: &LinearCase) -> (Moments, Moments) {
    let f = Matrix6::identity() + c.model.a * c.dt;
    let q = c.model.q * c.dt;
    let h = c.obs.h;
    let mut filt = Vec::new();
    let mut pred = Vec::new();
    let (mut x, mut p) = (c.x0, c.p0);
    for (k, y) in c.ys.iter().enumerate() {
        if k > 0 {
            x = f * x;
            p = f * p * f.transpose() + q;
        }
        pred.push((x, p));
        if let Some(y) = y {
            let s = h * p * h.transpose() + c.r;
            let k_gain = p * h.transpose() * s.try_inverse().unwrap();
            x += k_gain * (y - h * x);
            let ikh = Matrix6::identity() - k_gain * h;
            p = ikh * p * ikh.transpose() + k_gain * c.r * k_gain.transpose();
        }
        filt.push((x, p));
    }
    let n = filt.len();
    let mut smooth = filt.clone();
    for k in (0..n - 1).rev() {
        let (xf, pf) = filt[k];
        let (xp, pp) = pred[k + 1];
        let g = pf * f.transpose() * pp.try_inverse().unwrap();
        let (xs, ps) = smooth[k + 1];
        smooth[k] = (xf + g * (xs - xp), pf + g * (ps - pp) * g.transpose());
    }
    (filt, smooth)
}

/// The same problem through the group filter and smoother.
pub fn group_kf_rts(c: &LinearCase) -> (Vec<ConcentratedGaussian>, Vec<ConcentratedGaussian>) {
    let mut cov = Matrix15::identity() * 1e-2;
    cov.fixed_view_mut::<6, 6>(9, 9).copy_from(&c.p0);
    let mut bias = Vector6::zeros();
    bias.copy_from(&c.x0);
    let x0 = ConcentratedGaussian::from_parts(
        GroupElement::new(Matrix3::identity(), Vector3::zeros(), Vector3::zeros(), bias),
        cov,
    );
    let gate = GateConfig::off();
    let mut history: Vec<FilterEpoch> = Vec::new();
    for (k, y) in c.ys.iter().enumerate() {
        let mut epoch = if k == 0 {
            FilterEpoch {
                t: 0.0,
                predicted: x0,
                posterior: None,
                omega_dt: TangentVector::zeros(),
                transition: Matrix15::identity(),
                gate: None,
            }
        } else {
            let prev = history[k - 1].updated();
            let p = predict(&c.model, prev, &(), c.dt).unwrap();
            FilterEpoch {
                t: k as f64 * c.dt,
                predicted: p.state,
                posterior: None,
                omega_dt: p.omega_dt,
                transition: p.transition,
                gate: None,
            }
        };
        if let Some(y) = y {
            let (post, report) = update(&c.obs, &epoch.predicted, y, &c.r, &gate).unwrap();
            epoch.posterior = Some(post);
            epoch.gate = Some(report);
        }
        history.push(epoch);
    }
    let smoothed = lienav_core::estimation::rts_smooth(&history).unwrap();
    (history.iter().map(|e| *e.updated()).collect(), smoothed)
}

/// Largest deviation between the group and textbook results, over the bias
/// block of mean and covariance.
pub fn linear_mismatch(group: &[ConcentratedGaussian], reference: &[(Vector6f, Matrix6)]) -> f64 {
    group.iter().zip(reference).fold(0.0f64, |m, (g, (x, p))| {
        let dx = max_abs((g.mean.bias - x).as_slice());
        let dp = max_abs((g.cov.fixed_view::<6, 6>(9, 9) - p).as_slice());
        m.max(dx).max(dp)
    })
}
