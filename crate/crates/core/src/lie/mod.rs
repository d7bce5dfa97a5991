//! Matrix Lie group machinery for G = SE2(3) x T(6).
//!
//! A group element aggregates attitude `C_b^e`, velocity `v^e`, position
//! `p^e` and the six IMU biases. Its 12x12 matrix form is
//!
//! ```text
//! | C  v  p | 0   |
//! | 0  1  0 |     |
//! | 0  0  1 |     |
//! |---------+-----|
//! |    0    | I b |
//! |         | 0 1 |
//! ```
//!
//! Tangent coordinates are ordered `(phi, nu, rho, dba, dbg)`: attitude,
//! velocity, position, accelerometer bias and gyroscope bias. Elements are
//! stored in factored form; the dense matrix is only produced by [`hat`].

mod cgd;
mod so3;

use std::ops::{Add, Index, Mul, Neg, Sub};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector6};

use crate::error::{Error, Result};

pub use cgd::{cgd_sample, ConcentratedGaussian};
pub use so3::{
    left_jacobian, left_jacobian_inverse, orthonormality_error, orthonormalize, rotation_angle, skew, so3_exp, so3_log,
    unskew, CHART_LIMIT,
};

pub type Vector15 = SVector<f64, 15>;
pub type Matrix15 = SMatrix<f64, 15, 15>;
pub type Matrix12 = SMatrix<f64, 12, 12>;

/// Offsets of each 3-block inside a [`TangentVector`].
pub const PHI: usize = 0;
pub const NU: usize = 3;
pub const RHO: usize = 6;
pub const DBA: usize = 9;
pub const DBG: usize = 12;

/// Sparsity tolerance used by [`vee`].
const ALGEBRA_TOL: f64 = 1e-12;

/// Drift of `C^T C - I` tolerated before a rotation is re-projected.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Lie algebra coordinates of G.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector(pub Vector15);

impl TangentVector {
    pub const DIM: usize = 15;

    pub fn zeros() -> Self {
        Self(Vector15::zeros())
    }

    pub fn from_parts(
        phi: Vector3<f64>,
        nu: Vector3<f64>,
        rho: Vector3<f64>,
        dba: Vector3<f64>,
        dbg: Vector3<f64>,
    ) -> Self {
        let mut v = Vector15::zeros();
        v.fixed_rows_mut::<3>(PHI).copy_from(&phi);
        v.fixed_rows_mut::<3>(NU).copy_from(&nu);
        v.fixed_rows_mut::<3>(RHO).copy_from(&rho);
        v.fixed_rows_mut::<3>(DBA).copy_from(&dba);
        v.fixed_rows_mut::<3>(DBG).copy_from(&dbg);
        Self(v)
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(Vector15::from_column_slice(values))
    }

    fn block(&self, offset: usize) -> Vector3<f64> {
        self.0.fixed_rows::<3>(offset).into_owned()
    }

    pub fn phi(&self) -> Vector3<f64> {
        self.block(PHI)
    }

    pub fn nu(&self) -> Vector3<f64> {
        self.block(NU)
    }

    pub fn rho(&self) -> Vector3<f64> {
        self.block(RHO)
    }

    pub fn dba(&self) -> Vector3<f64> {
        self.block(DBA)
    }

    pub fn dbg(&self) -> Vector3<f64> {
        self.block(DBG)
    }

    pub fn bias(&self) -> Vector6<f64> {
        self.0.fixed_rows::<6>(DBA).into_owned()
    }

    pub fn as_vector(&self) -> &Vector15 {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vector15> for TangentVector {
    fn from(v: Vector15) -> Self {
        Self(v)
    }
}

impl Index<usize> for TangentVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for TangentVector {
    type Output = TangentVector;

    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl Sub for TangentVector {
    type Output = TangentVector;

    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl Neg for TangentVector {
    type Output = TangentVector;

    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl Mul<f64> for TangentVector {
    type Output = TangentVector;

    fn mul(self, s: f64) -> Self {
        Self(self.0 * s)
    }
}

/// Element of SE2(3) x T(6) in factored block form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement {
    /// Body-to-ECEF direction cosine matrix `C_b^e`.
    pub rot: Matrix3<f64>,
    pub vel: Vector3<f64>,
    pub pos: Vector3<f64>,
    /// `(b_a, b_g)`.
    pub bias: Vector6<f64>,
}

impl Default for GroupElement {
    fn default() -> Self {
        Self::identity()
    }
}

impl GroupElement {
    pub fn identity() -> Self {
        Self {
            rot: Matrix3::identity(),
            vel: Vector3::zeros(),
            pos: Vector3::zeros(),
            bias: Vector6::zeros(),
        }
    }

    pub fn new(rot: Matrix3<f64>, vel: Vector3<f64>, pos: Vector3<f64>, bias: Vector6<f64>) -> Self {
        Self { rot, vel, pos, bias }
    }

    pub fn accel_bias(&self) -> Vector3<f64> {
        self.bias.fixed_rows::<3>(0).into_owned()
    }

    pub fn gyro_bias(&self) -> Vector3<f64> {
        self.bias.fixed_rows::<3>(3).into_owned()
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            rot: self.rot * other.rot,
            vel: self.rot * other.vel + self.vel,
            pos: self.rot * other.pos + self.pos,
            bias: self.bias + other.bias,
        }
    }

    pub fn inverse(&self) -> GroupElement {
        let rt = self.rot.transpose();
        GroupElement {
            rot: rt,
            vel: -(rt * self.vel),
            pos: -(rt * self.pos),
            bias: -self.bias,
        }
    }

    /// `self * exp(x)`, re-projecting the rotation if it drifted.
    pub fn retract(&self, x: &TangentVector) -> Result<GroupElement> {
        let mut g = self.compose(&group_exp(x)?);
        g.normalize_if_needed();
        Ok(g)
    }

    /// `log(self^-1 * other)`.
    pub fn local(&self, other: &GroupElement) -> Result<TangentVector> {
        group_log(&self.inverse().compose(other))
    }

    pub fn normalize_if_needed(&mut self) {
        if orthonormality_error(&self.rot) > ORTHONORMAL_TOL {
            self.rot = orthonormalize(&self.rot);
        }
    }

    /// Dense 12x12 matrix form.
    pub fn to_matrix(&self) -> Matrix12 {
        let mut m = Matrix12::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.vel);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.pos);
        m.fixed_view_mut::<6, 1>(5, 11).copy_from(&self.bias);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.rot.iter().all(|v| v.is_finite())
            && self.vel.iter().all(|v| v.is_finite())
            && self.pos.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;

    fn mul(self, rhs: GroupElement) -> GroupElement {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a GroupElement> for &'a GroupElement {
    type Output = GroupElement;

    fn mul(self, rhs: &'a GroupElement) -> GroupElement {
        self.compose(rhs)
    }
}

pub fn hat(x: &TangentVector) -> Matrix12 {
    let mut m = Matrix12::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&x.phi()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&x.nu());
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&x.rho());
    m.fixed_view_mut::<6, 1>(5, 11).copy_from(&x.bias());
    m
}

fn in_algebra_support(row: usize, col: usize) -> bool {
    (row < 3 && col < 5) || ((5..11).contains(&row) && col == 11)
}

pub fn vee(m: &Matrix12) -> Result<TangentVector> {
    for col in 0..12 {
        for row in 0..12 {
            let value = m[(row, col)];
            if !value.is_finite() {
                return Err(Error::NonFinite("algebra element".into()));
            }
            let off_pattern = !in_algebra_support(row, col) || (row < 3 && row == col);
            if off_pattern && value.abs() > ALGEBRA_TOL {
                return Err(Error::NotInAlgebra { row, col, value });
            }
        }
    }
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let asym = m[(i, j)] + m[(j, i)];
        if asym.abs() > ALGEBRA_TOL {
            return Err(Error::NotInAlgebra {
                row: i,
                col: j,
                value: asym,
            });
        }
    }
    let phi = Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]);
    let nu = m.fixed_view::<3, 1>(0, 3).into_owned();
    let rho = m.fixed_view::<3, 1>(0, 4).into_owned();
    let dba = m.fixed_view::<3, 1>(5, 11).into_owned();
    let dbg = m.fixed_view::<3, 1>(8, 11).into_owned();
    Ok(TangentVector::from_parts(phi, nu, rho, dba, dbg))
}

/// Exponential map, closed form through the SO(3) left Jacobian.
pub fn group_exp(x: &TangentVector) -> Result<GroupElement> {
    let phi = x.phi();
    let angle = phi.norm();
    if !angle.is_finite() {
        return Err(Error::NonFinite("tangent vector".into()));
    }
    if angle >= CHART_LIMIT {
        return Err(Error::OutOfChart { angle });
    }
    let jl = left_jacobian(&phi);
    Ok(GroupElement {
        rot: so3_exp(&phi),
        vel: jl * x.nu(),
        pos: jl * x.rho(),
        bias: x.bias(),
    })
}

pub fn group_log(g: &GroupElement) -> Result<TangentVector> {
    let phi = so3_log(&g.rot)?;
    let jl_inv = left_jacobian_inverse(&phi);
    let bias = g.bias;
    Ok(TangentVector::from_parts(
        phi,
        jl_inv * g.vel,
        jl_inv * g.pos,
        bias.fixed_rows::<3>(0).into_owned(),
        bias.fixed_rows::<3>(3).into_owned(),
    ))
}

/// The 9x9 SE2(3) operators used here all share the lower-triangular
/// pattern `[[A, 0, 0], [B, A, 0], [C, 0, A]]`, which is closed under
/// multiplication. Working on the three 3x3 blocks avoids dense 9x9 products.
#[derive(Clone, Copy, Debug)]
struct Se23Blocks {
    a: Matrix3<f64>,
    b: Matrix3<f64>,
    c: Matrix3<f64>,
}

impl Se23Blocks {
    fn identity() -> Self {
        Self {
            a: Matrix3::identity(),
            b: Matrix3::zeros(),
            c: Matrix3::zeros(),
        }
    }

    fn mul(&self, o: &Se23Blocks) -> Se23Blocks {
        Se23Blocks {
            a: self.a * o.a,
            b: self.b * o.a + self.a * o.b,
            c: self.c * o.a + self.a * o.c,
        }
    }

    fn scale(&self, s: f64) -> Se23Blocks {
        Se23Blocks {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
        }
    }

    fn add_assign(&mut self, o: &Se23Blocks) {
        self.a += o.a;
        self.b += o.b;
        self.c += o.c;
    }

    fn amax(&self) -> f64 {
        self.a.amax().max(self.b.amax()).max(self.c.amax())
    }

    /// Embeds into a 15x15 matrix whose bias block is `bias_diag * I`.
    fn to_matrix15(self, bias_diag: f64) -> Matrix15 {
        let mut m = Matrix15::zeros();
        for k in 0..3 {
            m.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&self.a);
        }
        m.fixed_view_mut::<3, 3>(NU, PHI).copy_from(&self.b);
        m.fixed_view_mut::<3, 3>(RHO, PHI).copy_from(&self.c);
        for i in DBA..15 {
            m[(i, i)] = bias_diag;
        }
        m
    }
}

fn ad_blocks(x: &TangentVector) -> Se23Blocks {
    Se23Blocks {
        a: skew(&x.phi()),
        b: skew(&x.nu()),
        c: skew(&x.rho()),
    }
}

/// Adjoint representation `Ad(g) y = vee(g hat(y) g^-1)`.
pub fn adjoint(g: &GroupElement) -> Matrix15 {
    Se23Blocks {
        a: g.rot,
        b: skew(&g.vel) * g.rot,
        c: skew(&g.pos) * g.rot,
    }
    .to_matrix15(1.0)
}

/// Adjoint of the algebra on itself, `ad(x) y = vee([hat(x), hat(y)])`.
pub fn ad_small(x: &TangentVector) -> Matrix15 {
    ad_blocks(x).to_matrix15(0.0)
}

const JR_TOL: f64 = 1e-14;
const JR_MAX_TERMS: usize = 30;

/// Right Jacobian as the series `sum_k (-1)^k / (k+1)! ad(x)^k`, truncated
/// when a term's max-norm drops below 1e-14 or after 30 terms.
pub fn right_jacobian(x: &TangentVector) -> Matrix15 {
    let ad = ad_blocks(x);
    let mut term = Se23Blocks::identity();
    let mut sum = Se23Blocks::identity();
    for k in 1..=JR_MAX_TERMS {
        term = term.mul(&ad).scale(-1.0 / (k + 1) as f64);
        sum.add_assign(&term);
        if term.amax() < JR_TOL {
            break;
        }
    }
    sum.to_matrix15(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hat_of_zero_is_zero() {
        assert_eq!(hat(&TangentVector::zeros()), Matrix12::zeros());
        assert_eq!(vee(&Matrix12::zeros()).unwrap(), TangentVector::zeros());
    }

    #[test]
    fn hat_places_skew_block() {
        let x = TangentVector::from_parts(
            Vector3::z(),
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let m = hat(&x);
        assert_eq!(m.fixed_view::<3, 3>(0, 0).into_owned(), skew(&Vector3::z()));
        assert_eq!(m.amax(), 1.0);
        assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn vee_rejects_entry_outside_pattern() {
        let mut m = Matrix12::zeros();
        m[(4, 0)] = 1e-6;
        assert!(matches!(vee(&m), Err(Error::NotInAlgebra { row: 4, col: 0, .. })));
        let mut m = Matrix12::zeros();
        m[(0, 1)] = 0.3;
        assert!(vee(&m).is_err(), "non-antisymmetric rotation block");
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(group_exp(&TangentVector::zeros()).unwrap(), GroupElement::identity());
    }

    #[test]
    fn exp_without_rotation_copies_velocity() {
        let x = TangentVector::from_parts(
            Vector3::zeros(),
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        assert_eq!(group_exp(&x).unwrap().vel, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(group_log(&GroupElement::identity()).unwrap(), TangentVector::zeros());
    }

    #[test]
    fn log_rejects_half_turn() {
        let mut g = GroupElement::identity();
        g.rot = so3_exp(&Vector3::new(std::f64::consts::PI, 0.0, 0.0));
        assert!(matches!(group_log(&g), Err(Error::OutOfChart { .. })));
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let x = TangentVector::from_slice(&[
            0.3, -0.2, 0.9, 1.0, 2.0, -3.0, 10.0, 20.0, -5.0, 0.1, 0.2, 0.3, 0.01, 0.02, 0.03,
        ]);
        let g = group_exp(&x).unwrap();
        assert_eq!(g.compose(&GroupElement::identity()), g);
        let e = g.inverse().compose(&g);
        assert_relative_eq!(e.rot, Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(e.vel, Vector3::zeros(), epsilon = 1e-12);
        assert_relative_eq!(e.pos, Vector3::zeros(), epsilon = 1e-12);
        assert_relative_eq!(e.bias, Vector6::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn adjoint_of_identity() {
        assert_eq!(adjoint(&GroupElement::identity()), Matrix15::identity());
        assert_eq!(ad_small(&TangentVector::zeros()), Matrix15::zeros());
    }

    #[test]
    fn right_jacobian_at_zero_is_identity() {
        assert_eq!(right_jacobian(&TangentVector::zeros()), Matrix15::identity());
    }

    #[test]
    fn right_jacobian_bias_block_is_identity_for_pure_bias() {
        let x = TangentVector::from_slice(&[
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.4, -0.2, 0.1, 0.3, 0.7, -0.9,
        ]);
        assert_eq!(right_jacobian(&x), Matrix15::identity());
    }
}
