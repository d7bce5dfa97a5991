use rand::Rng;
use rand_distr::StandardNormal;

use super::{group_exp, GroupElement, Matrix15, TangentVector, Vector15};
use crate::error::{Error, Result};

/// Concentrated Gaussian on G: `X = mean * exp(eps)`, `eps ~ N(0, cov)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConcentratedGaussian {
    pub mean: GroupElement,
    pub cov: Matrix15,
}

impl ConcentratedGaussian {
    /// Validating constructor: `cov` must be symmetric and positive definite.
    pub fn new(mean: GroupElement, cov: Matrix15) -> Result<Self> {
        check_spd(&cov)?;
        Ok(Self { mean, cov })
    }

    /// Skips the SPD check; used on the filter hot path where covariances
    /// are symmetrized by construction.
    pub fn from_parts(mean: GroupElement, cov: Matrix15) -> Self {
        Self { mean, cov }
    }

    /// Draws `mean * exp(L z)` with `L L^T = cov` and `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GroupElement> {
        let eps = self.sample_tangent(rng)?;
        Ok(self.mean.compose(&group_exp(&eps)?))
    }

    pub fn sample_tangent<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TangentVector> {
        check_symmetric(&self.cov)?;
        let chol = self
            .cov
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        let z = Vector15::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(TangentVector(chol.l() * z))
    }
}

/// Free-function form of [`ConcentratedGaussian::sample`].
pub fn cgd_sample<R: Rng + ?Sized>(d: &ConcentratedGaussian, rng: &mut R) -> Result<GroupElement> {
    d.sample(rng)
}

fn check_symmetric(cov: &Matrix15) -> Result<()> {
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    let asym = (cov - cov.transpose()).amax();
    if !asym.is_finite() {
        return Err(Error::NonFinite("covariance".into()));
    }
    if asym > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "asymmetry {asym:e} exceeds 1e-12 relative tolerance"
        )));
    }
    Ok(())
}

pub(crate) fn check_spd(cov: &Matrix15) -> Result<()> {
    check_symmetric(cov)?;
    if cov.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("Cholesky factorization failed".into()));
    }
    Ok(())
}
