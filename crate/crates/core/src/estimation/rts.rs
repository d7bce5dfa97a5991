use super::ekf::symmetrize;
use super::FilterEpoch;
use crate::error::{Error, Result};
use crate::lie::{ConcentratedGaussian, GroupElement, Matrix15, TangentVector};

/// Backward RTS pass over a filter history:
///
/// ```text
/// G_k   = P_{k|k} F_{k+1}^T P_{k+1|k}^-1
/// X^s_k = X_{k|k} exp(G_k log(X_{k+1|k}^-1 X^s_{k+1}))
/// P^s_k = P_{k|k} + G_k (P^s_{k+1} - P_{k+1|k}) G_k^T
/// ```
pub fn rts_smooth(history: &[FilterEpoch]) -> Result<Vec<ConcentratedGaussian>> {
    let n = history.len();
    if n == 0 {
        return Err(Error::InvalidParameter("filter history is empty".into()));
    }
    let mut out = vec![*history[n - 1].updated(); n];
    for k in (0..n - 1).rev() {
        let next = &history[k + 1];
        let filtered = history[k].updated();
        let p_pred = &next.predicted.cov;
        let chol = p_pred.cholesky().ok_or(Error::SmootherGain { epoch: k + 1 })?;
        // G^T = P_pred^-1 F P_k, using symmetry of both covariances.
        let gain = chol.solve(&(next.transition * filtered.cov)).transpose();
        if !gain.iter().all(|v| v.is_finite()) {
            return Err(Error::SmootherGain { epoch: k + 1 });
        }

        let smoothed_next = &out[k + 1];
        let d = next.predicted.mean.local(&smoothed_next.mean)?;
        let mean = filtered.mean.retract(&TangentVector(gain * d.0))?;
        let cov = filtered.cov + gain * (smoothed_next.cov - p_pred) * gain.transpose();
        out[k] = ConcentratedGaussian::from_parts(mean, repair_spd(symmetrize(&cov)));
    }
    Ok(out)
}

/// Clamps eigenvalues below `1e-15 * trace` when the matrix has lost
/// definiteness; the common case only pays for a Cholesky attempt.
fn repair_spd(p: Matrix15) -> Matrix15 {
    if p.cholesky().is_some() {
        return p;
    }
    let floor = 1e-15 * p.trace().abs().max(f64::MIN_POSITIVE);
    let mut eig = p.symmetric_eigen();
    for v in eig.eigenvalues.iter_mut() {
        *v = v.max(floor);
    }
    symmetrize(&eig.recompose())
}

/// `eps^T P^-1 eps` with `eps = log(mean^-1 truth)`.
pub fn nees_single(estimate: &ConcentratedGaussian, truth: &GroupElement) -> Result<f64> {
    let eps = estimate.mean.local(truth)?;
    let chol = estimate
        .cov
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("NEES covariance".into()))?;
    Ok(eps.0.dot(&chol.solve(&eps.0)))
}

/// Per-epoch NEES of the filtered states against `truth`.
pub fn nees(history: &[FilterEpoch], truth: &[GroupElement]) -> Result<Vec<f64>> {
    if history.len() != truth.len() {
        return Err(Error::Misaligned(format!(
            "{} filter epochs vs {} truth epochs",
            history.len(),
            truth.len()
        )));
    }
    history
        .iter()
        .zip(truth)
        .map(|(e, x)| nees_single(e.updated(), x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{group_exp, DBA};

    fn epoch(mean: GroupElement, cov: Matrix15) -> FilterEpoch {
        FilterEpoch {
            t: 0.0,
            predicted: ConcentratedGaussian::from_parts(mean, cov),
            posterior: None,
            omega_dt: TangentVector::zeros(),
            transition: Matrix15::identity(),
            gate: None,
        }
    }

    #[test]
    fn single_epoch_is_identity() {
        let e = epoch(GroupElement::identity(), Matrix15::identity());
        let s = rts_smooth(std::slice::from_ref(&e)).unwrap();
        assert_eq!(s, vec![e.predicted]);
        assert!(rts_smooth(&[]).is_err());
    }

    #[test]
    fn singular_prediction_names_epoch() {
        let a = epoch(GroupElement::identity(), Matrix15::identity());
        let b = epoch(GroupElement::identity(), Matrix15::zeros());
        match rts_smooth(&[a, b]) {
            Err(Error::SmootherGain { epoch }) => assert_eq!(epoch, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nees_trivial_cases() {
        let mean = GroupElement::identity();
        let e = epoch(mean, Matrix15::identity());
        assert_eq!(nees(std::slice::from_ref(&e), &[mean]).unwrap(), vec![0.0]);
        let mut x = TangentVector::zeros();
        x.0[DBA] = 1.0;
        let truth = group_exp(&x).unwrap();
        let v = nees(std::slice::from_ref(&e), &[truth]).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-12);
        assert!(matches!(nees(&[e], &[]), Err(Error::Misaligned(_))));
    }

    #[test]
    fn repair_clamps_negative_eigenvalue() {
        let mut p = Matrix15::identity();
        p[(3, 3)] = -1e-20;
        let fixed = repair_spd(p);
        assert!(fixed.cholesky().is_some());
    }
}
