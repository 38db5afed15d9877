//! Parameter-expansion step: expansion covariances `A_t` from the smoothed
//! factor moments, their Cholesky factors, and the rotation
//! `B_t = B*_t A_tL` back to the reduced parameterization.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{LoadingsPath, ModelConfig, RotationVariant, SmoothedMoments};
use crate::smoother::symmetrize;

/// Ridge added to every `A_t` before factorization.
pub const RIDGE: f64 = 1e-8;

/// Expansion matrices `A_0..A_T` (`A_0 = I`) with lower Cholesky factors.
/// Stored matrices already include the ridge for `t >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSet {
    pub a_mats: Vec<DMatrix<f64>>,
    pub chol: Vec<DMatrix<f64>>,
}

impl RotationSet {
    pub fn identity(n_times: usize, k: usize) -> Self {
        let eye = DMatrix::identity(k, k);
        Self { a_mats: alloc::vec![eye.clone(); n_times + 1], chol: alloc::vec![eye; n_times + 1] }
    }

    pub fn n_factors(&self) -> usize {
        self.a_mats[0].nrows()
    }
}

/// `A_t` for `t = 1..=T` from the printed or `phi`-aware formula, using the
/// leading `k` components of `moments`, divided by `scale`.
pub fn expansion_matrices(
    moments: &SmoothedMoments,
    variant: RotationVariant,
    phi: f64,
    k: usize,
    scale: f64,
) -> Result<RotationSet> {
    let n = moments.n_times();
    let eye = DMatrix::<f64>::identity(k, k);
    let mut set = RotationSet { a_mats: Vec::with_capacity(n + 1), chol: Vec::with_capacity(n + 1) };
    set.a_mats.push(eye.clone());
    set.chol.push(eye.clone());
    for t in 1..=n {
        let mut a = match variant {
            RotationVariant::Identity => eye.clone(),
            RotationVariant::Printed | RotationVariant::PhiAware => {
                let prev = moments.means[t - 1].rows(0, k);
                let cur = moments.means[t].rows(0, k);
                let m1 = prev * prev.transpose() + moments.covs[t - 1].view((0, 0), (k, k));
                let m2 = cur * cur.transpose() + moments.covs[t].view((0, 0), (k, k));
                // M12 = E[omega_{t-1} omega_t'] = omega_{t-1} omega_t' + V_{t,t-1}'.
                let m12 = prev * cur.transpose() + moments.lag_cov(t).view((0, 0), (k, k)).transpose();
                let f = if variant == RotationVariant::Printed { 1.0 } else { phi };
                (m2 - (&m12 + m12.transpose()) * f + m1 * (f * f)) / scale
            }
        };
        symmetrize(&mut a);
        for i in 0..k {
            a[(i, i)] += RIDGE;
        }
        let l = match a.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                a = clip_to_psd(&a);
                a.clone().cholesky().ok_or(Error::CholeskyFailed { t })?.l()
            }
        };
        set.a_mats.push(a);
        set.chol.push(l);
    }
    Ok(set)
}

/// Rounding can leave `A_t` slightly indefinite when the smoothed moments
/// are nearly degenerate; negative eigenvalues are set to zero and a ridge
/// scaled to the largest eigenvalue is added, so the factorization also
/// succeeds when the entries are large.
fn clip_to_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let k = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let ridge = RIDGE * vals.max().max(1.0);
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    for i in 0..k {
        out[(i, i)] += ridge;
    }
    out
}

/// Expansion matrices as written: `A_t = M1 - M12 - M12' + M2` (or the
/// variant selected in `cfg`), over every component of `moments`.
pub fn update_rotation(moments: &SmoothedMoments, cfg: &ModelConfig) -> Result<RotationSet> {
    expansion_matrices(moments, cfg.rotation, cfg.phi_tilde, moments.n_factors(), 1.0)
}

/// Expansion matrices used inside the fit: same formula restricted to the
/// factor block, so an intercept column is never mixed into the factors.
pub fn fit_rotation(moments: &SmoothedMoments, cfg: &ModelConfig) -> Result<RotationSet> {
    expansion_matrices(moments, cfg.rotation, cfg.phi_tilde, cfg.k_max, 1.0)
}

/// `B_t = B*_t A_tL` on the leading `K_f` columns (`K_f` = size of the
/// rotation); remaining columns and all indicator expectations are kept.
pub fn rotate_loadings(loadings_star: &LoadingsPath, rot: &RotationSet) -> Result<LoadingsPath> {
    let kf = rot.n_factors();
    if rot.chol.len() != loadings_star.betas.len() || kf > loadings_star.n_factors() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "rotation covers {} periods and {kf} factors, loadings {} and {}",
            rot.chol.len(),
            loadings_star.betas.len(),
            loadings_star.n_factors()
        )));
    }
    let mut out = loadings_star.clone();
    for (t, b) in out.betas.iter_mut().enumerate().skip(1) {
        let rotated = b.columns(0, kf) * &rot.chol[t];
        b.columns_mut(0, kf).copy_from(&rotated);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn moments(means: Vec<DVector<f64>>, covs: Vec<DMatrix<f64>>, lags: Vec<DMatrix<f64>>) -> SmoothedMoments {
        SmoothedMoments { means, covs, lag_covs: lags }
    }

    #[test]
    fn unit_covariances_give_twice_identity() {
        let k = 2;
        let m = moments(
            alloc::vec![DVector::zeros(k); 2],
            alloc::vec![DMatrix::identity(k, k); 2],
            alloc::vec![DMatrix::zeros(k, k)],
        );
        let rot = update_rotation(&m, &ModelConfig::default()).unwrap();
        assert_eq!(rot.a_mats[0], DMatrix::identity(k, k));
        assert!((&rot.a_mats[1] - DMatrix::identity(k, k) * 2.0).amax() < 1e-7);
    }

    #[test]
    fn degenerate_moments_are_regularized() {
        let v = DVector::from_vec(alloc::vec![0.4, -1.0]);
        let m = moments(alloc::vec![v.clone(), v], alloc::vec![DMatrix::zeros(2, 2); 2], alloc::vec![DMatrix::zeros(2, 2)]);
        let rot = update_rotation(&m, &ModelConfig::default()).unwrap();
        assert!((&rot.a_mats[1] - DMatrix::identity(2, 2) * RIDGE).amax() < 1e-20);
    }

    #[test]
    fn phi_aware_variant() {
        let phi = 0.5;
        let a = DVector::from_vec(alloc::vec![1.0]);
        let b = DVector::from_vec(alloc::vec![2.0]);
        let m = moments(
            alloc::vec![a, b],
            alloc::vec![DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 0.25)],
            alloc::vec![DMatrix::from_element(1, 1, 0.1)],
        );
        let cfg = ModelConfig { rotation: RotationVariant::PhiAware, phi_tilde: phi, ..Default::default() };
        let rot = update_rotation(&m, &cfg).unwrap();
        // E[(w1 - phi w0)^2] = M2 - 2 phi M12 + phi^2 M1.
        let expected = (4.0 + 0.25) - 2.0 * phi * (2.0 + 0.1) + phi * phi * (1.0 + 0.5);
        assert_relative_eq!(rot.a_mats[1][(0, 0)], expected + RIDGE, epsilon = 1e-15);
        let cfg = ModelConfig { rotation: RotationVariant::Identity, ..Default::default() };
        assert!((&update_rotation(&m, &cfg).unwrap().chol[1] - DMatrix::identity(1, 1)).amax() < 1e-8);
    }

    #[test]
    fn indefinite_moments_are_clipped() {
        // M12 large enough that M1 - M12 - M12' + M2 has a negative eigenvalue.
        let z = DVector::zeros(2);
        let m = moments(
            alloc::vec![z.clone(), z],
            alloc::vec![DMatrix::identity(2, 2); 2],
            alloc::vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])],
        );
        let rot = update_rotation(&m, &ModelConfig::default()).unwrap();
        let a = &rot.a_mats[1];
        assert!((a - a.transpose()).amax() < 1e-12);
        assert!(a.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        assert!((a[(1, 1)] - 2.0).abs() < 1e-7 && a[(0, 0)].abs() < 1e-7);
    }

    #[test]
    fn rotation_by_scaled_identity() {
        let mut path = LoadingsPath::zeros(2, 3, 2);
        for b in path.betas.iter_mut() {
            *b = DMatrix::from_fn(3, 2, |j, k| (j + 2 * k) as f64 - 1.5);
        }
        let id = RotationSet::identity(2, 2);
        assert_eq!(rotate_loadings(&path, &id).unwrap(), path);
        let mut four = id.clone();
        for t in 1..=2 {
            four.a_mats[t] = DMatrix::identity(2, 2) * 4.0;
            four.chol[t] = four.a_mats[t].clone().cholesky().unwrap().l();
        }
        let out = rotate_loadings(&path, &four).unwrap();
        assert_eq!(out.betas[0], path.betas[0]);
        for t in 1..=2 {
            assert!((&out.betas[t] - &path.betas[t] * 2.0).amax() < 1e-15);
        }
    }
}
