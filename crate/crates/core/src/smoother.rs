//! Kalman filter, fixed-interval smoother and lag-one covariance smoother for
//! the latent factors given the current loadings and idiosyncratic variances.
//!
//! The factor transition is diagonal, `omega_t = Phi omega_{t-1} + e_t` with
//! `Phi = diag(phi)` and `e_t ~ N(0, diag(innov_var))`. The correction step
//! never forms the `P x P` innovation covariance: with diagonal `Sigma_t` and
//! `G = B' Sigma^{-1} B` the gain is `(I + R G)^{-1} R B' Sigma^{-1}`, which is
//! algebraically identical to `R B' (B R B' + Sigma)^{-1}` and stays valid for
//! singular `R` (deterministic components such as an intercept).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{LoadingsPath, ModelConfig, Panel, SmoothedMoments, VolatilityPath};

/// Diagonal factor dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDynamics {
    pub phi: Vec<f64>,
    pub innov_var: Vec<f64>,
    pub init_mean: DVector<f64>,
    pub init_var: Vec<f64>,
}

impl FactorDynamics {
    /// `K` identical AR(1) factors started from their stationary law, plus a
    /// constant unit component when `cfg.intercept` is set.
    pub fn from_config(cfg: &ModelConfig) -> Self {
        let mut dynamics = Self::ar1(cfg.k_max, cfg.phi_tilde, cfg.sigma2_omega);
        if cfg.intercept {
            dynamics.phi.push(1.0);
            dynamics.innov_var.push(0.0);
            dynamics.init_var.push(0.0);
            dynamics.init_mean = dynamics.init_mean.push(1.0);
        }
        dynamics
    }

    pub fn ar1(k: usize, phi: f64, innov_var: f64) -> Self {
        Self::ar1_with_init(k, phi, innov_var, innov_var / (1.0 - phi * phi))
    }

    pub fn ar1_with_init(k: usize, phi: f64, innov_var: f64, init_var: f64) -> Self {
        Self {
            phi: alloc::vec![phi; k],
            innov_var: alloc::vec![innov_var; k],
            init_mean: DVector::zeros(k),
            init_var: alloc::vec![init_var; k],
        }
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    fn predict_cov(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |a, b| {
            let mut x = self.phi[a] * self.phi[b] * v[(a, b)];
            if a == b {
                x += self.innov_var[a];
            }
            x
        })
    }

    /// `Phi V` (scales the rows of `V`).
    fn left_phi(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(v.nrows(), v.ncols(), |a, b| self.phi[a] * v[(a, b)])
    }
}

/// Forward-pass output. Every sequence is indexed by `t = 0..=T`; at `t = 0`
/// the predicted and filtered moments both hold the initial law and the gain
/// is an empty `K x P` zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub pred_means: Vec<DVector<f64>>,
    pub pred_covs: Vec<DMatrix<f64>>,
    pub filt_means: Vec<DVector<f64>>,
    pub filt_covs: Vec<DMatrix<f64>>,
    /// `K_t = V_{t|t-1} B_t' (B_t V_{t|t-1} B_t' + Sigma_t)^{-1}`.
    pub gains: Vec<DMatrix<f64>>,
    /// `K_t B_t`, kept for the lag-one smoother initialization.
    pub gain_loadings: Vec<DMatrix<f64>>,
}

impl FilterState {
    pub fn n_times(&self) -> usize {
        self.filt_means.len() - 1
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for b in (a + 1)..n {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
}

fn check_inputs(panel: &Panel, loadings: &LoadingsPath, vol: &VolatilityPath, k: usize) -> Result<()> {
    let (p, t) = panel.values.shape();
    loadings.check_dims(t, p, k)?;
    if vol.sigma2.shape() != (p, t) {
        return Err(Error::DimensionMismatch(alloc::format!(
            "volatility is {:?}, panel is {p} x {t}",
            vol.sigma2.shape()
        )));
    }
    Ok(())
}

/// Kalman filter with the dynamics implied by `cfg`.
pub fn kalman_filter(
    panel: &Panel,
    loadings: &LoadingsPath,
    vol: &VolatilityPath,
    cfg: &ModelConfig,
) -> Result<FilterState> {
    kalman_filter_with(panel, loadings, vol, &FactorDynamics::from_config(cfg))
}

pub fn kalman_filter_with(
    panel: &Panel,
    loadings: &LoadingsPath,
    vol: &VolatilityPath,
    dynamics: &FactorDynamics,
) -> Result<FilterState> {
    let k = dynamics.dim();
    check_inputs(panel, loadings, vol, k)?;
    let (p, n_times) = panel.values.shape();

    let init_cov = DMatrix::from_diagonal(&DVector::from_column_slice(&dynamics.init_var));
    let mut st = FilterState {
        pred_means: Vec::with_capacity(n_times + 1),
        pred_covs: Vec::with_capacity(n_times + 1),
        filt_means: Vec::with_capacity(n_times + 1),
        filt_covs: Vec::with_capacity(n_times + 1),
        gains: Vec::with_capacity(n_times + 1),
        gain_loadings: Vec::with_capacity(n_times + 1),
    };
    st.pred_means.push(dynamics.init_mean.clone());
    st.pred_covs.push(init_cov.clone());
    st.filt_means.push(dynamics.init_mean.clone());
    st.filt_covs.push(init_cov);
    st.gains.push(DMatrix::zeros(k, p));
    st.gain_loadings.push(DMatrix::zeros(k, k));

    let mut weighted = DMatrix::zeros(k, p);
    for t in 1..=n_times {
        let prev_mean = &st.filt_means[t - 1];
        let pred_mean = DVector::from_fn(k, |a, _| dynamics.phi[a] * prev_mean[a]);
        let mut pred_cov = dynamics.predict_cov(&st.filt_covs[t - 1]);
        symmetrize(&mut pred_cov);

        let b = &loadings.betas[t];
        // B' Sigma^{-1}
        for j in 0..p {
            let s2 = vol.var(j, t);
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(Error::InnovationNotPositiveDefinite { t });
            }
            let w = 1.0 / s2;
            for a in 0..k {
                weighted[(a, j)] = b[(j, a)] * w;
            }
        }
        let g = &weighted * b;
        let resid = DVector::from_fn(p, |j, _| panel.y(j, t)) - b * &pred_mean;
        let h = &weighted * resid;

        let m = DMatrix::<f64>::identity(k, k) + &pred_cov * &g;
        let mut filt_cov = m
            .lu()
            .solve(&pred_cov)
            .ok_or(Error::InnovationNotPositiveDefinite { t })?;
        symmetrize(&mut filt_cov);
        // Gain K = (I + R G)^{-1} R B' Sigma^{-1} = V_{t|t} B' Sigma^{-1}.
        let gain = &filt_cov * &weighted;
        let filt_mean = &pred_mean + &filt_cov * &h;
        let gain_b = &gain * b;
        if filt_mean.iter().chain(filt_cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InnovationNotPositiveDefinite { t });
        }

        st.pred_means.push(pred_mean);
        st.pred_covs.push(pred_cov);
        st.filt_means.push(filt_mean);
        st.filt_covs.push(filt_cov);
        st.gains.push(gain);
        st.gain_loadings.push(gain_b);
    }
    Ok(st)
}

/// Solves `R X = rhs` for symmetric positive semi-definite `R`, falling back
/// to the eigen pseudo-inverse when `R` is singular.
fn psd_solve(r: &DMatrix<f64>, rhs: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    if let Some(ch) = r.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let eig = r.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = 1e-12 * scale.max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&v| v < -1e-9 * scale.max(1.0) || !v.is_finite()) {
        return Err(Error::SingularPredictedCovariance { t });
    }
    let inv = DVector::from_fn(r.nrows(), |i, _| {
        let v = eig.eigenvalues[i];
        if v > cutoff {
            1.0 / v
        } else {
            0.0
        }
    });
    let u = &eig.eigenvectors;
    let pinv = u * DMatrix::from_diagonal(&inv) * u.transpose();
    Ok(pinv * rhs)
}

/// Smoother with the dynamics implied by `cfg`.
pub fn kalman_smoother(fs: &FilterState, cfg: &ModelConfig) -> Result<SmoothedMoments> {
    kalman_smoother_with(fs, &FactorDynamics::from_config(cfg))
}

/// Rauch-Tung-Striebel smoother with the lag-one covariance recursion.
pub fn kalman_smoother_with(fs: &FilterState, dynamics: &FactorDynamics) -> Result<SmoothedMoments> {
    let n_times = fs.n_times();
    let k = dynamics.dim();
    let mut means = fs.filt_means.clone();
    let mut covs = fs.filt_covs.clone();
    let mut lag_covs = alloc::vec![DMatrix::zeros(k, k); n_times];
    if n_times == 0 {
        return Ok(SmoothedMoments { means, covs, lag_covs });
    }

    // Smoother gains J_{t-1} = V_{t-1|t-1} Phi' V_{t|t-1}^{-1}, t = 1..=T.
    let mut gains: Vec<DMatrix<f64>> = Vec::with_capacity(n_times + 1);
    gains.push(DMatrix::zeros(k, k));
    for t in 1..=n_times {
        let rhs = dynamics.left_phi(&fs.filt_covs[t - 1]); // Phi V_{t-1|t-1}
        let jt = psd_solve(&fs.pred_covs[t], &rhs, t)?.transpose();
        gains.push(jt);
    }

    for t in (1..=n_times).rev() {
        let j = &gains[t];
        let mean = &fs.filt_means[t - 1] + j * (&means[t] - &fs.pred_means[t]);
        let mut cov = &fs.filt_covs[t - 1] + j * (&covs[t] - &fs.pred_covs[t]) * j.transpose();
        symmetrize(&mut cov);
        means[t - 1] = mean;
        covs[t - 1] = cov;
    }

    // V_{T,T-1|T} = (I - K_T B_T) Phi V_{T-1|T-1}
    let eye = DMatrix::<f64>::identity(k, k);
    lag_covs[n_times - 1] =
        (&eye - &fs.gain_loadings[n_times]) * dynamics.left_phi(&fs.filt_covs[n_times - 1]);
    // V_{t-1,t-2|T} = V_{t-1|t-1} J_{t-2}' + J_{t-1} (V_{t,t-1|T} - Phi V_{t-1|t-1}) J_{t-2}'
    for t in (2..=n_times).rev() {
        let j1 = &gains[t]; // J_{t-1}
        let j2t = gains[t - 1].transpose(); // J_{t-2}'
        let inner = &lag_covs[t - 1] - dynamics.left_phi(&fs.filt_covs[t - 1]);
        lag_covs[t - 2] = &fs.filt_covs[t - 1] * &j2t + j1 * inner * &j2t;
    }

    Ok(SmoothedMoments { means, covs, lag_covs })
}
