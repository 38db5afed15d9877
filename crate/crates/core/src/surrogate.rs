//! Loadings part of the expected complete-data log posterior, used to
//! monitor convergence. Larger is better.

use nalgebra::DVector;

use crate::dss::DssParams;
use crate::error::{Error, Result};
use crate::loadings::ColumnPrior;
use crate::model::{LoadingsPath, ModelConfig, Panel, SmoothedMoments, VolatilityPath};

/// `-[ 1/2 sum_jt (log sigma2_jt + ((y_jt - b_jt' w_t)^2 + b_jt' V_t b_jt) / sigma2_jt)
///    + sum_jk pen_0 + sum_t sum_jk pen_t ]` at the stored indicator expectations.
pub fn eval_surrogate(
    panel: &Panel,
    loadings: &LoadingsPath,
    vol: &VolatilityPath,
    moments: &SmoothedMoments,
    cfg: &ModelConfig,
) -> Result<f64> {
    eval_surrogate_with(panel, loadings, vol, moments, &ColumnPrior::for_config(cfg))
}

pub fn eval_surrogate_with(
    panel: &Panel,
    loadings: &LoadingsPath,
    vol: &VolatilityPath,
    moments: &SmoothedMoments,
    priors: &[ColumnPrior],
) -> Result<f64> {
    let (p, n) = panel.values.shape();
    let k = priors.len();
    loadings.check_dims(n, p, k)?;
    if vol.sigma2.shape() != (p, n) || moments.n_times() != n || moments.n_factors() != k {
        return Err(Error::DimensionMismatch(alloc::string::String::from(
            "volatility or moments do not match the panel and loadings",
        )));
    }
    Ok(-(fit_term(panel, loadings, vol, moments) + penalty(loadings, priors)))
}

/// `1/2 sum_jt (log sigma2 + expected squared residual / sigma2)`.
pub fn fit_term(panel: &Panel, loadings: &LoadingsPath, vol: &VolatilityPath, moments: &SmoothedMoments) -> f64 {
    let (p, n) = panel.values.shape();
    let mut total = 0.0;
    for t in 1..=n {
        let b = &loadings.betas[t];
        let fitted = b * &moments.means[t];
        let spread = b * &moments.covs[t];
        for j in 0..p {
            let s2 = vol.var(j, t);
            let r = panel.y(j, t) - fitted[j];
            let quad = spread.row(j).dot(&b.row(j));
            total += libm::log(s2) + (r * r + quad) / s2;
        }
    }
    0.5 * total
}

/// Prior penalty of the loading paths at the stored indicator expectations.
pub fn penalty(loadings: &LoadingsPath, priors: &[ColumnPrior]) -> f64 {
    let p = loadings.n_series();
    let n = loadings.n_times();
    let mut total = 0.0;
    for (c, prior) in priors.iter().enumerate() {
        for j in 0..p {
            let path = DVector::from_fn(n + 1, |t, _| loadings.betas[t][(j, c)]);
            match prior {
                ColumnPrior::Dss(d) => {
                    total += initial_penalty(path[0], loadings.gammas[0][(j, c)], d);
                    for t in 1..=n {
                        total += step_penalty(path[t], path[t - 1], loadings.gammas[t][(j, c)], d);
                    }
                }
                ColumnPrior::RandomWalk { innov_var, init_var } => {
                    total += path[0] * path[0] / (2.0 * init_var);
                    for t in 1..=n {
                        let d = path[t] - path[t - 1];
                        total += d * d / (2.0 * innov_var);
                    }
                }
            }
        }
    }
    total
}

#[inline]
pub fn initial_penalty(beta0: f64, gamma0: f64, p: &DssParams) -> f64 {
    let c = beta0 - p.phi0;
    gamma0 * c * c * (1.0 - p.phi1 * p.phi1) / (2.0 * p.lambda1) + (1.0 - gamma0) * p.lambda0 * beta0.abs()
}

#[inline]
pub fn step_penalty(beta: f64, beta_prev: f64, gamma: f64, p: &DssParams) -> f64 {
    let c = beta - p.slab_mean(beta_prev);
    gamma * c * c / (2.0 * p.lambda1) + (1.0 - gamma) * p.lambda0 * beta.abs()
}
