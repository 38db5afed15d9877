//! Discount stochastic volatility: forward filtering of the idiosyncratic
//! precisions, backward smoothing, and extraction of posterior modes.
//!
//! Each series is filtered independently. The degrees of freedom follow
//! `eta_t = delta eta_{t-1} + 1` and the scale
//! `d_jt = delta d_{j,t-1} + s_{j,t-1} e_jt^2 / q_jt`, with `s_jt = d_jt / eta_t`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{LoadingsPath, ModelConfig, Panel, VarianceScale, VolatilityPath};
use crate::smoother::FilterState;

/// Filter and smoother state of the discount volatility model. Sequences
/// are indexed by `t - 1` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfbsState {
    pub delta: f64,
    pub eta0: f64,
    pub d0: DVector<f64>,
    pub eta: Vec<f64>,
    pub d: DMatrix<f64>,
    pub s: DMatrix<f64>,
    /// `eta_T(-k)` stored at time `T - k`.
    pub eta_smooth: Vec<f64>,
    /// `S_T(-k)` stored at time `T - k`.
    pub s_smooth: DMatrix<f64>,
}

impl FfbsState {
    pub fn n_times(&self) -> usize {
        self.eta.len()
    }

    pub fn n_series(&self) -> usize {
        self.d.nrows()
    }

    /// Forward state assembled from precomputed squared standardized
    /// forecast errors `ratio[(j, t - 1)] = e_jt^2 / q_jt`.
    pub fn filter_ratios(ratios: &DMatrix<f64>, delta: f64, eta0: f64, d0: &DVector<f64>) -> Self {
        let (p, n) = ratios.shape();
        let mut st = Self::empty(p, n, delta, eta0, d0);
        let mut eta_prev = eta0;
        for t in 1..=n {
            let eta = delta * eta_prev + 1.0;
            st.eta.push(eta);
            for j in 0..p {
                let (d_prev, s_prev) = st.previous(j, t);
                let d = delta * d_prev + s_prev * ratios[(j, t - 1)];
                st.d[(j, t - 1)] = d;
                st.s[(j, t - 1)] = d / eta;
            }
            eta_prev = eta;
        }
        st
    }

    fn empty(p: usize, n: usize, delta: f64, eta0: f64, d0: &DVector<f64>) -> Self {
        Self {
            delta,
            eta0,
            d0: d0.clone(),
            eta: Vec::with_capacity(n),
            d: DMatrix::zeros(p, n),
            s: DMatrix::zeros(p, n),
            eta_smooth: Vec::new(),
            s_smooth: DMatrix::zeros(p, 0),
        }
    }

    /// `(d_{j,t-1}, s_{j,t-1})`, using the initial condition at `t = 1`.
    fn previous(&self, j: usize, t: usize) -> (f64, f64) {
        if t == 1 {
            (self.d0[j], self.d0[j] / self.eta0)
        } else {
            (self.d[(j, t - 2)], self.s[(j, t - 2)])
        }
    }
}

/// Forward pass. Forecast errors use the predictive means of `fs`, which
/// must come from a filter run with the same `loadings`. With
/// [`VarianceScale::Filtered`] the forecast variance is
/// `b' V_{t|t-1} b + s_{j,t-1}`; with [`VarianceScale::PreviousIteration`]
/// the last term is `vol_prev`'s `sigma^2_jt`.
pub fn ffbs_forward(
    panel: &Panel,
    loadings: &LoadingsPath,
    fs: &FilterState,
    vol_prev: &VolatilityPath,
    cfg: &ModelConfig,
) -> Result<FfbsState> {
    let (p, n) = panel.values.shape();
    let k = fs.pred_means[0].len();
    loadings.check_dims(n, p, k)?;
    if fs.n_times() != n || vol_prev.sigma2.shape() != (p, n) {
        return Err(Error::DimensionMismatch(alloc::format!(
            "filter covers {} periods and volatility is {:?}; panel is {p} x {n}",
            fs.n_times(),
            vol_prev.sigma2.shape()
        )));
    }
    let delta = cfg.delta;
    let eta0 = cfg.initial_dof();
    let mut st = FfbsState::empty(p, n, delta, eta0, &DVector::from_element(p, cfg.d0));
    let mut eta_prev = eta0;
    for t in 1..=n {
        let eta = delta * eta_prev + 1.0;
        st.eta.push(eta);
        let b = &loadings.betas[t];
        let fitted = b * &fs.pred_means[t];
        let spread = b * &fs.pred_covs[t];
        for j in 0..p {
            let (d_prev, s_prev) = st.previous(j, t);
            let e = panel.y(j, t) - fitted[j];
            let factor_var = spread.row(j).dot(&b.row(j));
            let scale = match cfg.ffbs_scale {
                VarianceScale::Filtered => s_prev,
                VarianceScale::PreviousIteration => vol_prev.var(j, t),
            };
            let q = factor_var + scale;
            if !(q > 0.0) || !q.is_finite() {
                return Err(Error::NonPositiveForecastVariance { j, t });
            }
            let d = delta * d_prev + s_prev * e * e / q;
            st.d[(j, t - 1)] = d;
            st.s[(j, t - 1)] = d / eta;
        }
        eta_prev = eta;
    }
    Ok(st)
}

/// Backward pass:
/// `eta_T(-k) = (1 - delta) eta_{T-k} + delta eta_T(-k+1)` and
/// `S_T(-k)^{-1} = (1 - delta) S_{T-k}^{-1} + delta S_T(-k+1)^{-1}`,
/// started at `eta_T(0) = eta_T`, `S_T(0) = S_T`.
pub fn ffbs_backward(fs: &FfbsState, cfg: &ModelConfig) -> FfbsState {
    smooth_with(fs, cfg.delta)
}

pub fn smooth_with(fs: &FfbsState, delta: f64) -> FfbsState {
    let n = fs.n_times();
    let p = fs.n_series();
    let mut out = fs.clone();
    out.eta_smooth = fs.eta.clone();
    out.s_smooth = fs.s.clone();
    if n == 0 {
        return out;
    }
    for t in (1..n).rev() {
        out.eta_smooth[t - 1] = (1.0 - delta) * fs.eta[t - 1] + delta * out.eta_smooth[t];
        for j in 0..p {
            let inv = (1.0 - delta) / fs.s[(j, t - 1)] + delta / out.s_smooth[(j, t)];
            out.s_smooth[(j, t - 1)] = 1.0 / inv;
        }
    }
    out
}

/// Posterior modes `sigma^2 = d / (eta - 1)` with `d = eta S` at every time.
pub fn extract_modes(fs: &FfbsState) -> Result<VolatilityPath> {
    let n = fs.n_times();
    let p = fs.n_series();
    if fs.eta_smooth.len() != n || fs.s_smooth.shape() != (p, n) {
        return Err(Error::DimensionMismatch(alloc::string::String::from(
            "backward pass has not been run",
        )));
    }
    let mut sigma2 = DMatrix::zeros(p, n);
    for t in 1..=n {
        let eta = fs.eta_smooth[t - 1];
        if !(eta > 1.0) {
            return Err(Error::ModeUndefined { t, eta });
        }
        for j in 0..p {
            sigma2[(j, t - 1)] = mode(eta, eta * fs.s_smooth[(j, t - 1)])?;
        }
    }
    Ok(VolatilityPath { sigma2, eta_filter: fs.eta.clone(), d_filter: fs.d.clone(), s_filter: fs.s.clone() })
}

/// Mode of the variance for a Gamma precision with `eta` degrees of freedom
/// and scale `d`.
pub fn mode(eta: f64, d: f64) -> Result<f64> {
    if !(eta > 1.0) {
        return Err(Error::ModeUndefined { t: 0, eta });
    }
    Ok(d / (eta - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn fixed_point_dof() {
        let st = FfbsState::filter_ratios(&DMatrix::from_element(2, 10, 1.0), 0.95, 20.0, &DVector::from_element(2, 0.002));
        assert!(st.eta.iter().all(|&e| e == 20.0));
    }

    #[test]
    fn zero_errors_decay_geometrically() {
        let delta: f64 = 0.9;
        let st = FfbsState::filter_ratios(&DMatrix::zeros(1, 6), delta, 10.0, &DVector::from_element(1, 1.5));
        for t in 1..=6 {
            assert_relative_eq!(st.d[(0, t - 1)], delta.powi(t as i32) * 1.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn scalar_forward_step() {
        let st = FfbsState::filter_ratios(&DMatrix::from_element(1, 1, 2.0), 0.9, 10.0, &DVector::from_element(1, 1.0));
        assert_eq!(st.eta[0], 10.0);
        assert_relative_eq!(st.d[(0, 0)], 1.1, epsilon = 1e-15);
        assert_relative_eq!(st.s[(0, 0)], 0.11, epsilon = 1e-15);
    }

    fn with_filtered(s: &[f64], eta: f64, delta: f64) -> FfbsState {
        let n = s.len();
        FfbsState {
            delta,
            eta0: eta,
            d0: DVector::from_element(1, 1.0),
            eta: alloc::vec![eta; n],
            d: DMatrix::from_fn(1, n, |_, t| eta * s[t]),
            s: DMatrix::from_row_slice(1, n, s),
            eta_smooth: Vec::new(),
            s_smooth: DMatrix::zeros(1, 0),
        }
    }

    #[test]
    fn backward_hand_recursion() {
        let sm = smooth_with(&with_filtered(&[1.0, 2.0, 4.0], 10.0, 0.9), 0.9);
        assert_eq!(sm.s_smooth[(0, 2)], 4.0);
        assert_relative_eq!(sm.s_smooth[(0, 1)], 1.0 / 0.275, epsilon = 1e-12);
        assert_relative_eq!(sm.s_smooth[(0, 0)], 1.0 / 0.3475, epsilon = 1e-12);
        assert_relative_eq!(sm.s_smooth[(0, 1)], 3.6364, epsilon = 1e-4);
        assert_relative_eq!(sm.s_smooth[(0, 0)], 2.8777, epsilon = 1e-4);
    }

    #[test]
    fn backward_fixed_points() {
        let sm = smooth_with(&with_filtered(&[0.7; 5], 20.0, 0.95), 0.95);
        assert!(sm.s_smooth.iter().all(|&v| (v - 0.7).abs() < 1e-15));
        assert!(sm.eta_smooth.iter().all(|&v| v == 20.0));
        let sm = smooth_with(&with_filtered(&[0.3, 1.0, 5.0, 2.0], 20.0, 1.0), 1.0);
        assert!(sm.s_smooth.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn modes() {
        assert_eq!(mode(21.0, 40.0).unwrap(), 2.0);
        assert_relative_eq!(mode(20.0, 20.0 * 1.0).unwrap(), 20.0 / 19.0, epsilon = 1e-15);
        assert!(matches!(mode(1.0, 3.0), Err(Error::ModeUndefined { .. })));
        let mut st = smooth_with(&with_filtered(&[1.0, 1.0], 20.0, 0.95), 0.95);
        let v = extract_modes(&st).unwrap();
        assert_relative_eq!(v.sigma2[(0, 1)], 20.0 / 19.0, epsilon = 1e-15);
        st.eta_smooth[0] = 0.5;
        assert!(matches!(extract_modes(&st), Err(Error::ModeUndefined { t: 1, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn positive_inputs_give_positive_outputs(
            ratios in proptest::collection::vec(0.0f64..50.0, 12),
            delta in 0.5f64..=1.0,
            d0 in 1e-4f64..10.0,
        ) {
            let r = DMatrix::from_row_slice(2, 6, &ratios);
            let eta0 = if delta < 1.0 { 1.0 / (1.0 - delta) } else { 20.0 };
            let st = FfbsState::filter_ratios(&r, delta, eta0, &DVector::from_element(2, d0));
            for t in 1..6 {
                prop_assert_eq!(st.eta[t], delta * st.eta[t - 1] + 1.0);
            }
            let sm = smooth_with(&st, delta);
            prop_assert!(sm.d.iter().chain(sm.s.iter()).chain(sm.s_smooth.iter()).all(|&v| v > 0.0 && v.is_finite()));
            let v = extract_modes(&sm).unwrap();
            prop_assert!(v.sigma2.iter().all(|&x| x > 0.0));
        }
    }
}
