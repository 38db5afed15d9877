//! Shared domain types: hyperparameters, the observed panel, loading paths,
//! smoothed factor moments, and volatility paths.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the expansion matrices `A_t` are formed before the rotation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RotationVariant {
    /// `A_t = M1 - M12 - M12' + M2` (unit transition inside the expansion).
    #[default]
    Printed,
    /// `A_t = M2 - phi M12 - phi M12' + phi^2 M1`.
    PhiAware,
    /// `A_t = I`: no parameter expansion, plain EM.
    Identity,
}

/// Which variance enters the one-step forecast variance `q_jt` of the
/// discount volatility filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceScale {
    /// `q_jt = b' V b + s_{j,t-1}`, the running filtered estimate.
    #[default]
    Filtered,
    /// `q_jt = b' V b + sigma2_jt` from the previous EM iteration.
    PreviousIteration,
}

/// All hyperparameters and run controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Global balancing weight of the slab.
    pub theta: f64,
    /// Laplace spike rate.
    pub lambda0: f64,
    /// Slab innovation variance.
    pub lambda1: f64,
    /// Slab long-run mean.
    pub phi0: f64,
    /// Slab autoregressive coefficient.
    pub phi1: f64,
    /// Factor autoregressive coefficient.
    pub phi_tilde: f64,
    /// Factor innovation variance.
    pub sigma2_omega: f64,
    /// Volatility discount factor.
    pub delta: f64,
    /// Number of candidate factors.
    pub k_max: usize,
    /// Prior degrees of freedom of the initial precision.
    pub n0: f64,
    /// Prior scale of the initial precision.
    pub d0: f64,
    pub max_iter: usize,
    /// Relative tolerance on the surrogate objective.
    pub tol: f64,
    pub seed: u64,
    /// Add a random-walk intercept column.
    pub intercept: bool,
    /// Innovation variance of the intercept random walk.
    pub intercept_var: f64,
    pub rotation: RotationVariant,
    pub ffbs_scale: VarianceScale,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let phi1: f64 = 0.98;
        let phi_tilde: f64 = 0.95;
        Self {
            theta: 0.9,
            lambda0: 0.9,
            lambda1: 10.0 * (1.0 - phi1 * phi1),
            phi0: 0.0,
            phi1,
            phi_tilde,
            sigma2_omega: 1.0 - phi_tilde * phi_tilde,
            delta: 0.95,
            k_max: 10,
            n0: 20.0,
            d0: 0.002,
            max_iter: 500,
            tol: 1e-6,
            seed: 0,
            intercept: false,
            intercept_var: 0.01,
            rotation: RotationVariant::Printed,
            ffbs_scale: VarianceScale::Filtered,
        }
    }
}

impl ModelConfig {
    /// Stationary variance of the slab process, `lambda1 / (1 - phi1^2)`.
    pub fn stationary_slab_var(&self) -> f64 {
        self.lambda1 / (1.0 - self.phi1 * self.phi1)
    }

    /// Prior degrees of freedom `eta_0` used by the volatility filter: `n0`
    /// when it already is the fixed point `1/(1-delta)` of
    /// `eta_t = delta eta_{t-1} + 1` (or `delta = 1`), the fixed point otherwise.
    pub fn initial_dof(&self) -> f64 {
        if self.delta >= 1.0 || (self.n0 * (1.0 - self.delta) - 1.0).abs() < 1e-9 {
            self.n0
        } else {
            1.0 / (1.0 - self.delta)
        }
    }

    /// Total number of loading columns, including the intercept.
    pub fn total_columns(&self) -> usize {
        self.k_max + usize::from(self.intercept)
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg()))
    }
}

/// Returns `cfg` unchanged if every hyperparameter constraint holds.
pub fn validate_config(cfg: ModelConfig) -> Result<ModelConfig> {
    let c = &cfg;
    check(c.theta > 0.0 && c.theta < 1.0, || {
        format!("theta not in (0,1): got {}", c.theta)
    })?;
    check(c.lambda0 > 0.0 && c.lambda0.is_finite(), || {
        format!("lambda0 not positive: got {}", c.lambda0)
    })?;
    check(c.lambda1 > 0.0 && c.lambda1.is_finite(), || {
        format!("lambda1 not positive: got {}", c.lambda1)
    })?;
    check(c.phi0.is_finite(), || format!("phi0 not finite: got {}", c.phi0))?;
    check(c.phi1 > -1.0 && c.phi1 < 1.0, || {
        format!("phi1 not in (-1,1): got {}", c.phi1)
    })?;
    check(c.phi_tilde > 0.0 && c.phi_tilde < 1.0, || {
        format!("phi_tilde not in (0,1): got {}", c.phi_tilde)
    })?;
    check(c.sigma2_omega > 0.0 && c.sigma2_omega.is_finite(), || {
        format!("sigma2_omega not positive: got {}", c.sigma2_omega)
    })?;
    check(c.delta > 0.0 && c.delta <= 1.0, || {
        format!("delta not in (0,1]: got {}", c.delta)
    })?;
    check(c.k_max >= 1, || String::from("k_max must be at least 1"))?;
    check(c.n0 > 0.0 && c.n0.is_finite(), || format!("n0 not positive: got {}", c.n0))?;
    check(c.d0 > 0.0 && c.d0.is_finite(), || format!("d0 not positive: got {}", c.d0))?;
    check(c.max_iter >= 1, || String::from("max_iter must be at least 1"))?;
    check(c.tol > 0.0, || format!("tol not positive: got {}", c.tol))?;
    check(c.intercept_var > 0.0 && c.intercept_var.is_finite(), || {
        format!("intercept_var not positive: got {}", c.intercept_var)
    })?;
    let v = c.stationary_slab_var();
    check(v > 0.0 && v.is_finite(), || {
        format!("stationary slab variance not finite and positive: got {v}")
    })?;
    Ok(cfg)
}

/// Observed `P x T` data matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// Series in rows, time in columns; column `t - 1` holds time `t`.
    pub values: DMatrix<f64>,
    pub series_names: Vec<String>,
    pub group_labels: Option<Vec<String>>,
    pub time_index: Vec<String>,
    /// Per-series `(mean, scale)` such that `original = mean + scale * value`.
    pub standardization: Option<Vec<(f64, f64)>>,
}

impl Panel {
    pub fn new(values: DMatrix<f64>, series_names: Vec<String>, time_index: Vec<String>) -> Result<Self> {
        let (p, t) = values.shape();
        if p < 2 || t < 2 {
            return Err(Error::InvalidPanel(format!("need P >= 2 and T >= 2, got {p} x {t}")));
        }
        if series_names.len() != p {
            return Err(Error::InvalidPanel(format!(
                "{} series names for {p} rows",
                series_names.len()
            )));
        }
        if time_index.len() != t {
            return Err(Error::InvalidPanel(format!(
                "{} time labels for {t} columns",
                time_index.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel(format!(
                "non-finite value at series {}, time {}",
                pos % p,
                pos / p + 1
            )));
        }
        Ok(Self { values, series_names, group_labels: None, time_index, standardization: None })
    }

    /// Panel with generated labels `s1..sP` and `1..T`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.nrows()).map(|j| format!("s{j}")).collect();
        let times = (1..=values.ncols()).map(|t| format!("{t}")).collect();
        Self::new(values, names, times)
    }

    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self> {
        if groups.len() != self.n_series() {
            return Err(Error::InvalidPanel(format!(
                "{} group labels for {} series",
                groups.len(),
                self.n_series()
            )));
        }
        self.group_labels = Some(groups);
        Ok(self)
    }

    pub fn n_series(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.values.ncols()
    }

    /// Observation of series `j` at time `t` (1-based).
    #[inline]
    pub fn y(&self, j: usize, t: usize) -> f64 {
        self.values[(j, t - 1)]
    }

    /// Centers each series and scales it to unit sample standard deviation
    /// (divisor `T - 1`). The applied transform is composed with any earlier
    /// one so `standardization` always maps back to the original units.
    pub fn standardize(&self) -> Result<Panel> {
        let (p, t) = self.values.shape();
        let mut out = self.clone();
        let mut meta = Vec::with_capacity(p);
        for j in 0..p {
            let row = self.values.row(j);
            let mean = row.sum() / t as f64;
            let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = libm::sqrt(ss / (t as f64 - 1.0));
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::InvalidPanel(format!(
                    "series '{}' has zero variance",
                    self.series_names[j]
                )));
            }
            for c in 0..t {
                out.values[(j, c)] = (self.values[(j, c)] - mean) / sd;
            }
            let (m0, s0) = self.standardization.as_ref().map_or((0.0, 1.0), |m| m[j]);
            meta.push((m0 + s0 * mean, s0 * sd));
        }
        out.standardization = Some(meta);
        Ok(out)
    }
}

/// Loading matrices `B_0..B_T` with their indicator expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingsPath {
    /// `betas[t]` is the `P x K` matrix `B_t`; index 0 is the initial condition.
    pub betas: Vec<DMatrix<f64>>,
    /// `gammas[t]` holds `<gamma_jk^t>` in `[0, 1]`.
    pub gammas: Vec<DMatrix<f64>>,
}

impl LoadingsPath {
    pub fn zeros(n_times: usize, p: usize, k: usize) -> Self {
        Self {
            betas: vec![DMatrix::zeros(p, k); n_times + 1],
            gammas: vec![DMatrix::zeros(p, k); n_times + 1],
        }
    }

    /// Number of observation times `T` (the path holds `T + 1` matrices).
    pub fn n_times(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn n_series(&self) -> usize {
        self.betas[0].nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.betas[0].ncols()
    }

    pub(crate) fn check_dims(&self, n_times: usize, p: usize, k: usize) -> Result<()> {
        let ok = self.betas.len() == n_times + 1
            && self.gammas.len() == n_times + 1
            && self.betas.iter().chain(self.gammas.iter()).all(|m| m.shape() == (p, k));
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "loadings path is not {} x {p} x {k}",
                n_times + 1
            )))
        }
    }
}

/// Smoothed factor moments from the fixed-interval smoother.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMoments {
    /// `omega_{t|T}` for `t = 0..=T`.
    pub means: Vec<DVector<f64>>,
    /// `V_{t|T}` for `t = 0..=T`.
    pub covs: Vec<DMatrix<f64>>,
    /// `lag_covs[t - 1]` is `V_{t,t-1|T} = cov(omega_t, omega_{t-1} | Y)` for `t = 1..=T`.
    pub lag_covs: Vec<DMatrix<f64>>,
}

impl SmoothedMoments {
    pub fn n_times(&self) -> usize {
        self.means.len() - 1
    }

    pub fn n_factors(&self) -> usize {
        self.means[0].len()
    }

    /// `V_{t,t-1|T}` for `t >= 1`.
    pub fn lag_cov(&self, t: usize) -> &DMatrix<f64> {
        &self.lag_covs[t - 1]
    }
}

/// Idiosyncratic variance paths with the filter state they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityPath {
    /// `sigma2[(j, t - 1)]` is `sigma^2_jt`.
    pub sigma2: DMatrix<f64>,
    /// Filtered degrees of freedom `eta_t`, shared across series.
    pub eta_filter: Vec<f64>,
    pub d_filter: DMatrix<f64>,
    pub s_filter: DMatrix<f64>,
}

impl VolatilityPath {
    /// Constant variance path with an empty filter history.
    pub fn constant(p: usize, n_times: usize, value: f64) -> Self {
        Self::from_sigma2(DMatrix::from_element(p, n_times, value))
    }

    pub fn from_sigma2(sigma2: DMatrix<f64>) -> Self {
        let (p, t) = sigma2.shape();
        Self {
            sigma2,
            eta_filter: vec![0.0; t],
            d_filter: DMatrix::zeros(p, t),
            s_filter: DMatrix::zeros(p, t),
        }
    }

    /// `sigma^2_jt` with `t` 1-based.
    #[inline]
    pub fn var(&self, j: usize, t: usize) -> f64 {
        self.sigma2[(j, t - 1)]
    }
}

/// Output of a full estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub loadings: LoadingsPath,
    pub volatility: VolatilityPath,
    pub moments: SmoothedMoments,
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// True when the last loading column is the dynamic intercept.
    pub intercept: bool,
}

impl FitResult {
    /// Loading matrix at time `t` restricted to the factor columns.
    pub fn factor_loadings(&self, t: usize) -> DMatrix<f64> {
        let b = &self.loadings.betas[t];
        let k = b.ncols() - usize::from(self.intercept);
        b.columns(0, k).into_owned()
    }
}
