//! Parameter-expanded EM with rotations to sparsity.
//!
//! One iteration runs, in order:
//! 1. Kalman filter and smoother at the current loadings and variances.
//! 2. Indicator expectations and mixing weights at the current loadings.
//! 3. One coordinate sweep of the loadings, giving `B*`.
//! 4. Forward filtering / backward smoothing of the idiosyncratic variances.
//! 5. The surrogate objective at `(B*, Sigma)`, appended to the trace.
//! 6. Expansion matrices `A_t` and the rotation `B_t = B*_t A_tL`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::loadings::{sweep_loadings, update_indicators, ColumnPrior};
use crate::model::{validate_config, FitResult, LoadingsPath, ModelConfig, Panel, VolatilityPath};
use crate::rotation::{fit_rotation, rotate_loadings};
use crate::smoother::{kalman_filter_with, kalman_smoother_with, FactorDynamics};
use crate::surrogate::eval_surrogate_with;
use crate::volatility::{extract_modes, ffbs_backward, ffbs_forward};

/// Smallest initial idiosyncratic variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// How the loading path is initialized.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Rank-`K` SVD of consecutive windows of length `window` (the last
    /// window is aligned to end at `T`), entries below `threshold` zeroed.
    SvdThreshold { window: usize, threshold: f64 },
    /// A previously estimated path (factor columns and, when the model has
    /// an intercept, the intercept column).
    WarmStart(LoadingsPath),
    Zeros,
}

/// Column layout of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub n_series: usize,
    pub n_times: usize,
    pub n_factors: usize,
    /// Factors plus the intercept column.
    pub n_columns: usize,
    pub intercept_column: Option<usize>,
}

/// Dimensions implied by `cfg`; the intercept, when present, is the last
/// column and the last component of the factor vector.
pub fn attach_intercept(panel: &Panel, cfg: &ModelConfig) -> ModelDims {
    let k = cfg.k_max;
    ModelDims {
        n_series: panel.n_series(),
        n_times: panel.n_times(),
        n_factors: k,
        n_columns: cfg.total_columns(),
        intercept_column: cfg.intercept.then_some(k),
    }
}

/// Starting loadings and variances.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub loadings: LoadingsPath,
    pub volatility: VolatilityPath,
}

pub fn init_loadings(panel: &Panel, cfg: &ModelConfig, init: &InitStrategy) -> Result<LoadingsPath> {
    Ok(initial_state(panel, cfg, init)?.loadings)
}

/// Window boundaries `[start, end)` over column indices `0..n`.
pub fn windows(n: usize, window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + window).min(n);
        if end - start < window {
            out.push((n - window, n));
        } else {
            out.push((start, end));
        }
        start = end;
    }
    out
}

pub fn initial_state(panel: &Panel, cfg: &ModelConfig, init: &InitStrategy) -> Result<InitialState> {
    let dims = attach_intercept(panel, cfg);
    let (p, n, kc) = (dims.n_series, dims.n_times, dims.n_columns);
    match init {
        InitStrategy::Zeros => {
            let mut loadings = LoadingsPath::zeros(n, p, kc);
            let mut sigma2 = DMatrix::zeros(p, n);
            for j in 0..p {
                let row = panel.values.row(j);
                let level = if cfg.intercept { row.sum() / n as f64 } else { 0.0 };
                let var = row.iter().map(|v| (v - level) * (v - level)).sum::<f64>() / n as f64;
                sigma2.row_mut(j).fill(var.max(VARIANCE_FLOOR));
                if let Some(c) = dims.intercept_column {
                    for b in loadings.betas.iter_mut() {
                        b[(j, c)] = level;
                    }
                }
            }
            Ok(InitialState { loadings, volatility: VolatilityPath::from_sigma2(sigma2) })
        }
        InitStrategy::WarmStart(path) => {
            path.check_dims(n, p, kc).map_err(|e| Error::InvalidInit(format!("{e}")))?;
            let loadings = path.clone();
            let mut sigma2 = DMatrix::zeros(p, n);
            for j in 0..p {
                let row = panel.values.row(j);
                let mean = row.sum() / n as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                sigma2.row_mut(j).fill((0.5 * var).max(VARIANCE_FLOOR));
            }
            Ok(InitialState { loadings, volatility: VolatilityPath::from_sigma2(sigma2) })
        }
        InitStrategy::SvdThreshold { window, threshold } => {
            if *window == 0 || *window > n {
                return Err(Error::InvalidInit(format!("window {window} not in 1..={n}")));
            }
            if !(*threshold >= 0.0) {
                return Err(Error::InvalidInit(format!("threshold {threshold} is negative")));
            }
            svd_init(panel, cfg, dims, *window, *threshold)
        }
    }
}

fn svd_init(panel: &Panel, cfg: &ModelConfig, dims: ModelDims, window: usize, threshold: f64) -> Result<InitialState> {
    let (p, n, k) = (dims.n_series, dims.n_times, dims.n_factors);
    let mut loadings = LoadingsPath::zeros(n, p, dims.n_columns);
    let mut sigma2 = DMatrix::zeros(p, n);
    for (start, end) in windows(n, window) {
        let w = end - start;
        let mut block = panel.values.columns(start, w).into_owned();
        let mut level = nalgebra::DVector::zeros(p);
        if cfg.intercept {
            for j in 0..p {
                level[j] = block.row(j).sum() / w as f64;
                block.row_mut(j).add_scalar_mut(-level[j]);
            }
        }
        let svd = block.clone().svd(true, true);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let rank = svd.singular_values.len().min(k);
        let mut b = DMatrix::zeros(p, dims.n_columns);
        let scale = 1.0 / libm::sqrt(w as f64);
        for c in 0..rank {
            let mut col = u.column(c) * (svd.singular_values[c] * scale);
            let lead = col.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            if lead < 0.0 {
                col.neg_mut();
            }
            col.apply(|v| {
                if v.abs() < threshold {
                    *v = 0.0
                }
            });
            b.column_mut(c).copy_from(&col);
        }
        if let Some(c) = dims.intercept_column {
            b.column_mut(c).copy_from(&level);
        }
        // Residual variance of the unthresholded rank-K fit.
        let mut fit = DMatrix::zeros(p, w);
        let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
        for c in 0..rank {
            fit += u.column(c) * v_t.row(c) * svd.singular_values[c];
        }
        for j in 0..p {
            let r = (block.row(j) - fit.row(j)).norm_squared() / w as f64;
            for t in start..end {
                sigma2[(j, t)] = r.max(VARIANCE_FLOOR);
            }
        }
        for t in start..end {
            loadings.betas[t + 1].copy_from(&b);
        }
    }
    loadings.betas[0] = loadings.betas[1].clone();
    Ok(InitialState { loadings, volatility: VolatilityPath::from_sigma2(sigma2) })
}

/// Per-iteration progress handed to an observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub objective: f64,
    pub relative_change: f64,
    pub fallbacks: usize,
}

/// Runs the EM loop from the given initialization.
pub fn fit(panel: &Panel, cfg: &ModelConfig, init: &InitStrategy) -> Result<FitResult> {
    fit_observed(panel, cfg, init, |_| {})
}

/// As [`fit`], calling `observe` after every iteration.
pub fn fit_observed<F: FnMut(&IterationReport)>(
    panel: &Panel,
    cfg: &ModelConfig,
    init: &InitStrategy,
    mut observe: F,
) -> Result<FitResult> {
    let cfg = validate_config(cfg.clone())?;
    let state = initial_state(panel, &cfg, init)?;
    let dynamics = FactorDynamics::from_config(&cfg);
    let priors = ColumnPrior::for_config(&cfg);

    let mut loadings = state.loadings;
    let mut vol = state.volatility;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for iteration in 1..=cfg.max_iter {
        let fs = kalman_filter_with(panel, &loadings, &vol, &dynamics)?;
        let moments = kalman_smoother_with(&fs, &dynamics)?;
        update_indicators(&mut loadings, &priors);
        let (star, stats) = sweep_loadings(&loadings, &moments, panel, &vol, &priors)?;

        let ffbs = ffbs_forward(panel, &star, &fs, &vol, &cfg)?;
        let new_vol = extract_modes(&ffbs_backward(&ffbs, &cfg))?;

        let objective = eval_surrogate_with(panel, &star, &new_vol, &moments, &priors)?;
        let relative_change = trace
            .last()
            .map_or(f64::INFINITY, |prev| (objective - prev).abs() / prev.abs().max(1.0));
        trace.push(objective);

        let rot = fit_rotation(&moments, &cfg)?;
        loadings = rotate_loadings(&star, &rot)?;
        vol = new_vol;

        observe(&IterationReport { iteration, objective, relative_change, fallbacks: stats.fallbacks });
        if relative_change < cfg.tol {
            converged = true;
            break;
        }
    }

    let fs = kalman_filter_with(panel, &loadings, &vol, &dynamics)?;
    let moments = kalman_smoother_with(&fs, &dynamics)?;
    update_indicators(&mut loadings, &priors);
    Ok(FitResult {
        iterations_run: trace.len(),
        loadings,
        volatility: vol,
        moments,
        objective_trace: trace,
        converged,
        intercept: cfg.intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_layout() {
        assert_eq!(windows(10, 4), alloc::vec![(0, 4), (4, 8), (6, 10)]);
        assert_eq!(windows(8, 4), alloc::vec![(0, 4), (4, 8)]);
        assert_eq!(windows(5, 5), alloc::vec![(0, 5)]);
    }

    #[test]
    fn zeros_strategy_dimensions() {
        let panel = Panel::from_values(DMatrix::from_fn(3, 6, |j, t| (j * t) as f64)).unwrap();
        let cfg = ModelConfig { k_max: 2, ..Default::default() };
        let l = init_loadings(&panel, &cfg, &InitStrategy::Zeros).unwrap();
        assert_eq!(l.betas.len(), 7);
        assert!(l.betas.iter().all(|b| b.shape() == (3, 2) && b.amax() == 0.0));
        let cfg = ModelConfig { k_max: 2, intercept: true, ..Default::default() };
        let d = attach_intercept(&panel, &cfg);
        assert_eq!((d.n_factors, d.n_columns, d.intercept_column), (2, 3, Some(2)));
        let d = attach_intercept(&panel, &ModelConfig { k_max: 2, ..Default::default() });
        assert_eq!((d.n_columns, d.intercept_column), (2, None));
    }

    #[test]
    fn single_window_is_constant() {
        let panel = Panel::from_values(DMatrix::from_fn(4, 8, |j, t| ((j * 3 + t * 5) % 7) as f64 - 3.0)).unwrap();
        let cfg = ModelConfig { k_max: 2, ..Default::default() };
        let l = init_loadings(&panel, &cfg, &InitStrategy::SvdThreshold { window: 8, threshold: 0.0 }).unwrap();
        assert!(l.betas.iter().all(|b| b == &l.betas[0]));
        assert!(l.betas[0].amax() > 0.0);
    }

    #[test]
    fn rank_one_data_recovers_direction() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, -1.0, 2.0, 0.7, -0.4, 1.1];
        let panel = Panel::from_values(DMatrix::from_fn(4, 6, |j, t| u[j] * v[t])).unwrap();
        let cfg = ModelConfig { k_max: 3, ..Default::default() };
        let l = init_loadings(&panel, &cfg, &InitStrategy::SvdThreshold { window: 6, threshold: 0.1 }).unwrap();
        let b = &l.betas[3];
        let ratio = b[(0, 0)] / u[0];
        for j in 0..4 {
            assert!((b[(j, 0)] - ratio * u[j]).abs() < 1e-10);
        }
        assert_eq!(b.columns(1, 2).amax(), 0.0);
        // Largest-magnitude entry is positive.
        assert!(b[(3, 0)] > 0.0);
    }

    #[test]
    fn bad_window_rejected() {
        let panel = Panel::from_values(DMatrix::from_element(2, 4, 1.0)).unwrap();
        let cfg = ModelConfig { k_max: 1, ..Default::default() };
        assert!(matches!(
            init_loadings(&panel, &cfg, &InitStrategy::SvdThreshold { window: 5, threshold: 0.1 }),
            Err(Error::InvalidInit(_))
        ));
    }

    #[test]
    fn zero_data_stays_zero() {
        let panel = Panel::from_values(DMatrix::zeros(3, 10)).unwrap();
        let cfg = ModelConfig { k_max: 2, ..Default::default() };
        let fit = fit(&panel, &cfg, &InitStrategy::Zeros).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations_run <= 2);
        assert!(fit.loadings.betas.iter().all(|b| b.amax() == 0.0));
        assert_eq!(fit.objective_trace.len(), fit.iterations_run);
    }
}
