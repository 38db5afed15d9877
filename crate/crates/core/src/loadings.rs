//! Loading updates: zero-augmented regressions built from the smoothed factor
//! moments, indicator expectations, and closed-form one-site updates swept
//! over `(j, k, t)`.
//!
//! For series `j` at time `t` the expected fit term is
//! `((y - omega'b)^2 + b'Vb) / sigma^2 = ||y~ - Omega b||^2 / sigma^2` with
//! `Omega = [omega'; sqrt(s_1) u_1'; ...]` from the eigendecomposition of `V`
//! and `y~ = (y, 0, ..., 0)`. The sweep keeps the augmented residual
//! `y~ - Omega b` current so every coordinate costs `O(K)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dss::{self, DssParams};
use crate::error::{Error, Result};
use crate::minimize::golden_section;
use crate::model::{LoadingsPath, ModelConfig, Panel, SmoothedMoments, VolatilityPath};

/// Prior attached to one loading column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnPrior {
    /// Dynamic spike-and-slab.
    Dss(DssParams),
    /// Gaussian random walk with `beta_0 ~ N(0, init_var)`, always active.
    RandomWalk { innov_var: f64, init_var: f64 },
}

impl ColumnPrior {
    /// Column priors for `cfg`: `k_max` DSS columns, then the intercept.
    pub fn for_config(cfg: &ModelConfig) -> Vec<ColumnPrior> {
        let mut priors = vec![ColumnPrior::Dss(DssParams::from_config(cfg)); cfg.k_max];
        if cfg.intercept {
            priors.push(ColumnPrior::RandomWalk { innov_var: cfg.intercept_var, init_var: 1.0 });
        }
        priors
    }
}

/// Augmented design `Omega^t` for `t = 1..=T` (`design[t - 1]`), shared by
/// all series.
pub fn build_design(moments: &SmoothedMoments) -> Vec<DMatrix<f64>> {
    (1..=moments.n_times()).map(|t| design_at(&moments.means[t], &moments.covs[t])).collect()
}

fn design_at(mean: &DVector<f64>, cov: &DMatrix<f64>) -> DMatrix<f64> {
    let k = mean.len();
    let mut omega = DMatrix::zeros(k + 1, k);
    omega.row_mut(0).copy_from(&mean.transpose());
    let eig = cov.clone().symmetric_eigen();
    for r in 0..k {
        let s = eig.eigenvalues[r];
        let scale = if s > 0.0 { libm::sqrt(s) } else { 0.0 };
        for c in 0..k {
            omega[(r + 1, c)] = scale * eig.eigenvectors[(c, r)];
        }
    }
    omega
}

/// Zero-augmented regression of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRegression {
    /// `responses[t - 1] = (y_jt, 0, ..., 0)`.
    pub responses: Vec<DVector<f64>>,
    /// `design[t - 1] = Omega^t`.
    pub design: Vec<DMatrix<f64>>,
}

impl AugmentedRegression {
    /// `||y~ - Omega b||^2` at time `t` (1-based).
    pub fn residual_ss(&self, t: usize, b: &DVector<f64>) -> f64 {
        (&self.responses[t - 1] - &self.design[t - 1] * b).norm_squared()
    }
}

pub fn build_augmented(moments: &SmoothedMoments, panel: &Panel, j: usize) -> AugmentedRegression {
    let design = build_design(moments);
    augmented_from_design(design, panel, j)
}

fn augmented_from_design(design: Vec<DMatrix<f64>>, panel: &Panel, j: usize) -> AugmentedRegression {
    let responses = design
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut y = DVector::zeros(d.nrows());
            y[0] = panel.y(j, i + 1);
            y
        })
        .collect();
    AugmentedRegression { responses, design }
}

/// Mixing weights `theta^t = theta(beta^{t-1})` for `t = 1..=T`, with
/// `thetas[0]` holding the global weight. Random-walk columns get 1.
pub fn mixing_weights(loadings: &LoadingsPath, priors: &[ColumnPrior]) -> Vec<DMatrix<f64>> {
    let (p, k) = loadings.betas[0].shape();
    let mut thetas = Vec::with_capacity(loadings.betas.len());
    thetas.push(DMatrix::from_fn(p, k, |_, c| match priors[c] {
        ColumnPrior::Dss(d) => d.theta,
        ColumnPrior::RandomWalk { .. } => 1.0,
    }));
    for t in 1..loadings.betas.len() {
        let prev = &loadings.betas[t - 1];
        thetas.push(DMatrix::from_fn(p, k, |j, c| match &priors[c] {
            ColumnPrior::Dss(d) => dss::mixing_weight(prev[(j, c)], d),
            ColumnPrior::RandomWalk { .. } => 1.0,
        }));
    }
    thetas
}

/// E-step for the indicators: replaces `loadings.gammas` with `<gamma^t>`
/// evaluated at the current loadings and returns the mixing weights used.
pub fn update_indicators(loadings: &mut LoadingsPath, priors: &[ColumnPrior]) -> Vec<DMatrix<f64>> {
    let thetas = mixing_weights(loadings, priors);
    let (p, k) = loadings.betas[0].shape();
    for t in 0..loadings.betas.len() {
        let gamma = DMatrix::from_fn(p, k, |j, c| match &priors[c] {
            ColumnPrior::Dss(d) if t == 0 => dss::initial_indicator_expectation(loadings.betas[0][(j, c)], d),
            ColumnPrior::Dss(d) => dss::indicator_expectation_given_weight(
                loadings.betas[t][(j, c)],
                loadings.betas[t - 1][(j, c)],
                thetas[t][(j, c)],
                d,
            ),
            ColumnPrior::RandomWalk { .. } => 1.0,
        });
        loadings.gammas[t] = gamma;
    }
    thetas
}

/// Prospective terms of an interior coordinate (`t < T`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextTerms {
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
}

/// Everything the one-site update for `beta_jk^t` (`t >= 1`) depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateTerms {
    /// `(1/sigma^2) sum_r (y~_r - sum_{l != k} Omega_rl b_l) Omega_rk`.
    pub zz: f64,
    /// `(1/sigma^2) sum_r Omega_rk^2`.
    pub curvature: f64,
    pub beta_prev: f64,
    pub gamma: f64,
    pub next: Option<NextTerms>,
}

/// Closed-form pieces `beta = [|Z| - Lambda]_+ sign(Z) / D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateSolution {
    pub z: f64,
    pub lambda: f64,
    pub denom: f64,
}

impl CoordinateSolution {
    /// One-step-late objective `D b^2 / 2 - Z b + Lambda |b|`, minimized by
    /// the update (up to an additive constant).
    pub fn objective(&self, beta: f64) -> f64 {
        0.5 * self.denom * beta * beta - self.z * beta + self.lambda * beta.abs()
    }

    /// Soft-thresholded closed form with the threshold clamped at zero.
    pub fn clamped(&self) -> f64 {
        soft_threshold(self.z, self.lambda.max(0.0)) / self.denom
    }
}

/// Result of a one-site update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateUpdate {
    pub value: f64,
    /// True when the numerical fallback replaced the clamped closed form.
    pub fallback: bool,
}

#[inline]
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    let m = z.abs() - lambda;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

/// Objective improvement above which the numerical fallback is preferred.
pub const FALLBACK_GAIN: f64 = 1e-12;

pub fn coordinate_solution(terms: &CoordinateTerms, p: &DssParams) -> CoordinateSolution {
    let l1 = p.lambda1;
    let mut w = terms.curvature + terms.gamma / l1;
    let mut z = terms.zz + terms.gamma * p.slab_mean(terms.beta_prev) / l1;
    let mut m = 0.0;
    if let Some(n) = terms.next {
        m = n.gamma * (1.0 - n.theta) - (1.0 - n.gamma) * n.theta;
        w += n.gamma * p.phi1 * p.phi1 / l1;
        z += n.gamma * p.phi1 * (n.beta - p.phi0 * (1.0 - p.phi1)) / l1
            + m * (1.0 - p.phi1 * p.phi1) * p.phi0 / l1;
    }
    CoordinateSolution {
        z,
        lambda: p.lambda0 * ((1.0 - terms.gamma) - m),
        denom: w + (1.0 - p.phi1 * p.phi1) * m / l1,
    }
}

/// One-site DSS update for `t >= 1`. A negative threshold is clamped at
/// zero; the clamped value is then checked against the exact minimizer of
/// the objective on each half-line (it is quadratic on both) and replaced
/// when that improves the objective by more than [`FALLBACK_GAIN`].
pub fn solve_coordinate(
    terms: &CoordinateTerms,
    p: &DssParams,
    site: (usize, usize, usize),
) -> Result<CoordinateUpdate> {
    let sol = coordinate_solution(terms, p);
    if !(sol.denom > 0.0) {
        return Err(Error::NonPositiveDenominator { j: site.0, k: site.1, t: site.2, value: sol.denom });
    }
    let value = sol.clamped();
    if sol.lambda >= 0.0 {
        return Ok(CoordinateUpdate { value, fallback: false });
    }
    let pos = ((sol.z - sol.lambda) / sol.denom).max(0.0);
    let neg = ((sol.z + sol.lambda) / sol.denom).min(0.0);
    let best = if sol.objective(pos) <= sol.objective(neg) { pos } else { neg };
    let gain = sol.objective(value) - sol.objective(best);
    if gain > FALLBACK_GAIN * (1.0 + sol.objective(value).abs()) {
        Ok(CoordinateUpdate { value: best, fallback: true })
    } else {
        Ok(CoordinateUpdate { value, fallback: false })
    }
}

/// Coordinate objective with the mixing weight `theta^{t+1}` evaluated at
/// `beta` instead of held at its one-step-late value (up to a constant):
/// `curv b^2 / 2 - zz b + g (b - mu(b_prev))^2 / (2 l1) + (1 - g) l0 |b|
///  + g' (b' - mu(b))^2 / (2 l1) - g' ln theta(b) - (1 - g') ln(1 - theta(b))`.
pub fn exact_objective(terms: &CoordinateTerms, p: &DssParams, beta: f64) -> f64 {
    let d = beta - p.slab_mean(terms.beta_prev);
    let mut f = 0.5 * terms.curvature * beta * beta - terms.zz * beta
        + terms.gamma * d * d / (2.0 * p.lambda1)
        + (1.0 - terms.gamma) * p.lambda0 * beta.abs();
    if let Some(n) = terms.next {
        let e = n.beta - p.slab_mean(beta);
        let odds = dss::mixing_log_odds(beta, p);
        f += n.gamma * e * e / (2.0 * p.lambda1)
            + n.gamma * softplus(-odds)
            + (1.0 - n.gamma) * softplus(odds);
    }
    f
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Minimizer of [`exact_objective`] by a grid scan refined with a
/// golden-section search; `current` is always a candidate, so the result
/// never scores worse than it.
pub fn minimize_exact(terms: &CoordinateTerms, p: &DssParams, current: f64) -> f64 {
    const CELLS: usize = 200;
    let f = |b: f64| exact_objective(terms, p, b);
    let reach = 2.0 * current.abs() + 10.0 * libm::sqrt(p.stationary_var());
    let step = 2.0 * reach / CELLS as f64;
    let (mut best, mut fbest) = (current, f(current));
    let mut best_cell = None;
    for i in 0..=CELLS {
        let b = -reach + step * i as f64;
        let v = f(b);
        if v < fbest {
            best = b;
            fbest = v;
            best_cell = Some(b);
        }
    }
    if let Some(c) = best_cell {
        // Refine on each side of zero separately: the objective has a kink there.
        let (lo, hi) = (c - step, c + step);
        let parts = if lo < 0.0 && hi > 0.0 { [(lo, 0.0), (0.0, hi)] } else { [(lo, hi), (lo, hi)] };
        for (a, b) in parts {
            let x = golden_section(f, a, b, 1e-10);
            let v = f(x);
            if v < fbest {
                best = x;
                fbest = v;
            }
        }
    }
    best
}

/// Random-walk column update for `t >= 1`: a ridge step toward the
/// neighbouring values.
pub fn solve_random_walk(terms: &CoordinateTerms, innov_var: f64) -> f64 {
    let mut w = terms.curvature + 1.0 / innov_var;
    let mut z = terms.zz + terms.beta_prev / innov_var;
    if let Some(n) = terms.next {
        w += 1.0 / innov_var;
        z += n.beta / innov_var;
    }
    z / w
}

/// Terms for coordinate `(j, k, t)` recomputed from scratch.
pub fn coordinate_terms(
    j: usize,
    k: usize,
    t: usize,
    state: &LoadingsPath,
    thetas: &[DMatrix<f64>],
    aug: &AugmentedRegression,
    vol: &VolatilityPath,
) -> CoordinateTerms {
    let n_times = state.n_times();
    let b = state.betas[t].row(j).transpose();
    let design = &aug.design[t - 1];
    let resid = &aug.responses[t - 1] - design * &b;
    let col = design.column(k);
    let inv = 1.0 / vol.var(j, t);
    let curvature = col.norm_squared() * inv;
    CoordinateTerms {
        zz: col.dot(&resid) * inv + curvature * b[k],
        curvature,
        beta_prev: state.betas[t - 1][(j, k)],
        gamma: state.gammas[t][(j, k)],
        next: (t < n_times).then(|| NextTerms {
            beta: state.betas[t + 1][(j, k)],
            gamma: state.gammas[t + 1][(j, k)],
            theta: thetas[t + 1][(j, k)],
        }),
    }
}

/// Closed-form update of `beta_jk^t` for `1 <= t <= T` with the mixing
/// weights of the current iterate.
pub fn update_coefficient(
    j: usize,
    k: usize,
    t: usize,
    state: &LoadingsPath,
    aug: &AugmentedRegression,
    vol: &VolatilityPath,
    p: &DssParams,
) -> Result<CoordinateUpdate> {
    let prior = [ColumnPrior::Dss(*p)];
    let column = column_path(state, j, k);
    let thetas = mixing_weights(&column, &prior);
    let terms = coordinate_terms(j, k, t, state, &widen(&thetas, state, k), aug, vol);
    solve_coordinate(&terms, p, (j, k, t))
}

/// Single-entry path holding coordinate `(j, k)`.
fn column_path(state: &LoadingsPath, j: usize, k: usize) -> LoadingsPath {
    LoadingsPath {
        betas: state.betas.iter().map(|b| DMatrix::from_element(1, 1, b[(j, k)])).collect(),
        gammas: state.gammas.iter().map(|g| DMatrix::from_element(1, 1, g[(j, k)])).collect(),
    }
}

fn widen(thetas: &[DMatrix<f64>], state: &LoadingsPath, k: usize) -> Vec<DMatrix<f64>> {
    let (p, kk) = state.betas[0].shape();
    thetas
        .iter()
        .map(|th| {
            let mut m = DMatrix::zeros(p, kk);
            m.column_mut(k).fill(th[(0, 0)]);
            m
        })
        .collect()
}

/// Result of the `t = 0` update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialUpdate {
    pub value: f64,
    /// True when both indicator weights vanish and the update is undefined.
    pub degenerate: bool,
}

/// Closed-form update of the initial condition `beta_jk^0` given
/// `beta_jk^1`:
/// `[|Z0| - (1 - g0) lambda0 lambda1]_+ sign(Z0) / (g1 phi1^2 + g0 (1 - phi1^2))`
/// with `Z0 = g0 (1 - phi1^2) phi0 + g1 phi1 (beta^1 - phi0 (1 - phi1))`.
pub fn initial_update(beta1: f64, gamma0: f64, gamma1: f64, p: &DssParams) -> InitialUpdate {
    let a = 1.0 - p.phi1 * p.phi1;
    let denom = gamma1 * p.phi1 * p.phi1 + gamma0 * a;
    if !(denom > 0.0) {
        return InitialUpdate { value: 0.0, degenerate: true };
    }
    let z = gamma0 * a * p.phi0 + gamma1 * p.phi1 * (beta1 - p.phi0 * (1.0 - p.phi1));
    let value = soft_threshold(z, (1.0 - gamma0) * p.lambda0 * p.lambda1) / denom;
    InitialUpdate { value, degenerate: false }
}

pub fn update_initial(j: usize, k: usize, state: &LoadingsPath, p: &DssParams) -> InitialUpdate {
    initial_update(state.betas[1][(j, k)], state.gammas[0][(j, k)], state.gammas[1][(j, k)], p)
}

/// Exact update of a whole random-walk column given the other columns:
/// minimizes `sum_t (curv_t b_t^2 / 2 - lin_t b_t) + sum_t (b_t - b_{t-1})^2 / (2 v)
/// + b_0^2 / (2 init_var)` over `b_0..b_T` by a tridiagonal solve. `curv`
/// and `lin` are indexed by `t - 1`.
pub fn random_walk_block(curv: &[f64], lin: &[f64], innov_var: f64, init_var: f64, out: &mut [f64]) {
    let n = curv.len();
    let w = 1.0 / innov_var;
    let mut diag: Vec<f64> = Vec::with_capacity(n + 1);
    let mut rhs: Vec<f64> = Vec::with_capacity(n + 1);
    diag.push(1.0 / init_var + w);
    rhs.push(0.0);
    for t in 1..=n {
        diag.push(curv[t - 1] + w + if t < n { w } else { 0.0 });
        rhs.push(lin[t - 1]);
    }
    // Thomas algorithm with constant off-diagonal -w.
    for t in 1..=n {
        let m = -w / diag[t - 1];
        diag[t] += m * w;
        rhs[t] -= m * rhs[t - 1];
    }
    out[n] = rhs[n] / diag[n];
    for t in (0..n).rev() {
        out[t] = (rhs[t] + w * out[t + 1]) / diag[t];
    }
}

/// Diagnostics gathered during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepStats {
    /// Coordinates where the half-line minimizer replaced the clamped form.
    pub fallbacks: usize,
    /// Coordinates whose one-step-late objective had no minimizer
    /// (non-positive denominator) and were minimized numerically instead.
    pub nonconvex: usize,
    pub degenerate_initial: usize,
}

/// One full coordinate sweep, `j` outermost, then `k`, then `t = 0..=T`,
/// with the mixing weights of the input iterate held fixed. Random-walk
/// columns are updated as one block per series. Indicator
/// expectations are read from `state.gammas` and carried over unchanged.
pub fn sweep_loadings(
    state: &LoadingsPath,
    moments: &SmoothedMoments,
    panel: &Panel,
    vol: &VolatilityPath,
    priors: &[ColumnPrior],
) -> Result<(LoadingsPath, SweepStats)> {
    let (p, n_times) = panel.values.shape();
    let k = priors.len();
    state.check_dims(n_times, p, k)?;
    if moments.n_times() != n_times || moments.n_factors() != k {
        return Err(Error::DimensionMismatch(alloc::format!(
            "moments are {} x {}, expected {n_times} x {k}",
            moments.n_times(),
            moments.n_factors()
        )));
    }
    let thetas = mixing_weights(state, priors);
    let design = build_design(moments);
    let col_norms: Vec<Vec<f64>> = design
        .iter()
        .map(|d| (0..k).map(|c| d.column(c).norm_squared()).collect())
        .collect();

    let mut out = state.clone();
    let mut stats = SweepStats::default();
    let mut resid: Vec<DVector<f64>> = vec![DVector::zeros(k + 1); n_times];
    let mut path = vec![0.0; n_times + 1];

    for j in 0..p {
        for t in 1..=n_times {
            let b = out.betas[t].row(j).transpose();
            let r = &mut resid[t - 1];
            r.copy_from(&(-(&design[t - 1] * b)));
            r[0] += panel.y(j, t);
        }
        for c in 0..k {
            for (t, v) in path.iter_mut().enumerate() {
                *v = out.betas[t][(j, c)];
            }
            let d = match &priors[c] {
                ColumnPrior::Dss(d) => d,
                ColumnPrior::RandomWalk { innov_var, init_var } => {
                    let old = path.clone();
                    let (curv, lin): (Vec<f64>, Vec<f64>) = (1..=n_times)
                        .map(|t| {
                            let inv = 1.0 / vol.var(j, t);
                            let curvature = col_norms[t - 1][c] * inv;
                            (curvature, design[t - 1].column(c).dot(&resid[t - 1]) * inv + curvature * old[t])
                        })
                        .unzip();
                    random_walk_block(&curv, &lin, *innov_var, *init_var, &mut path);
                    for t in 0..=n_times {
                        out.betas[t][(j, c)] = path[t];
                        if t > 0 && path[t] != old[t] {
                            resid[t - 1].axpy(old[t] - path[t], &design[t - 1].column(c), 1.0);
                        }
                    }
                    continue;
                }
            };
            for t in 0..=n_times {
                let new = if t == 0 {
                    let u = initial_update(path[1], out.gammas[0][(j, c)], out.gammas[1][(j, c)], d);
                    stats.degenerate_initial += usize::from(u.degenerate);
                    u.value
                } else {
                    let inv = 1.0 / vol.var(j, t);
                    let col = design[t - 1].column(c);
                    let curvature = col_norms[t - 1][c] * inv;
                    let terms = CoordinateTerms {
                        zz: col.dot(&resid[t - 1]) * inv + curvature * path[t],
                        curvature,
                        beta_prev: path[t - 1],
                        gamma: out.gammas[t][(j, c)],
                        next: (t < n_times).then(|| NextTerms {
                            beta: path[t + 1],
                            gamma: out.gammas[t + 1][(j, c)],
                            theta: thetas[t + 1][(j, c)],
                        }),
                    };
                    let value = match solve_coordinate(&terms, d, (j, c, t)) {
                        Ok(u) => {
                            stats.fallbacks += usize::from(u.fallback);
                            u.value
                        }
                        Err(Error::NonPositiveDenominator { .. }) => {
                            stats.nonconvex += 1;
                            minimize_exact(&terms, d, path[t])
                        }
                        Err(e) => return Err(e),
                    };
                    let delta = value - path[t];
                    if delta != 0.0 {
                        resid[t - 1].axpy(-delta, &col, 1.0);
                    }
                    value
                };
                path[t] = new;
                out.betas[t][(j, c)] = new;
            }
        }
    }
    Ok((out, stats))
}
