//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use dsfa_core::{LoadingsPath, Panel, VolatilityPath};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small linear-Gaussian state-space instance.
pub struct StateSpaceCase {
    pub panel: Panel,
    pub loadings: LoadingsPath,
    pub vol: VolatilityPath,
    pub phi: f64,
    pub innov_var: f64,
    pub init_var: f64,
}

pub fn random_state_space(seed: u64) -> StateSpaceCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8usize);
    let k = rng.random_range(1..=3usize);
    let p = rng.random_range(2..=4usize);
    let values = DMatrix::from_fn(p, n, |_, _| rng.random_range(-2.0..2.0));
    let mut loadings = LoadingsPath::zeros(n, p, k);
    for b in loadings.betas.iter_mut() {
        *b = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.5..1.5));
    }
    let sigma2 = DMatrix::from_fn(p, n, |_, _| rng.random_range(0.3..2.0));
    StateSpaceCase {
        panel: Panel::from_values(values).unwrap(),
        loadings,
        vol: VolatilityPath::from_sigma2(sigma2),
        phi: rng.random_range(0.2..0.97),
        innov_var: rng.random_range(0.05..1.0),
        init_var: rng.random_range(0.5..2.0),
    }
}

/// Posterior moments of `(omega_0, ..., omega_T)` from one joint Gaussian
/// conditioning step on the stacked observations.
pub struct JointMoments {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    /// `lag[t - 1] = Cov(omega_t, omega_{t-1} | Y)`.
    pub lag: Vec<DMatrix<f64>>,
}

pub fn joint_gaussian_moments(case: &StateSpaceCase) -> JointMoments {
    let (p, n) = case.panel.values.shape();
    let k = case.loadings.n_factors();
    let dim = (n + 1) * k;
    // Prior covariance of the stacked state: Cov(w_s, w_t) = phi^|t-s| Var(w_min(s,t)).
    let mut var = vec![case.init_var];
    for t in 1..=n {
        var.push(case.phi * case.phi * var[t - 1] + case.innov_var);
    }
    let mut prior = DMatrix::zeros(dim, dim);
    for s in 0..=n {
        for t in 0..=n {
            let lo = s.min(t);
            let c = case.phi.powi((s as i32 - t as i32).abs()) * var[lo];
            for a in 0..k {
                prior[(s * k + a, t * k + a)] = c;
            }
        }
    }
    let mut h = DMatrix::zeros(n * p, dim);
    let mut noise = DMatrix::zeros(n * p, n * p);
    let mut y = DVector::zeros(n * p);
    for t in 1..=n {
        for j in 0..p {
            let row = (t - 1) * p + j;
            y[row] = case.panel.values[(j, t - 1)];
            noise[(row, row)] = case.vol.sigma2[(j, t - 1)];
            for a in 0..k {
                h[(row, t * k + a)] = case.loadings.betas[t][(j, a)];
            }
        }
    }
    let s = &h * &prior * h.transpose() + noise;
    let s_inv = s.try_inverse().unwrap();
    let gain = &prior * h.transpose() * s_inv;
    let mean = &gain * y;
    let cov = &prior - &gain * &h * &prior;
    let block = |s: usize, t: usize| cov.view((s * k, t * k), (k, k)).into_owned();
    JointMoments {
        means: (0..=n).map(|t| mean.rows(t * k, k).into_owned()).collect(),
        covs: (0..=n).map(|t| block(t, t)).collect(),
        lag: (1..=n).map(|t| block(t, t - 1)).collect(),
    }
}

/// Golden-section minimizer on `[lo, hi]`.
pub fn golden<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-11 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Minimizer of a function that is convex on each half-line but may have a
/// kink or two wells around zero.
pub fn golden_split<F: Fn(f64) -> f64>(f: F, reach: f64) -> f64 {
    let neg = golden(&f, -reach, 0.0);
    let pos = golden(&f, 0.0, reach);
    [neg, 0.0, pos].into_iter().fold(f64::NAN, |best, x| if best.is_nan() || f(x) < f(best) { x } else { best })
}

/// Log density of `N(0, cov)` at `y`.
pub fn gaussian_logpdf(y: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let ch = cov.clone().cholesky().expect("covariance must be positive definite");
    let l = ch.l();
    let z = l.solve_lower_triangular(y).unwrap();
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
}

/// A random single-coordinate problem with a positive denominator.
#[derive(Debug, Clone, Copy)]
pub struct CoordinateCase {
    pub terms: dsfa_core::loadings::CoordinateTerms,
    pub params: dsfa_core::dss::DssParams,
}

pub fn random_coordinate_case(rng: &mut ChaCha8Rng) -> CoordinateCase {
    use dsfa_core::dss::DssParams;
    use dsfa_core::loadings::{coordinate_solution, CoordinateTerms, NextTerms};
    loop {
        let phi1 = rng.random_range(0.5..0.99);
        let params = DssParams {
            theta: rng.random_range(0.1..0.95),
            lambda0: rng.random_range(0.3..2.0),
            lambda1: rng.random_range(0.1..1.0) * (1.0 - phi1 * phi1) * 10.0,
            phi0: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-0.5..0.5) },
            phi1,
        };
        let curvature = rng.random_range(0.1..5.0);
        let terms = CoordinateTerms {
            zz: rng.random_range(-5.0..5.0),
            curvature,
            beta_prev: rng.random_range(-3.0..3.0),
            gamma: rng.random_range(0.0..1.0),
            next: rng.random_bool(0.8).then(|| NextTerms {
                beta: rng.random_range(-3.0..3.0),
                gamma: rng.random_range(0.0..1.0),
                theta: rng.random_range(0.0..1.0),
            }),
        };
        if coordinate_solution(&terms, &params).denom > 0.0 {
            return CoordinateCase { terms, params };
        }
    }
}

/// One-step-late surrogate of a single coordinate, written from the prior:
/// Gaussian fit, retrospective slab/spike penalty, prospective slab term,
/// and the mixing-weight log-odds frozen at their previous-iterate weights.
pub fn coordinate_surrogate(case: &CoordinateCase, b: f64) -> f64 {
    let t = &case.terms;
    let p = &case.params;
    let mu = |prev: f64| p.phi0 + p.phi1 * (prev - p.phi0);
    let mut f = 0.5 * t.curvature * b * b - t.zz * b
        + t.gamma * (b - mu(t.beta_prev)).powi(2) / (2.0 * p.lambda1)
        + (1.0 - t.gamma) * p.lambda0 * b.abs();
    if let Some(n) = t.next {
        // d/d(log-odds) of -g' ln theta - (1 - g') ln(1 - theta) is -(g'(1 - theta) - (1 - g') theta).
        let weight = n.gamma * (1.0 - n.theta) - (1.0 - n.gamma) * n.theta;
        let log_odds = -(b - p.phi0).powi(2) * (1.0 - p.phi1 * p.phi1) / (2.0 * p.lambda1) + p.lambda0 * b.abs();
        f += n.gamma * (n.beta - mu(b)).powi(2) / (2.0 * p.lambda1) - weight * log_odds;
    }
    f
}
