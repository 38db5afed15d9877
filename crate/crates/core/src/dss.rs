//! Dynamic spike-and-slab prior: component densities, the dynamic mixing
//! weight, and the conditional indicator expectations of the E-step.
//!
//! Every two-component posterior is formed from log-densities, so the
//! results stay in `[0, 1]` even when both raw densities underflow.

use core::f64::consts::PI;

use crate::model::ModelConfig;

/// Hyperparameters of one DSS process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DssParams {
    pub theta: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub phi0: f64,
    pub phi1: f64,
}

impl DssParams {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            theta: cfg.theta,
            lambda0: cfg.lambda0,
            lambda1: cfg.lambda1,
            phi0: cfg.phi0,
            phi1: cfg.phi1,
        }
    }

    /// Stationary slab variance `lambda1 / (1 - phi1^2)`.
    pub fn stationary_var(&self) -> f64 {
        self.lambda1 / (1.0 - self.phi1 * self.phi1)
    }

    /// Conditional slab mean `phi0 + phi1 (beta_prev - phi0)`.
    #[inline]
    pub fn slab_mean(&self, beta_prev: f64) -> f64 {
        slab_mean(beta_prev, self.phi0, self.phi1)
    }
}

#[inline]
pub fn slab_mean(beta_prev: f64, phi0: f64, phi1: f64) -> f64 {
    phi0 + phi1 * (beta_prev - phi0)
}

#[inline]
pub fn log_spike_density(beta: f64, lambda0: f64) -> f64 {
    libm::log(lambda0 / 2.0) - lambda0 * beta.abs()
}

#[inline]
pub fn log_gaussian_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * libm::log(2.0 * PI * var) - d * d / (2.0 * var)
}

/// Laplace spike `(lambda0 / 2) exp(-lambda0 |beta|)`.
pub fn spike_density(beta: f64, lambda0: f64) -> f64 {
    libm::exp(log_spike_density(beta, lambda0))
}

/// Gaussian slab with the given mean and variance `lambda1`.
pub fn slab_density(beta: f64, mean: f64, lambda1: f64) -> f64 {
    libm::exp(log_gaussian_density(beta, mean, lambda1))
}

/// Gaussian with mean `phi0` and the stationary slab variance.
pub fn stationary_slab_density(beta: f64, p: &DssParams) -> f64 {
    libm::exp(log_stationary_slab_density(beta, p))
}

#[inline]
pub fn log_stationary_slab_density(beta: f64, p: &DssParams) -> f64 {
    log_gaussian_density(beta, p.phi0, p.stationary_var())
}

/// Posterior weight of the first component given log prior weights and
/// log-likelihoods: `w1 / (w1 + w0)` evaluated as a logistic function of the
/// log-odds. Returns `fallback` when both components are impossible.
#[inline]
fn two_component_posterior(log_a: f64, log_b: f64, fallback: f64) -> f64 {
    if log_a == f64::NEG_INFINITY && log_b == f64::NEG_INFINITY {
        return fallback;
    }
    let d = log_a - log_b;
    if d.is_nan() {
        return fallback;
    }
    if d >= 0.0 {
        1.0 / (1.0 + libm::exp(-d))
    } else {
        let e = libm::exp(d);
        e / (1.0 + e)
    }
}

#[inline]
fn ln_weight(w: f64) -> f64 {
    if w <= 0.0 {
        f64::NEG_INFINITY
    } else {
        libm::log(w)
    }
}

/// Dynamic mixing weight `theta(beta_prev)`: the probability that the lagged
/// coefficient came from the stationary slab rather than the spike.
pub fn mixing_weight(beta_prev: f64, p: &DssParams) -> f64 {
    two_component_posterior(
        ln_weight(p.theta) + log_stationary_slab_density(beta_prev, p),
        ln_weight(1.0 - p.theta) + log_spike_density(beta_prev, p.lambda0),
        p.theta,
    )
}

/// `ln(theta / (1 - theta))` of the mixing weight at `beta_prev`.
pub fn mixing_log_odds(beta_prev: f64, p: &DssParams) -> f64 {
    ln_weight(p.theta) + log_stationary_slab_density(beta_prev, p)
        - ln_weight(1.0 - p.theta)
        - log_spike_density(beta_prev, p.lambda0)
}

/// `<gamma^t>`: posterior slab membership of `beta_t` given the lagged
/// coefficient, with the prior weight `theta(beta_prev)`.
pub fn indicator_expectation(beta_t: f64, beta_prev: f64, p: &DssParams) -> f64 {
    let theta = mixing_weight(beta_prev, p);
    indicator_expectation_given_weight(beta_t, beta_prev, theta, p)
}

/// As [`indicator_expectation`] with the mixing weight already evaluated.
pub fn indicator_expectation_given_weight(beta_t: f64, beta_prev: f64, theta: f64, p: &DssParams) -> f64 {
    two_component_posterior(
        ln_weight(theta) + log_gaussian_density(beta_t, p.slab_mean(beta_prev), p.lambda1),
        ln_weight(1.0 - theta) + log_spike_density(beta_t, p.lambda0),
        theta,
    )
}

/// `<gamma^0>`: stationary slab versus spike with prior weight `Theta`.
pub fn initial_indicator_expectation(beta0: f64, p: &DssParams) -> f64 {
    two_component_posterior(
        ln_weight(p.theta) + log_stationary_slab_density(beta0, p),
        ln_weight(1.0 - p.theta) + log_spike_density(beta0, p.lambda0),
        p.theta,
    )
}
