//! Synthetic benchmark with block-structured, autoregressive loadings and
//! structural breaks, plus the comparison metrics for estimated loadings.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LoadingsPath, Panel};

/// Support threshold used before comparing loading matrices.
pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakAction {
    Deactivate,
    Activate,
}

/// A change in the active set: `factor` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakEvent {
    pub time: usize,
    pub factor: usize,
    pub action: BreakAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub p: usize,
    pub k_true: usize,
    pub k_candidate: usize,
    pub t_total: usize,
    pub break_times: Vec<BreakEvent>,
    pub ar_phi: f64,
    pub ar_var: f64,
    pub beta_init: f64,
    pub block: usize,
    pub overlap: usize,
    pub train_len: usize,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            p: 100,
            k_true: 5,
            k_candidate: 10,
            t_total: 400,
            break_times: vec![
                BreakEvent { time: 101, factor: 3, action: BreakAction::Deactivate },
                BreakEvent { time: 201, factor: 5, action: BreakAction::Deactivate },
                BreakEvent { time: 301, factor: 5, action: BreakAction::Activate },
            ],
            ar_phi: 0.99,
            ar_var: 0.0025,
            beta_init: 2.0,
            block: 28,
            overlap: 10,
            train_len: 100,
            seed: 0,
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.p < 2 || self.t_total < 2 {
            return bad(format!("need p >= 2 and t_total >= 2, got {} and {}", self.p, self.t_total));
        }
        if self.k_true == 0 || self.k_true > self.k_candidate {
            return bad(format!("k_true {} not in 1..={}", self.k_true, self.k_candidate));
        }
        if self.overlap >= self.block {
            return bad(format!("overlap {} must be below block {}", self.overlap, self.block));
        }
        let span = self.block * self.k_true - self.overlap * (self.k_true - 1);
        if span > self.p {
            return bad(format!("block layout needs {span} series, only {} available", self.p));
        }
        let mut last = 1;
        for b in &self.break_times {
            if b.time <= 1 || b.time > self.t_total {
                return bad(format!("break time {} not in (1, {}]", b.time, self.t_total));
            }
            if b.time < last {
                return bad(String::from("break times must be ordered"));
            }
            if b.factor == 0 || b.factor > self.k_candidate {
                return bad(format!("break factor {} not in 1..={}", b.factor, self.k_candidate));
            }
            last = b.time;
        }
        if !(self.ar_var >= 0.0) || !self.ar_phi.is_finite() || !self.beta_init.is_finite() {
            return bad(String::from("loading dynamics must be finite with ar_var >= 0"));
        }
        Ok(())
    }

    /// Rows loading on factor `k` (0-based), clipped to the panel.
    pub fn block_rows(&self, k: usize) -> core::ops::Range<usize> {
        let start = (k * (self.block - self.overlap)).min(self.p);
        start..(start + self.block).min(self.p)
    }

    /// Active flags per factor at time `t` (1-based) implied by the breaks.
    pub fn active_at(&self, t: usize) -> Vec<bool> {
        let mut active: Vec<bool> = (0..self.k_candidate).map(|k| k < self.k_true).collect();
        for b in self.break_times.iter().filter(|b| b.time <= t) {
            active[b.factor - 1] = b.action == BreakAction::Activate;
        }
        active
    }
}

/// Simulated panel with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// `P x (train_len + t_total)`; the first `train_len` columns form the
    /// training prefix generated with the loadings of time 1.
    pub panel: Panel,
    /// Loadings over the whole panel (index 0 is the initial condition),
    /// with indicator expectations set to the true 0/1 support.
    pub true_loadings: LoadingsPath,
    /// `(train_len + t_total) x k_candidate`.
    pub true_factors: DMatrix<f64>,
    pub train_len: usize,
}

impl SimOutput {
    /// Panel column index (1-based time of the fit) of scenario time `t`.
    pub fn panel_time(&self, t: usize) -> usize {
        self.train_len + t
    }
}

pub fn simulate(sc: &SimScenario) -> Result<SimOutput> {
    sc.validate()?;
    let (p, k) = (sc.p, sc.k_candidate);
    let n = sc.train_len + sc.t_total;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let ar_sd = libm::sqrt(sc.ar_var);

    // Scenario-time loadings B_1..B_T.
    let mut path: Vec<DMatrix<f64>> = Vec::with_capacity(sc.t_total);
    let mut prev_active = vec![false; k];
    for t in 1..=sc.t_total {
        let active = sc.active_at(t);
        let mut b = DMatrix::zeros(p, k);
        for c in 0..k {
            if !active[c] {
                continue;
            }
            for j in sc.block_rows(c) {
                b[(j, c)] = if t == 1 || !prev_active[c] {
                    sc.beta_init
                } else {
                    sc.ar_phi * path[t - 2][(j, c)] + ar_sd * normal()
                };
            }
        }
        path.push(b);
        prev_active = active;
    }

    let mut betas = Vec::with_capacity(n + 1);
    for _ in 0..=sc.train_len {
        betas.push(path[0].clone());
    }
    betas.extend(path);
    let gammas = betas
        .iter()
        .enumerate()
        .map(|(t, _)| {
            let active = sc.active_at(t.saturating_sub(sc.train_len).max(1));
            DMatrix::from_fn(p, k, |j, c| if active[c] && sc.block_rows(c).contains(&j) { 1.0 } else { 0.0 })
        })
        .collect();
    let true_loadings = LoadingsPath { betas, gammas };

    let mut factors = DMatrix::zeros(n, k);
    let mut values = DMatrix::zeros(p, n);
    for t in 1..=n {
        for c in 0..k {
            factors[(t - 1, c)] = normal();
        }
        let w = factors.row(t - 1).transpose();
        let signal = &true_loadings.betas[t] * w;
        for j in 0..p {
            values[(j, t - 1)] = signal[j] + normal();
        }
    }
    let names = (1..=p).map(|j| format!("s{j}")).collect();
    let times = (1..=n).map(|t| format!("{}", t as i64 - sc.train_len as i64)).collect();
    let panel = Panel::new(values, names, times)?;
    Ok(SimOutput { panel, true_loadings, true_factors: factors, train_len: sc.train_len })
}

/// Columns reordered by their thresholded support read top to bottom as a
/// binary number, largest first (all-zero columns last); ties go to the
/// larger column norm, then to the original position.
pub fn left_order(b: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let order = left_order_permutation(b, threshold);
    DMatrix::from_fn(b.nrows(), b.ncols(), |r, c| b[(r, order[c])])
}

pub fn left_order_permutation(b: &DMatrix<f64>, threshold: f64) -> Vec<usize> {
    let support = |c: usize| -> Vec<bool> { b.column(c).iter().map(|v| v.abs() > threshold).collect() };
    let supports: Vec<Vec<bool>> = (0..b.ncols()).map(support).collect();
    let norms: Vec<f64> = (0..b.ncols()).map(|c| b.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..b.ncols()).collect();
    order.sort_by(|&x, &y| {
        supports[y]
            .cmp(&supports[x])
            .then(norms[y].partial_cmp(&norms[x]).unwrap_or(core::cmp::Ordering::Equal))
            .then(x.cmp(&y))
    });
    order
}

/// Root mean squared difference after left-ordering both matrices and
/// flipping each estimated column's sign when that brings it closer to the
/// paired true column.
pub fn rmse(true_b: &DMatrix<f64>, est_b: &DMatrix<f64>) -> Result<f64> {
    if true_b.shape() != est_b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "true loadings are {:?}, estimate is {:?}",
            true_b.shape(),
            est_b.shape()
        )));
    }
    let (p, k) = true_b.shape();
    if p * k == 0 {
        return Ok(0.0);
    }
    let t = left_order(true_b, DEFAULT_THRESHOLD);
    let e = left_order(est_b, DEFAULT_THRESHOLD);
    let mut total = 0.0;
    for c in 0..k {
        let same = (t.column(c) - e.column(c)).norm_squared();
        let flipped = (t.column(c) + e.column(c)).norm_squared();
        total += same.min(flipped);
    }
    Ok(libm::sqrt(total / (p * k) as f64))
}

/// Columns with at least two entries above `threshold` in absolute value.
pub fn count_active_factors(b: &DMatrix<f64>, threshold: f64) -> usize {
    (0..b.ncols()).filter(|&c| b.column(c).iter().filter(|v| v.abs() > threshold).count() >= 2).count()
}

/// Mean number of loadings per series above `threshold` in absolute value.
pub fn avg_active_per_series(b: &DMatrix<f64>, threshold: f64) -> f64 {
    if b.nrows() == 0 {
        return 0.0;
    }
    let total = b.iter().filter(|v| v.abs() > threshold).count();
    total as f64 / b.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> SimScenario {
        SimScenario { p: 20, k_true: 3, k_candidate: 4, t_total: 30, block: 8, overlap: 2, train_len: 5, break_times: vec![
            BreakEvent { time: 11, factor: 2, action: BreakAction::Deactivate },
            BreakEvent { time: 21, factor: 2, action: BreakAction::Activate },
        ], ..Default::default() }
    }

    #[test]
    fn paper_layout_at_first_period() {
        let mut sc = SimScenario { t_total: 120, ..Default::default() };
        sc.break_times.truncate(1);
        let out = simulate(&sc).unwrap();
        let b1 = &out.true_loadings.betas[out.panel_time(1)];
        let per_row: Vec<usize> = (0..100).map(|j| b1.row(j).iter().filter(|v| **v != 0.0).count()).collect();
        assert_eq!(per_row.iter().filter(|&&c| c == 1).count(), 60);
        assert_eq!(per_row.iter().filter(|&&c| c == 2).count(), 40);
        assert_eq!(count_active_factors(b1, DEFAULT_THRESHOLD), 5);
        assert!((avg_active_per_series(b1, DEFAULT_THRESHOLD) - 1.4).abs() < 1e-12);
        for t in 101..=120 {
            assert_eq!(out.true_loadings.betas[out.panel_time(t)].column(2).amax(), 0.0);
        }
        assert!(out.true_loadings.betas[out.panel_time(100)].column(2).amax() > 0.0);
    }

    #[test]
    fn deterministic_and_exact_reconstruction() {
        let sc = small();
        let a = simulate(&sc).unwrap();
        assert_eq!(a, simulate(&sc).unwrap());
        // Idiosyncratic part is what remains after the factor signal.
        let n = a.panel.n_times();
        assert_eq!(n, 35);
        for t in 1..=n {
            let b = &a.true_loadings.betas[t];
            let resid = a.panel.values.column(t - 1) - b * a.true_factors.row(t - 1).transpose();
            assert!(resid.iter().all(|v| v.is_finite()));
        }
        assert_eq!(a.panel.time_index[0], "-4");
        assert_eq!(a.panel.time_index[5], "1");
    }

    #[test]
    fn support_follows_schedule() {
        let sc = small();
        let out = simulate(&sc).unwrap();
        for t in 1..=sc.t_total {
            let active = sc.active_at(t);
            let b = &out.true_loadings.betas[out.panel_time(t)];
            let g = &out.true_loadings.gammas[out.panel_time(t)];
            for c in 0..sc.k_candidate {
                let rows = sc.block_rows(c);
                for j in 0..sc.p {
                    let on = active[c] && rows.contains(&j);
                    assert_eq!(b[(j, c)] != 0.0, on, "t={t} j={j} c={c}");
                    assert_eq!(g[(j, c)], if on { 1.0 } else { 0.0 });
                }
            }
        }
        // Reactivation restarts at the initial magnitude.
        assert!(out.true_loadings.betas[out.panel_time(21)].column(1).iter().any(|&v| v == sc.beta_init));
    }

    #[test]
    fn scenario_validation() {
        assert!(SimScenario { block: 40, ..Default::default() }.validate().is_err());
        assert!(SimScenario { k_true: 11, ..Default::default() }.validate().is_err());
        let mut sc = SimScenario::default();
        sc.break_times[0].time = 1;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn metric_examples() {
        let z = DMatrix::<f64>::zeros(4, 3);
        assert_eq!(count_active_factors(&z, 0.1), 0);
        assert_eq!(avg_active_per_series(&z, 0.1), 0.0);
        let mut single = z.clone();
        single[(1, 0)] = 0.5;
        assert_eq!(count_active_factors(&single, 0.1), 0);
        let one_each = DMatrix::from_fn(3, 3, |j, k| if j == k { 0.5 } else { 0.0 });
        assert_eq!(avg_active_per_series(&one_each, 0.1), 1.0);
        assert_eq!(rmse(&DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 0.0)).unwrap(), 1.0);
        assert!(rmse(&z, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn left_order_cases() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(left_order(&b, 0.1), b);
        let twins = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(left_order_permutation(&twins, 0.1), vec![0, 1]);
        let zero_first = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(left_order_permutation(&zero_first, 0.1), vec![1, 0]);
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn left_order_cancels_permutations() {
        let b = DMatrix::from_row_slice(4, 4, &[
            0.9, 0.0, 0.0, 0.3,
            0.0, 1.2, 0.0, 0.4,
            0.5, 0.7, 0.0, 0.0,
            0.0, 0.0, 0.8, 0.2,
        ]);
        let reference = left_order(&b, 0.1);
        for perm in permutations(4) {
            let pb = DMatrix::from_fn(4, 4, |r, c| b[(r, perm[c])]);
            assert_eq!(left_order(&pb, 0.1), reference);
            assert_eq!(rmse(&b, &pb).unwrap(), 0.0);
        }
    }

    proptest! {
        #[test]
        fn metric_invariants(entries in proptest::collection::vec(-2.0f64..2.0, 12), other in proptest::collection::vec(-2.0f64..2.0, 12), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let a = DMatrix::from_row_slice(4, 3, &entries);
            let b = DMatrix::from_row_slice(4, 3, &other);
            let r = rmse(&a, &b).unwrap();
            prop_assert!(r >= 0.0);
            prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
            let swap = |m: &DMatrix<f64>| DMatrix::from_fn(4, 3, |i, c| m[(i, [2, 0, 1][c])]);
            prop_assert!((rmse(&swap(&a), &swap(&b)).unwrap() - r).abs() < 1e-12);
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(count_active_factors(&a, hi) <= count_active_factors(&a, lo));
        }
    }
}
