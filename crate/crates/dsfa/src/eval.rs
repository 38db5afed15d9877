//! Comparison of estimated and true loading paths over scenario time, and
//! segment averages in the layout `RMSE / % / K-hat` per period.

use std::fmt::Write as _;

use dsfa_core::sim::{avg_active_per_series, count_active_factors, rmse};
use dsfa_core::FitResult;

use crate::error::{Error, Result};
use crate::truth::Truth;

/// Metrics at one scenario time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeRow {
    pub t: usize,
    pub rmse: f64,
    pub k_true: usize,
    pub k_hat: usize,
    pub avg_active: f64,
}

pub fn evaluate(truth: &Truth, fit: &FitResult, threshold: f64) -> Result<Vec<TimeRow>> {
    let n_fit = fit.loadings.n_times();
    let n_truth = truth.loadings.n_times();
    let (p_fit, p_truth) = (fit.loadings.n_series(), truth.loadings.n_series());
    if p_fit != p_truth || n_fit != n_truth {
        return Err(Error::Invalid(format!(
            "fit covers {p_fit} series x {n_fit} periods, truth {p_truth} x {n_truth}"
        )));
    }
    (1..=truth.t_total)
        .map(|t| {
            let pt = truth.panel_time(t);
            let est = fit.factor_loadings(pt);
            let tru = &truth.loadings.betas[pt];
            Ok(TimeRow {
                t,
                rmse: rmse(tru, &est)?,
                k_true: count_active_factors(tru, 0.0),
                k_hat: count_active_factors(&est, threshold),
                avg_active: avg_active_per_series(&est, threshold),
            })
        })
        .collect()
}

/// Four equal evaluation periods (`1:100, ..., 301:400` for 400 steps).
pub fn default_segments(t_total: usize) -> Vec<(usize, usize)> {
    let q = t_total / 4;
    if q == 0 {
        return vec![(1, t_total)];
    }
    (0..4).map(|i| (i * q + 1, if i == 3 { t_total } else { (i + 1) * q })).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSummary {
    pub start: usize,
    pub end: usize,
    pub rmse: f64,
    pub k_hat: f64,
}

pub fn summarize(rows: &[TimeRow], segments: &[(usize, usize)]) -> Vec<SegmentSummary> {
    segments
        .iter()
        .map(|&(start, end)| {
            let sel: Vec<&TimeRow> = rows.iter().filter(|r| (start..=end).contains(&r.t)).collect();
            let n = sel.len().max(1) as f64;
            SegmentSummary {
                start,
                end,
                rmse: sel.iter().map(|r| r.rmse).sum::<f64>() / n,
                k_hat: sel.iter().map(|r| r.k_hat as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

/// `%` is the RMSE change relative to the first method, in percent.
pub fn relative_gain(rmse: f64, reference: f64) -> f64 {
    100.0 * (rmse - reference) / reference
}

/// Text table: one row per method, `RMSE  %  K-hat` per period.
pub fn format_table(methods: &[(String, Vec<SegmentSummary>)]) -> String {
    let mut out = String::new();
    let Some((_, reference)) = methods.first() else { return out };
    let width = methods.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max(6);
    let _ = write!(out, "{:width$}", "");
    for s in reference {
        let _ = write!(out, " | {:^24}", format!("{}:{}", s.start, s.end));
    }
    let _ = write!(out, "\n{:width$}", "");
    for _ in reference {
        let _ = write!(out, " | {:>8} {:>8} {:>6}", "RMSE", "%", "K");
    }
    out.push('\n');
    for (i, (name, segs)) in methods.iter().enumerate() {
        let _ = write!(out, "{name:width$}");
        for (s, r) in segs.iter().zip(reference) {
            let pct = if i == 0 { "-".to_owned() } else { format!("{:.1}", relative_gain(s.rmse, r.rmse)) };
            let _ = write!(out, " | {:>8.4} {:>8} {:>6.2}", s.rmse, pct, s.k_hat);
        }
        out.push('\n');
    }
    out
}
