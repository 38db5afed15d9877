//! Result artifacts as long-format CSV tables and their readers.
//!
//! Indices in the files: `t` is the time of the path (0 is the initial
//! condition for loadings and moments), `j` and `k` are 1-based series
//! and column numbers. Rows are sorted by `t`, then `j`, then `k`.

use std::path::Path;

use dsfa_core::sim::{avg_active_per_series, count_active_factors, DEFAULT_THRESHOLD};
use dsfa_core::{FitResult, LoadingsPath, Panel, SmoothedMoments, VolatilityPath};
use nalgebra::{DMatrix, DVector};

use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};
use crate::format::{fmt_f64, Table, TableWriter};
use crate::manifest::Manifest;

pub const LOADINGS: &str = "loadings.csv";
pub const VOLATILITY: &str = "volatility.csv";
pub const MOMENTS: &str = "moments.csv";
pub const TRACE: &str = "trace.csv";
pub const METRICS: &str = "metrics.csv";
pub const SERIES: &str = "series.csv";

const LOADINGS_HEADER: [&str; 5] = ["t", "j", "k", "value", "gamma"];
const VOLATILITY_HEADER: [&str; 6] = ["t", "j", "sigma2", "eta", "d", "s"];
const MOMENTS_HEADER: [&str; 5] = ["kind", "t", "row", "col", "value"];
const TRACE_HEADER: [&str; 2] = ["iteration", "objective"];

pub fn write_loadings(path: &Path, loadings: &LoadingsPath) -> Result<()> {
    let mut w = TableWriter::create(path, &LOADINGS_HEADER)?;
    for (t, (b, g)) in loadings.betas.iter().zip(&loadings.gammas).enumerate() {
        for j in 0..b.nrows() {
            for k in 0..b.ncols() {
                w.row([t.to_string(), (j + 1).to_string(), (k + 1).to_string(), fmt_f64(b[(j, k)]), fmt_f64(g[(j, k)])])?;
            }
        }
    }
    w.finish()
}

pub fn read_loadings(path: &Path) -> Result<LoadingsPath> {
    let tab = Table::read(path, &LOADINGS_HEADER)?;
    let (Some(n), Some(p), Some(k)) = (tab.max_index(0)?, tab.max_index(1)?, tab.max_index(2)?) else {
        return Err(format_err(path, "empty loadings table"));
    };
    if tab.len() != (n + 1) * p * k {
        return Err(format_err(path, &format!("expected {} rows for T={n}, P={p}, K={k}", (n + 1) * p * k)));
    }
    let mut out = LoadingsPath::zeros(n, p, k);
    let mut r = 0;
    for t in 0..=n {
        for j in 0..p {
            for c in 0..k {
                tab.expect_index(r, 0, t)?;
                tab.expect_index(r, 1, j + 1)?;
                tab.expect_index(r, 2, c + 1)?;
                out.betas[t][(j, c)] = tab.f64(r, 3)?;
                out.gammas[t][(j, c)] = tab.f64(r, 4)?;
                r += 1;
            }
        }
    }
    Ok(out)
}

pub fn write_volatility(path: &Path, vol: &VolatilityPath) -> Result<()> {
    let mut w = TableWriter::create(path, &VOLATILITY_HEADER)?;
    let (p, n) = vol.sigma2.shape();
    for t in 0..n {
        for j in 0..p {
            w.row([
                (t + 1).to_string(),
                (j + 1).to_string(),
                fmt_f64(vol.sigma2[(j, t)]),
                fmt_f64(vol.eta_filter[t]),
                fmt_f64(vol.d_filter[(j, t)]),
                fmt_f64(vol.s_filter[(j, t)]),
            ])?;
        }
    }
    w.finish()
}

pub fn read_volatility(path: &Path) -> Result<VolatilityPath> {
    let tab = Table::read(path, &VOLATILITY_HEADER)?;
    let (Some(n), Some(p)) = (tab.max_index(0)?, tab.max_index(1)?) else {
        return Err(format_err(path, "empty volatility table"));
    };
    if tab.len() != n * p {
        return Err(format_err(path, &format!("expected {} rows for T={n}, P={p}", n * p)));
    }
    let mut vol = VolatilityPath::from_sigma2(DMatrix::zeros(p, n));
    let mut r = 0;
    for t in 0..n {
        for j in 0..p {
            tab.expect_index(r, 0, t + 1)?;
            tab.expect_index(r, 1, j + 1)?;
            vol.sigma2[(j, t)] = tab.f64(r, 2)?;
            let eta = tab.f64(r, 3)?;
            if j == 0 {
                vol.eta_filter[t] = eta;
            } else if eta.to_bits() != vol.eta_filter[t].to_bits() {
                return Err(format_err(path, &format!("eta differs across series at t={}", t + 1)));
            }
            vol.d_filter[(j, t)] = tab.f64(r, 4)?;
            vol.s_filter[(j, t)] = tab.f64(r, 5)?;
            r += 1;
        }
    }
    Ok(vol)
}

pub fn write_moments(path: &Path, m: &SmoothedMoments) -> Result<()> {
    let mut w = TableWriter::create(path, &MOMENTS_HEADER)?;
    let k = m.n_factors();
    for (t, mean) in m.means.iter().enumerate() {
        for a in 0..k {
            w.row(["mean".into(), t.to_string(), (a + 1).to_string(), "1".into(), fmt_f64(mean[a])])?;
        }
    }
    let blocks = m.covs.iter().enumerate().map(|(t, c)| ("cov", t, c));
    let lags = m.lag_covs.iter().enumerate().map(|(i, c)| ("lag", i + 1, c));
    for (kind, t, c) in blocks.chain(lags) {
        for a in 0..k {
            for b in 0..k {
                w.row([kind.to_string(), t.to_string(), (a + 1).to_string(), (b + 1).to_string(), fmt_f64(c[(a, b)])])?;
            }
        }
    }
    w.finish()
}

pub fn read_moments(path: &Path) -> Result<SmoothedMoments> {
    let tab = Table::read(path, &MOMENTS_HEADER)?;
    let n_means = (0..tab.len()).filter(|&r| tab.str(r, 0) == "mean").count();
    let k = (0..tab.len())
        .filter(|&r| tab.str(r, 0) == "mean" && tab.str(r, 1) == "0")
        .count();
    if k == 0 || n_means % k != 0 {
        return Err(format_err(path, "cannot infer factor dimension"));
    }
    let n = n_means / k - 1;
    let expected = (n + 1) * k + (2 * n + 1) * k * k;
    if tab.len() != expected {
        return Err(format_err(path, &format!("expected {expected} rows for T={n}, K={k}")));
    }
    let mut r = 0;
    let kind = |name: &str, row: usize| -> Result<()> {
        if tab.str(row, 0) == name {
            Ok(())
        } else {
            Err(format_err(path, &format!("row {}: expected kind '{name}'", row + 2)))
        }
    };
    let mut means = Vec::with_capacity(n + 1);
    for t in 0..=n {
        let mut v = DVector::zeros(k);
        for a in 0..k {
            kind("mean", r)?;
            tab.expect_index(r, 1, t)?;
            tab.expect_index(r, 2, a + 1)?;
            v[a] = tab.f64(r, 4)?;
            r += 1;
        }
        means.push(v);
    }
    let read_blocks = |name: &str, times: std::ops::RangeInclusive<usize>, r: &mut usize| -> Result<Vec<DMatrix<f64>>> {
        let mut out = Vec::new();
        for t in times {
            let mut c = DMatrix::zeros(k, k);
            for a in 0..k {
                for b in 0..k {
                    kind(name, *r)?;
                    tab.expect_index(*r, 1, t)?;
                    tab.expect_index(*r, 2, a + 1)?;
                    tab.expect_index(*r, 3, b + 1)?;
                    c[(a, b)] = tab.f64(*r, 4)?;
                    *r += 1;
                }
            }
            out.push(c);
        }
        Ok(out)
    };
    let covs = read_blocks("cov", 0..=n, &mut r)?;
    let lag_covs = if n == 0 { Vec::new() } else { read_blocks("lag", 1..=n, &mut r)? };
    Ok(SmoothedMoments { means, covs, lag_covs })
}

pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = TableWriter::create(path, &TRACE_HEADER)?;
    for (i, v) in trace.iter().enumerate() {
        w.row([(i + 1).to_string(), fmt_f64(*v)])?;
    }
    w.finish()
}

pub fn read_trace(path: &Path) -> Result<Vec<f64>> {
    let tab = Table::read(path, &TRACE_HEADER)?;
    (0..tab.len())
        .map(|r| {
            tab.expect_index(r, 0, r + 1)?;
            tab.f64(r, 1)
        })
        .collect()
}

/// Per-time active-factor count and average active loadings per series.
pub fn write_metrics(path: &Path, fit: &FitResult) -> Result<()> {
    let mut w = TableWriter::create(path, &["t", "active_factors", "avg_active_per_series"])?;
    for t in 1..fit.loadings.betas.len() {
        let b = fit.factor_loadings(t);
        w.row([
            t.to_string(),
            count_active_factors(&b, DEFAULT_THRESHOLD).to_string(),
            fmt_f64(avg_active_per_series(&b, DEFAULT_THRESHOLD)),
        ])?;
    }
    w.finish()
}

/// Series names and optional group labels.
pub fn write_series(path: &Path, panel: &Panel) -> Result<()> {
    let mut w = TableWriter::create(path, &["j", "name", "group"])?;
    for (j, name) in panel.series_names.iter().enumerate() {
        let group = panel.group_labels.as_ref().map_or("", |g| g[j].as_str());
        w.row([(j + 1).to_string().as_str(), name.as_str(), group])?;
    }
    w.finish()
}

pub fn read_series(path: &Path) -> Result<Vec<(String, String)>> {
    let tab = Table::read(path, &["j", "name", "group"])?;
    (0..tab.len())
        .map(|r| {
            tab.expect_index(r, 0, r + 1)?;
            Ok((tab.str(r, 1).to_owned(), tab.str(r, 2).to_owned()))
        })
        .collect()
}

/// Everything a `fit` run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct FitBundle {
    pub result: FitResult,
    pub series: Vec<(String, String)>,
    pub manifest: Manifest,
}

pub fn write_fit_bundle(dir: &Path, fit: &FitResult, panel: &Panel, cfg: &RunConfig, mut manifest: Manifest) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_loadings(&dir.join(LOADINGS), &fit.loadings)?;
    write_volatility(&dir.join(VOLATILITY), &fit.volatility)?;
    write_moments(&dir.join(MOMENTS), &fit.moments)?;
    write_trace(&dir.join(TRACE), &fit.objective_trace)?;
    write_metrics(&dir.join(METRICS), fit)?;
    write_series(&dir.join(SERIES), panel)?;
    manifest.set("n_series", panel.n_series());
    manifest.set("n_times", panel.n_times());
    manifest.set("iterations", fit.iterations_run);
    manifest.set("converged", fit.converged);
    manifest.set("intercept", fit.intercept);
    manifest.set("sd_convention", if panel.standardization.is_some() { "divisor T-1" } else { "none (raw panel)" });
    manifest.record_config(cfg)?;
    manifest.write(dir)
}

pub fn read_fit_bundle(dir: &Path) -> Result<FitBundle> {
    let manifest = Manifest::read(dir)?;
    let flag = |key: &str| -> Result<bool> {
        manifest
            .require(key, dir)?
            .parse()
            .map_err(|_| format_err(&dir.join(crate::manifest::FILE), &format!("'{key}' is not a boolean")))
    };
    let (converged, intercept) = (flag("converged")?, flag("intercept")?);
    let loadings = read_loadings(&dir.join(LOADINGS))?;
    let volatility = read_volatility(&dir.join(VOLATILITY))?;
    let moments = read_moments(&dir.join(MOMENTS))?;
    let objective_trace = read_trace(&dir.join(TRACE))?;
    let series = read_series(&dir.join(SERIES))?;
    if volatility.sigma2.shape() != (loadings.n_series(), loadings.n_times()) || moments.n_times() != loadings.n_times() {
        return Err(format_err(dir, "artifacts disagree on dimensions"));
    }
    let result = FitResult {
        iterations_run: objective_trace.len(),
        loadings,
        volatility,
        moments,
        objective_trace,
        converged,
        intercept,
    };
    Ok(FitBundle { result, series, manifest })
}

fn format_err(path: &Path, message: &str) -> Error {
    Error::Format { path: path.into(), message: message.to_owned() }
}
