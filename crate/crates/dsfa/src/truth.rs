//! Simulation output on disk: the panel, the true loadings and factors.

use std::path::Path;

use dsfa_core::{LoadingsPath, SimOutput};
use nalgebra::DMatrix;

use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};
use crate::export::{read_loadings, write_loadings};
use crate::format::{fmt_f64, Table, TableWriter};
use crate::manifest::Manifest;
use crate::panel_io::write_panel;

pub const PANEL: &str = "panel.csv";
pub const TRUE_LOADINGS: &str = "truth_loadings.csv";
pub const TRUE_FACTORS: &str = "truth_factors.csv";
pub const SCENARIO: &str = "scenario.toml";

/// Ground truth read back for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub loadings: LoadingsPath,
    pub factors: DMatrix<f64>,
    /// Panel columns before scenario time 1.
    pub train_len: usize,
    pub t_total: usize,
}

impl Truth {
    /// Panel time of scenario time `t`.
    pub fn panel_time(&self, t: usize) -> usize {
        self.train_len + t
    }
}

pub fn write_truth(dir: &Path, sim: &SimOutput, cfg: &RunConfig) -> Result<()> {
    let sc = cfg.scenario.as_ref().ok_or_else(|| Error::Invalid("config has no [scenario] table".into()))?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_panel(&dir.join(PANEL), &sim.panel)?;
    write_loadings(&dir.join(TRUE_LOADINGS), &sim.true_loadings)?;
    let mut w = TableWriter::create(&dir.join(TRUE_FACTORS), &["t", "k", "value"])?;
    for t in 0..sim.true_factors.nrows() {
        for k in 0..sim.true_factors.ncols() {
            w.row([(t + 1).to_string(), (k + 1).to_string(), fmt_f64(sim.true_factors[(t, k)])])?;
        }
    }
    w.finish()?;
    let text = crate::config::config_to_toml(&RunConfig { model: cfg.model.clone(), scenario: Some(sc.clone()) })?;
    std::fs::write(dir.join(SCENARIO), text).map_err(io_err(dir.join(SCENARIO)))?;
    let mut manifest = Manifest::new("simulate");
    manifest.set("train_len", sim.train_len);
    manifest.set("t_total", sc.t_total);
    manifest.record_config(cfg)?;
    manifest.write(dir)
}

pub fn read_truth(dir: &Path) -> Result<Truth> {
    let manifest = Manifest::read(dir)?;
    let number = |key: &str| -> Result<usize> {
        manifest.require(key, dir)?.parse().map_err(|_| Error::Format {
            path: dir.join(crate::manifest::FILE),
            message: format!("'{key}' is not a count"),
        })
    };
    let (train_len, t_total) = (number("train_len")?, number("t_total")?);
    let loadings = read_loadings(&dir.join(TRUE_LOADINGS))?;
    if loadings.n_times() != train_len + t_total {
        return Err(Error::Format {
            path: dir.join(TRUE_LOADINGS),
            message: format!("{} periods, manifest says {}", loadings.n_times(), train_len + t_total),
        });
    }
    let path = dir.join(TRUE_FACTORS);
    let tab = Table::read(&path, &["t", "k", "value"])?;
    let (n, k) = (loadings.n_times(), loadings.n_factors());
    if tab.len() != n * k {
        return Err(Error::Format { path, message: format!("expected {} rows", n * k) });
    }
    let mut factors = DMatrix::zeros(n, k);
    for r in 0..tab.len() {
        let (t, c) = (r / k, r % k);
        tab.expect_index(r, 0, t + 1)?;
        tab.expect_index(r, 1, c + 1)?;
        factors[(t, c)] = tab.f64(r, 2)?;
    }
    Ok(Truth { loadings, factors, train_len, t_total })
}
