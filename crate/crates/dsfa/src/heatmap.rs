use std::path::Path;

use dsfa_core::FitResult;

use crate::error::{Error, Result};
use crate::format::{fmt_f64, TableWriter};

/// Display cap for absolute loadings.
pub const DEFAULT_CAP: f64 = 0.5;

/// `|B_t|` capped at `cap`, series in rows and factors in columns.
pub fn write_heatmap(path: &Path, fit: &FitResult, series: &[String], t: usize, cap: f64) -> Result<()> {
    let n = fit.loadings.n_times();
    if t == 0 || t > n {
        return Err(Error::Invalid(format!("time {t} outside 1..={n}")));
    }
    if !(cap > 0.0) {
        return Err(Error::Invalid(format!("cap must be positive, got {cap}")));
    }
    let b = fit.factor_loadings(t);
    if series.len() != b.nrows() {
        return Err(Error::Invalid(format!("{} series names for {} rows", series.len(), b.nrows())));
    }
    let mut header = vec!["series".to_owned()];
    header.extend((1..=b.ncols()).map(|k| format!("f{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = TableWriter::create(path, &header)?;
    for (j, name) in series.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(b.row(j).iter().map(|v| fmt_f64(v.abs().min(cap))));
        w.row(row)?;
    }
    w.finish()
}
