//! Panel CSV files: a header row `<time label>,<series names...>` followed by
//! one row per period, first cell the time label.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use dsfa_core::Panel;
use nalgebra::DMatrix;

use crate::error::{csv_err, Error, Result};
use crate::format::fmt_f64;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelOptions {
    /// Center and scale every series (sample sd, divisor `T - 1`).
    pub standardize: bool,
    /// Two-column `series,group` sidecar.
    pub groups: Option<PathBuf>,
}

pub fn load_panel(path: &Path, opts: &PanelOptions) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    if header.len() < 2 {
        return Err(format_err(path, "header needs a time column and at least one series"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(cell_err(path, 1, i + 2, &header, "empty series name"));
        }
        if !seen.insert(name.as_str()) {
            return Err(cell_err(path, 1, i + 2, &header, &format!("duplicate series name '{name}'")));
        }
    }

    let p = names.len();
    let mut times = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let row = i + 2;
        if record.len() != p + 1 {
            return Err(Error::Cell {
                path: path.into(),
                row,
                column: format!("{}", record.len()),
                message: format!("expected {} fields, found {}", p + 1, record.len()),
            });
        }
        times.push(record[0].to_owned());
        for (c, cell) in record.iter().enumerate().skip(1) {
            if cell.is_empty() {
                return Err(cell_err(path, row, c + 1, &header, "missing value"));
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => return Err(cell_err(path, row, c + 1, &header, &format!("not a finite number: '{cell}'"))),
            }
        }
    }
    let n = times.len();
    // `data` is time-major, which is the column-major layout of a P x T matrix.
    let values = DMatrix::from_vec(p, n, data);
    let mut panel = Panel::new(values, names, times)?;
    if let Some(groups) = &opts.groups {
        let labels = load_groups(groups, &panel.series_names)?;
        panel = panel.with_groups(labels)?;
    }
    if opts.standardize {
        panel = panel.standardize()?;
    }
    Ok(panel)
}

/// Reads a `series,group` sidecar; every panel series must be listed once.
pub fn load_groups(path: &Path, series: &[String]) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    let mut map: HashMap<String, String> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        if record.len() != 2 {
            return Err(format_err(path, &format!("row {}: expected series,group", i + 2)));
        }
        let name = record[0].to_owned();
        if !series.contains(&name) {
            return Err(format_err(path, &format!("row {}: unknown series '{name}'", i + 2)));
        }
        if map.insert(name.clone(), record[1].to_owned()).is_some() {
            return Err(format_err(path, &format!("row {}: series '{name}' listed twice", i + 2)));
        }
    }
    series
        .iter()
        .map(|s| map.remove(s).ok_or_else(|| format_err(path, &format!("no group for series '{s}'"))))
        .collect()
}

pub fn write_panel(path: &Path, panel: &Panel) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["time".to_owned()];
    header.extend(panel.series_names.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for t in 0..panel.n_times() {
        let mut row = vec![panel.time_index[t].clone()];
        row.extend(panel.values.column(t).iter().map(|v| fmt_f64(*v)));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(crate::error::io_err(path))
}

fn format_err(path: &Path, message: &str) -> Error {
    Error::Format { path: path.into(), message: message.to_owned() }
}

fn cell_err(path: &Path, row: usize, col: usize, header: &csv::StringRecord, message: &str) -> Error {
    let name = header.get(col - 1).unwrap_or("");
    Error::Cell { path: path.into(), row, column: format!("{col} ({name})"), message: message.to_owned() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn well_formed_panel() {
        let f = file("date,a,b\n2001-01,1,2\n2001-02,3,4\n2001-03,5,6.5\n");
        let panel = load_panel(f.path(), &PanelOptions::default()).unwrap();
        assert_eq!((panel.n_series(), panel.n_times()), (2, 3));
        assert_eq!(panel.y(1, 3), 6.5);
        assert_eq!(panel.y(0, 2), 3.0);
        assert_eq!(panel.time_index[0], "2001-01");
    }

    #[test]
    fn empty_cell_names_row_and_column() {
        let f = file("date,a,b\n1,1,2\n2,,4\n");
        let err = load_panel(f.path(), &PanelOptions::default()).unwrap_err();
        match &err {
            Error::Cell { row, column, .. } => {
                assert_eq!(*row, 3);
                assert!(column.contains('a'), "{column}");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(err.to_string().contains("row 3"));
    }

    #[test]
    fn malformed_inputs_rejected() {
        for text in ["d,a,b\n1,1,2\n2,3\n", "d,a,b\n1,1,x\n2,3,4\n", "d,a,a\n1,1,2\n2,3,4\n", "d,a,b\n1,1,NaN\n2,3,4\n"] {
            assert!(load_panel(file(text).path(), &PanelOptions::default()).is_err(), "{text}");
        }
    }

    #[test]
    fn groups_and_standardization() {
        let f = file("d,a,b\n1,1,10\n2,2,20\n3,3,60\n");
        let g = file("series,group\nb,prices\na,output\n");
        let opts = PanelOptions { standardize: true, groups: Some(g.path().into()) };
        let panel = load_panel(f.path(), &opts).unwrap();
        assert_eq!(panel.group_labels.as_deref(), Some(&["output".to_owned(), "prices".to_owned()][..]));
        for (i, v) in [-1.0, 0.0, 1.0].iter().enumerate() {
            assert!((panel.values[(0, i)] - v).abs() < 1e-12);
        }
        let bad = file("series,group\na,output\n");
        let opts = PanelOptions { groups: Some(bad.path().into()), ..Default::default() };
        assert!(load_panel(f.path(), &opts).is_err());
    }

    #[test]
    fn write_then_read_is_exact() {
        let values = DMatrix::from_fn(3, 4, |j, t| (j as f64 + 0.1) * (t as f64 - 1.3).powi(3) / 7.0);
        let panel = Panel::from_values(values).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_panel(f.path(), &panel).unwrap();
        let back = load_panel(f.path(), &PanelOptions::default()).unwrap();
        assert_eq!(back.values, panel.values);
        assert_eq!(back.series_names, panel.series_names);
    }
}
