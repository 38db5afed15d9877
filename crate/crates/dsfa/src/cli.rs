//! Subcommands: `simulate`, `fit`, `eval`, `export-heatmap`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use dsfa_core::sim::DEFAULT_THRESHOLD;
use dsfa_core::{fit_observed, simulate, InitStrategy};

use crate::config::{load_config, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{default_segments, evaluate, format_table, relative_gain, summarize};
use crate::export::{read_fit_bundle, read_loadings, write_fit_bundle};
use crate::format::{fmt_f64, TableWriter};
use crate::heatmap::{write_heatmap, DEFAULT_CAP};
use crate::manifest::Manifest;
use crate::panel_io::{load_panel, PanelOptions};
use crate::truth::{read_truth, write_truth};

#[derive(Debug, Parser)]
#[command(name = "dsfa", version, about = "Dynamic sparse factor analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic panel with known loadings.
    Simulate {
        /// Config file with a `[scenario]` table.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the model on a panel CSV.
    Fit {
        #[arg(long)]
        panel: PathBuf,
        /// Model config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `svd:<window>:<threshold>`, `zeros`, or `warm:<loadings.csv>`.
        #[arg(long, default_value = "svd:100:0.1")]
        init: String,
        #[arg(long)]
        out: PathBuf,
        /// Center and scale each series before fitting.
        #[arg(long)]
        standardize: bool,
        /// `series,group` sidecar CSV.
        #[arg(long)]
        groups: Option<PathBuf>,
        /// Print the objective every N iterations to stderr (0 = quiet).
        #[arg(long, default_value_t = 0)]
        progress: usize,
    },
    /// Compare one or more fits against simulation truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        /// Fit output directory; repeat to compare methods (the first is the reference for `%`).
        #[arg(long = "fit", required = true)]
        fits: Vec<PathBuf>,
        /// Per-time table.
        #[arg(long)]
        out: PathBuf,
        /// Segment table in CSV form.
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Write the capped `|B_t|` table at one time.
    ExportHeatmap {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        time: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: f64,
    },
}

/// What a successful command reports back to the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Converged,
    MaxIterations,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Done | Outcome::Converged => 0,
            Outcome::MaxIterations => 2,
        }
    }
}

pub fn parse_init(spec: &str) -> Result<InitStrategy> {
    let bad = || Error::Invalid(format!("unrecognized init strategy '{spec}'"));
    let mut parts = spec.splitn(3, ':');
    match parts.next() {
        Some("zeros") if parts.next().is_none() => Ok(InitStrategy::Zeros),
        Some("svd") => {
            let window = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let threshold = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            Ok(InitStrategy::SvdThreshold { window, threshold })
        }
        Some("warm") => {
            let rest: Vec<&str> = parts.collect();
            let path = rest.join(":");
            if path.is_empty() {
                return Err(bad());
            }
            Ok(InitStrategy::WarmStart(read_loadings(Path::new(&path))?))
        }
        _ => Err(bad()),
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let mut cfg = load_config(&scenario)?;
            let sc = cfg
                .scenario
                .as_mut()
                .ok_or_else(|| Error::Invalid(format!("{}: no [scenario] table", scenario.display())))?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            let sim = simulate(sc)?;
            write_truth(&out, &sim, &cfg)?;
            Ok(Outcome::Done)
        }
        Command::Fit { panel, config, init, out, standardize, groups, progress } => {
            let cfg = match &config {
                Some(path) => load_config(path)?,
                None => RunConfig::default(),
            };
            let data = load_panel(&panel, &PanelOptions { standardize, groups })?;
            let strategy = parse_init(&init)?;
            let result = fit_observed(&data, &cfg.model, &strategy, |r| {
                if progress > 0 && r.iteration % progress == 0 {
                    eprintln!("iter {:>5}  objective {:.6}  rel {:.3e}", r.iteration, r.objective, r.relative_change);
                }
            })?;
            let mut manifest = Manifest::new("fit");
            manifest.set("panel", panel.display());
            manifest.set("init", &init);
            write_fit_bundle(&out, &result, &data, &cfg, manifest)?;
            Ok(if result.converged { Outcome::Converged } else { Outcome::MaxIterations })
        }
        Command::Eval { truth, fits, out, segments, threshold } => {
            let truth = read_truth(&truth)?;
            let segs = default_segments(truth.t_total);
            let mut w = TableWriter::create(&out, &["method", "t", "rmse", "k_true", "k_hat", "avg_active"])?;
            let mut methods = Vec::new();
            for dir in &fits {
                let bundle = read_fit_bundle(dir)?;
                let rows = evaluate(&truth, &bundle.result, threshold)?;
                let name = method_name(dir);
                for r in &rows {
                    w.row([
                        name.clone(),
                        r.t.to_string(),
                        fmt_f64(r.rmse),
                        r.k_true.to_string(),
                        r.k_hat.to_string(),
                        fmt_f64(r.avg_active),
                    ])?;
                }
                methods.push((name, summarize(&rows, &segs)));
            }
            w.finish()?;
            if let Some(path) = segments {
                let mut w = TableWriter::create(&path, &["method", "segment", "rmse", "pct", "k_hat"])?;
                let reference = methods[0].1.clone();
                for (name, summary) in &methods {
                    for (s, r) in summary.iter().zip(&reference) {
                        w.row([
                            name.clone(),
                            format!("{}:{}", s.start, s.end),
                            fmt_f64(s.rmse),
                            fmt_f64(relative_gain(s.rmse, r.rmse)),
                            fmt_f64(s.k_hat),
                        ])?;
                    }
                }
                w.finish()?;
            }
            print!("{}", format_table(&methods));
            Ok(Outcome::Done)
        }
        Command::ExportHeatmap { fit, time, out, cap } => {
            let bundle = read_fit_bundle(&fit)?;
            let names: Vec<String> = bundle.series.into_iter().map(|(n, _)| n).collect();
            write_heatmap(&out, &bundle.result, &names, time, cap)?;
            Ok(Outcome::Done)
        }
    }
}

fn method_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}
