//! Deterministic run artifacts.
//!
//! Every run directory receives the same fixed set of files: a machine-
//! readable `summary.json`, comma-delimited metric tables, and snapshot
//! tables for posterior means, variance ratios, and marginal densities.
//! All numeric cells use Rust's shortest round-trip float formatting and
//! all writes are atomic, so byte-identical runs produce byte-identical
//! files. Wall-clock time lives in `timing.json` alone, keeping every
//! other artifact reproducible.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::io::atomic_write;
use crate::diagnostics::{Component, MarginalPdf, RunMetrics};
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Top-level record of one run: the resolved configuration, its hashes,
/// and the per-step metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    /// Hash of the configuration with the filter seed zeroed; runs may be
    /// aggregated exactly when this matches.
    pub compat_hash: String,
    /// Hash of the model sections and truth seed that determine the dataset.
    pub data_hash: String,
    /// The fully resolved configuration the run executed.
    pub config: ExperimentConfig,
    /// Per-step filtering metrics.
    pub run: RunMetrics,
}

/// Location of `summary.json` inside a run directory.
pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.json")
}

/// Write `summary.json`.
pub fn write_summary(dir: &Path, summary: &SummaryFile) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(summary)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    atomic_write(&summary_path(dir), &bytes)
}

/// Read a run directory's `summary.json`.
pub fn read_summary(dir: &Path) -> Result<SummaryFile> {
    let path = summary_path(dir);
    let bytes = std::fs::read(&path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

/// Write `steps.csv`: one row per assimilation step with the headline
/// metrics (level count, final effective sample size, vorticity error).
pub fn write_steps_csv(dir: &Path, run: &RunMetrics) -> Result<()> {
    let mut out = String::from("step,time,levels,final_ess,noise_accept,init_accept,l2_error\n");
    for s in &run.steps {
        let noise = mean_opt(&s.noise_accept);
        let init = mean_opt(&s.init_accept);
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.step,
            s.time,
            s.phis.len(),
            fmt_opt(s.ess.last().copied()),
            fmt_opt(noise),
            fmt_opt(init),
            fmt_opt(s.l2_error),
        ));
    }
    atomic_write(&dir.join("steps.csv"), out.as_bytes())
}

/// Write `tempering.csv`: one row per tempering level of every step.
pub fn write_tempering_csv(dir: &Path, run: &RunMetrics) -> Result<()> {
    let mut out = String::from("step,level,phi,ess,noise_accept,init_accept\n");
    for s in &run.steps {
        for (level, phi) in s.phis.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.step,
                level,
                phi,
                fmt_opt(s.ess.get(level).copied()),
                fmt_opt(s.noise_accept.get(level).copied()),
                fmt_opt(s.init_accept.get(level).copied()),
            ));
        }
    }
    atomic_write(&dir.join("tempering.csv"), out.as_bytes())
}

/// Write a full coefficient table (`k1,k2,re,im`) for one field, e.g. a
/// posterior mean snapshot.
pub fn write_field_csv(dir: &Path, name: &str, field: &SpectralField) -> Result<()> {
    let mut out = String::from("k1,k2,re,im\n");
    for (k, c) in field.lattice().modes().iter().zip(field.coeffs()) {
        out.push_str(&format!("{},{},{},{}\n", k[0], k[1], c.re, c.im));
    }
    atomic_write(&dir.join(name), out.as_bytes())
}

/// Write a per-mode variance-ratio table (`k1,k2,ratio`); modes whose
/// unconditioned variance vanished get an empty cell.
pub fn write_variance_ratio_csv(
    dir: &Path,
    step: usize,
    modes: &[[i32; 2]],
    ratios: &[Option<f64>],
) -> Result<()> {
    if modes.len() != ratios.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} modes with {} ratios",
            modes.len(),
            ratios.len()
        )));
    }
    let mut out = String::from("k1,k2,ratio\n");
    for (k, r) in modes.iter().zip(ratios) {
        out.push_str(&format!("{},{},{}\n", k[0], k[1], fmt_opt(*r)));
    }
    atomic_write(&dir.join(format!("variance_ratio_{step}.csv")), out.as_bytes())
}

/// File name for the marginal density of one coefficient component.
pub fn pdf_file_name(k: [i32; 2], component: Component) -> String {
    let comp = match component {
        Component::Real => "re",
        Component::Imag => "im",
    };
    format!("pdf_{}_{}_{}.csv", comp, k[0], k[1])
}

/// Write one marginal density table: histogram rows (bin centers) followed
/// by kernel-density rows, tagged by a `kind` column.
pub fn write_pdf_csv(
    dir: &Path,
    k: [i32; 2],
    component: Component,
    pdf: &MarginalPdf,
) -> Result<()> {
    let mut out = String::from("kind,x,density\n");
    for (w, d) in pdf.edges.windows(2).zip(&pdf.histogram) {
        out.push_str(&format!("histogram,{},{}\n", 0.5 * (w[0] + w[1]), d));
    }
    for (x, d) in pdf.grid.iter().zip(&pdf.kde) {
        out.push_str(&format!("kde,{x},{d}\n"));
    }
    atomic_write(&dir.join(pdf_file_name(k, component)), out.as_bytes())
}

/// Write `timing.json`, the only artifact that is not reproducible.
pub fn write_timing(dir: &Path, wall_seconds: f64) -> Result<()> {
    let bytes = format!("{{\n  \"wall_seconds\": {wall_seconds}\n}}\n");
    atomic_write(&dir.join("timing.json"), bytes.as_bytes())
}

/// Empty CSV cell for a missing value, shortest round-trip otherwise.
fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn mean_opt(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::StepMetrics;

    fn sample_run() -> RunMetrics {
        let mut run = RunMetrics::new("ispft", 3, "abc123");
        run.push(StepMetrics {
            step: 0,
            time: 0.4,
            phis: vec![0.25, 1.0],
            ess: vec![52.0, 71.5],
            noise_accept: vec![0.5, 0.25],
            init_accept: vec![0.75, 0.5],
            l2_error: Some(1.5),
        });
        run.push(StepMetrics {
            step: 1,
            time: 0.8,
            phis: vec![1.0],
            ess: vec![88.0],
            noise_accept: vec![0.5],
            init_accept: vec![],
            l2_error: None,
        });
        run
    }

    #[test]
    fn steps_table_has_one_row_per_step() {
        let dir = tempfile::tempdir().unwrap();
        write_steps_csv(dir.path(), &sample_run()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("steps.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "step,time,levels,final_ess,noise_accept,init_accept,l2_error",
                "0,0.4,2,71.5,0.375,0.625,1.5",
                "1,0.8,1,88,0.5,,",
            ]
        );
    }

    #[test]
    fn tempering_table_has_one_row_per_level() {
        let dir = tempfile::tempdir().unwrap();
        write_tempering_csv(dir.path(), &sample_run()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("tempering.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "step,level,phi,ess,noise_accept,init_accept",
                "0,0,0.25,52,0.5,0.75",
                "0,1,1,71.5,0.25,0.5",
                "1,0,1,88,0.5,",
            ]
        );
    }

    #[test]
    fn summary_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = super::super::presets::preset("shortrun-ispft-desk").unwrap();
        let summary = SummaryFile {
            compat_hash: cfg.compat_hash(),
            data_hash: cfg.data_hash(),
            config: cfg,
            run: sample_run(),
        };
        write_summary(dir.path(), &summary).unwrap();
        let back = read_summary(dir.path()).unwrap();
        assert_eq!(back.compat_hash, summary.compat_hash);
        assert_eq!(back.config, summary.config);
        assert_eq!(back.run, summary.run);
    }

    #[test]
    fn pdf_table_interleaves_histogram_and_kernel_rows() {
        let dir = tempfile::tempdir().unwrap();
        let pdf = MarginalPdf {
            edges: vec![0.0, 1.0, 2.0],
            histogram: vec![0.75, 0.25],
            grid: vec![0.0, 2.0],
            kde: vec![0.5, 0.125],
            bandwidth: 0.3,
        };
        write_pdf_csv(dir.path(), [1, -1], Component::Real, &pdf).unwrap();
        let text = std::fs::read_to_string(dir.path().join("pdf_re_1_-1.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "kind,x,density",
                "histogram,0.5,0.75",
                "histogram,1.5,0.25",
                "kde,0,0.5",
                "kde,2,0.125",
            ]
        );
    }
}
