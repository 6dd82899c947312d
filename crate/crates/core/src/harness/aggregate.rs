//! Cross-seed aggregation: combine the summaries of repeated runs of one
//! experiment into per-step means and sample standard deviations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::atomic_write;
use super::report::{read_summary, SummaryFile};
use crate::error::{Error, Result};

/// Per-step statistics across runs. A mean is present when at least one run
/// reported the metric; a standard deviation (with one delta degree of
/// freedom) when at least two did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: usize,
    pub time: f64,
    /// Runs contributing to this row.
    pub runs: usize,
    pub levels_mean: Option<f64>,
    pub levels_sd: Option<f64>,
    pub final_ess_mean: Option<f64>,
    pub final_ess_sd: Option<f64>,
    pub l2_mean: Option<f64>,
    pub l2_sd: Option<f64>,
}

/// Aggregated view of several runs of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Filter variant shared by all runs.
    pub variant: String,
    /// Compatibility hash shared by all runs.
    pub compat_hash: String,
    /// Number of runs combined.
    pub runs: usize,
    /// Filter seeds of the combined runs, in input order.
    pub seeds: Vec<u64>,
    pub rows: Vec<AggregateRow>,
}

/// Combine the runs recorded in `summaries`. All runs must stem from the
/// same experiment: equal compatibility hashes (the configuration with the
/// filter seed ignored) are required.
pub fn aggregate_summaries(summaries: &[SummaryFile]) -> Result<Aggregate> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::Config("aggregate needs at least one run".into()))?;
    for s in &summaries[1..] {
        if s.compat_hash != first.compat_hash {
            return Err(Error::Config(format!(
                "runs are not aggregatable: seed {} was produced by a different \
                 experiment than seed {}",
                s.run.seed, first.run.seed
            )));
        }
    }
    let steps = first.run.steps.len();
    if summaries.iter().any(|s| s.run.steps.len() != steps) {
        return Err(Error::Config(
            "runs disagree on the number of assimilation steps".into(),
        ));
    }

    let mut rows = Vec::with_capacity(steps);
    for i in 0..steps {
        let levels: Vec<f64> = summaries
            .iter()
            .map(|s| s.run.steps[i].phis.len() as f64)
            .collect();
        let ess: Vec<f64> = summaries
            .iter()
            .filter_map(|s| s.run.steps[i].ess.last().copied())
            .collect();
        let l2: Vec<f64> = summaries
            .iter()
            .filter_map(|s| s.run.steps[i].l2_error)
            .collect();
        let (levels_mean, levels_sd) = mean_sd(&levels);
        let (final_ess_mean, final_ess_sd) = mean_sd(&ess);
        let (l2_mean, l2_sd) = mean_sd(&l2);
        rows.push(AggregateRow {
            step: first.run.steps[i].step,
            time: first.run.steps[i].time,
            runs: summaries.len(),
            levels_mean,
            levels_sd,
            final_ess_mean,
            final_ess_sd,
            l2_mean,
            l2_sd,
        });
    }
    Ok(Aggregate {
        variant: first.run.variant.clone(),
        compat_hash: first.compat_hash.clone(),
        runs: summaries.len(),
        seeds: summaries.iter().map(|s| s.run.seed).collect(),
        rows,
    })
}

/// Read each run directory's `summary.json` and combine them.
pub fn aggregate_runs(dirs: &[impl AsRef<Path>]) -> Result<Aggregate> {
    let summaries: Vec<SummaryFile> = dirs
        .iter()
        .map(|d| read_summary(d.as_ref()))
        .collect::<Result<_>>()?;
    aggregate_summaries(&summaries)
}

/// Write `aggregate.json` and `aggregate.csv` into `dir`.
pub fn write_aggregate(dir: &Path, agg: &Aggregate) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let bytes =
        serde_json::to_vec_pretty(agg).map_err(|e| Error::Serialization(e.to_string()))?;
    atomic_write(&dir.join("aggregate.json"), &bytes)?;

    let mut out = String::from(
        "step,time,runs,levels_mean,levels_sd,final_ess_mean,final_ess_sd,l2_mean,l2_sd\n",
    );
    for r in &agg.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.step,
            r.time,
            r.runs,
            fmt(r.levels_mean),
            fmt(r.levels_sd),
            fmt(r.final_ess_mean),
            fmt(r.final_ess_sd),
            fmt(r.l2_mean),
            fmt(r.l2_sd),
        ));
    }
    atomic_write(&dir.join("aggregate.csv"), out.as_bytes())
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Sample mean and standard deviation (one delta degree of freedom).
fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (Some(mean), Some((ss / (n - 1.0)).sqrt()))
}
