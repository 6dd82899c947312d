//! Command-line front end: simulate datasets, run filtering experiments,
//! aggregate repeated runs, and inspect the shipped presets.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use snsfilter::harness::config::ExperimentConfig;
use snsfilter::harness::{aggregate_runs, preset, preset_list, write_aggregate};
use snsfilter::harness::{data, runner};
use snsfilter::{Error, Result};

#[derive(Parser)]
#[command(
    name = "snsfilter",
    version,
    about = "Particle filtering for the 2D stochastic Navier-Stokes equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the dataset for a configuration and cache it on disk.
    GenerateData {
        /// Configuration: a TOML file path, or a preset name.
        #[arg(long)]
        config: String,
        /// Override the truth seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset cache directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one filtering experiment and write its artifact set.
    Run {
        /// Configuration: a TOML file path, or a preset name.
        #[arg(long)]
        config: String,
        /// Override the filter seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory the artifacts are written to.
        #[arg(long)]
        out: PathBuf,
        /// Override the filter variant: pf, ispf, pft, ispft, or enkf.
        #[arg(long)]
        variant: Option<String>,
        /// Worker threads; results are identical for every choice.
        #[arg(long)]
        threads: Option<usize>,
        /// Dataset cache directory (default: <out>/data).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Combine repeated runs of one experiment into per-step means and
    /// standard deviations.
    Aggregate {
        /// Run directories, each containing a summary.json.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory aggregate.json and aggregate.csv are written to.
        #[arg(long)]
        out: PathBuf,
    },
    /// List the shipped presets, or print one preset as TOML.
    ListPresets {
        /// Preset to print in full.
        name: Option<String>,
    },
}

fn main() {
    // Die quietly when a downstream pipe (head, less) closes early.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenerateData { config, seed, out } => generate_data(&config, seed, &out),
        Command::Run {
            config,
            seed,
            out,
            variant,
            threads,
            data_dir,
        } => run(&config, seed, &out, variant.as_deref(), threads, data_dir),
        Command::Aggregate { runs, out } => aggregate(&runs, &out),
        Command::ListPresets { name } => list_presets(name.as_deref()),
    }
}

/// Resolve `--config`: an existing file path wins, then a preset name.
fn load_config(config: &str) -> Result<ExperimentConfig> {
    let path = Path::new(config);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        return ExperimentConfig::from_toml(&text);
    }
    if let Some(cfg) = preset(config) {
        return Ok(cfg);
    }
    let names: Vec<&str> = preset_list().iter().map(|(n, _)| *n).collect();
    Err(Error::Config(format!(
        "{config:?} is neither a config file nor a preset; presets: {}",
        names.join(", ")
    )))
}

fn generate_data(config: &str, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seeds.truth = s;
    }
    cfg.validate()?;
    let model = runner::build_model(&cfg)?;
    let dataset = data::load_or_generate(&cfg, &model.solver, &model.observer, Some(out))?;
    let path = dataset.path.expect("cache directory was given");
    println!(
        "{} dataset: {} observation times, {} observed coordinates each",
        if dataset.fresh { "generated" } else { "cached" },
        dataset.observations.len(),
        model.observer.dim(),
    );
    println!("{}", path.display());
    Ok(())
}

fn run(
    config: &str,
    seed: Option<u64>,
    out: &Path,
    variant: Option<&str>,
    threads: Option<usize>,
    data_dir: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seeds.filter = s;
    }
    if let Some(v) = variant {
        cfg.filter.variant = v.parse()?;
    }
    cfg.validate()?;
    let data_dir = data_dir.unwrap_or_else(|| out.join("data"));
    let output = runner::run_experiment(&cfg, out, Some(&data_dir), threads)?;

    println!(
        "variant={} seed={} config={}",
        output.metrics.variant,
        output.metrics.seed,
        &output.metrics.config_hash[..16],
    );
    println!("step\ttime\tlevels\tfinal_ess\tl2_error");
    for s in &output.metrics.steps {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            s.step,
            s.time,
            s.phis.len(),
            s.ess.last().map(|e| format!("{e}")).unwrap_or_default(),
            s.l2_error.map(|e| format!("{e}")).unwrap_or_default(),
        );
    }
    if let Some(path) = &output.data_path {
        println!(
            "data: {} ({})",
            path.display(),
            if output.data_fresh { "generated" } else { "cached" }
        );
    }
    println!("artifacts: {}", output.out_dir.display());
    Ok(())
}

fn aggregate(runs: &[PathBuf], out: &Path) -> Result<()> {
    let agg = aggregate_runs(runs)?;
    write_aggregate(out, &agg)?;
    println!(
        "aggregated {} runs of variant {} (seeds: {})",
        agg.runs,
        agg.variant,
        agg.seeds
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(", "),
    );
    println!("step\ttime\tlevels_mean\tlevels_sd\tfinal_ess_mean\tfinal_ess_sd\tl2_mean\tl2_sd");
    for r in &agg.rows {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.step,
            r.time,
            opt(r.levels_mean),
            opt(r.levels_sd),
            opt(r.final_ess_mean),
            opt(r.final_ess_sd),
            opt(r.l2_mean),
            opt(r.l2_sd),
        );
    }
    println!("artifacts: {}", out.display());
    Ok(())
}

fn list_presets(name: Option<&str>) -> Result<()> {
    match name {
        Some(name) => {
            let cfg = preset(name).ok_or_else(|| {
                Error::Config(format!("no preset named {name:?}; try list-presets"))
            })?;
            print!("{}", cfg.to_toml());
        }
        None => {
            for (name, description) in preset_list() {
                println!("{name}\t{description}");
            }
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}
