//! Config-driven CLI for the valuation and reward toolkit.
//!
//! Errors exit non-zero with a machine-readable JSON object on stderr:
//! `{"error":{"kind":"...","message":"..."}}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedvalue::error::Result;
use fedvalue::experiments::{
    emit_flip_report, emit_reports, label_flip_study, load_flip_report, load_report,
    run_experiment, verify_report, ExperimentConfig, ValuationBackend,
};

/// Environment variable naming the default output root.
const OUT_ENV: &str = "FEDVALUE_OUT";

#[derive(Parser)]
#[command(
    name = "fedvalue",
    about = "Shapley-value contribution measurement and reward allocation \
             for federated-learning simulations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunOverrides {
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of repeats.
    #[arg(long)]
    repeats: Option<usize>,
    /// Override the valuation backend (exact | gradient-accum | ensemble).
    #[arg(long)]
    backend: Option<String>,
    /// Output directory (defaults to the config's out_dir, then
    /// $FEDVALUE_OUT/<name>, then ./runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel repeats and coalition evaluation.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and emit its reports.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Run the label-flip study (zero baseline plus each configured ratio).
    FlipStudy {
        config: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Re-emit the CSV views from a run directory's summary.json, after
    /// verifying that rewards reproduce from the persisted tables.
    Report { run_dir: PathBuf },
    /// Parse and validate a config file against the schema.
    ValidateConfig { config: PathBuf },
}

fn apply_overrides(cfg: &mut ExperimentConfig, overrides: &RunOverrides) -> Result<()> {
    if let Some(seed) = overrides.seed {
        cfg.master_seed = seed;
    }
    if let Some(repeats) = overrides.repeats {
        cfg.repeats = repeats;
    }
    if let Some(backend) = &overrides.backend {
        cfg.backend = backend.parse::<ValuationBackend>()?;
    }
    cfg.validate()
}

fn resolve_out_dir(cfg: &ExperimentConfig, overrides: &RunOverrides) -> PathBuf {
    if let Some(out) = &overrides.out {
        return out.clone();
    }
    if let Some(dir) = &cfg.out_dir {
        return PathBuf::from(dir);
    }
    let root = std::env::var(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from("runs"));
    root.join(&cfg.name)
}

fn init_jobs(jobs: Option<usize>) {
    if let Some(jobs) = jobs {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
}

fn cmd_run(config: &Path, overrides: &RunOverrides) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    apply_overrides(&mut cfg, overrides)?;
    init_jobs(overrides.jobs);
    let out = resolve_out_dir(&cfg, overrides);

    let report = run_experiment(&cfg)?;
    let files = emit_reports(&report, &out)?;
    let timings = report.timing_rows();
    println!(
        "run '{}': {} repeats ok, {} failed",
        cfg.name,
        report.rows.len(),
        report.failures.len()
    );
    if let Some(agg) = &report.aggregate {
        println!(
            "total AUROC {:.4}, bias {:+.4} (n = {})",
            agg.total_auroc.mean, agg.bias.mean, agg.n_repeats
        );
    }
    if !timings.is_empty() {
        let total: u64 = timings.iter().map(|t| t.micros).sum();
        println!(
            "valuation: {} coalition evaluations, total {:.2} ms, mean {:.2} ms per coalition",
            timings.len(),
            total as f64 / 1000.0,
            total as f64 / 1000.0 / timings.len() as f64
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_flip_study(config: &Path, overrides: &RunOverrides) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    apply_overrides(&mut cfg, overrides)?;
    init_jobs(overrides.jobs);
    let out = resolve_out_dir(&cfg, overrides);

    let study = label_flip_study(&cfg)?;
    let files = emit_flip_report(&study, &out)?;
    println!("flip study '{}': {} ratios", cfg.name, study.rows.len());
    for row in &study.rows {
        println!(
            "ratio {:.3}: flipped {:.3} MU vs unflipped {:.3} MU ({})",
            row.ratio,
            row.flipped.mean,
            row.unflipped.mean,
            if row.flipped_below_unflipped {
                "flipped below"
            } else {
                "flipped not below"
            }
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_report(run_dir: &Path) -> Result<()> {
    let report = load_report(run_dir)?;
    verify_report(&report)?;
    let files = emit_reports(&report, run_dir)?;
    println!("verified {} repeats; rewards reproduce from the persisted tables", report.rows.len());
    for f in files {
        println!("wrote {}", f.display());
    }
    if let Some(flip) = load_flip_report(run_dir)? {
        let flip_files = emit_flip_report(&flip, run_dir)?;
        for f in flip_files {
            println!("wrote {}", f.display());
        }
    }
    Ok(())
}

fn cmd_validate(config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    println!(
        "ok: '{}' ({} clients over {} sources, {} repeats, {:?} backend, {} pools)",
        cfg.name,
        cfg.n_clients,
        cfg.sources.len(),
        cfg.repeats,
        cfg.backend,
        cfg.pools.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Run { config, overrides } => cmd_run(config, overrides),
        Command::FlipStudy { config, overrides } => cmd_flip_study(config, overrides),
        Command::Report { run_dir } => cmd_report(run_dir),
        Command::ValidateConfig { config } => cmd_validate(config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
