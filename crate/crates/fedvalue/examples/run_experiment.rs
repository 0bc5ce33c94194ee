//! End-to-end experiment through the library API: three sources, six
//! clients, ensemble valuation, two reward pools, emitted reports.
//!
//! The `fedvalue` binary drives the same pipeline from a TOML config.
//!
//! ```bash
//! cargo run --release --example run_experiment
//! ```

use fedvalue::error::Result;
use fedvalue::experiments::{
    emit_reports, run_experiment, verify_report, DataConfig, ExperimentConfig, TrainingConfig,
};

fn main() -> Result<()> {
    // The default config models three sources with distinct disparity knobs;
    // shrink it so the example finishes in seconds.
    let cfg = ExperimentConfig {
        name: "demo".into(),
        repeats: 3,
        data: DataConfig {
            per_client_size: 400,
            test_size_per_source: 300,
            ..DataConfig::default()
        },
        training: TrainingConfig {
            patience: 5,
            max_rounds: 40,
            ..TrainingConfig::default()
        },
        ..ExperimentConfig::default()
    };

    let report = run_experiment(&cfg)?;
    let agg = report.aggregate.as_ref().expect("successful repeats");
    println!(
        "{} repeats: total AUROC {:.4} +/- {:.4}, bias {:+.4}",
        agg.n_repeats,
        agg.total_auroc.mean,
        agg.total_auroc.half_width.unwrap_or(0.0),
        agg.bias.mean
    );
    println!("\nper-client mean Shapley values:");
    println!("{:>8} {:>14} {:>12}", "client", "performance", "bias");
    for c in 0..cfg.n_clients {
        println!(
            "{:>8} {:>14.5} {:>12.5}",
            c, agg.phi_performance[c].mean, agg.phi_bias[c].mean
        );
    }
    for pool in &agg.pools {
        let rewards: Vec<String> = pool.rewards.iter().map(|r| format!("{:.2}", r.mean)).collect();
        println!("pool '{}': mean rewards [{}] MU", pool.pool_id, rewards.join(", "));
    }
    if let Some(combined) = &agg.combined {
        let totals: Vec<String> = combined.iter().map(|c| format!("{:.2}", c.mean)).collect();
        println!("combined totals [{}] MU", totals.join(", "));
    }

    // Counterpart significance tests, as the reports table them.
    for test in &agg.paired_tests {
        println!(
            "paired t ({}, clients {} vs {}): p = {:.4}",
            test.metric, test.client_a, test.client_b, test.p_value
        );
    }

    // Persist everything; rewards re-derive from the persisted tables.
    let dir = std::env::temp_dir().join("fedvalue_demo_run");
    let files = emit_reports(&report, &dir)?;
    verify_report(&report)?;
    println!("\nemitted ({} files):", files.len());
    for f in files {
        println!("  {}", f.display());
    }
    Ok(())
}
