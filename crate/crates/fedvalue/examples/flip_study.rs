//! Label-flip incentive study: three clients keep clean labels, their pair
//! counterparts train on corrupted labels, and the performance rewards of the
//! two groups are compared per flip ratio.
//!
//! ```bash
//! cargo run --release --example flip_study
//! ```

use fedvalue::error::Result;
use fedvalue::experiments::{
    emit_flip_report, label_flip_study, DataConfig, ExperimentConfig, FlipPlan, TrainingConfig,
};

fn main() -> Result<()> {
    let cfg = ExperimentConfig {
        name: "flip-demo".into(),
        repeats: 6,
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
        flip_plan: Some(FlipPlan {
            flipped_clients: vec![1, 3, 5],
            ratios: vec![0.025, 0.05, 0.075],
            run_ratio: 0.075,
        }),
        ..ExperimentConfig::default()
    };

    let study = label_flip_study(&cfg)?;
    println!("{:>7} {:>16} {:>16} {:>12} {:>8}", "ratio", "flipped [MU]", "unflipped [MU]", "p-value", "below");
    for row in &study.rows {
        println!(
            "{:>7.3} {:>16} {:>16} {:>12} {:>8}",
            row.ratio,
            format!(
                "{:.3} +/- {:.3}",
                row.flipped.mean,
                row.flipped.half_width.unwrap_or(0.0)
            ),
            format!(
                "{:.3} +/- {:.3}",
                row.unflipped.mean,
                row.unflipped.half_width.unwrap_or(0.0)
            ),
            row.p_value.map(|p| format!("{p:.2e}")).unwrap_or_default(),
            row.flipped_below_unflipped
        );
    }

    let dir = std::env::temp_dir().join("fedvalue_flip_demo");
    let files = emit_flip_report(&study, &dir)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
