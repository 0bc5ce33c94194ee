//! Federated averaging with early stopping, trace persistence, and coalition
//! model reconstruction from the recorded per-round updates.
//!
//! ```bash
//! cargo run --release --example train_federated
//! ```

use fedvalue::error::Result;
use fedvalue::fedsim::{reconstruct_coalition_model, run_fedavg, FLRunConfig};
use fedvalue::io::{load_trace, save_trace};
use fedvalue::metrics::macro_auroc;
use fedvalue::model::Arch;
use fedvalue::shapley::{score_with_model, Coalition};
use fedvalue::synthdata::{generate, split, GeneratorSpec, SplitPlan, SplitRegime};

fn main() -> Result<()> {
    let spec = GeneratorSpec::with_disparity(20, 8, 0.5, 0.4, 0.5, 11)?;
    let pool = generate(&spec, 5200)?;
    let (test, rest) = pool.split_at(800);
    let clients = split(
        rest,
        &SplitPlan {
            regime: SplitRegime::Even5050,
            n_clients: 4,
            per_client_size: 1000,
            train_fraction: 0.8,
            native_a_share: 0.5,
        },
        3,
    )?;

    let cfg = FLRunConfig {
        arch: Arch::mlp(20, 16, 8),
        lr: 0.1,
        batch: 32,
        local_epochs: 1,
        patience: 10,
        max_rounds: 200,
        seed: 21,
    };
    let (best, trace) = run_fedavg(&clients, &cfg)?;
    println!(
        "trained {} rounds, best round {} (mean validation loss {:.4})",
        trace.rounds.len(),
        trace.best_round + 1,
        trace.rounds[trace.best_round].mean_val_loss
    );

    let scored = score_with_model(&best, test)?;
    println!("global model test AUROC: {:.4}", macro_auroc(&scored)?.value);

    // Persist and reload the trace; valuation can run without retraining.
    let path = std::env::temp_dir().join("fedvalue_trace.bin");
    save_trace(&path, &trace)?;
    let reloaded = load_trace(&path)?;
    println!("trace persisted to {} and reloaded: {}", path.display(), reloaded == trace);

    // The grand coalition reconstructs bit-exactly to the trained model.
    let grand = reconstruct_coalition_model(&reloaded, Coalition::full(clients.len()))?;
    println!("grand-coalition reconstruction bit-exact: {}", grand == best);

    // Sub-coalition models come from the same trace.
    for members in [vec![0], vec![0, 1], vec![1, 2, 3]] {
        let coalition = Coalition::from_members(&members);
        let params = reconstruct_coalition_model(&reloaded, coalition)?;
        let auc = macro_auroc(&score_with_model(&params, test)?)?.value;
        println!("coalition {coalition} test AUROC: {auc:.4}");
    }
    Ok(())
}
