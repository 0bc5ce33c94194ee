//! Metric and statistics tour: rank-based AUROC, macro averaging over label
//! columns, subgroup bias, confidence intervals, and paired t-tests.
//!
//! ```bash
//! cargo run --example metrics_statistics
//! ```

use fedvalue::error::Result;
use fedvalue::metrics::{auroc, bias, macro_auroc, mean_ci, paired_t_test, ScoredTestSet};
use fedvalue::synthdata::Subgroup;

fn main() -> Result<()> {
    // Mann-Whitney rank AUROC: 3 of 4 positive-negative pairs are ordered
    // correctly, so the area is 0.75.
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    println!("auroc({scores:?}, {labels:?}) = {}", auroc(&scores, &labels)?);
    println!(
        "all-equal scores give the random baseline: {}",
        auroc(&[0.5; 4], &labels)?
    );

    // Macro AUROC over two label columns: one perfectly ranked, one tied.
    let ts = ScoredTestSet::new(
        vec![
            vec![0.9, 0.5],
            vec![0.8, 0.5],
            vec![0.2, 0.5],
            vec![0.1, 0.5],
        ],
        vec![vec![1, 0], vec![1, 1], vec![0, 0], vec![0, 1]],
        vec![Subgroup::A, Subgroup::B, Subgroup::A, Subgroup::B],
    )?;
    let macro_auc = macro_auroc(&ts)?;
    println!(
        "macro AUROC = {} (excluded columns: {:?})",
        macro_auc.value, macro_auc.excluded
    );

    // Bias: subgroup-A macro AUROC minus subgroup-B macro AUROC.
    let b = bias(&ts)?;
    println!("bias = {:+.3} favoring {:?}", b.value, b.favored);

    // Student-t confidence interval; half-width from the n-1 dof quantile.
    let (mean, hw) = mean_ci(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.95)?;
    println!("mean_ci([1..5], 0.95) = {mean} +/- {hw:.4}");

    // Paired t-test; identical pairs give p = 1.
    let a = [2.0, 4.0, 6.0, 8.0];
    let c = [1.0, 2.0, 3.0, 4.0];
    println!("paired_t_test(a, a) p = {}", paired_t_test(&a, &a)?);
    println!("paired_t_test(a, b) p = {:.5}", paired_t_test(&a, &c)?);
    Ok(())
}
