//! Reward scheme tour: the performance scheme (scaled and full-pool), the
//! bias scheme with its degenerate rules, member-funded profits, and the
//! combined multi-pool total.
//!
//! ```bash
//! cargo run --example reward_schemes
//! ```

use fedvalue::error::Result;
use fedvalue::rewards::{
    bias_rewards, combined_rewards, perf_rewards, perf_rewards_full_pool, profit,
    NegativePhiPolicy, PoolObjective, PoolSource, RewardPool, DEFAULT_BIAS_TOL,
};
use fedvalue::shapley::{ShapleyVector, UtilityKind};

fn pool(id: &str, objective: PoolObjective, source: PoolSource) -> RewardPool {
    RewardPool {
        id: id.into(),
        amount: 60.0,
        source,
        objective,
    }
}

fn print_alloc(label: &str, rewards: &[f64], distributed: f64, residual: f64) {
    let formatted: Vec<String> = rewards.iter().map(|r| format!("{r:.3}")).collect();
    println!(
        "{label}: rewards [{}] MU, distributed {distributed:.3}, residual {residual:.3}",
        formatted.join(", ")
    );
}

fn main() -> Result<()> {
    // Six clients; the utility of the grand coalition is the AUROC gain over
    // a random classifier.
    let sv_perf = ShapleyVector::from_phi(
        UtilityKind::Performance,
        vec![0.058125, 0.058125, 0.04134, 0.04134, 0.055, 0.055],
    );
    println!(
        "performance utility U(D) = {:.4} (total AUROC {:.4})",
        sv_perf.grand_utility,
        sv_perf.grand_utility + 0.5
    );

    // Scaled scheme: the pool shrinks with the utility, each client gets
    // phi / 0.5 * P.
    let external = pool("performance", PoolObjective::Performance, PoolSource::External);
    let alloc = perf_rewards(&sv_perf, &external, NegativePhiPolicy::ClampToZero)?;
    print_alloc("scaled", &alloc.rewards, alloc.distributed, alloc.residual);

    // Full-pool variant spends the entire budget whatever the utility.
    let full = perf_rewards_full_pool(&sv_perf, &external, NegativePhiPolicy::ClampToZero)?;
    print_alloc("full-pool", &full.rewards, full.distributed, full.residual);

    // Member-funded pools define profits: reward minus the equal share.
    let member = pool(
        "performance-member",
        PoolObjective::Performance,
        PoolSource::MemberDeposits,
    );
    let member_alloc = perf_rewards(&sv_perf, &member, NegativePhiPolicy::ClampToZero)?;
    let profits = profit(&member_alloc)?;
    let formatted: Vec<String> = profits.iter().map(|g| format!("{g:+.3}")).collect();
    println!(
        "member-funded profits [{}] MU (sum {:.2e})",
        formatted.join(", "),
        profits.iter().sum::<f64>()
    );

    // Bias scheme: the pool shrinks with |bias|; the strongest contributor to
    // the bias direction anchors at zero.
    let sv_bias = ShapleyVector::from_phi(UtilityKind::Bias, vec![0.06, 0.03, 0.01]);
    let bias_pool = pool("subgroup-bias", PoolObjective::Bias, PoolSource::External);
    let bias_alloc = bias_rewards(&sv_bias, &bias_pool, DEFAULT_BIAS_TOL)?;
    print_alloc(
        "bias",
        &bias_alloc.rewards,
        bias_alloc.distributed,
        bias_alloc.residual,
    );

    // Sign-mirrored contributions produce identical rewards.
    let mirrored = ShapleyVector::from_phi(UtilityKind::Bias, vec![-0.06, -0.03, -0.01]);
    let mirrored_alloc = bias_rewards(&mirrored, &bias_pool, DEFAULT_BIAS_TOL)?;
    print_alloc(
        "bias (mirrored)",
        &mirrored_alloc.rewards,
        mirrored_alloc.distributed,
        mirrored_alloc.residual,
    );

    // Zero bias within tolerance splits the whole pool equally.
    let balanced = ShapleyVector::from_phi(UtilityKind::Bias, vec![1e-9, -1e-9, 0.0]);
    let equal = bias_rewards(&balanced, &bias_pool, DEFAULT_BIAS_TOL)?;
    print_alloc("bias (balanced)", &equal.rewards, equal.distributed, equal.residual);

    // Combined scheme: element-wise sum of one performance pool and any
    // number of bias pools.
    let sv_perf3 = ShapleyVector::from_phi(
        UtilityKind::Performance,
        vec![0.058125, 0.058125, 0.04134],
    );
    let perf3 = perf_rewards(&sv_perf3, &external, NegativePhiPolicy::ClampToZero)?;
    let combined = combined_rewards(&perf3, &[bias_alloc, mirrored_alloc])?;
    let formatted: Vec<String> = combined.totals.iter().map(|t| format!("{t:.3}")).collect();
    println!(
        "combined totals [{}] MU over {:.3} MU distributed",
        formatted.join(", "),
        combined.total_distributed
    );
    Ok(())
}
