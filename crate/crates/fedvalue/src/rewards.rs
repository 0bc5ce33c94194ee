//! Monetary reward allocation from Shapley vectors.
//!
//! Three schemes over fixed pools:
//!
//! * performance: the distributed pool scales with the AUROC gain,
//!   `P_dist = P * U(D) / 0.5`, and rewards follow `R_i = phi_i / 0.5 * P`;
//!   a full-pool variant distributes all of `P` in proportion `phi_i / U(D)`;
//! * bias: the distributed pool shrinks with the absolute bias,
//!   `P_dist = P * (1 - |U(D)|)`; the client contributing most to the bias
//!   direction anchors at zero reward and the rest receive the pool in
//!   proportion to their distance from that anchor;
//! * combined: element-wise sum over one performance pool and any number of
//!   bias pools.
//!
//! Rewards are carried as exact reals; monetary rounding happens only at
//! report emission so the conservation identities hold pre-rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapley::{ShapleyVector, UtilityKind};

/// Conservation tolerance: `|sum(R) - P_dist|` must stay below this.
pub const CONSERVATION_TOL: f64 = 1e-9;

/// Default absolute tolerance for the bias scheme's degenerate rules.
pub const DEFAULT_BIAS_TOL: f64 = 1e-6;

/// Where the pool's money comes from. Member-funded pools define profits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolSource {
    External,
    MemberDeposits,
}

/// What the pool pays for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolObjective {
    Performance,
    Bias,
}

/// A fixed reward budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardPool {
    pub id: String,
    /// Budget in monetary units; finite and positive.
    pub amount: f64,
    pub source: PoolSource,
    pub objective: PoolObjective,
}

impl RewardPool {
    pub fn validate(&self) -> Result<()> {
        if !(self.amount > 0.0 && self.amount.is_finite()) {
            return Err(Error::Config(format!(
                "pool '{}': amount must be finite and > 0, got {}",
                self.id, self.amount
            )));
        }
        Ok(())
    }
}

/// Handling of negative performance Shapley values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativePhiPolicy {
    /// Clamp negative values to zero and distribute the pool proportionally
    /// over the positive ones (default).
    #[default]
    ClampToZero,
    /// Apply the reward formula literally; negative values earn negative
    /// rewards.
    Raw,
}

/// Per-client rewards for one pool, with the conservation bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardAllocation {
    pub pool_id: String,
    pub objective: PoolObjective,
    pub source: PoolSource,
    pub rewards: Vec<f64>,
    /// Per-client profit `R_i - P_dist / |D|`; only for member-funded pools.
    pub profits: Option<Vec<f64>>,
    pub pool_amount: f64,
    /// Actually distributed pool `P_dist`.
    pub distributed: f64,
    /// `P - P_dist`, returned to the source (or split back equally).
    pub residual: f64,
    /// Entire pool distributed regardless of utility.
    pub full_pool: bool,
    /// Negative Shapley values were clamped before distribution.
    pub clamped: bool,
}

impl RewardAllocation {
    fn finish(mut self) -> Result<Self> {
        let total: f64 = self.rewards.iter().sum();
        if (total - self.distributed).abs() > CONSERVATION_TOL {
            return Err(Error::Allocation(format!(
                "pool '{}': rewards sum to {total}, distributed pool is {}",
                self.pool_id, self.distributed
            )));
        }
        if self.residual < -CONSERVATION_TOL {
            return Err(Error::Allocation(format!(
                "pool '{}': negative residual {}",
                self.pool_id, self.residual
            )));
        }
        if self.source == PoolSource::MemberDeposits {
            let n = self.rewards.len() as f64;
            let share = self.distributed / n;
            self.profits = Some(self.rewards.iter().map(|r| r - share).collect());
        }
        Ok(self)
    }
}

/// Performance rewards: `P_dist = P * U(D) / 0.5`, `R_i = phi_i / 0.5 * P`.
pub fn perf_rewards(
    sv: &ShapleyVector,
    pool: &RewardPool,
    policy: NegativePhiPolicy,
) -> Result<RewardAllocation> {
    pool.validate()?;
    sv.validate()?;
    if sv.kind != UtilityKind::Performance || pool.objective != PoolObjective::Performance {
        return Err(Error::Domain(
            "performance rewards need a performance Shapley vector and pool".into(),
        ));
    }
    let u = sv.grand_utility;
    if u > 0.5 {
        return Err(Error::Domain(format!(
            "U(D) = {u} exceeds 0.5, impossible for an AUROC-gain utility"
        )));
    }
    if u < 0.0 {
        return Err(Error::Domain(format!(
            "U(D) = {u} is negative; the standard scheme distributes nothing \
             for a below-random model"
        )));
    }
    let p = pool.amount;
    let distributed = p * u / 0.5;
    let has_negative = sv.phi.iter().any(|&phi| phi < 0.0);
    let (rewards, clamped) = match policy {
        NegativePhiPolicy::Raw => (sv.phi.iter().map(|phi| phi / 0.5 * p).collect(), false),
        NegativePhiPolicy::ClampToZero if !has_negative => {
            (sv.phi.iter().map(|phi| phi / 0.5 * p).collect(), false)
        }
        NegativePhiPolicy::ClampToZero => {
            let positive_sum: f64 = sv.phi.iter().filter(|&&phi| phi > 0.0).sum();
            if positive_sum <= 0.0 {
                return Err(Error::Allocation(
                    "all Shapley values non-positive; nothing distributable".into(),
                ));
            }
            let rewards = sv
                .phi
                .iter()
                .map(|&phi| {
                    if phi > 0.0 {
                        phi / positive_sum * distributed
                    } else {
                        0.0
                    }
                })
                .collect();
            (rewards, true)
        }
    };
    RewardAllocation {
        pool_id: pool.id.clone(),
        objective: pool.objective,
        source: pool.source,
        rewards,
        profits: None,
        pool_amount: p,
        distributed,
        residual: p - distributed,
        full_pool: false,
        clamped,
    }
    .finish()
}

/// Full-pool variant: distribute all of `P` in proportion `phi_i / U(D)`.
pub fn perf_rewards_full_pool(
    sv: &ShapleyVector,
    pool: &RewardPool,
    policy: NegativePhiPolicy,
) -> Result<RewardAllocation> {
    pool.validate()?;
    sv.validate()?;
    if sv.kind != UtilityKind::Performance || pool.objective != PoolObjective::Performance {
        return Err(Error::Domain(
            "performance rewards need a performance Shapley vector and pool".into(),
        ));
    }
    let u = sv.grand_utility;
    if u == 0.0 {
        return Err(Error::Allocation(
            "U(D) = 0: full-pool distribution divides by zero".into(),
        ));
    }
    let p = pool.amount;
    let has_negative = sv.phi.iter().any(|&phi| phi < 0.0);
    let (rewards, clamped): (Vec<f64>, bool) = match policy {
        NegativePhiPolicy::Raw => (sv.phi.iter().map(|phi| phi / u * p).collect(), false),
        NegativePhiPolicy::ClampToZero if !has_negative => {
            (sv.phi.iter().map(|phi| phi / u * p).collect(), false)
        }
        NegativePhiPolicy::ClampToZero => {
            let positive_sum: f64 = sv.phi.iter().filter(|&&phi| phi > 0.0).sum();
            if positive_sum <= 0.0 {
                return Err(Error::Allocation(
                    "all Shapley values non-positive; nothing distributable".into(),
                ));
            }
            (
                sv.phi
                    .iter()
                    .map(|&phi| if phi > 0.0 { phi / positive_sum * p } else { 0.0 })
                    .collect(),
                true,
            )
        }
    };
    RewardAllocation {
        pool_id: pool.id.clone(),
        objective: pool.objective,
        source: pool.source,
        rewards,
        profits: None,
        pool_amount: p,
        distributed: p,
        residual: 0.0,
        full_pool: true,
        clamped,
    }
    .finish()
}

/// Per-client profit `G_i = R_i - P_dist / |D|` for member-funded pools.
pub fn profit(alloc: &RewardAllocation) -> Result<Vec<f64>> {
    if alloc.source != PoolSource::MemberDeposits {
        return Err(Error::Domain(
            "profit is undefined for externally funded pools".into(),
        ));
    }
    let n = alloc.rewards.len() as f64;
    let share = alloc.distributed / n;
    Ok(alloc.rewards.iter().map(|r| r - share).collect())
}

/// Bias rewards: `P_dist = P * (1 - |U(D)|)`. If the bias or the value spread
/// is within `tol`, the pool is split equally. Otherwise the client with the
/// largest contribution in the bias direction anchors at zero and the rest
/// share the pool in proportion to their distance from the anchor.
pub fn bias_rewards(sv: &ShapleyVector, pool: &RewardPool, tol: f64) -> Result<RewardAllocation> {
    pool.validate()?;
    sv.validate()?;
    if sv.kind != UtilityKind::Bias || pool.objective != PoolObjective::Bias {
        return Err(Error::Domain(
            "bias rewards need a bias Shapley vector and pool".into(),
        ));
    }
    if tol < 0.0 || !tol.is_finite() {
        return Err(Error::Config(format!("tol must be finite and >= 0, got {tol}")));
    }
    let u = sv.grand_utility;
    if u.abs() > 1.0 {
        return Err(Error::Domain(format!(
            "|U(D)| = {} exceeds 1; bias is a difference of two AUROCs",
            u.abs()
        )));
    }
    let n = sv.phi.len();
    let p = pool.amount;
    let distributed = p * (1.0 - u.abs());
    let spread = {
        let max = sv.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = sv.phi.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    };

    let rewards: Vec<f64> = if u.abs() <= tol || spread <= tol {
        // All contributions balance; split equally.
        vec![distributed / n as f64; n]
    } else {
        let sign = if u > 0.0 { 1.0 } else { -1.0 };
        // Anchor: highest contribution toward the absolute bias, lowest
        // index on ties.
        let mut anchor = 0usize;
        for i in 1..n {
            if sign * sv.phi[i] > sign * sv.phi[anchor] {
                anchor = i;
            }
        }
        let deltas: Vec<f64> = sv.phi.iter().map(|phi| sv.phi[anchor] - phi).collect();
        let delta_sum: f64 = deltas.iter().sum();
        deltas
            .iter()
            .map(|d| {
                // Keep the anchor's zero positive for a negative delta sum.
                if *d == 0.0 {
                    0.0
                } else {
                    d / delta_sum * distributed
                }
            })
            .collect()
    };

    RewardAllocation {
        pool_id: pool.id.clone(),
        objective: pool.objective,
        source: pool.source,
        rewards,
        profits: None,
        pool_amount: p,
        distributed,
        residual: p - distributed,
        full_pool: false,
        clamped: false,
    }
    .finish()
}

/// Element-wise sum over one performance pool and any number of bias pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedRewards {
    pub totals: Vec<f64>,
    /// Sum of the pools' distributed amounts.
    pub total_distributed: f64,
}

pub fn combined_rewards(
    perf: &RewardAllocation,
    bias_allocs: &[RewardAllocation],
) -> Result<CombinedRewards> {
    let n = perf.rewards.len();
    for alloc in bias_allocs {
        if alloc.rewards.len() != n {
            return Err(Error::Domain(format!(
                "pool '{}' covers {} clients, expected {n}",
                alloc.pool_id,
                alloc.rewards.len()
            )));
        }
    }
    let mut totals = perf.rewards.clone();
    let mut total_distributed = perf.distributed;
    for alloc in bias_allocs {
        for (t, r) in totals.iter_mut().zip(&alloc.rewards) {
            *t += r;
        }
        total_distributed += alloc.distributed;
    }
    Ok(CombinedRewards {
        totals,
        total_distributed,
    })
}
