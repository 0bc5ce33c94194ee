//! Coalition enumeration, utility tables, and exact Shapley values.
//!
//! A coalition is a bitmask over client indices. A utility table assigns a
//! scalar utility to every non-empty coalition; the empty coalition's utility
//! is fixed at 0 (a random classifier has zero AUROC gain and zero subgroup
//! disparity). Shapley values are evaluated exactly over the complete table:
//!
//! `phi_i = (1/N) * sum over S not containing i of
//!          [U(S + i) - U(S)] / binom(N-1, |S|)`
//!
//! Marginal contributions are summed per subset size in a sorted order, so
//! relabeling clients permutes the output bit-exactly: symmetric clients get
//! bitwise-identical values.

mod backends;

pub use backends::{
    ensemble_tables, exact_tables, fit_client_heads, gradient_accum_tables, score_with_model,
    utility_table_ensemble, utility_table_exact, utility_table_gradient_accum, BackendTables,
    CoalitionTiming, EnsembleAccumulation, ExactGuard,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Enumeration guard: tables hold `2^N - 1` entries.
pub const MAX_CLIENTS: usize = 25;

/// Group-rationality tolerance: `|sum(phi) - U(D)|` must stay below this.
pub const EFFICIENCY_TOL: f64 = 1e-9;

/// A subset of client indices `0..N-1`, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(u32);

impl Coalition {
    pub fn empty() -> Self {
        Coalition(0)
    }

    pub fn full(n_clients: usize) -> Self {
        debug_assert!(n_clients <= MAX_CLIENTS);
        Coalition(((1u64 << n_clients) - 1) as u32)
    }

    pub fn singleton(client: usize) -> Self {
        Coalition(1 << client)
    }

    pub fn from_mask(mask: u32) -> Self {
        Coalition(mask)
    }

    pub fn from_members(members: &[usize]) -> Self {
        Coalition(members.iter().fold(0u32, |m, &i| m | (1 << i)))
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, client: usize) -> bool {
        self.0 & (1 << client) != 0
    }

    pub fn with(self, client: usize) -> Self {
        Coalition(self.0 | (1 << client))
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..32).filter(move |i| mask & (1 << i) != 0)
    }

    /// All non-empty coalitions over `n` clients, ascending by mask.
    pub fn enumerate(n_clients: usize) -> impl Iterator<Item = Coalition> {
        (1u32..(1u32 << n_clients)).map(Coalition)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, m) in self.members().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

/// Which cooperative game a utility table values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    /// Macro AUROC minus 0.5 (gain over a random classifier).
    Performance,
    /// Subgroup AUROC difference.
    Bias,
}

/// Complete map from every non-empty coalition to a scalar utility.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    kind: UtilityKind,
    n_clients: usize,
    /// Dense storage indexed by mask; entry 0 is the empty-coalition 0.
    values: Vec<f64>,
}

impl UtilityTable {
    /// Build from `(coalition, utility)` entries; every non-empty coalition
    /// over `n_clients` must appear exactly once.
    pub fn from_entries(
        kind: UtilityKind,
        n_clients: usize,
        entries: impl IntoIterator<Item = (Coalition, f64)>,
    ) -> Result<Self> {
        if n_clients == 0 || n_clients > MAX_CLIENTS {
            return Err(Error::Valuation(format!(
                "utility table needs 1..={MAX_CLIENTS} clients, got {n_clients}"
            )));
        }
        let size = 1usize << n_clients;
        let mut values = vec![f64::NAN; size];
        values[0] = 0.0;
        for (c, u) in entries {
            if c.is_empty() || (c.mask() as usize) >= size {
                return Err(Error::Valuation(format!(
                    "coalition {c} outside the non-empty subsets of {n_clients} clients"
                )));
            }
            if !u.is_finite() {
                return Err(Error::Valuation(format!("non-finite utility for {c}")));
            }
            if !values[c.mask() as usize].is_nan() {
                return Err(Error::Valuation(format!("duplicate entry for {c}")));
            }
            values[c.mask() as usize] = u;
        }
        let missing: Vec<String> = (1..size)
            .filter(|&m| values[m].is_nan())
            .map(|m| Coalition::from_mask(m as u32).to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Valuation(format!(
                "incomplete table, missing coalitions: {}",
                missing.join(" ")
            )));
        }
        Ok(UtilityTable {
            kind,
            n_clients,
            values,
        })
    }

    pub fn kind(&self) -> UtilityKind {
        self.kind
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    /// Utility of a coalition; the empty coalition is 0 by convention.
    pub fn get(&self, c: Coalition) -> f64 {
        self.values[c.mask() as usize]
    }

    /// Utility of the grand coalition `U(D)`.
    pub fn grand(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn entries(&self) -> impl Iterator<Item = (Coalition, f64)> + '_ {
        (1..self.values.len()).map(|m| (Coalition::from_mask(m as u32), self.values[m]))
    }
}

#[derive(Serialize, Deserialize)]
struct UtilityTableWire {
    utility_kind: UtilityKind,
    n_clients: usize,
    /// Keyed by bitmask integer.
    values: BTreeMap<u32, f64>,
}

impl Serialize for UtilityTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        UtilityTableWire {
            utility_kind: self.kind,
            n_clients: self.n_clients,
            values: self.entries().map(|(c, u)| (c.mask(), u)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for UtilityTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = UtilityTableWire::deserialize(deserializer)?;
        UtilityTable::from_entries(
            wire.utility_kind,
            wire.n_clients,
            wire.values
                .into_iter()
                .map(|(m, u)| (Coalition::from_mask(m), u)),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Per-client Shapley values for one utility function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyVector {
    pub kind: UtilityKind,
    pub phi: Vec<f64>,
    /// Utility of the grand coalition; equals `sum(phi)` within tolerance.
    pub grand_utility: f64,
}

impl ShapleyVector {
    /// Wrap raw values, fixing the grand utility to the exact sum.
    pub fn from_phi(kind: UtilityKind, phi: Vec<f64>) -> Self {
        let grand_utility = phi.iter().sum();
        ShapleyVector {
            kind,
            phi,
            grand_utility,
        }
    }

    pub fn n_clients(&self) -> usize {
        self.phi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.phi.iter().sum();
        if (sum - self.grand_utility).abs() > EFFICIENCY_TOL {
            return Err(Error::Valuation(format!(
                "group rationality violated: sum(phi) = {sum}, U(D) = {}",
                self.grand_utility
            )));
        }
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Sum in a canonical order so bitwise-equal term multisets produce
/// bitwise-equal sums regardless of enumeration order.
fn sum_sorted(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| a.total_cmp(b));
    terms.iter().sum()
}

/// Exact Shapley evaluation over a complete table.
pub fn shapley_from_table(table: &UtilityTable) -> Result<ShapleyVector> {
    let n = table.n_clients();
    let full = 1usize << n;
    let inv_binom: Vec<f64> = (0..n).map(|s| 1.0 / binomial(n - 1, s)).collect();

    let mut phi = Vec::with_capacity(n);
    let mut terms_by_size: Vec<Vec<f64>> = (0..n)
        .map(|s| Vec::with_capacity(binomial(n - 1, s) as usize))
        .collect();
    for i in 0..n {
        let bit = 1usize << i;
        for bucket in &mut terms_by_size {
            bucket.clear();
        }
        for mask in 0..full {
            if mask & bit != 0 {
                continue;
            }
            let size = mask.count_ones() as usize;
            let delta = table.values[mask | bit] - table.values[mask];
            terms_by_size[size].push(delta);
        }
        let mut total = 0.0;
        for (size, bucket) in terms_by_size.iter_mut().enumerate() {
            total += inv_binom[size] * sum_sorted(bucket);
        }
        phi.push(total / n as f64);
    }

    let sv = ShapleyVector {
        kind: table.kind(),
        phi,
        grand_utility: table.grand(),
    };
    sv.validate()?;
    Ok(sv)
}
