//! Structured run reports, aggregation, and file emission.
//!
//! `summary.json` is the canonical artifact: full-precision, versioned, and
//! byte-deterministic for a given config (wall-clock timings deliberately
//! live only in the CSV timing ledger). The CSV views are shaped like the
//! tables and figures an analyst would plot.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean_ci, paired_t_test, Favored};
use crate::rewards::{
    bias_rewards, combined_rewards, perf_rewards, NegativePhiPolicy, PoolObjective, PoolSource,
};
use crate::shapley::{shapley_from_table, CoalitionTiming, ShapleyVector, UtilityTable};

use super::ExperimentConfig;

/// Row-level identity tolerance (`sum(phi) + 0.5` vs the reported AUROC).
pub const ROW_IDENTITY_TOL: f64 = 1e-9;

const CONFIDENCE_LEVEL: f64 = 0.95;

/// Mean with a 95% half-width (absent when only one repeat succeeded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: Option<f64>,
}

fn summarize(values: &[f64]) -> Result<MeanCi> {
    match values.len() {
        0 => Err(Error::Stats("no values to summarize".into())),
        1 => Ok(MeanCi {
            mean: values[0],
            half_width: None,
        }),
        _ => {
            let (mean, hw) = mean_ci(values, CONFIDENCE_LEVEL)?;
            Ok(MeanCi {
                mean,
                half_width: Some(hw),
            })
        }
    }
}

/// One pool's allocation within a repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolOutcome {
    pub pool_id: String,
    pub objective: PoolObjective,
    pub source: PoolSource,
    pub pool_amount: f64,
    pub distributed: f64,
    pub residual: f64,
    pub clamped: bool,
    pub rewards: Vec<f64>,
    pub profits: Option<Vec<f64>>,
}

/// Per-client dataset composition, persisted for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientManifest {
    pub client: usize,
    pub train_total: usize,
    pub train_subgroup_a: usize,
    pub train_subgroup_b: usize,
    pub validation_total: usize,
    pub validation_subgroup_a: usize,
    pub validation_subgroup_b: usize,
    pub flip_ratio: f64,
}

/// Everything one repeat produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRow {
    pub repeat: usize,
    pub seed: u64,
    pub total_auroc: f64,
    pub bias: f64,
    pub bias_favored: Favored,
    pub phi_performance: Vec<f64>,
    pub phi_bias: Vec<f64>,
    pub utility_performance: UtilityTable,
    pub utility_bias: UtilityTable,
    pub pools: Vec<PoolOutcome>,
    pub combined_totals: Option<Vec<f64>>,
    pub combined_distributed: Option<f64>,
    pub manifest: Vec<ClientManifest>,
    /// Wall-clock ledger; kept out of `summary.json` so reruns of the same
    /// config stay byte-identical.
    #[serde(skip)]
    pub timings: Vec<CoalitionTiming>,
}

impl RepeatRow {
    pub fn validate(&self) -> Result<()> {
        let phi_sum: f64 = self.phi_performance.iter().sum();
        if (phi_sum + 0.5 - self.total_auroc).abs() > ROW_IDENTITY_TOL {
            return Err(Error::Valuation(format!(
                "repeat {}: sum(phi) + 0.5 = {} but total AUROC = {}",
                self.repeat,
                phi_sum + 0.5,
                self.total_auroc
            )));
        }
        let bias_sum: f64 = self.phi_bias.iter().sum();
        if (bias_sum - self.bias).abs() > ROW_IDENTITY_TOL {
            return Err(Error::Valuation(format!(
                "repeat {}: sum(bias phi) = {bias_sum} but bias = {}",
                self.repeat, self.bias
            )));
        }
        Ok(())
    }
}

/// A repeat that errored; its seed makes the failure reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatFailure {
    pub repeat: usize,
    pub seed: u64,
    pub error: String,
}

/// Paired t-test between two counterpart clients on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub metric: String,
    pub client_a: usize,
    pub client_b: usize,
    pub p_value: f64,
}

/// One pool's aggregated rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolAggregate {
    pub pool_id: String,
    pub rewards: Vec<MeanCi>,
    pub profits: Option<Vec<MeanCi>>,
}

/// Across-repeat statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_repeats: usize,
    pub total_auroc: MeanCi,
    pub bias: MeanCi,
    pub phi_performance: Vec<MeanCi>,
    pub phi_bias: Vec<MeanCi>,
    pub pools: Vec<PoolAggregate>,
    pub combined: Option<Vec<MeanCi>>,
    /// Counterpart-pair significance tests (clients 2k vs 2k+1).
    pub paired_tests: Vec<PairedTest>,
}

/// Per-coalition timing, flattened for the ledger CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingRow {
    pub repeat: usize,
    pub coalition_mask: u32,
    pub micros: u64,
}

/// Full structured report of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<RepeatRow>,
    pub failures: Vec<RepeatFailure>,
    pub aggregate: Option<Aggregate>,
}

impl RunReport {
    pub(crate) fn assemble(
        config: ExperimentConfig,
        rows: Vec<RepeatRow>,
        failures: Vec<RepeatFailure>,
    ) -> Result<RunReport> {
        let aggregate = if rows.is_empty() {
            None
        } else {
            Some(Self::aggregate(&config, &rows)?)
        };
        Ok(RunReport {
            schema_version: super::SCHEMA_VERSION,
            config,
            rows,
            failures,
            aggregate,
        })
    }

    fn aggregate(config: &ExperimentConfig, rows: &[RepeatRow]) -> Result<Aggregate> {
        let n_clients = config.n_clients;
        let column = |f: &dyn Fn(&RepeatRow) -> f64| -> Vec<f64> { rows.iter().map(f).collect() };

        let total_auroc = summarize(&column(&|r| r.total_auroc))?;
        let bias = summarize(&column(&|r| r.bias))?;
        let per_client = |f: &dyn Fn(&RepeatRow, usize) -> f64| -> Result<Vec<MeanCi>> {
            (0..n_clients)
                .map(|c| summarize(&rows.iter().map(|r| f(r, c)).collect::<Vec<_>>()))
                .collect()
        };
        let phi_performance = per_client(&|r, c| r.phi_performance[c])?;
        let phi_bias = per_client(&|r, c| r.phi_bias[c])?;

        let mut pools = Vec::with_capacity(config.pools.len());
        for (p_idx, pool_cfg) in config.pools.iter().enumerate() {
            let rewards = per_client(&|r, c| r.pools[p_idx].rewards[c])?;
            let profits = if pool_cfg.source == PoolSource::MemberDeposits {
                Some(per_client(&|r, c| {
                    r.pools[p_idx].profits.as_ref().expect("member profits")[c]
                })?)
            } else {
                None
            };
            pools.push(PoolAggregate {
                pool_id: pool_cfg.id.clone(),
                rewards,
                profits,
            });
        }

        let combined = if rows.iter().all(|r| r.combined_totals.is_some()) {
            Some(per_client(&|r, c| {
                r.combined_totals.as_ref().expect("combined")[c]
            })?)
        } else {
            None
        };

        let mut paired_tests = Vec::new();
        if rows.len() >= 2 {
            for pair in 0..n_clients / 2 {
                let (a, b) = (2 * pair, 2 * pair + 1);
                for (metric, getter) in [
                    (
                        "phi_performance",
                        (&|r: &RepeatRow, c: usize| r.phi_performance[c])
                            as &dyn Fn(&RepeatRow, usize) -> f64,
                    ),
                    ("phi_bias", &|r: &RepeatRow, c: usize| r.phi_bias[c]),
                ] {
                    let xs: Vec<f64> = rows.iter().map(|r| getter(r, a)).collect();
                    let ys: Vec<f64> = rows.iter().map(|r| getter(r, b)).collect();
                    paired_tests.push(PairedTest {
                        metric: metric.to_string(),
                        client_a: a,
                        client_b: b,
                        p_value: paired_t_test(&xs, &ys)?,
                    });
                }
            }
        }

        Ok(Aggregate {
            n_repeats: rows.len(),
            total_auroc,
            bias,
            phi_performance,
            phi_bias,
            pools,
            combined,
            paired_tests,
        })
    }

    /// Flattened wall-clock ledger (empty for reports loaded from disk).
    pub fn timing_rows(&self) -> Vec<TimingRow> {
        self.rows
            .iter()
            .flat_map(|row| {
                row.timings.iter().map(move |t| TimingRow {
                    repeat: row.repeat,
                    coalition_mask: t.coalition_mask,
                    micros: t.micros,
                })
            })
            .collect()
    }
}

/// One ratio's comparison in the label-flip study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipRow {
    pub ratio: f64,
    pub flipped: MeanCi,
    pub unflipped: MeanCi,
    /// Paired t-test between the group means across repeats.
    pub p_value: Option<f64>,
    pub flipped_below_unflipped: bool,
    pub per_repeat_flipped: Vec<f64>,
    pub per_repeat_unflipped: Vec<f64>,
}

impl FlipRow {
    pub(crate) fn from_groups(
        ratio: f64,
        per_repeat_flipped: Vec<f64>,
        per_repeat_unflipped: Vec<f64>,
    ) -> Result<FlipRow> {
        let flipped = summarize(&per_repeat_flipped)?;
        let unflipped = summarize(&per_repeat_unflipped)?;
        let p_value = if per_repeat_flipped.len() >= 2 {
            Some(paired_t_test(&per_repeat_flipped, &per_repeat_unflipped)?)
        } else {
            None
        };
        Ok(FlipRow {
            ratio,
            flipped,
            unflipped,
            p_value,
            flipped_below_unflipped: flipped.mean < unflipped.mean,
            per_repeat_flipped,
            per_repeat_unflipped,
        })
    }
}

/// Label-flip study report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<FlipRow>,
}

fn fmt(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| fmt(x, decimals)).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

/// Write the deterministic artifacts plus the timing ledger.
///
/// Emitted files: `summary.json`, `sv_table.csv` (per-split Shapley row in
/// percent), `bias_sv.csv` (per-client bias contributions), `rewards.csv`
/// (per-pool rewards, monetary values rounded to 2 decimals only here),
/// `data_manifest.csv`, and when timings exist `timings.csv` +
/// `timings_summary.csv`.
pub fn emit_reports(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::Config(
            "report has no successful repeats; nothing to emit".into(),
        ));
    }
    let aggregate = report
        .aggregate
        .as_ref()
        .ok_or_else(|| Error::Config("report lacks aggregate statistics".into()))?;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let summary = dir.join("summary.json");
    write_json(&summary, report)?;
    written.push(summary);

    // One row for the configured split: client Shapley columns in percent
    // plus the total AUROC.
    {
        let path = dir.join("sv_table.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["split".to_string()];
        for c in 0..report.config.n_clients {
            header.push(format!("client{c}_sv_pct"));
            header.push(format!("client{c}_ci_pct"));
        }
        header.push("total_auroc_pct".into());
        header.push("total_auroc_ci_pct".into());
        w.write_record(&header)?;
        let mut rec = vec![report.config.regime.name().to_string()];
        for ci in &aggregate.phi_performance {
            rec.push(fmt(ci.mean * 100.0, 4));
            rec.push(fmt_opt(ci.half_width.map(|h| h * 100.0), 4));
        }
        rec.push(fmt(aggregate.total_auroc.mean * 100.0, 4));
        rec.push(fmt_opt(aggregate.total_auroc.half_width.map(|h| h * 100.0), 4));
        w.write_record(&rec)?;
        w.flush()?;
        written.push(path);
    }

    // Per-client bias contributions.
    {
        let path = dir.join("bias_sv.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["split", "client", "phi_bias_mean", "phi_bias_ci"])?;
        for (c, ci) in aggregate.phi_bias.iter().enumerate() {
            w.write_record([
                report.config.regime.name().to_string(),
                c.to_string(),
                fmt(ci.mean, 6),
                fmt_opt(ci.half_width, 6),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }

    // Rewards (and profits) per pool and client; monetary rounding to
    // 2 decimals happens only at this boundary.
    {
        let path = dir.join("rewards.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "pool_id",
            "client",
            "phi_mean",
            "reward_mean_mu",
            "reward_ci_mu",
            "profit_mean_mu",
            "profit_ci_mu",
        ])?;
        for (p_idx, pool_agg) in aggregate.pools.iter().enumerate() {
            let objective = report.config.pools[p_idx].objective;
            for c in 0..report.config.n_clients {
                let phi = match objective {
                    PoolObjective::Performance => aggregate.phi_performance[c].mean,
                    PoolObjective::Bias => aggregate.phi_bias[c].mean,
                };
                let reward = pool_agg.rewards[c];
                let profit = pool_agg.profits.as_ref().map(|p| p[c]);
                w.write_record([
                    pool_agg.pool_id.clone(),
                    c.to_string(),
                    fmt(phi, 6),
                    fmt(reward.mean, 2),
                    fmt_opt(reward.half_width, 2),
                    fmt_opt(profit.map(|p| p.mean), 2),
                    fmt_opt(profit.and_then(|p| p.half_width), 2),
                ])?;
            }
        }
        if let Some(combined) = &aggregate.combined {
            for (c, ci) in combined.iter().enumerate() {
                w.write_record([
                    "combined".to_string(),
                    c.to_string(),
                    String::new(),
                    fmt(ci.mean, 2),
                    fmt_opt(ci.half_width, 2),
                    String::new(),
                    String::new(),
                ])?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    // Dataset composition audit.
    {
        let path = dir.join("data_manifest.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "repeat",
            "client",
            "partition",
            "total",
            "subgroup_a",
            "subgroup_b",
            "flip_ratio",
        ])?;
        for row in &report.rows {
            for m in &row.manifest {
                w.write_record([
                    row.repeat.to_string(),
                    m.client.to_string(),
                    "train".into(),
                    m.train_total.to_string(),
                    m.train_subgroup_a.to_string(),
                    m.train_subgroup_b.to_string(),
                    fmt(m.flip_ratio, 4),
                ])?;
                w.write_record([
                    row.repeat.to_string(),
                    m.client.to_string(),
                    "validation".into(),
                    m.validation_total.to_string(),
                    m.validation_subgroup_a.to_string(),
                    m.validation_subgroup_b.to_string(),
                    fmt(0.0, 4),
                ])?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    let timing_rows = report.timing_rows();
    if !timing_rows.is_empty() {
        let path = dir.join("timings.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["repeat", "coalition_mask", "micros"])?;
        for t in &timing_rows {
            w.write_record([
                t.repeat.to_string(),
                t.coalition_mask.to_string(),
                t.micros.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join("timings_summary.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["repeat", "n_coalitions", "total_ms", "mean_ms_per_coalition"])?;
        for row in &report.rows {
            if row.timings.is_empty() {
                continue;
            }
            let total: u64 = row.timings.iter().map(|t| t.micros).sum();
            let n = row.timings.len();
            w.write_record([
                row.repeat.to_string(),
                n.to_string(),
                fmt(total as f64 / 1000.0, 3),
                fmt(total as f64 / 1000.0 / n as f64, 3),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }

    Ok(written)
}

/// Flipped vs unflipped performance rewards per ratio.
pub fn emit_flip_report(flip: &FlipReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if flip.rows.is_empty() {
        return Err(Error::Config("flip report has no rows; nothing to emit".into()));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("flip.json");
    write_json(&json_path, flip)?;
    written.push(json_path);

    let path = dir.join("flip.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "ratio",
        "flipped_mean_mu",
        "flipped_ci_mu",
        "unflipped_mean_mu",
        "unflipped_ci_mu",
        "p_value",
        "flipped_below_unflipped",
    ])?;
    for row in &flip.rows {
        w.write_record([
            fmt(row.ratio, 4),
            fmt(row.flipped.mean, 2),
            fmt_opt(row.flipped.half_width, 2),
            fmt(row.unflipped.mean, 2),
            fmt_opt(row.unflipped.half_width, 2),
            row.p_value.map(|p| format!("{p:.6e}")).unwrap_or_default(),
            row.flipped_below_unflipped.to_string(),
        ])?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

pub fn load_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Persist(format!("cannot read {}: {e}", path.display())))?;
    let report: RunReport = serde_json::from_str(&text)?;
    Ok(report)
}

pub fn load_flip_report(dir: &Path) -> Result<Option<FlipReport>> {
    let path = dir.join("flip.json");
    if !path.exists() {
        return Ok(None);
    }
    let report: FlipReport = serde_json::from_str(&fs::read_to_string(&path)?)?;
    Ok(Some(report))
}

/// Recompute Shapley values and rewards from the persisted utility tables and
/// check them against the report bit-exactly.
pub fn verify_report(report: &RunReport) -> Result<()> {
    for row in &report.rows {
        row.validate()?;
        let sv_perf = shapley_from_table(&row.utility_performance)?;
        if sv_perf.phi != row.phi_performance {
            return Err(Error::Valuation(format!(
                "repeat {}: performance Shapley values do not reproduce from the table",
                row.repeat
            )));
        }
        let sv_bias = shapley_from_table(&row.utility_bias)?;
        if sv_bias.phi != row.phi_bias {
            return Err(Error::Valuation(format!(
                "repeat {}: bias Shapley values do not reproduce from the table",
                row.repeat
            )));
        }
        let mut perf_alloc = None;
        let mut bias_allocs = Vec::new();
        for (p_idx, pool_cfg) in report.config.pools.iter().enumerate() {
            let pool = pool_cfg.to_pool();
            let alloc = match pool.objective {
                PoolObjective::Performance => {
                    let a = perf_rewards(
                        &ShapleyVector {
                            kind: sv_perf.kind,
                            phi: sv_perf.phi.clone(),
                            grand_utility: sv_perf.grand_utility,
                        },
                        &pool,
                        NegativePhiPolicy::ClampToZero,
                    )?;
                    perf_alloc = Some(a.clone());
                    a
                }
                PoolObjective::Bias => {
                    let a = bias_rewards(&sv_bias, &pool, report.config.valuation.bias_tol)?;
                    bias_allocs.push(a.clone());
                    a
                }
            };
            if alloc.rewards != row.pools[p_idx].rewards
                || alloc.profits != row.pools[p_idx].profits
            {
                return Err(Error::Valuation(format!(
                    "repeat {}: pool '{}' rewards do not reproduce from phi",
                    row.repeat, pool_cfg.id
                )));
            }
        }
        if let Some(perf) = perf_alloc {
            let combined = combined_rewards(&perf, &bias_allocs)?;
            if Some(&combined.totals) != row.combined_totals.as_ref() {
                return Err(Error::Valuation(format!(
                    "repeat {}: combined totals do not reproduce",
                    row.repeat
                )));
            }
        }
    }
    Ok(())
}
