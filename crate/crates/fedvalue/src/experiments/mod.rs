//! Config-driven experiment runner: scenario construction over the split
//! regimes and label-flip variants, repeated seeded runs, coalition valuation
//! through a chosen back-end, reward allocation, and statistical reports.

pub mod report;

pub use report::{
    emit_flip_report, emit_reports, load_flip_report, load_report, verify_report, Aggregate,
    ClientManifest, FlipReport, FlipRow, MeanCi, PairedTest, PoolOutcome, RepeatFailure,
    RepeatRow, RunReport, TimingRow,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::{run_fedavg, FLRunConfig};
use crate::metrics::Favored;
use crate::model::Arch;
use crate::rewards::{
    bias_rewards, combined_rewards, perf_rewards, NegativePhiPolicy, PoolObjective, PoolSource,
    RewardAllocation, RewardPool, DEFAULT_BIAS_TOL,
};
use crate::seeds::{stage_seed, Stage};
use crate::shapley::{
    ensemble_tables, exact_tables, fit_client_heads, gradient_accum_tables, shapley_from_table,
    BackendTables, EnsembleAccumulation, ExactGuard, MAX_CLIENTS,
};
use crate::synthdata::{
    flip_labels, generate, split, ClientDataset, GeneratorSpec, Sample, SplitPlan, SplitRegime,
    Subgroup,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Which utility-table back-end values the coalitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValuationBackend {
    Exact,
    GradientAccum,
    Ensemble,
}

impl std::str::FromStr for ValuationBackend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ValuationBackend::Exact),
            "gradient-accum" => Ok(ValuationBackend::GradientAccum),
            "ensemble" => Ok(ValuationBackend::Ensemble),
            other => Err(Error::Config(format!(
                "unknown backend '{other}' (expected exact | gradient-accum | ensemble)"
            ))),
        }
    }
}

/// Shape of the synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub feature_dim: usize,
    pub label_count: usize,
    pub per_client_size: usize,
    pub train_fraction: f64,
    /// Held-out test samples contributed by each source to the shared test
    /// set, drawn at the source's native subgroup share.
    pub test_size_per_source: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            feature_dim: 20,
            label_count: 8,
            per_client_size: 1000,
            train_fraction: 0.8,
            test_size_per_source: 500,
        }
    }
}

/// One data source; each source feeds `n_clients / sources` paired clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub name: String,
    pub subgroup_a_share: f64,
    /// Subgroup label-map disparity knob in [0, 1].
    pub disparity: f64,
    /// Logit noise of the label maps.
    pub label_noise: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            name: "source".into(),
            subgroup_a_share: 0.5,
            disparity: 0.5,
            label_noise: 0.5,
        }
    }
}

/// Shared-model training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch: usize,
    pub local_epochs: usize,
    pub patience: usize,
    pub max_rounds: usize,
    /// Hidden width of the shared model; 0 selects the linear model.
    pub hidden: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 0.1,
            batch: 32,
            local_epochs: 1,
            patience: 10,
            max_rounds: 200,
            hidden: 16,
        }
    }
}

/// Label-flip corruption plan. Flipped clients must leave their pair
/// counterpart unflipped so the study can compare the two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlipPlan {
    pub flipped_clients: Vec<usize>,
    /// Ratio grid for the flip study.
    pub ratios: Vec<f64>,
    /// Single ratio applied by a plain `run`.
    pub run_ratio: f64,
}

impl Default for FlipPlan {
    fn default() -> Self {
        FlipPlan {
            flipped_clients: vec![1, 3, 5],
            ratios: vec![0.025, 0.05, 0.075],
            run_ratio: 0.075,
        }
    }
}

/// One reward pool of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub id: String,
    pub objective: PoolObjective,
    pub amount: f64,
    pub source: PoolSource,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            id: "performance".into(),
            objective: PoolObjective::Performance,
            amount: 60.0,
            source: PoolSource::External,
        }
    }
}

impl PoolConfig {
    fn to_pool(&self) -> RewardPool {
        RewardPool {
            id: self.id.clone(),
            amount: self.amount,
            source: self.source,
            objective: self.objective,
        }
    }
}

/// Valuation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValuationConfig {
    /// Client cap for the exact back-end.
    pub exact_guard_max: usize,
    pub allow_large_exact: bool,
    pub ensemble_accumulation: EnsembleAccumulation,
    /// Absolute tolerance for the bias scheme's degenerate rules.
    pub bias_tol: f64,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig {
            exact_guard_max: 6,
            allow_large_exact: false,
            ensemble_accumulation: EnsembleAccumulation::Probabilities,
            bias_tol: DEFAULT_BIAS_TOL,
        }
    }
}

/// Full declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub n_clients: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub backend: ValuationBackend,
    pub regime: SplitRegime,
    /// Abort when more than this fraction of repeats fail.
    pub repeat_failure_threshold: f64,
    /// Default output directory; CLI `--out` overrides without changing the
    /// report echo.
    pub out_dir: Option<String>,
    pub data: DataConfig,
    pub sources: Vec<SourceConfig>,
    pub training: TrainingConfig,
    pub flip_plan: Option<FlipPlan>,
    pub pools: Vec<PoolConfig>,
    pub valuation: ValuationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        // Three sources with distinct disparity knobs and realistic minority
        // shares, two clients each.
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: "experiment".into(),
            n_clients: 6,
            repeats: 10,
            master_seed: 42,
            backend: ValuationBackend::Ensemble,
            regime: SplitRegime::AsIs,
            repeat_failure_threshold: 0.2,
            out_dir: None,
            data: DataConfig::default(),
            sources: vec![
                SourceConfig {
                    name: "alpha".into(),
                    subgroup_a_share: 0.435,
                    disparity: 0.25,
                    label_noise: 0.6,
                },
                SourceConfig {
                    name: "beta".into(),
                    subgroup_a_share: 0.406,
                    disparity: 0.5,
                    label_noise: 0.4,
                },
                SourceConfig {
                    name: "gamma".into(),
                    subgroup_a_share: 0.474,
                    disparity: 0.75,
                    label_noise: 0.5,
                },
            ],
            training: TrainingConfig::default(),
            flip_plan: None,
            pools: vec![
                PoolConfig {
                    id: "performance".into(),
                    objective: PoolObjective::Performance,
                    amount: 60.0,
                    source: PoolSource::External,
                },
                PoolConfig {
                    id: "subgroup-bias".into(),
                    objective: PoolObjective::Bias,
                    amount: 60.0,
                    source: PoolSource::External,
                },
            ],
            valuation: ValuationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("config does not match the schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config serialize: {e}")))
    }

    pub fn clients_per_source(&self) -> usize {
        self.n_clients / self.sources.len().max(1)
    }

    pub fn arch(&self) -> Arch {
        if self.training.hidden == 0 {
            Arch::linear(self.data.feature_dim, self.data.label_count)
        } else {
            Arch::mlp(
                self.data.feature_dim,
                self.training.hidden,
                self.data.label_count,
            )
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty() {
            return Err(Error::Config("name must not be empty".into()));
        }
        if self.sources.is_empty() {
            return Err(Error::Config("at least one [[sources]] entry required".into()));
        }
        if self.n_clients == 0 || self.n_clients > MAX_CLIENTS {
            return Err(Error::Config(format!(
                "n_clients must be in 1..={MAX_CLIENTS}, got {}",
                self.n_clients
            )));
        }
        if !self.n_clients.is_multiple_of(self.sources.len()) {
            return Err(Error::Config(format!(
                "n_clients {} must divide evenly over {} sources",
                self.n_clients,
                self.sources.len()
            )));
        }
        if !self.clients_per_source().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "each source needs an even number of clients for pairing, got {}",
                self.clients_per_source()
            )));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.repeat_failure_threshold) {
            return Err(Error::Config(
                "repeat_failure_threshold must be in [0, 1]".into(),
            ));
        }
        if self.data.feature_dim == 0 || self.data.label_count == 0 {
            return Err(Error::Config("feature_dim and label_count must be >= 1".into()));
        }
        if self.data.per_client_size == 0 {
            return Err(Error::Config("per_client_size must be >= 1".into()));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        if self.data.test_size_per_source < 2 {
            return Err(Error::Config(
                "test_size_per_source must be >= 2 (both subgroups must appear)".into(),
            ));
        }
        for src in &self.sources {
            if src.name.is_empty() {
                return Err(Error::Config("source names must not be empty".into()));
            }
            if !(src.subgroup_a_share > 0.0 && src.subgroup_a_share < 1.0) {
                return Err(Error::Config(format!(
                    "source '{}': subgroup_a_share must be strictly inside (0, 1)",
                    src.name
                )));
            }
            if !(0.0..=1.0).contains(&src.disparity) {
                return Err(Error::Config(format!(
                    "source '{}': disparity must be in [0, 1]",
                    src.name
                )));
            }
            if src.label_noise < 0.0 {
                return Err(Error::Config(format!(
                    "source '{}': label_noise must be >= 0",
                    src.name
                )));
            }
        }
        if self.training.lr <= 0.0 {
            return Err(Error::Config("training.lr must be > 0".into()));
        }
        if self.training.batch == 0
            || self.training.local_epochs == 0
            || self.training.patience == 0
            || self.training.max_rounds == 0
        {
            return Err(Error::Config(
                "training batch/local_epochs/patience/max_rounds must be >= 1".into(),
            ));
        }
        if matches!(self.backend, ValuationBackend::Exact)
            && self.n_clients > self.valuation.exact_guard_max
            && !self.valuation.allow_large_exact
        {
            return Err(Error::Config(format!(
                "exact backend with {} clients exceeds exact_guard_max {}; \
                 set valuation.allow_large_exact = true to override",
                self.n_clients, self.valuation.exact_guard_max
            )));
        }
        if self.valuation.bias_tol < 0.0 {
            return Err(Error::Config("valuation.bias_tol must be >= 0".into()));
        }
        let mut perf_pools = 0usize;
        let mut ids = std::collections::BTreeSet::new();
        for pool in &self.pools {
            if pool.id.is_empty() {
                return Err(Error::Config("pool ids must not be empty".into()));
            }
            if !ids.insert(pool.id.clone()) {
                return Err(Error::Config(format!("duplicate pool id '{}'", pool.id)));
            }
            pool.to_pool().validate()?;
            if pool.objective == PoolObjective::Performance {
                perf_pools += 1;
            }
        }
        if perf_pools > 1 {
            return Err(Error::Config(
                "at most one performance pool is supported; combined rewards sum \
                 one performance pool with the bias pools"
                    .into(),
            ));
        }
        if let Some(plan) = &self.flip_plan {
            for &r in plan.ratios.iter().chain([&plan.run_ratio]) {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Config(format!(
                        "flip ratio {r} outside [0, 1]"
                    )));
                }
            }
            for &c in &plan.flipped_clients {
                if c >= self.n_clients {
                    return Err(Error::Config(format!(
                        "flipped client {c} outside 0..{}",
                        self.n_clients
                    )));
                }
                let counterpart = c ^ 1;
                if plan.flipped_clients.contains(&counterpart) {
                    return Err(Error::Config(format!(
                        "clients {c} and {counterpart} are pair counterparts; \
                         flipping both leaves the pair unmatched"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Flip ratio applied to a client under a plan (0 when not flipped).
fn flip_ratio_for(plan: Option<&FlipPlan>, client: usize, ratio: f64) -> f64 {
    match plan {
        Some(p) if p.flipped_clients.contains(&client) => ratio,
        _ => 0.0,
    }
}

/// Pool size so the per-subgroup demand is met with ~5-sigma headroom.
fn pool_size_for(need_a: usize, need_b: usize, share: f64) -> usize {
    let base_a = (need_a as f64 / share).ceil();
    let base_b = (need_b as f64 / (1.0 - share)).ceil();
    let base = base_a.max(base_b);
    let slack = 5.0 * (base * share * (1.0 - share)).sqrt();
    (base + slack).ceil() as usize + 64
}

/// Materialized data of one repeat: clients (flips applied) plus the shared
/// test set.
pub fn build_repeat_data(
    cfg: &ExperimentConfig,
    repeat_seed: u64,
    flip_ratio: f64,
) -> Result<(Vec<ClientDataset>, Vec<Sample>)> {
    let cps = cfg.clients_per_source();
    let mut clients: Vec<ClientDataset> = Vec::with_capacity(cfg.n_clients);
    let mut test: Vec<Sample> = Vec::new();

    for (s_idx, src) in cfg.sources.iter().enumerate() {
        let share = src.subgroup_a_share;
        let per = cfg.data.per_client_size;
        let mut need_a = 0usize;
        for c in 0..cps {
            need_a += (cfg.regime.a_share(c % 2, share) * per as f64).round() as usize;
        }
        let need_b = cps * per - need_a;
        let test_a = (share * cfg.data.test_size_per_source as f64).round() as usize;
        let test_b = cfg.data.test_size_per_source - test_a;
        let pool_n = pool_size_for(need_a + test_a, need_b + test_b, share);

        let spec = GeneratorSpec::with_disparity(
            cfg.data.feature_dim,
            cfg.data.label_count,
            share,
            src.disparity,
            src.label_noise,
            stage_seed(repeat_seed, Stage::Generate, s_idx as u64),
        )?;
        let pool = generate(&spec, pool_n)?;

        // Carve the stratified test set first; the remainder feeds the split.
        let mut rest = Vec::with_capacity(pool.len());
        let (mut got_a, mut got_b) = (0usize, 0usize);
        for sample in pool {
            match sample.subgroup {
                Subgroup::A if got_a < test_a => {
                    got_a += 1;
                    test.push(sample);
                }
                Subgroup::B if got_b < test_b => {
                    got_b += 1;
                    test.push(sample);
                }
                _ => rest.push(sample),
            }
        }
        if got_a < test_a || got_b < test_b {
            return Err(Error::Config(format!(
                "source '{}': generated pool too small for the test carve",
                src.name
            )));
        }

        let plan = SplitPlan {
            regime: cfg.regime,
            n_clients: cps,
            per_client_size: per,
            train_fraction: cfg.data.train_fraction,
            native_a_share: share,
        };
        let mut source_clients = split(
            &rest,
            &plan,
            stage_seed(repeat_seed, Stage::Split, s_idx as u64),
        )?;
        for (local, client) in source_clients.iter_mut().enumerate() {
            client.client_id = s_idx * cps + local;
        }
        clients.extend(source_clients);
    }

    for client in clients.iter_mut() {
        let ratio = flip_ratio_for(cfg.flip_plan.as_ref(), client.client_id, flip_ratio);
        if ratio > 0.0 {
            *client = flip_labels(
                client,
                ratio,
                stage_seed(repeat_seed, Stage::Flip, client.client_id as u64),
            )?;
        }
    }
    Ok((clients, test))
}

fn favored_of(bias: f64) -> Favored {
    if bias > 0.0 {
        Favored::A
    } else if bias < 0.0 {
        Favored::B
    } else {
        Favored::None
    }
}

/// Run one repeat end to end; `flip_ratio` is the ratio applied to the plan's
/// flipped clients (0 disables flipping).
fn run_repeat(cfg: &ExperimentConfig, repeat: usize, flip_ratio: f64) -> Result<RepeatRow> {
    let repeat_seed = stage_seed(cfg.master_seed, Stage::Repeat, repeat as u64);
    let (clients, test) = build_repeat_data(cfg, repeat_seed, flip_ratio)?;

    let fl_cfg = FLRunConfig {
        arch: cfg.arch(),
        lr: cfg.training.lr,
        batch: cfg.training.batch,
        local_epochs: cfg.training.local_epochs,
        patience: cfg.training.patience,
        max_rounds: cfg.training.max_rounds,
        seed: stage_seed(repeat_seed, Stage::Federated, 0),
    };

    let tables: BackendTables = match cfg.backend {
        ValuationBackend::Exact => exact_tables(
            &clients,
            &test,
            &fl_cfg,
            ExactGuard {
                max_clients: cfg.valuation.exact_guard_max,
                allow_large: cfg.valuation.allow_large_exact,
            },
        )?,
        ValuationBackend::GradientAccum => {
            let (_, trace) = run_fedavg(&clients, &fl_cfg)?;
            gradient_accum_tables(&trace, &test)?
        }
        ValuationBackend::Ensemble => {
            let (best, trace) = run_fedavg(&clients, &fl_cfg)?;
            let heads = fit_client_heads(&best, &clients)?;
            ensemble_tables(&trace, &heads, &test, cfg.valuation.ensemble_accumulation)?
        }
    };

    let sv_perf = shapley_from_table(&tables.performance)?;
    let sv_bias = shapley_from_table(&tables.bias)?;
    let total_auroc = tables.performance.grand() + 0.5;
    let bias_value = tables.bias.grand();

    let mut pool_outcomes = Vec::with_capacity(cfg.pools.len());
    let mut perf_alloc: Option<RewardAllocation> = None;
    let mut bias_allocs: Vec<RewardAllocation> = Vec::new();
    for pool_cfg in &cfg.pools {
        let pool = pool_cfg.to_pool();
        let alloc = match pool.objective {
            PoolObjective::Performance => {
                let a = perf_rewards(&sv_perf, &pool, NegativePhiPolicy::ClampToZero)?;
                perf_alloc = Some(a.clone());
                a
            }
            PoolObjective::Bias => {
                let a = bias_rewards(&sv_bias, &pool, cfg.valuation.bias_tol)?;
                bias_allocs.push(a.clone());
                a
            }
        };
        pool_outcomes.push(PoolOutcome {
            pool_id: alloc.pool_id.clone(),
            objective: alloc.objective,
            source: alloc.source,
            pool_amount: alloc.pool_amount,
            distributed: alloc.distributed,
            residual: alloc.residual,
            clamped: alloc.clamped,
            rewards: alloc.rewards.clone(),
            profits: alloc.profits.clone(),
        });
    }
    let combined = match &perf_alloc {
        Some(perf) => Some(combined_rewards(perf, &bias_allocs)?),
        None => None,
    };

    let manifest = clients
        .iter()
        .map(|c| ClientManifest {
            client: c.client_id,
            train_total: c.train.len(),
            train_subgroup_a: c.count_subgroup(true, Subgroup::A),
            train_subgroup_b: c.count_subgroup(true, Subgroup::B),
            validation_total: c.validation.len(),
            validation_subgroup_a: c.count_subgroup(false, Subgroup::A),
            validation_subgroup_b: c.count_subgroup(false, Subgroup::B),
            flip_ratio: flip_ratio_for(cfg.flip_plan.as_ref(), c.client_id, flip_ratio),
        })
        .collect();

    let row = RepeatRow {
        repeat,
        seed: repeat_seed,
        total_auroc,
        bias: bias_value,
        bias_favored: favored_of(bias_value),
        phi_performance: sv_perf.phi,
        phi_bias: sv_bias.phi,
        utility_performance: tables.performance,
        utility_bias: tables.bias,
        pools: pool_outcomes,
        combined_totals: combined.as_ref().map(|c| c.totals.clone()),
        combined_distributed: combined.map(|c| c.total_distributed),
        manifest,
        timings: tables.timings,
    };
    row.validate()?;
    Ok(row)
}

/// Run all repeats of the configured experiment and aggregate the report.
/// Repeats are independent and run in parallel; a repeat failure is recorded
/// (with its seed) rather than fatal, until the failure threshold trips.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let ratio = cfg
        .flip_plan
        .as_ref()
        .map(|p| p.run_ratio)
        .unwrap_or(0.0);
    run_experiment_at_ratio(cfg, ratio)
}

fn run_experiment_at_ratio(cfg: &ExperimentConfig, flip_ratio: f64) -> Result<RunReport> {
    let outcomes: Vec<(usize, Result<RepeatRow>)> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| (r, run_repeat(cfg, r, flip_ratio)))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (repeat, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(RepeatFailure {
                repeat,
                seed: stage_seed(cfg.master_seed, Stage::Repeat, repeat as u64),
                error: e.to_string(),
            }),
        }
    }
    let failure_fraction = failures.len() as f64 / cfg.repeats as f64;
    if failure_fraction > cfg.repeat_failure_threshold {
        let detail = failures
            .iter()
            .map(|f| format!("repeat {} (seed {}): {}", f.repeat, f.seed, f.error))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Config(format!(
            "{} of {} repeats failed (threshold {}): {detail}",
            failures.len(),
            cfg.repeats,
            cfg.repeat_failure_threshold
        )));
    }
    RunReport::assemble(cfg.clone(), rows, failures)
}

/// Flip-study comparison: the plan's ratios (plus a zero baseline) each run
/// the full experiment with identical per-repeat seeds, then flipped and
/// unflipped counterpart groups are compared on their performance rewards.
pub fn label_flip_study(cfg: &ExperimentConfig) -> Result<FlipReport> {
    cfg.validate()?;
    let plan = cfg
        .flip_plan
        .clone()
        .ok_or_else(|| Error::Config("flip study needs a [flip_plan] section".into()))?;
    if plan.flipped_clients.is_empty() {
        return Err(Error::Config("flip_plan.flipped_clients is empty".into()));
    }
    let perf_pool_idx = cfg
        .pools
        .iter()
        .position(|p| p.objective == PoolObjective::Performance)
        .ok_or_else(|| {
            Error::Config("flip study compares performance rewards; add a performance pool".into())
        })?;

    let mut ratios: Vec<f64> = plan.ratios.clone();
    if !ratios.contains(&0.0) {
        ratios.insert(0, 0.0);
    }
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();

    let unflipped: Vec<usize> = plan.flipped_clients.iter().map(|&c| c ^ 1).collect();
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in &ratios {
        let report = run_experiment_at_ratio(cfg, ratio)?;
        let group_mean = |row: &RepeatRow, group: &[usize]| -> f64 {
            group
                .iter()
                .map(|&c| row.pools[perf_pool_idx].rewards[c])
                .sum::<f64>()
                / group.len() as f64
        };
        let flipped_means: Vec<f64> = report
            .rows
            .iter()
            .map(|row| group_mean(row, &plan.flipped_clients))
            .collect();
        let unflipped_means: Vec<f64> = report
            .rows
            .iter()
            .map(|row| group_mean(row, &unflipped))
            .collect();
        rows.push(FlipRow::from_groups(ratio, flipped_means, unflipped_means)?);
    }
    Ok(FlipReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            repeats: 2,
            data: DataConfig {
                feature_dim: 8,
                label_count: 4,
                per_client_size: 120,
                train_fraction: 0.8,
                test_size_per_source: 90,
            },
            training: TrainingConfig {
                patience: 2,
                max_rounds: 6,
                batch: 16,
                ..TrainingConfig::default()
            },
            sources: vec![
                SourceConfig {
                    name: "alpha".into(),
                    subgroup_a_share: 0.45,
                    disparity: 0.4,
                    label_noise: 0.5,
                },
                SourceConfig {
                    name: "beta".into(),
                    subgroup_a_share: 0.5,
                    disparity: 0.7,
                    label_noise: 0.5,
                },
            ],
            n_clients: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_config_validates() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = small_cfg();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = ExperimentConfig::from_toml_str("definitely_not_a_field = 3").unwrap_err();
        assert!(err.to_string().contains("schema"), "{err}");
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = small_cfg();
        cfg.n_clients = 3;
        assert!(cfg.validate().is_err());

        let mut cfg = small_cfg();
        cfg.backend = ValuationBackend::Exact;
        cfg.valuation.exact_guard_max = 2;
        assert!(cfg.validate().is_err());
        cfg.valuation.allow_large_exact = true;
        assert!(cfg.validate().is_ok());

        let mut cfg = small_cfg();
        cfg.flip_plan = Some(FlipPlan {
            flipped_clients: vec![0, 1],
            ratios: vec![0.05],
            run_ratio: 0.05,
        });
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("counterpart"), "{err}");

        let mut cfg = small_cfg();
        cfg.pools.push(PoolConfig::default());
        assert!(cfg.validate().is_err(), "duplicate performance pools");
    }

    #[test]
    fn repeat_data_respects_regime_and_flip_plan() {
        let mut cfg = small_cfg();
        cfg.regime = SplitRegime::Pure1000;
        cfg.flip_plan = Some(FlipPlan {
            flipped_clients: vec![1, 3],
            ratios: vec![],
            run_ratio: 0.1,
        });
        let (clients, test) = build_repeat_data(&cfg, 99, 0.1).unwrap();
        assert_eq!(clients.len(), 4);
        assert_eq!(test.len(), 2 * cfg.data.test_size_per_source);
        for c in &clients {
            let a = c.count_subgroup(true, Subgroup::A) + c.count_subgroup(false, Subgroup::A);
            if c.client_id % 2 == 0 {
                assert_eq!(a, cfg.data.per_client_size, "client {}", c.client_id);
            } else {
                assert_eq!(a, 0, "client {}", c.client_id);
            }
        }
        // Flip determinism: same inputs, same corruption.
        let (clients2, _) = build_repeat_data(&cfg, 99, 0.1).unwrap();
        assert_eq!(clients, clients2);
    }

    #[test]
    fn run_experiment_produces_consistent_rows() {
        let cfg = small_cfg();
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.failures.is_empty());
        for row in &report.rows {
            let phi_sum: f64 = row.phi_performance.iter().sum();
            assert!((phi_sum + 0.5 - row.total_auroc).abs() < 1e-9);
            let bias_sum: f64 = row.phi_bias.iter().sum();
            assert!((bias_sum - row.bias).abs() < 1e-9);
            assert_eq!(row.pools.len(), 2);
            assert_eq!(row.timings.len(), 15, "2^4 - 1 coalitions");
        }
        // Aggregate should carry one entry per client.
        let agg = report.aggregate.as_ref().unwrap();
        assert_eq!(agg.phi_performance.len(), 4);
        assert_eq!(agg.paired_tests.len(), 4, "two pairs, two metrics");
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = small_cfg();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn flip_zero_matches_no_flip_run() {
        let mut cfg = small_cfg();
        cfg.flip_plan = Some(FlipPlan {
            flipped_clients: vec![1],
            ratios: vec![],
            run_ratio: 0.0,
        });
        let with_plan = run_experiment(&cfg).unwrap();
        let mut no_plan_cfg = cfg.clone();
        no_plan_cfg.flip_plan = None;
        let without = run_experiment(&no_plan_cfg).unwrap();
        for (a, b) in with_plan.rows.iter().zip(&without.rows) {
            assert_eq!(a.phi_performance, b.phi_performance);
            assert_eq!(a.total_auroc, b.total_auroc);
        }
    }

    #[test]
    fn flip_study_reports_each_ratio() {
        let mut cfg = small_cfg();
        cfg.repeats = 2;
        cfg.flip_plan = Some(FlipPlan {
            flipped_clients: vec![1, 3],
            ratios: vec![0.075],
            run_ratio: 0.075,
        });
        let study = label_flip_study(&cfg).unwrap();
        assert_eq!(study.rows.len(), 2, "zero baseline plus one ratio");
        assert_eq!(study.rows[0].ratio, 0.0);
        assert_eq!(study.rows[1].ratio, 0.075);
        assert_eq!(study.rows[0].per_repeat_flipped.len(), 2);
    }
}
