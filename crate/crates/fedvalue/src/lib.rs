//! Simulation and valuation toolkit for federated-learning incentives.
//!
//! Quantifies each client's Shapley-value contribution to predictive
//! performance and to subgroup bias, and allocates monetary rewards from
//! fixed pools, with a desk-scale experiment harness (synthetic multi-label
//! data, the four split regimes, label flips, repeated seeded runs, and
//! statistical reports).
//!
//! The pipeline, bottom to top:
//!
//! * [`synthdata`]: seeded synthetic datasets, split regimes, label flips;
//! * [`model`]: the shared multi-label classifier and logistic heads;
//! * [`fedsim`]: FedAvg rounds, update traces, coalition reconstruction;
//! * [`metrics`]: AUROC, subgroup bias, confidence intervals, t-tests;
//! * [`shapley`]: utility tables (three back-ends) and exact Shapley values;
//! * [`rewards`]: the performance, bias, and combined reward schemes;
//! * [`experiments`]: config-driven runner, flip study, report emission.
//!
//! See the crate's `examples/` directory for one runnable example per
//! capability, and the `fedvalue` binary for the config-driven CLI.

pub mod error;
pub mod experiments;
pub mod fedsim;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rewards;
pub mod seeds;
pub mod shapley;
pub mod stats;
pub mod synthdata;

pub use error::{Error, Result};
pub use experiments::{
    emit_flip_report, emit_reports, label_flip_study, load_flip_report, load_report,
    run_experiment, verify_report, ExperimentConfig, FlipReport, RunReport, ValuationBackend,
};
pub use fedsim::{reconstruct_coalition_model, run_fedavg, FLRunConfig, FLTrace};
pub use metrics::{auroc, bias, macro_auroc, mean_ci, paired_t_test, BiasValue, ScoredTestSet};
pub use model::{
    extract_features, fit_logistic_head, predict_proba, train_local, Arch, LogisticHead,
    ModelParams,
};
pub use rewards::{
    bias_rewards, combined_rewards, perf_rewards, perf_rewards_full_pool, profit,
    NegativePhiPolicy, PoolObjective, PoolSource, RewardAllocation, RewardPool,
};
pub use shapley::{
    shapley_from_table, Coalition, ShapleyVector, UtilityKind, UtilityTable,
};
pub use synthdata::{
    flip_labels, generate, split, ClientDataset, GeneratorSpec, Sample, SplitPlan, SplitRegime,
    Subgroup,
};
