//! Utility-table construction back-ends.
//!
//! Three routes to the same contract, trading cost for fidelity:
//!
//! * exact retraining: every coalition runs FedAvg from scratch (the
//!   expensive oracle, guarded);
//! * gradient accumulation: every coalition's model is rebuilt from the
//!   grand coalition's recorded per-round deltas, one training run total;
//! * deep-feature LR ensemble: per-client logistic heads over the grand
//!   model's penultimate features; a coalition predicts with the mean of its
//!   members' outputs, so evaluating a coalition costs milliseconds.
//!
//! Each back-end fills the performance and bias tables from the same
//! coalition models, so both utility kinds stay mutually consistent.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::{reconstruct_coalition_model, run_fedavg, FLRunConfig, FLTrace};
use crate::metrics::{bias, macro_auroc, ScoredTestSet};
use crate::model::{extract_features, fit_logistic_head, predict_proba, LogisticHead, ModelParams};
use crate::synthdata::{ClientDataset, Sample};

use super::{Coalition, UtilityKind, UtilityTable};

/// Wall time spent evaluating one coalition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionTiming {
    pub coalition_mask: u32,
    pub micros: u64,
}

/// Both utility tables plus the per-coalition timing ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendTables {
    pub performance: UtilityTable,
    pub bias: UtilityTable,
    pub timings: Vec<CoalitionTiming>,
}

impl BackendTables {
    pub fn table(&self, kind: UtilityKind) -> &UtilityTable {
        match kind {
            UtilityKind::Performance => &self.performance,
            UtilityKind::Bias => &self.bias,
        }
    }

    pub fn into_table(self, kind: UtilityKind) -> UtilityTable {
        match kind {
            UtilityKind::Performance => self.performance,
            UtilityKind::Bias => self.bias,
        }
    }
}

/// Refusal threshold for exact retraining (`2^N - 1` federated runs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactGuard {
    pub max_clients: usize,
    /// Explicit override for larger enumerations.
    pub allow_large: bool,
}

impl Default for ExactGuard {
    fn default() -> Self {
        ExactGuard {
            max_clients: 6,
            allow_large: false,
        }
    }
}

/// Score every test sample with the model.
pub fn score_with_model(params: &ModelParams, test: &[Sample]) -> Result<ScoredTestSet> {
    let probs = test
        .iter()
        .map(|s| predict_proba(params, &s.features))
        .collect::<Result<Vec<_>>>()?;
    ScoredTestSet::new(
        probs,
        test.iter().map(|s| s.labels.clone()).collect(),
        test.iter().map(|s| s.subgroup).collect(),
    )
}

/// Performance utility is the AUROC gain over a random classifier.
fn utilities_of(ts: &ScoredTestSet, coalition: Coalition) -> Result<(f64, f64)> {
    let perf = macro_auroc(ts)
        .map_err(|e| Error::Valuation(format!("coalition {coalition}: {e}")))?
        .value
        - 0.5;
    let bias_val = bias(ts)
        .map_err(|e| Error::Valuation(format!("coalition {coalition}: {e}")))?
        .value;
    Ok((perf, bias_val))
}

fn tables_from_rows(
    n_clients: usize,
    rows: Vec<(Coalition, f64, f64, u64)>,
) -> Result<BackendTables> {
    let performance = UtilityTable::from_entries(
        UtilityKind::Performance,
        n_clients,
        rows.iter().map(|(c, p, _, _)| (*c, *p)),
    )?;
    let bias = UtilityTable::from_entries(
        UtilityKind::Bias,
        n_clients,
        rows.iter().map(|(c, _, b, _)| (*c, *b)),
    )?;
    let timings = rows
        .iter()
        .map(|(c, _, _, micros)| CoalitionTiming {
            coalition_mask: c.mask(),
            micros: *micros,
        })
        .collect();
    Ok(BackendTables {
        performance,
        bias,
        timings,
    })
}

/// The expensive oracle: train every coalition from scratch with a shared
/// seed and evaluate it on the common test set.
pub fn exact_tables(
    clients: &[ClientDataset],
    test: &[Sample],
    cfg: &FLRunConfig,
    guard: ExactGuard,
) -> Result<BackendTables> {
    let n = clients.len();
    if n == 0 {
        return Err(Error::Valuation("exact backend needs clients".into()));
    }
    if n > guard.max_clients && !guard.allow_large {
        return Err(Error::Valuation(format!(
            "exact retraining of {} coalitions for {n} clients exceeds the guard \
             (max {}); set allow_large to override",
            (1u64 << n) - 1,
            guard.max_clients
        )));
    }
    if n > super::MAX_CLIENTS {
        return Err(Error::Valuation(format!(
            "{n} clients exceeds the enumeration bound {}",
            super::MAX_CLIENTS
        )));
    }
    let rows = Coalition::enumerate(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|coalition| {
            let start = Instant::now();
            let members: Vec<ClientDataset> = coalition
                .members()
                .map(|i| clients[i].clone())
                .collect();
            let (best, _) = run_fedavg(&members, cfg)
                .map_err(|e| Error::Valuation(format!("coalition {coalition}: {e}")))?;
            let ts = score_with_model(&best, test)?;
            let (perf, bias_val) = utilities_of(&ts, coalition)?;
            Ok((
                coalition,
                perf,
                bias_val,
                start.elapsed().as_micros() as u64,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    tables_from_rows(n, rows)
}

/// Spec-shaped wrapper producing a single utility kind.
pub fn utility_table_exact(
    clients: &[ClientDataset],
    test: &[Sample],
    kind: UtilityKind,
    cfg: &FLRunConfig,
    guard: ExactGuard,
) -> Result<UtilityTable> {
    Ok(exact_tables(clients, test, cfg, guard)?.into_table(kind))
}

/// One-training-run approximation: every coalition's model is reconstructed
/// from the grand-coalition trace, then evaluated on the test set.
pub fn gradient_accum_tables(trace: &FLTrace, test: &[Sample]) -> Result<BackendTables> {
    let n = trace.n_clients;
    if n == 0 || n > super::MAX_CLIENTS {
        return Err(Error::Valuation(format!(
            "trace has {n} clients; expected 1..={}",
            super::MAX_CLIENTS
        )));
    }
    let rows = Coalition::enumerate(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|coalition| {
            let start = Instant::now();
            let params = reconstruct_coalition_model(trace, coalition)?;
            let ts = score_with_model(&params, test)?;
            let (perf, bias_val) = utilities_of(&ts, coalition)?;
            Ok((
                coalition,
                perf,
                bias_val,
                start.elapsed().as_micros() as u64,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    tables_from_rows(n, rows)
}

/// Spec-shaped wrapper producing a single utility kind.
pub fn utility_table_gradient_accum(
    trace: &FLTrace,
    test: &[Sample],
    kind: UtilityKind,
) -> Result<UtilityTable> {
    Ok(gradient_accum_tables(trace, test)?.into_table(kind))
}

/// How a coalition accumulates its members' logistic-head outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleAccumulation {
    /// Soft voting: arithmetic mean of member probabilities (default).
    #[default]
    Probabilities,
    /// Mean of member logits, squashed once at the end.
    Logits,
}

/// Train one logistic head per client over the deep features its training
/// data produces under the grand-coalition model.
pub fn fit_client_heads(
    global_best: &ModelParams,
    clients: &[ClientDataset],
) -> Result<Vec<LogisticHead>> {
    clients
        .par_iter()
        .map(|client| {
            let features = client
                .train
                .iter()
                .map(|s| extract_features(global_best, &s.features))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<Vec<u8>> = client.train.iter().map(|s| s.labels.clone()).collect();
            fit_logistic_head(&features, &labels)
        })
        .collect()
}

/// Ensemble valuation: per-client head outputs on the shared test
/// set are precomputed once; a coalition's prediction is the accumulated
/// member output, so each coalition evaluation is just an average plus the
/// metrics. Timings cover exactly that per-coalition step.
pub fn ensemble_tables(
    trace: &FLTrace,
    heads: &[LogisticHead],
    test: &[Sample],
    accumulation: EnsembleAccumulation,
) -> Result<BackendTables> {
    let n = trace.n_clients;
    if heads.len() != n {
        return Err(Error::Valuation(format!(
            "missing head: {} heads for {n} clients",
            heads.len()
        )));
    }
    if n == 0 || n > super::MAX_CLIENTS {
        return Err(Error::Valuation(format!(
            "trace has {n} clients; expected 1..={}",
            super::MAX_CLIENTS
        )));
    }
    if test.is_empty() {
        return Err(Error::Valuation("empty test set".into()));
    }
    let global_best = reconstruct_coalition_model(trace, Coalition::full(n))?;
    let deep: Vec<Vec<f64>> = test
        .par_iter()
        .map(|s| extract_features(&global_best, &s.features))
        .collect::<Result<Vec<_>>>()?;

    // member_outputs[k][i] = head k's output vector on test sample i,
    // probabilities or logits depending on the accumulation mode.
    let member_outputs: Vec<Vec<Vec<f64>>> = heads
        .par_iter()
        .map(|head| {
            deep.iter()
                .map(|f| match accumulation {
                    EnsembleAccumulation::Probabilities => head.predict_proba(f),
                    EnsembleAccumulation::Logits => head.logits(f),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let labels: Vec<Vec<u8>> = test.iter().map(|s| s.labels.clone()).collect();
    let subgroups: Vec<_> = test.iter().map(|s| s.subgroup).collect();
    let label_count = heads[0].label_count();

    let rows = Coalition::enumerate(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|coalition| {
            let start = Instant::now();
            let members: Vec<usize> = coalition.members().collect();
            let inv = 1.0 / members.len() as f64;
            let probs: Vec<Vec<f64>> = (0..test.len())
                .map(|i| {
                    (0..label_count)
                        .map(|j| {
                            let acc: f64 =
                                members.iter().map(|&k| member_outputs[k][i][j]).sum();
                            match accumulation {
                                EnsembleAccumulation::Probabilities => acc * inv,
                                EnsembleAccumulation::Logits => {
                                    1.0 / (1.0 + (-(acc * inv)).exp())
                                }
                            }
                        })
                        .collect()
                })
                .collect();
            let ts = ScoredTestSet::new(probs, labels.clone(), subgroups.clone())?;
            let (perf, bias_val) = utilities_of(&ts, coalition)?;
            Ok((
                coalition,
                perf,
                bias_val,
                start.elapsed().as_micros() as u64,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    tables_from_rows(n, rows)
}

/// Spec-shaped wrapper producing a single utility kind.
pub fn utility_table_ensemble(
    trace: &FLTrace,
    heads: &[LogisticHead],
    test: &[Sample],
    kind: UtilityKind,
    accumulation: EnsembleAccumulation,
) -> Result<UtilityTable> {
    Ok(ensemble_tables(trace, heads, test, accumulation)?.into_table(kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arch;
    use crate::synthdata::{generate, split, GeneratorSpec, SplitPlan, SplitRegime};

    fn setup(
        n_clients: usize,
        per_client: usize,
        seed: u64,
    ) -> (Vec<ClientDataset>, Vec<Sample>) {
        let spec = GeneratorSpec::with_disparity(8, 3, 0.5, 0.5, 0.4, seed).unwrap();
        let even = n_clients + n_clients % 2;
        let pool = generate(&spec, even * per_client * 3 + 600).unwrap();
        let test = pool[..300].to_vec();
        let mut clients = split(
            &pool[300..],
            &SplitPlan {
                regime: SplitRegime::Even5050,
                n_clients: even,
                per_client_size: per_client,
                train_fraction: 0.8,
                native_a_share: 0.5,
            },
            seed ^ 0xf00,
        )
        .unwrap();
        clients.truncate(n_clients);
        (clients, test)
    }

    fn cfg(seed: u64) -> FLRunConfig {
        FLRunConfig {
            arch: Arch::linear(8, 3),
            lr: 0.1,
            batch: 16,
            local_epochs: 1,
            patience: 2,
            max_rounds: 8,
            seed,
        }
    }

    #[test]
    fn random_model_has_zero_utility() {
        // Zero weights score 0.5 everywhere; all-tie AUROC is exactly the
        // random baseline, so the performance utility is 0.
        let (_, test) = setup(2, 40, 2);
        let zeros = crate::model::ModelParams::zeros(crate::model::Arch::linear(8, 3)).unwrap();
        let ts = score_with_model(&zeros, &test).unwrap();
        assert_eq!(macro_auroc(&ts).unwrap().value - 0.5, 0.0);
        assert_eq!(bias(&ts).unwrap().value, 0.0);
    }

    #[test]
    fn exact_guard_refuses_and_overrides() {
        let (clients, test) = setup(4, 40, 3);
        let guard = ExactGuard {
            max_clients: 2,
            allow_large: false,
        };
        let err = exact_tables(&clients, &test, &cfg(1), guard).unwrap_err();
        assert!(err.to_string().contains("allow_large"), "{err}");
        let ok = exact_tables(
            &clients[..2],
            &test,
            &cfg(1),
            ExactGuard::default(),
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn exact_duplicate_clients_have_equal_singleton_utilities() {
        let (clients, test) = setup(2, 60, 5);
        let duplicated = vec![clients[0].clone(), clients[0].clone()];
        let tables =
            exact_tables(&duplicated, &test, &cfg(7), ExactGuard::default()).unwrap();
        let u1 = tables.performance.get(Coalition::singleton(0));
        let u2 = tables.performance.get(Coalition::singleton(1));
        assert_eq!(u1, u2);
    }

    #[test]
    fn exact_table_has_full_entry_count() {
        let (clients, test) = setup(3, 40, 9);
        let tables = exact_tables(&clients, &test, &cfg(11), ExactGuard::default()).unwrap();
        assert_eq!(tables.performance.entries().count(), 7);
        assert_eq!(tables.timings.len(), 7);
    }

    #[test]
    fn gradient_accum_grand_entry_matches_trained_model() {
        let (clients, test) = setup(3, 60, 13);
        let c = cfg(17);
        let (best, trace) = run_fedavg(&clients, &c).unwrap();
        let tables = gradient_accum_tables(&trace, &test).unwrap();
        let ts = score_with_model(&best, &test).unwrap();
        let direct = macro_auroc(&ts).unwrap().value - 0.5;
        assert_eq!(tables.performance.grand(), direct);
        let direct_bias = bias(&ts).unwrap().value;
        assert_eq!(tables.bias.grand(), direct_bias);
    }

    #[test]
    fn gradient_accum_identical_clients_tie_exactly() {
        let (clients, test) = setup(2, 60, 19);
        let duplicated = vec![clients[0].clone(), clients[0].clone()];
        let (_, trace) = run_fedavg(&duplicated, &cfg(23)).unwrap();
        let tables = gradient_accum_tables(&trace, &test).unwrap();
        assert_eq!(
            tables.performance.get(Coalition::singleton(0)),
            tables.performance.get(Coalition::singleton(1))
        );
    }

    #[test]
    fn ensemble_singleton_is_the_members_head() {
        let (clients, test) = setup(2, 60, 29);
        let c = cfg(31);
        let (best, trace) = run_fedavg(&clients, &c).unwrap();
        let heads = fit_client_heads(&best, &clients).unwrap();
        let tables = ensemble_tables(
            &trace,
            &heads,
            &test,
            EnsembleAccumulation::Probabilities,
        )
        .unwrap();

        // Recompute the singleton utility directly from head 0.
        let probs: Vec<Vec<f64>> = test
            .iter()
            .map(|s| {
                let f = extract_features(&best, &s.features).unwrap();
                heads[0].predict_proba(&f).unwrap()
            })
            .collect();
        let ts = ScoredTestSet::new(
            probs,
            test.iter().map(|s| s.labels.clone()).collect(),
            test.iter().map(|s| s.subgroup).collect(),
        )
        .unwrap();
        let direct = macro_auroc(&ts).unwrap().value - 0.5;
        assert_eq!(tables.performance.get(Coalition::singleton(0)), direct);
    }

    #[test]
    fn ensemble_identical_heads_mean_is_idempotent() {
        let (clients, test) = setup(2, 60, 37);
        let (best, trace) = run_fedavg(&clients, &cfg(41)).unwrap();
        let h = fit_client_heads(&best, &clients).unwrap()[0].clone();
        let heads = vec![h.clone(), h];
        let tables = ensemble_tables(
            &trace,
            &heads,
            &test,
            EnsembleAccumulation::Probabilities,
        )
        .unwrap();
        let single = tables.performance.get(Coalition::singleton(0));
        let pair = tables.performance.get(Coalition::full(2));
        assert!((single - pair).abs() < 1e-12);
    }

    #[test]
    fn ensemble_missing_head_is_valuation_error() {
        let (clients, test) = setup(2, 50, 43);
        let (best, trace) = run_fedavg(&clients, &cfg(47)).unwrap();
        let heads = fit_client_heads(&best, &clients[..1]).unwrap();
        let err = ensemble_tables(
            &trace,
            &heads,
            &test,
            EnsembleAccumulation::Probabilities,
        )
        .unwrap_err();
        assert!(err.to_string().contains("missing head"), "{err}");
    }

    #[test]
    fn logit_accumulation_differs_from_probability_accumulation() {
        let (clients, test) = setup(2, 60, 53);
        let (best, trace) = run_fedavg(&clients, &cfg(59)).unwrap();
        let heads = fit_client_heads(&best, &clients).unwrap();
        let probs =
            ensemble_tables(&trace, &heads, &test, EnsembleAccumulation::Probabilities).unwrap();
        let logits =
            ensemble_tables(&trace, &heads, &test, EnsembleAccumulation::Logits).unwrap();
        // Singletons agree (mean of one either way); pairs generally differ.
        assert_eq!(
            probs.performance.get(Coalition::singleton(0)),
            logits.performance.get(Coalition::singleton(0))
        );
        assert_ne!(
            probs.performance.get(Coalition::full(2)),
            logits.performance.get(Coalition::full(2))
        );
    }
}
