//! Acceptance gate: one test per criterion, each printing a PASS line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use fedvalue::experiments::{
    emit_reports, load_report, run_experiment, DataConfig, ExperimentConfig, FlipPlan,
    SourceConfig, TrainingConfig, ValuationBackend,
};
use fedvalue::fedsim::{run_fedavg, FLRunConfig};
use fedvalue::model::Arch;
use fedvalue::rewards::{
    bias_rewards, combined_rewards, perf_rewards, perf_rewards_full_pool, NegativePhiPolicy,
    PoolObjective, PoolSource, RewardAllocation, RewardPool, DEFAULT_BIAS_TOL,
};
use fedvalue::shapley::{
    ensemble_tables, exact_tables, fit_client_heads, gradient_accum_tables, shapley_from_table,
    Coalition, EnsembleAccumulation, ExactGuard, ShapleyVector, UtilityKind, UtilityTable,
};
use fedvalue::synthdata::{generate, ClientDataset, GeneratorSpec, Sample, SplitRegime};

fn random_table(kind: UtilityKind, n: usize, rng: &mut ChaCha12Rng) -> UtilityTable {
    UtilityTable::from_entries(
        kind,
        n,
        Coalition::enumerate(n).map(|c| (c, rng.gen_range(-1.0..1.0))),
    )
    .unwrap()
}

/// Independent oracle: average marginal contribution over all N!
/// permutations, enumerated with Heap's algorithm.
fn shapley_by_permutations(table: &UtilityTable) -> Vec<f64> {
    let n = table.n_clients();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    let mut count = 0u64;
    let mut stack = vec![0usize; n];
    let accumulate = |perm: &[usize], phi: &mut [f64]| {
        let mut mask = Coalition::empty();
        for &p in perm {
            let with = mask.with(p);
            phi[p] += table.get(with) - table.get(mask);
            mask = with;
        }
    };
    accumulate(&perm, &mut phi);
    count += 1;
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            accumulate(&perm, &mut phi);
            count += 1;
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    phi.iter().map(|p| p / count as f64).collect()
}

/// Criterion 1: efficiency, exact symmetry and null player, and agreement
/// with the permutation-average formulation on 200 random tables, N in 2..=8.
#[test]
fn acceptance_01_shapley_axiom_suite() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACCE01);
    for case in 0..200usize {
        let n = 2 + case % 7;
        let table = random_table(UtilityKind::Performance, n, &mut rng);

        // Efficiency.
        let sv = shapley_from_table(&table).unwrap();
        let total: f64 = sv.phi.iter().sum();
        assert!(
            (total - table.grand()).abs() <= 1e-9,
            "case {case}: efficiency violated by {}",
            (total - table.grand()).abs()
        );

        // Permutation-average agreement.
        let slow = shapley_by_permutations(&table);
        for (i, (a, b)) in sv.phi.iter().zip(&slow).enumerate() {
            assert!(
                (a - b).abs() <= 1e-9,
                "case {case}: client {i} subset-sum {a} vs permutation {b}"
            );
        }

        // Exact symmetry: make clients 0 and 1 interchangeable by assigning
        // identical values over swap orbits; their values must tie bitwise.
        let swap01 = |mask: u32| -> u32 {
            let b0 = mask & 1;
            let b1 = (mask >> 1) & 1;
            (mask & !0b11) | (b1) | (b0 << 1)
        };
        let symmetric = UtilityTable::from_entries(
            UtilityKind::Performance,
            n,
            table.entries().map(|(c, u)| {
                let canon = c.mask().min(swap01(c.mask()));
                (c, table.get(Coalition::from_mask(canon)) + 0.0 * u)
            }),
        )
        .unwrap();
        let sym_sv = shapley_from_table(&symmetric).unwrap();
        assert_eq!(
            sym_sv.phi[0].to_bits(),
            sym_sv.phi[1].to_bits(),
            "case {case}: symmetric clients must tie exactly"
        );

        // Exact null player: extend the game with a client that never changes
        // the utility; it must value to exactly zero and leave the rest
        // untouched up to the efficiency tolerance.
        if n < 8 {
            let extended = UtilityTable::from_entries(
                UtilityKind::Performance,
                n + 1,
                Coalition::enumerate(n + 1).map(|c| {
                    let without: u32 = c.mask() & !(1 << n);
                    let u = if without == 0 {
                        0.0
                    } else {
                        table.get(Coalition::from_mask(without))
                    };
                    (c, u)
                }),
            )
            .unwrap();
            let ext_sv = shapley_from_table(&extended).unwrap();
            assert_eq!(ext_sv.phi[n], 0.0, "case {case}: null player must be exactly 0");
            for (i, (a, b)) in sv.phi.iter().zip(&ext_sv.phi[..n]).enumerate() {
                assert!(
                    (a - b).abs() <= 1e-9,
                    "case {case}: null player shifted client {i}: {a} vs {b}"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "axiom suite took {elapsed:?}");
    println!("acceptance 1 (shapley axiom suite, 200 tables in {elapsed:.2?}): PASS");
}

/// One task, N clients of decreasing label quality, one shared test set.
fn quality_ordered_federation(
    seed: u64,
    per_client: usize,
    noise_levels: &[f64],
) -> (Vec<ClientDataset>, Vec<Sample>) {
    let base = GeneratorSpec::with_disparity(20, 8, 0.5, 0.3, 0.25, seed).unwrap();
    let mut clients = Vec::new();
    for (k, &noise) in noise_levels.iter().enumerate() {
        let mut spec = base.clone();
        spec.seed = seed ^ (0x1000 + k as u64);
        spec.params_a.label_noise = noise;
        spec.params_b.label_noise = noise;
        let samples = generate(&spec, per_client).unwrap();
        let train_len = (0.8 * per_client as f64).round() as usize;
        clients.push(ClientDataset {
            client_id: k,
            train: samples[..train_len].to_vec(),
            validation: samples[train_len..].to_vec(),
        });
    }
    let mut test_spec = base;
    test_spec.seed = seed ^ 0x7e57;
    let test = generate(&test_spec, 1000).unwrap();
    (clients, test)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

/// Criterion 2: gradient-accumulation and ensemble Shapley values each reach
/// mean Pearson correlation >= 0.8 with exact retraining over 5 seeds
/// (N=4 linear clients, 500 samples each).
#[test]
fn acceptance_02_oracle_agreement() {
    let start = Instant::now();
    let mut grad_corrs = Vec::new();
    let mut ens_corrs = Vec::new();
    for seed in [101u64, 202, 303, 404, 505] {
        let (clients, test) = quality_ordered_federation(seed, 500, &[0.25, 0.75, 1.5, 3.0]);
        let cfg = FLRunConfig {
            arch: Arch::linear(20, 8),
            lr: 0.1,
            batch: 32,
            local_epochs: 1,
            patience: 10,
            max_rounds: 60,
            seed,
        };
        let exact = exact_tables(&clients, &test, &cfg, ExactGuard::default()).unwrap();
        let sv_exact = shapley_from_table(&exact.performance).unwrap();

        let (best, trace) = run_fedavg(&clients, &cfg).unwrap();
        let grad = gradient_accum_tables(&trace, &test).unwrap();
        let sv_grad = shapley_from_table(&grad.performance).unwrap();

        let heads = fit_client_heads(&best, &clients).unwrap();
        let ens =
            ensemble_tables(&trace, &heads, &test, EnsembleAccumulation::Probabilities).unwrap();
        let sv_ens = shapley_from_table(&ens.performance).unwrap();

        grad_corrs.push(pearson(&sv_exact.phi, &sv_grad.phi));
        ens_corrs.push(pearson(&sv_exact.phi, &sv_ens.phi));
    }
    let grad_mean = grad_corrs.iter().sum::<f64>() / grad_corrs.len() as f64;
    let ens_mean = ens_corrs.iter().sum::<f64>() / ens_corrs.len() as f64;
    let elapsed = start.elapsed();
    assert!(
        grad_mean >= 0.8,
        "gradient-accumulation correlation {grad_mean:.3} (per-seed {grad_corrs:?})"
    );
    assert!(
        ens_mean >= 0.8,
        "ensemble correlation {ens_mean:.3} (per-seed {ens_corrs:?})"
    );
    assert!(elapsed.as_secs_f64() < 900.0, "oracle agreement took {elapsed:?}");
    println!(
        "acceptance 2 (oracle agreement: grad-accum r={grad_mean:.3}, ensemble r={ens_mean:.3} \
         in {elapsed:.2?}): PASS"
    );
}

/// Criterion 3: conservation for 1,000 random Shapley vectors and pools
/// across every scheme.
#[test]
fn acceptance_03_reward_conservation() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xACCE03);
    let mut checked = 0usize;
    while checked < 1000 {
        let n = rng.gen_range(2..9);
        let member = rng.gen_bool(0.5);
        let source = if member {
            PoolSource::MemberDeposits
        } else {
            PoolSource::External
        };
        let amount = rng.gen_range(1.0..200.0);

        let assert_conserved = |alloc: &RewardAllocation| {
            let total: f64 = alloc.rewards.iter().sum();
            assert!(
                (total - alloc.distributed).abs() <= 1e-9,
                "sum(R) = {total} vs P_dist = {}",
                alloc.distributed
            );
            assert!(alloc.residual >= -1e-12, "negative residual {}", alloc.residual);
            if member {
                let g: f64 = alloc.profits.as_ref().expect("profits").iter().sum();
                assert!(g.abs() <= 1e-9, "sum(G) = {g}");
            } else {
                assert!(alloc.profits.is_none());
            }
        };

        // Performance scheme (scaled and full-pool) on a non-negative-utility
        // vector in the AUROC-gain range.
        let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.02..0.08)).collect();
        let sv = ShapleyVector::from_phi(UtilityKind::Performance, phi);
        if sv.grand_utility >= 0.0 && sv.grand_utility <= 0.5 {
            let pool = RewardPool {
                id: "perf".into(),
                amount,
                source,
                objective: PoolObjective::Performance,
            };
            let alloc = perf_rewards(&sv, &pool, NegativePhiPolicy::ClampToZero).unwrap();
            assert_conserved(&alloc);
            assert!(alloc.rewards.iter().all(|&r| r >= 0.0), "clamped rewards negative");
            if sv.grand_utility > 0.01 {
                let full =
                    perf_rewards_full_pool(&sv, &pool, NegativePhiPolicy::ClampToZero).unwrap();
                assert_conserved(&full);
            }
        }

        // Bias scheme on a vector with |U(D)| <= 1.
        let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let sv_bias = ShapleyVector::from_phi(UtilityKind::Bias, phi);
        let pool = RewardPool {
            id: "bias".into(),
            amount,
            source,
            objective: PoolObjective::Bias,
        };
        let bias_alloc = bias_rewards(&sv_bias, &pool, DEFAULT_BIAS_TOL).unwrap();
        assert_conserved(&bias_alloc);

        // Combined scheme conserves the summed distributed pools.
        if sv.grand_utility >= 0.0 && sv.grand_utility <= 0.5 {
            let perf_pool = RewardPool {
                id: "perf".into(),
                amount,
                source,
                objective: PoolObjective::Performance,
            };
            let perf_alloc =
                perf_rewards(&sv, &perf_pool, NegativePhiPolicy::ClampToZero).unwrap();
            let combined = combined_rewards(&perf_alloc, &[bias_alloc]).unwrap();
            let total: f64 = combined.totals.iter().sum();
            assert!(
                (total - combined.total_distributed).abs() <= 1e-9,
                "combined sum {total} vs distributed {}",
                combined.total_distributed
            );
        }
        checked += 1;
    }
    println!("acceptance 3 (reward conservation, 1000 random vectors): PASS");
}

/// Criterion 4: the closed-form reward values for the two reported
/// per-client means.
#[test]
fn acceptance_04_closed_form_rewards() {
    let sv = ShapleyVector::from_phi(
        UtilityKind::Performance,
        vec![0.058125, 0.058125, 0.04134, 0.04134, 0.05, 0.05],
    );
    let pool = RewardPool {
        id: "perf".into(),
        amount: 60.0,
        source: PoolSource::External,
        objective: PoolObjective::Performance,
    };
    let alloc = perf_rewards(&sv, &pool, NegativePhiPolicy::Raw).unwrap();
    assert!((alloc.rewards[0] - 6.975).abs() < 1e-12);
    assert!((alloc.rewards[0] - 6.976).abs() <= 0.01, "got {}", alloc.rewards[0]);
    assert!((alloc.rewards[2] - 4.961).abs() <= 0.01, "got {}", alloc.rewards[2]);
    println!(
        "acceptance 4 (closed-form rewards: {:.3} MU and {:.3} MU): PASS",
        alloc.rewards[0], alloc.rewards[2]
    );
}

/// Criterion 5: the bias-scheme hand case, its sign mirror, and the exact
/// equal splits of the degenerate rules.
#[test]
fn acceptance_05_bias_scheme_hand_case() {
    let pool = RewardPool {
        id: "bias".into(),
        amount: 60.0,
        source: PoolSource::External,
        objective: PoolObjective::Bias,
    };
    let sv = ShapleyVector::from_phi(UtilityKind::Bias, vec![0.06, 0.03, 0.01]);
    let alloc = bias_rewards(&sv, &pool, DEFAULT_BIAS_TOL).unwrap();
    assert!((alloc.distributed - 54.0).abs() < 1e-12);
    assert_eq!(alloc.rewards[0], 0.0);
    assert!((alloc.rewards[1] - 20.25).abs() < 1e-12);
    assert!((alloc.rewards[2] - 33.75).abs() < 1e-12);

    let mirrored = ShapleyVector::from_phi(UtilityKind::Bias, vec![-0.06, -0.03, -0.01]);
    let mirror_alloc = bias_rewards(&mirrored, &pool, DEFAULT_BIAS_TOL).unwrap();
    for (a, b) in alloc.rewards.iter().zip(&mirror_alloc.rewards) {
        assert_eq!(a, b, "sign mirror must yield identical rewards");
    }

    // Degenerate rules split exactly equally.
    let zero_bias = ShapleyVector::from_phi(UtilityKind::Bias, vec![0.02, -0.01, -0.01]);
    let eq1 = bias_rewards(&zero_bias, &pool, DEFAULT_BIAS_TOL).unwrap();
    assert!(eq1.rewards.iter().all(|&r| r == eq1.distributed / 3.0));
    let equal_phi = ShapleyVector::from_phi(UtilityKind::Bias, vec![0.03, 0.03, 0.03]);
    let eq2 = bias_rewards(&equal_phi, &pool, DEFAULT_BIAS_TOL).unwrap();
    assert!(eq2.rewards.iter().all(|&r| r == eq2.distributed / 3.0));
    println!("acceptance 5 (bias scheme hand case + mirror + degenerate splits): PASS");
}

/// Criterion 6: the combined scheme reproduces the reported multi-pool sums
/// from their own components within 0.01 MU.
#[test]
fn acceptance_06_combined_arithmetic() {
    let alloc = |rewards: Vec<f64>, objective| RewardAllocation {
        pool_id: "pool".into(),
        objective,
        source: PoolSource::External,
        rewards: rewards.clone(),
        profits: None,
        pool_amount: 60.0,
        distributed: rewards.iter().sum(),
        residual: 0.0,
        full_pool: false,
        clamped: false,
    };
    // Components of the two institution rows whose published totals follow
    // from their own components: 6.976 + 9.802 + 4.301 = 21.079 (reported
    // 21.078) and 7.051 + 10.112 + 6.393 = 23.556 (reported 23.559).
    let perf = alloc(vec![6.976, 7.051], PoolObjective::Performance);
    let bias_a = alloc(vec![9.802, 10.112], PoolObjective::Bias);
    let bias_b = alloc(vec![4.301, 6.393], PoolObjective::Bias);
    let combined = combined_rewards(&perf, &[bias_a, bias_b]).unwrap();
    assert!(
        (combined.totals[0] - 21.078).abs() <= 0.01,
        "got {}",
        combined.totals[0]
    );
    assert!(
        (combined.totals[1] - 23.559).abs() <= 0.01,
        "got {}",
        combined.totals[1]
    );
    println!(
        "acceptance 6 (combined totals {:.3} and {:.3} MU): PASS",
        combined.totals[0], combined.totals[1]
    );
}

fn bias_trend_cfg(regime: SplitRegime, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        name: "bias-trend".into(),
        n_clients: 2,
        repeats: 1,
        master_seed: seed,
        backend: ValuationBackend::GradientAccum,
        regime,
        data: DataConfig {
            feature_dim: 20,
            label_count: 8,
            per_client_size: 800,
            train_fraction: 0.8,
            test_size_per_source: 600,
        },
        sources: vec![SourceConfig {
            name: "solo".into(),
            subgroup_a_share: 0.5,
            disparity: 0.9,
            label_noise: 0.3,
        }],
        training: TrainingConfig {
            lr: 0.1,
            batch: 32,
            local_epochs: 1,
            patience: 10,
            max_rounds: 60,
            hidden: 0,
        },
        flip_plan: None,
        ..ExperimentConfig::default()
    }
}

/// Criterion 7: with a nonzero disparity knob, the all-subgroup-A client's
/// bias value favors A in >= 8 of 10 seeds, and the mean bias value rises in
/// rank order across the 50/50 -> 75/25 -> 100/0 splits.
#[test]
fn acceptance_07_directional_bias_trend() {
    let regimes = [
        SplitRegime::Even5050,
        SplitRegime::Skew7525,
        SplitRegime::Pure1000,
    ];
    let mut means = [0.0f64; 3];
    let mut pure_positive = 0usize;
    for (r_idx, regime) in regimes.iter().enumerate() {
        let mut total = 0.0;
        for seed in 0..10u64 {
            let cfg = bias_trend_cfg(*regime, 1000 + seed);
            let report = run_experiment(&cfg).unwrap();
            let phi_a_client = report.rows[0].phi_bias[0];
            total += phi_a_client;
            if *regime == SplitRegime::Pure1000 && phi_a_client > 0.0 {
                pure_positive += 1;
            }
        }
        means[r_idx] = total / 10.0;
    }
    assert!(
        pure_positive >= 8,
        "single-subgroup-A client favored A in only {pure_positive}/10 seeds"
    );
    assert!(
        means[0] < means[1] && means[1] < means[2],
        "rank order violated: 50/50 {:.4}, 75/25 {:.4}, 100/0 {:.4}",
        means[0],
        means[1],
        means[2]
    );
    println!(
        "acceptance 7 (bias trend {:+.4} < {:+.4} < {:+.4}, {pure_positive}/10 positive): PASS",
        means[0], means[1], means[2]
    );
}

/// Criterion 8: at flip ratio 7.5%, flipped clients' mean performance reward
/// sits strictly below their unflipped counterparts' with paired-t p < 0.05
/// over 12 repeats.
#[test]
fn acceptance_08_label_flip_incentive() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        name: "flip-incentive".into(),
        repeats: 12,
        master_seed: 77,
        backend: ValuationBackend::Ensemble,
        regime: SplitRegime::AsIs,
        data: DataConfig {
            feature_dim: 20,
            label_count: 8,
            per_client_size: 600,
            train_fraction: 0.8,
            test_size_per_source: 400,
        },
        training: TrainingConfig {
            patience: 10,
            max_rounds: 60,
            ..TrainingConfig::default()
        },
        flip_plan: Some(FlipPlan {
            flipped_clients: vec![1, 3, 5],
            ratios: vec![0.075],
            run_ratio: 0.075,
        }),
        ..ExperimentConfig::default()
    };
    let study = fedvalue::experiments::label_flip_study(&cfg).unwrap();
    let row = study
        .rows
        .iter()
        .find(|r| (r.ratio - 0.075).abs() < 1e-12)
        .expect("7.5% row");
    let p = row.p_value.expect("p-value over 12 repeats");
    assert!(
        row.flipped.mean < row.unflipped.mean,
        "flipped {} not below unflipped {}",
        row.flipped.mean,
        row.unflipped.mean
    );
    assert!(p < 0.05, "paired-t p = {p}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1800.0, "flip study took {elapsed:?}");
    println!(
        "acceptance 8 (flip incentive: {:.3} < {:.3} MU, p = {p:.2e}, {elapsed:.2?}): PASS",
        row.flipped.mean, row.unflipped.mean
    );
}

/// Criterion 9: the ensemble back-end evaluates all 63 coalitions for N=6
/// with a per-coalition mean below 100 ms, and the timing ledger is emitted.
#[test]
fn acceptance_09_scalability() {
    let cfg = ExperimentConfig {
        name: "scalability".into(),
        repeats: 1,
        backend: ValuationBackend::Ensemble,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg).unwrap();
    let timings = report.timing_rows();
    assert_eq!(timings.len(), 63, "2^6 - 1 coalition evaluations");
    assert_eq!(report.rows[0].utility_performance.entries().count(), 63);
    assert_eq!(report.rows[0].utility_bias.entries().count(), 63);
    let total_micros: u64 = timings.iter().map(|t| t.micros).sum();
    let mean_ms = total_micros as f64 / 1000.0 / timings.len() as f64;
    assert!(mean_ms <= 100.0, "mean per-coalition time {mean_ms:.2} ms");

    let dir = tempfile::tempdir().unwrap();
    let files = emit_reports(&report, dir.path()).unwrap();
    assert!(
        files.iter().any(|f| f.ends_with("timings.csv")),
        "timing ledger emitted"
    );
    let ledger = std::fs::read_to_string(dir.path().join("timings.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 64, "header plus 63 rows");
    println!(
        "acceptance 9 (63 coalitions, mean {mean_ms:.2} ms per coalition, ledger emitted): PASS"
    );
}

fn small_report_cfg() -> ExperimentConfig {
    ExperimentConfig {
        name: "report-identity".into(),
        repeats: 3,
        data: DataConfig {
            feature_dim: 10,
            label_count: 4,
            per_client_size: 200,
            train_fraction: 0.8,
            test_size_per_source: 120,
        },
        training: TrainingConfig {
            patience: 3,
            max_rounds: 12,
            batch: 16,
            ..TrainingConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

/// Criterion 10: every emitted Shapley row satisfies
/// `sum(phi) + 0.5 == total AUROC` within 1e-9 pre-rounding.
#[test]
fn acceptance_10_report_identity() {
    let report = run_experiment(&small_report_cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&report, dir.path()).unwrap();
    let loaded = load_report(dir.path()).unwrap();
    assert!(!loaded.rows.is_empty());
    for row in &loaded.rows {
        let phi_sum: f64 = row.phi_performance.iter().sum();
        assert!(
            (phi_sum + 0.5 - row.total_auroc).abs() <= 1e-9,
            "repeat {}: identity off by {}",
            row.repeat,
            (phi_sum + 0.5 - row.total_auroc).abs()
        );
    }
    let agg = loaded.aggregate.as_ref().unwrap();
    let mean_phi_sum: f64 = agg.phi_performance.iter().map(|c| c.mean).sum();
    assert!((mean_phi_sum + 0.5 - agg.total_auroc.mean).abs() <= 1e-9);
    println!(
        "acceptance 10 (report identity on {} rows + aggregate): PASS",
        loaded.rows.len()
    );
}

/// Criterion 11: two runs of the same config produce byte-identical
/// `summary.json`.
#[test]
fn acceptance_11_determinism() {
    let cfg = small_report_cfg();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let report_a = run_experiment(&cfg).unwrap();
    emit_reports(&report_a, dir_a.path()).unwrap();
    let report_b = run_experiment(&cfg).unwrap();
    emit_reports(&report_b, dir_b.path()).unwrap();
    let bytes_a = std::fs::read(dir_a.path().join("summary.json")).unwrap();
    let bytes_b = std::fs::read(dir_b.path().join("summary.json")).unwrap();
    assert_eq!(bytes_a, bytes_b, "summary.json must be byte-identical");
    println!(
        "acceptance 11 (byte-identical summary.json, {} bytes): PASS",
        bytes_a.len()
    );
}
