//! Federated-averaging orchestrator.
//!
//! Runs communication rounds, records every client's per-round parameter delta
//! (so coalition models can be reconstructed without retraining), applies
//! early stopping on the mean validation loss, and returns the best global
//! model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bce_loss, train_local, Arch, ModelParams};
use crate::seeds::{stage_seed, stage_seed2, Stage};
use crate::shapley::Coalition;
use crate::synthdata::ClientDataset;

/// Hyperparameters of one federated run. Clients are passed separately so the
/// same config can drive many coalition runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FLRunConfig {
    pub arch: Arch,
    pub lr: f64,
    pub batch: usize,
    pub local_epochs: usize,
    /// Stop after this many consecutive rounds without validation improvement.
    pub patience: usize,
    /// Safety bound on communication rounds.
    pub max_rounds: usize,
    pub seed: u64,
}

impl FLRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch == 0 || self.local_epochs == 0 {
            return Err(Error::Config("batch and local_epochs must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be >= 1".into()));
        }
        Ok(())
    }
}

/// One client's recorded parameter delta for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub round: usize,
    /// Index of the client within the run's client list.
    pub client_id: usize,
    /// `params_after_local_training - params_before`.
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub updates: Vec<ClientUpdate>,
    /// Validation loss of the aggregated global model, per client.
    pub val_losses: Vec<f64>,
    pub mean_val_loss: f64,
}

/// Full record of a federated run, sufficient to rebuild any coalition's
/// model by gradient accumulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FLTrace {
    pub arch: Arch,
    pub n_clients: usize,
    pub initial: ModelParams,
    pub rounds: Vec<RoundRecord>,
    /// Round with the lowest mean validation loss.
    pub best_round: usize,
}

/// Add the equal-weight mean of the members' deltas to `params`.
///
/// Server aggregation and coalition reconstruction both go through this
/// function so the grand-coalition reconstruction is bit-exact.
fn apply_mean_deltas(params: &mut ModelParams, updates: &[ClientUpdate], members: &[usize]) {
    let inv = 1.0 / members.len() as f64;
    for (pos, v) in params.values.iter_mut().enumerate() {
        let mut acc = 0.0;
        for &m in members {
            acc += updates[m].delta[pos];
        }
        *v += acc * inv;
    }
}

/// Run equal-weight FedAvg until early stopping or `max_rounds`. Returns the
/// global params of the best round together with the full trace.
pub fn run_fedavg(clients: &[ClientDataset], cfg: &FLRunConfig) -> Result<(ModelParams, FLTrace)> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(Error::Config("run_fedavg needs at least one client".into()));
    }
    let all: Vec<usize> = (0..clients.len()).collect();
    let mut global = ModelParams::init(cfg.arch, stage_seed(cfg.seed, Stage::ParamInit, 0))?;
    let mut trace = FLTrace {
        arch: cfg.arch,
        n_clients: clients.len(),
        initial: global.clone(),
        rounds: Vec::new(),
        best_round: 0,
    };
    let mut best_loss = f64::INFINITY;
    let mut best_params = global.clone();
    let mut stall = 0usize;

    for round in 0..cfg.max_rounds {
        let mut updates = Vec::with_capacity(clients.len());
        // One local seed per round, shared by all clients: identical-data
        // clients then produce identical deltas, which keeps the coalition
        // symmetry of the valuation exact rather than statistical.
        let local_seed = stage_seed2(cfg.seed, Stage::LocalTrain, round as u64, 0);
        for (rank, client) in clients.iter().enumerate() {
            let trained = train_local(
                &global,
                &client.train,
                cfg.local_epochs,
                cfg.lr,
                cfg.batch,
                local_seed,
            )
            .map_err(|e| diverged(round, &trace, e))?;
            let delta: Vec<f64> = trained
                .values
                .iter()
                .zip(&global.values)
                .map(|(after, before)| after - before)
                .collect();
            updates.push(ClientUpdate {
                round,
                client_id: rank,
                delta,
            });
        }
        apply_mean_deltas(&mut global, &updates, &all);

        let mut val_losses = Vec::with_capacity(clients.len());
        for client in clients {
            let loss = bce_loss(&global, &client.validation)
                .map_err(|e| diverged(round, &trace, e))?;
            if !loss.is_finite() {
                return Err(diverged(
                    round,
                    &trace,
                    Error::Training {
                        epoch: 0,
                        batch: 0,
                        round: Some(round),
                    },
                ));
            }
            val_losses.push(loss);
        }
        let mean_val_loss = val_losses.iter().sum::<f64>() / val_losses.len() as f64;
        trace.rounds.push(RoundRecord {
            updates,
            val_losses,
            mean_val_loss,
        });

        if mean_val_loss < best_loss {
            best_loss = mean_val_loss;
            trace.best_round = round;
            best_params = global.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.patience {
                break;
            }
        }
    }
    Ok((best_params, trace))
}

fn diverged(round: usize, trace: &FLTrace, source: Error) -> Error {
    Error::RunDiverged {
        round,
        trace: Box::new(trace.clone()),
        source: Box::new(source),
    }
}

/// Rebuild coalition `S`'s model from the grand-coalition trace: starting at
/// the recorded initial params, add the mean of the members' recorded deltas
/// round by round, up to and including the trace's best round.
pub fn reconstruct_coalition_model(trace: &FLTrace, coalition: Coalition) -> Result<ModelParams> {
    if coalition.is_empty() {
        return Err(Error::Domain(
            "empty coalition has no model; its utility is fixed at 0 by convention".into(),
        ));
    }
    let members: Vec<usize> = coalition.members().collect();
    if members.iter().any(|&m| m >= trace.n_clients) {
        return Err(Error::Valuation(format!(
            "coalition {:?} references clients outside the trace's 0..{}",
            members, trace.n_clients
        )));
    }
    if trace.rounds.is_empty() {
        return Err(Error::Valuation("trace has no recorded rounds".into()));
    }
    let mut params = trace.initial.clone();
    for round in &trace.rounds[..=trace.best_round] {
        apply_mean_deltas(&mut params, &round.updates, &members);
    }
    Ok(params)
}
