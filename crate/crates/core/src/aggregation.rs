//! Server-side aggregation strategies over client updates: FedAvg, FedProx
//! (identical on the server, the proximal term lives in client training),
//! coordinatewise trimmed mean, Krum selection, and FedAvgM server momentum.
//!
//! All strategies are pure functions. Weighted accumulation runs in ascending
//! client_id order and per-coordinate loops are order-fixed, so results are
//! bitwise reproducible and independent of both input permutation and the
//! parallel/sequential execution policy.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::exec;
use crate::params::{self, ParamEntry, ParameterSet};

/// One client's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u64,
    pub round: u64,
    pub params: ParameterSet,
    pub num_examples: usize,
    pub train_loss: f64,
}

/// The five interchangeable strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    FedAvg,
    FedProx,
    FedTrimmedAvg,
    Krum,
    FedAvgM,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::FedAvg,
        StrategyKind::FedProx,
        StrategyKind::FedTrimmedAvg,
        StrategyKind::Krum,
        StrategyKind::FedAvgM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FedAvg => "FedAvg",
            StrategyKind::FedProx => "FedProx",
            StrategyKind::FedTrimmedAvg => "FedTrimmedAvg",
            StrategyKind::Krum => "Krum",
            StrategyKind::FedAvgM => "FedAvgM",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strategy hyperparameters. The paper names the strategies but not their
/// knobs; defaults here are the smallest sensible configuration for a
/// three-client protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub trim_fraction: f64,
    pub krum_f: usize,
    pub server_momentum: f64,
    pub server_lr: f64,
    pub prox_mu: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::FedAvg,
            trim_fraction: 0.2,
            krum_f: 0,
            server_momentum: 0.9,
            server_lr: 1.0,
            prox_mu: 0.01,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(Error::Config(format!(
                "trim_fraction must be in [0, 0.5), got {}",
                self.trim_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.server_momentum) {
            return Err(Error::Config(format!(
                "server_momentum must be in [0, 1), got {}",
                self.server_momentum
            )));
        }
        if self.server_lr <= 0.0 {
            return Err(Error::Config("server_lr must be positive".into()));
        }
        if self.prox_mu < 0.0 {
            return Err(Error::Config("prox_mu must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Server-held state between rounds. The momentum buffer is present iff the
/// strategy is FedAvgM.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub global_params: ParameterSet,
    pub momentum_buffer: Option<ParameterSet>,
    pub round: u64,
}

impl ServerState {
    pub fn new(kind: StrategyKind, initial: ParameterSet) -> Self {
        let momentum_buffer = match kind {
            StrategyKind::FedAvgM => Some(initial.zeros_like()),
            _ => None,
        };
        Self {
            global_params: initial,
            momentum_buffer,
            round: 0,
        }
    }
}

fn check_updates(updates: &[ClientUpdate]) -> Result<()> {
    let Some(first) = updates.first() else {
        return Err(Error::NoUpdates);
    };
    for u in &updates[1..] {
        first.params.same_schema(&u.params)?;
    }
    Ok(())
}

/// Indices of `updates` sorted by ascending client_id.
fn canonical_order(updates: &[ClientUpdate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by_key(|&i| updates[i].client_id);
    order
}

/// Example-count-weighted coordinatewise mean, accumulated in ascending
/// client_id order.
pub fn fed_avg(updates: &[ClientUpdate]) -> Result<ParameterSet> {
    check_updates(updates)?;
    let order = canonical_order(updates);
    let total: f64 = updates.iter().map(|u| u.num_examples as f64).sum();
    let weights: Vec<f64> = order
        .iter()
        .map(|&i| updates[i].num_examples as f64 / total)
        .collect();
    let template = &updates[order[0]].params;
    let entries: Vec<ParamEntry> = template
        .entries()
        .iter()
        .enumerate()
        .map(|(e, entry)| {
            let values = exec::map_indexed(entry.values.len(), |c| {
                let mut acc = 0.0;
                for (w, &i) in weights.iter().zip(&order) {
                    acc += w * updates[i].params.entry(e).values[c];
                }
                acc
            });
            ParamEntry::new(entry.name.clone(), entry.shape.clone(), values)
        })
        .collect();
    Ok(ParameterSet::from_entries_unchecked(entries))
}

/// Server half of FedProx: identical to FedAvg. The proximal term changes
/// only the client objective.
pub fn fed_prox_aggregate(updates: &[ClientUpdate]) -> Result<ParameterSet> {
    fed_avg(updates)
}

/// Coordinatewise trimmed mean: per coordinate, sort the client values, drop
/// the `floor(trim_fraction * n)` smallest and largest, and average the rest
/// unweighted.
pub fn fed_trimmed_avg(updates: &[ClientUpdate], trim_fraction: f64) -> Result<ParameterSet> {
    check_updates(updates)?;
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(Error::Config(format!(
            "trim_fraction must be in [0, 0.5), got {trim_fraction}"
        )));
    }
    let n = updates.len();
    let k = (trim_fraction * n as f64).floor() as usize;
    if n <= 2 * k {
        return Err(Error::TrimTooAggressive { n, trim_fraction });
    }
    let template = &updates[0].params;
    let entries: Vec<ParamEntry> = template
        .entries()
        .iter()
        .enumerate()
        .map(|(e, entry)| {
            let values = exec::map_indexed(entry.values.len(), |c| {
                let mut column: Vec<f64> = updates
                    .iter()
                    .map(|u| u.params.entry(e).values[c])
                    .collect();
                column.sort_by(f64::total_cmp);
                let kept = &column[k..n - k];
                kept.iter().sum::<f64>() / kept.len() as f64
            });
            ParamEntry::new(entry.name.clone(), entry.shape.clone(), values)
        })
        .collect();
    Ok(ParameterSet::from_entries_unchecked(entries))
}

/// Krum selection: each update is scored by the sum of squared distances to
/// its `n - f - 2` nearest neighbors; the lowest score wins, ties broken by
/// lowest client_id. Returns the winning index into `updates` plus all
/// scores (in `updates` order).
pub fn krum_select(updates: &[ClientUpdate], krum_f: usize) -> Result<(usize, Vec<f64>)> {
    check_updates(updates)?;
    let n = updates.len();
    let needed = krum_f + 3;
    if n < needed {
        return Err(Error::KrumTooFewClients { n, needed });
    }
    let neighbors = n - krum_f - 2;
    let scores = exec::map_indexed(n, |i| {
        let mut dists: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                params::l2_distance_sq(&updates[i].params, &updates[j].params)
                    .expect("schemas checked above")
            })
            .collect();
        dists.sort_by(f64::total_cmp);
        dists[..neighbors].iter().sum()
    });
    let mut best = 0usize;
    for i in 1..n {
        let better = scores[i] < scores[best]
            || (scores[i] == scores[best] && updates[i].client_id < updates[best].client_id);
        if better {
            best = i;
        }
    }
    Ok((best, scores))
}

/// One FedAvgM step: momentum on the pseudo-gradient (previous global minus
/// the round average), then a server-learning-rate move along the buffer.
pub fn fed_avg_m_step(
    state: &ServerState,
    updates: &[ClientUpdate],
    server_momentum: f64,
    server_lr: f64,
) -> Result<ServerState> {
    let avg = fed_avg(updates)?;
    let delta = params::sub(&state.global_params, &avg)?;
    let buffer = state
        .momentum_buffer
        .clone()
        .unwrap_or_else(|| state.global_params.zeros_like());
    let buffer = params::axpy(server_momentum, &buffer, &delta)?;
    let global = params::axpy(-server_lr, &buffer, &state.global_params)?;
    Ok(ServerState {
        global_params: global,
        momentum_buffer: Some(buffer),
        round: state.round + 1,
    })
}

/// Dispatch one aggregation round per the configured strategy, producing the
/// next server state. Ledger commitment is the orchestrator's job.
pub fn aggregate(
    kind: StrategyKind,
    state: &ServerState,
    updates: &[ClientUpdate],
    config: &StrategyConfig,
) -> Result<ServerState> {
    let next = |global: ParameterSet| ServerState {
        global_params: global,
        momentum_buffer: None,
        round: state.round + 1,
    };
    match kind {
        StrategyKind::FedAvg => Ok(next(fed_avg(updates)?)),
        StrategyKind::FedProx => Ok(next(fed_prox_aggregate(updates)?)),
        StrategyKind::FedTrimmedAvg => Ok(next(fed_trimmed_avg(updates, config.trim_fraction)?)),
        StrategyKind::Krum => {
            let (idx, _) = krum_select(updates, config.krum_f)?;
            Ok(next(updates[idx].params.clone()))
        }
        StrategyKind::FedAvgM => {
            fed_avg_m_step(state, updates, config.server_momentum, config.server_lr)
        }
    }
}
