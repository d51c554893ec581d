//! Execution of rounds, cells, experiments, and sweeps.

use std::time::Instant;

use crate::aggregation::{self, ClientUpdate, ServerState, StrategyConfig, StrategyKind};
use crate::data::{self, WindowedDataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::ledger::{Chain, LedgerConfig};
use crate::metrics::{improvement_table, ImprovementRow, ImprovementTable, MacroSummary, Metrics};
use crate::model::{self, ModelConfig, TrainConfig};
use crate::params::{ParamEntry, ParameterSet};

use super::{
    derive_seed, CellResult, DatasetSpec, ExperimentConfig, ExperimentResult, FailedRound,
    LogicalClock, SweepCell, SweepResult, Timings,
};

/// Test instrumentation: corrupt the aggregate the server claims, leaving
/// the honest client updates untouched. Never set on the honest path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultInjection {
    PerturbAggregate {
        entry: usize,
        index: usize,
        delta: f64,
    },
}

/// What one round did.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundReport {
    Committed {
        round: u64,
        block_index: u64,
    },
    Failed {
        round: u64,
        reason: String,
    },
}

/// Everything a round needs besides the evolving server state.
pub struct RoundContext<'a> {
    pub model: &'a ModelConfig,
    pub train: &'a TrainConfig,
    pub strategy: &'a StrategyConfig,
    pub ledger: &'a LedgerConfig,
    pub experiment_seed: u64,
    pub fold: u64,
    pub run: u64,
}

/// Run one federated round: every client trains from the current global
/// parameters, the strategy aggregates, both peers endorse, and the orderer
/// appends. A rejected proposal is retried once, then the round is reported
/// failed and the global model stays unchanged.
pub fn run_round(
    state: &ServerState,
    shards: &[WindowedDataset],
    ctx: &RoundContext<'_>,
    chain: &mut Chain,
    clock: &mut LogicalClock,
    round: u64,
    fault: Option<&FaultInjection>,
) -> Result<(ServerState, RoundReport)> {
    let updates: Vec<ClientUpdate> = exec::map_indexed(shards.len(), |client| {
        let seed = derive_seed(
            ctx.experiment_seed,
            "client",
            &[ctx.fold, ctx.run, client as u64, round],
        );
        let train = TrainConfig {
            seed,
            prox_mu: effective_prox_mu(ctx.strategy),
            ..*ctx.train
        };
        model::local_train(
            &state.global_params,
            &shards[client],
            ctx.model,
            &train,
            client as u64,
            round,
        )
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let candidate = aggregation::aggregate(ctx.strategy.kind, state, &updates, ctx.strategy)?;
    let claimed = match fault {
        None => candidate.global_params.clone(),
        Some(FaultInjection::PerturbAggregate {
            entry,
            index,
            delta,
        }) => {
            let mut entries: Vec<ParamEntry> = candidate.global_params.entries().to_vec();
            entries[*entry].values[*index] += delta;
            ParameterSet::from_entries_unchecked(entries)
        }
    };

    let mut last_reason = String::new();
    for _attempt in 0..2 {
        let proposal = crate::ledger::propose(
            round,
            ctx.strategy.kind,
            &updates,
            &claimed,
            ctx.strategy,
            state,
        )?;
        let outcomes =
            Chain::collect_endorsements(&proposal, &updates, state, ctx.strategy, ctx.ledger);
        match chain.order_and_append(&proposal, &outcomes, ctx.ledger, clock.tick()) {
            Ok(block) => {
                let committed = ServerState {
                    global_params: claimed,
                    momentum_buffer: candidate.momentum_buffer,
                    round: candidate.round,
                };
                return Ok((
                    committed,
                    RoundReport::Committed {
                        round,
                        block_index: block.index,
                    },
                ));
            }
            Err(Error::ProposalRejected(reason)) => last_reason = reason,
            Err(other) => return Err(other),
        }
    }
    Ok((
        state.clone(),
        RoundReport::Failed {
            round,
            reason: last_reason,
        },
    ))
}

fn effective_prox_mu(strategy: &StrategyConfig) -> f64 {
    if strategy.kind == StrategyKind::FedProx {
        strategy.prox_mu
    } else {
        0.0
    }
}

/// The shared data pipeline: source record, windowing, and fold splits.
struct Pipeline {
    windowed: WindowedDataset,
    folds: Vec<(Vec<usize>, Vec<usize>)>,
}

fn build_pipeline(config: &ExperimentConfig) -> Result<(Pipeline, ModelConfig)> {
    let resolved = config.resolve()?;
    let record = match &config.dataset {
        DatasetSpec::Synthetic { .. } => data::gen_synthetic(
            &config.dataset.synthetic().expect("synthetic spec"),
            config.sample_rate_hz,
            derive_seed(config.experiment_seed, "data", &[]),
        )?,
        DatasetSpec::Csv { path, .. } => {
            data::load_csv(std::path::Path::new(path), config.sample_rate_hz)?
        }
    };
    if record.num_channels() != resolved.model.in_channels {
        return Err(Error::Config(format!(
            "record has {} channels, model expects {}",
            record.num_channels(),
            resolved.model.in_channels
        )));
    }
    let mut windowed = data::window(&record, resolved.window_len, resolved.window_stride)?;
    // The model's class count governs; a dataset may legitimately miss the
    // top classes in a reduced run.
    if windowed.num_classes > resolved.model.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model expects {}",
            windowed.num_classes, resolved.model.num_classes
        )));
    }
    windowed.num_classes = resolved.model.num_classes;
    let folds = data::kfold_split(
        &windowed,
        config.folds,
        derive_seed(config.experiment_seed, "kfold", &[]),
    )?;
    Ok((Pipeline { windowed, folds }, resolved.model))
}

/// Normalized train/test splits plus the per-client shards for one cell.
struct CellData {
    shards: Vec<WindowedDataset>,
    test: WindowedDataset,
}

fn build_cell_data(
    pipeline: &Pipeline,
    config: &ExperimentConfig,
    fold: usize,
    run: usize,
) -> Result<CellData> {
    let (train_idx, test_idx) = &pipeline.folds[fold];
    let train = pipeline.windowed.subset(train_idx);
    let (train_norm, stats) = data::normalize(&train)?;
    let test = data::apply_stats(&pipeline.windowed.subset(test_idx), &stats);
    let plan = data::partition_clients(
        &train_norm,
        config.num_clients,
        config.partition_mode,
        derive_seed(config.experiment_seed, "partition", &[fold as u64, run as u64]),
    )?;
    let shards = (0..config.num_clients)
        .map(|c| train_norm.subset(&plan.client_indices(c)))
        .collect();
    Ok(CellData { shards, test })
}

fn mean_of(cells: &[MacroSummary]) -> MacroSummary {
    let n = cells.len().max(1) as f64;
    MacroSummary {
        precision: cells.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: cells.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: cells.iter().map(|m| m.f1).sum::<f64>() / n,
    }
}

fn summarize(
    config: &ExperimentConfig,
    per_cell: &[MacroSummary],
) -> (Vec<MacroSummary>, MacroSummary) {
    let per_fold: Vec<MacroSummary> = (0..config.folds)
        .map(|f| {
            let runs: Vec<MacroSummary> = per_cell
                .iter()
                .enumerate()
                .filter(|(i, _)| i / config.runs == f)
                .map(|(_, m)| *m)
                .collect();
            mean_of(&runs)
        })
        .collect();
    (per_fold.clone(), mean_of(&per_fold))
}

/// Run the full federated experiment: for every fold and run, a fresh
/// partition, Glorot init, ledger genesis, `rounds` committed rounds, and an
/// evaluation of the final global model on the fold's test split.
pub fn run_federated(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut timings = Timings::default();
    let started = Instant::now();
    let (pipeline, model_cfg) = build_pipeline(config)?;
    timings.data_ms = started.elapsed().as_millis();

    let strategy = config.strategy;
    let mut cells = Vec::new();
    let mut chains = Vec::new();
    let mut per_cell = Vec::new();
    for fold in 0..config.folds {
        for run in 0..config.runs {
            let trained = Instant::now();
            let cell_data = build_cell_data(&pipeline, config, fold, run)?;
            let init = model::init_glorot(
                &model_cfg,
                derive_seed(config.experiment_seed, "init", &[fold as u64, run as u64]),
            )
            .map_err(|e| Error::Config(format!("fold {fold} run {run}: {e}")))?;
            let mut clock = LogicalClock::new();
            let mut chain = Chain::genesis(&init, &config.ledger, clock.tick())?;
            let mut state = ServerState::new(strategy.kind, init);
            let ctx = RoundContext {
                model: &model_cfg,
                train: &config.train,
                strategy: &strategy,
                ledger: &config.ledger,
                experiment_seed: config.experiment_seed,
                fold: fold as u64,
                run: run as u64,
            };
            let mut failed_rounds = Vec::new();
            for round in 1..=config.rounds as u64 {
                let (next, report) = run_round(
                    &state,
                    &cell_data.shards,
                    &ctx,
                    &mut chain,
                    &mut clock,
                    round,
                    None,
                )
                .map_err(|e| Error::Config(format!("fold {fold} run {run} round {round}: {e}")))?;
                state = next;
                if let RoundReport::Failed { round, reason } = report {
                    failed_rounds.push(FailedRound { round, reason });
                }
            }
            timings.train_ms += trained.elapsed().as_millis();

            let eval_started = Instant::now();
            let metrics = model::evaluate(&state.global_params, &cell_data.test, &model_cfg)?;
            timings.eval_ms += eval_started.elapsed().as_millis();

            per_cell.push(MacroSummary::of(&metrics));
            let round_digests = chain
                .blocks()
                .iter()
                .skip(1)
                .map(|b| b.params_digest.to_hex())
                .collect();
            cells.push(CellResult {
                fold,
                run,
                metrics,
                round_digests,
                failed_rounds,
                ledger_file: Some(ledger_filename(config, fold, run)),
            });
            chains.push(((fold, run), chain));
        }
    }
    let (per_fold_mean, mean) = summarize(config, &per_cell);
    Ok(ExperimentResult {
        mode: "federated".to_string(),
        strategy: strategy.kind.name().to_string(),
        hidden_units: config.model.hidden_units,
        experiment_seed: config.experiment_seed,
        config: config.clone(),
        cells,
        per_fold_mean,
        mean,
        chains,
        timings,
    })
}

/// The centralized baseline under the equal-compute convention: one trainer
/// over the union of the client shards, run as `rounds` segments of
/// `local_epochs` epochs with per-segment reseeding and a fresh optimizer,
/// so a single-client federated run is reproduced bit for bit.
pub fn run_centralized(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut timings = Timings::default();
    let started = Instant::now();
    let (pipeline, model_cfg) = build_pipeline(config)?;
    timings.data_ms = started.elapsed().as_millis();

    let mut cells = Vec::new();
    let mut per_cell = Vec::new();
    for fold in 0..config.folds {
        for run in 0..config.runs {
            let trained = Instant::now();
            let cell_data = build_cell_data(&pipeline, config, fold, run)?;
            // Union of the shards in client order.
            let mut union = cell_data.shards[0].clone();
            for shard in &cell_data.shards[1..] {
                union.windows.extend(shard.windows.iter().cloned());
                union.labels.extend(shard.labels.iter().cloned());
            }
            let mut params = model::init_glorot(
                &model_cfg,
                derive_seed(config.experiment_seed, "init", &[fold as u64, run as u64]),
            )?;
            let mut round_digests = Vec::new();
            for segment in 1..=config.rounds as u64 {
                let train = TrainConfig {
                    seed: derive_seed(
                        config.experiment_seed,
                        "client",
                        &[fold as u64, run as u64, 0, segment],
                    ),
                    prox_mu: 0.0,
                    ..config.train
                };
                let update = model::local_train(&params, &union, &model_cfg, &train, 0, segment)?;
                params = update.params;
                round_digests.push(params.digest()?.to_hex());
            }
            timings.train_ms += trained.elapsed().as_millis();

            let eval_started = Instant::now();
            let metrics = model::evaluate(&params, &cell_data.test, &model_cfg)?;
            timings.eval_ms += eval_started.elapsed().as_millis();

            per_cell.push(MacroSummary::of(&metrics));
            cells.push(CellResult {
                fold,
                run,
                metrics,
                round_digests,
                failed_rounds: Vec::new(),
                ledger_file: None,
            });
        }
    }
    let (per_fold_mean, mean) = summarize(config, &per_cell);
    Ok(ExperimentResult {
        mode: "centralized".to_string(),
        strategy: "centralized".to_string(),
        hidden_units: config.model.hidden_units,
        experiment_seed: config.experiment_seed,
        config: config.clone(),
        cells,
        per_fold_mean,
        mean,
        chains: Vec::new(),
        timings,
    })
}

/// Purely-local baseline: every client trains alone for the full round
/// budget with no aggregation; returns each client's final metrics on the
/// fold's test split. Used to study what federation adds under label skew.
pub fn run_local_baseline(config: &ExperimentConfig, fold: usize, run: usize) -> Result<Vec<Metrics>> {
    let (pipeline, model_cfg) = build_pipeline(config)?;
    let cell_data = build_cell_data(&pipeline, config, fold, run)?;
    let init = model::init_glorot(
        &model_cfg,
        derive_seed(config.experiment_seed, "init", &[fold as u64, run as u64]),
    )?;
    let results = exec::map_indexed(cell_data.shards.len(), |client| {
        let mut params = init.clone();
        for round in 1..=config.rounds as u64 {
            let train = TrainConfig {
                seed: derive_seed(
                    config.experiment_seed,
                    "client",
                    &[fold as u64, run as u64, client as u64, round],
                ),
                prox_mu: 0.0,
                ..config.train
            };
            let update = model::local_train(
                &params,
                &cell_data.shards[client],
                &model_cfg,
                &train,
                client as u64,
                round,
            )?;
            params = update.params;
        }
        model::evaluate(&params, &cell_data.test, &model_cfg)
    });
    results.into_iter().collect()
}

fn sanitize(name: &str) -> String {
    name.to_lowercase().replace([' ', '/'], "_")
}

pub(crate) fn result_filename(result: &ExperimentResult) -> String {
    format!(
        "result_{}_{}_h{}_seed{}.json",
        result.mode,
        sanitize(&result.strategy),
        result.hidden_units,
        result.experiment_seed
    )
}

fn ledger_filename(config: &ExperimentConfig, fold: usize, run: usize) -> String {
    format!(
        "ledger_{}_h{}_seed{}_f{}_r{}.jsonl",
        sanitize(config.strategy.kind.name()),
        config.model.hidden_units,
        config.experiment_seed,
        fold,
        run
    )
}

/// Cartesian product of hidden-unit counts and strategies. One centralized
/// baseline runs per hidden-units value; per-cell failures are recorded and
/// the sweep continues. The returned table averages each strategy's deltas
/// across hidden-unit settings.
pub fn run_sweep(
    base: &ExperimentConfig,
    hidden_units: &[usize],
    strategies: &[StrategyKind],
) -> Result<SweepResult> {
    if hidden_units.is_empty() || strategies.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one hidden-units value and one strategy".into(),
        ));
    }
    let mut centralized = Vec::new();
    let mut cells = Vec::new();
    for &hidden in hidden_units {
        let mut cfg_h = base.clone();
        cfg_h.model.hidden_units = hidden;
        let baseline = run_centralized(&cfg_h)?;
        let baseline_mean = baseline.mean;
        centralized.push(baseline);
        for &strategy in strategies {
            let mut cfg_cell = cfg_h.clone();
            cfg_cell.strategy.kind = strategy;
            match run_federated(&cfg_cell) {
                Ok(result) => {
                    let table = improvement_table(
                        &baseline_mean,
                        &[(strategy.name().to_string(), result.mean)],
                    );
                    cells.push(SweepCell {
                        hidden_units: hidden,
                        strategy: strategy.name().to_string(),
                        federated: Some(result),
                        error: None,
                        improvement: Some(table.rows[0].clone()),
                    });
                }
                Err(e) => {
                    log::warn!("sweep cell h={hidden} {strategy} failed: {e}");
                    cells.push(SweepCell {
                        hidden_units: hidden,
                        strategy: strategy.name().to_string(),
                        federated: None,
                        error: Some(e.to_string()),
                        improvement: None,
                    });
                }
            }
        }
    }
    let mean_improvement = ImprovementTable {
        rows: strategies
            .iter()
            .map(|s| {
                let deltas: Vec<&ImprovementRow> = cells
                    .iter()
                    .filter(|c| c.strategy == s.name())
                    .filter_map(|c| c.improvement.as_ref())
                    .collect();
                let n = deltas.len().max(1) as f64;
                ImprovementRow {
                    strategy: s.name().to_string(),
                    precision_pp: deltas.iter().map(|d| d.precision_pp).sum::<f64>() / n,
                    recall_pp: deltas.iter().map(|d| d.recall_pp).sum::<f64>() / n,
                    f1_pp: deltas.iter().map(|d| d.f1_pp).sum::<f64>() / n,
                }
            })
            .collect(),
    };
    Ok(SweepResult {
        config: base.clone(),
        hidden_units: hidden_units.to_vec(),
        strategies: strategies.iter().map(|s| s.name().to_string()).collect(),
        centralized,
        cells,
        mean_improvement,
    })
}
