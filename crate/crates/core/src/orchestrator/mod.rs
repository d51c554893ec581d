//! Experiment drivers: configuration, deterministic seed derivation, the
//! per-round train/aggregate/endorse/commit loop, k-fold x repeated-run
//! federated and centralized experiments, and the hidden-units x strategy
//! sweep.
//!
//! The entire experiment is a pure function of its configuration, including
//! the experiment seed: every RNG stream is derived by hashing the seed with
//! a role tag and the (fold, run, client, round) coordinates, so client
//! training is independent of scheduling order, and block timestamps come
//! from a logical clock.

mod report;
mod run;

pub use report::{render_experiment_table, render_sweep_tables, write_experiment, write_sweep};
pub use run::{
    run_centralized, run_federated, run_local_baseline, run_round, run_sweep, FaultInjection,
    RoundContext, RoundReport,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::aggregation::StrategyConfig;
use crate::data::{PartitionMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::ledger::LedgerConfig;
use crate::metrics::{MacroSummary, Metrics};
use crate::model::{filter_size_for_rate, ModelConfig, TrainConfig};

/// Where the experiment's time series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic {
        num_classes: usize,
        samples_per_class: usize,
        #[serde(default = "default_noise_sigma")]
        noise_sigma: f64,
    },
    Csv {
        path: String,
        num_classes: usize,
    },
}

fn default_noise_sigma() -> f64 {
    0.2
}

impl DatasetSpec {
    pub fn num_classes(&self) -> usize {
        match self {
            DatasetSpec::Synthetic { num_classes, .. } => *num_classes,
            DatasetSpec::Csv { num_classes, .. } => *num_classes,
        }
    }

    pub(crate) fn synthetic(&self) -> Option<SyntheticSpec> {
        match self {
            DatasetSpec::Synthetic {
                num_classes,
                samples_per_class,
                noise_sigma,
            } => Some(SyntheticSpec {
                num_classes: *num_classes,
                samples_per_class: *samples_per_class,
                noise_sigma: *noise_sigma,
            }),
            DatasetSpec::Csv { .. } => None,
        }
    }
}

/// Architecture settings as they appear in config files; window length,
/// filter size, channel count, and class count fall back to values derived
/// from the dataset and sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub in_channels: usize,
    pub conv_layers: usize,
    pub conv_filters: usize,
    pub filter_size: Option<usize>,
    pub window_len: Option<usize>,
    pub hidden_units: usize,
    pub num_classes: Option<usize>,
    pub forget_gate_bias_one: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            in_channels: 3,
            conv_layers: 4,
            conv_filters: 64,
            filter_size: None,
            window_len: None,
            hidden_units: 128,
            num_classes: None,
            forget_gate_bias_one: true,
        }
    }
}

/// Full experiment description; the JSON config file mirrors these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: u32,
    /// Window stride in samples; default is half the window (50% overlap).
    #[serde(default)]
    pub window_stride: Option<usize>,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub ledger: LedgerConfig,
    #[serde(default = "default_num_clients")]
    pub num_clients: usize,
    pub rounds: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_partition_mode")]
    pub partition_mode: PartitionMode,
    #[serde(default)]
    pub experiment_seed: u64,
}

fn default_sample_rate() -> u32 {
    50
}

fn default_num_clients() -> usize {
    3
}

fn default_folds() -> usize {
    5
}

fn default_runs() -> usize {
    5
}

fn default_partition_mode() -> PartitionMode {
    PartitionMode::Iid
}

/// Concrete windowing and architecture derived from an [`ExperimentConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedModel {
    pub model: ModelConfig,
    pub window_len: usize,
    pub window_stride: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(text)?)
    }

    /// Fill derived defaults and validate everything validatable up front.
    pub fn resolve(&self) -> Result<ResolvedModel> {
        let window_len = self
            .model
            .window_len
            .unwrap_or(self.sample_rate_hz as usize);
        let window_stride = self.window_stride.unwrap_or((window_len / 2).max(1));
        let model = ModelConfig {
            in_channels: self.model.in_channels,
            window_len,
            conv_layers: self.model.conv_layers,
            conv_filters: self.model.conv_filters,
            filter_size: self
                .model
                .filter_size
                .unwrap_or_else(|| filter_size_for_rate(self.sample_rate_hz)),
            hidden_units: self.model.hidden_units,
            num_classes: self
                .model
                .num_classes
                .unwrap_or_else(|| self.dataset.num_classes()),
            forget_gate_bias_one: self.model.forget_gate_bias_one,
        };
        model.validate()?;
        self.train.validate()?;
        self.strategy.validate()?;
        self.ledger.validate()?;
        if window_stride == 0 {
            return Err(Error::Config("window_stride must be positive".into()));
        }
        if self.num_clients == 0 {
            return Err(Error::Config("num_clients must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        Ok(ResolvedModel {
            model,
            window_len,
            window_stride,
        })
    }

    /// The protocol preset: 3 clients, 5 folds, 5 runs, Adam 1e-4 with
    /// weight decay 1e-6, 1-second windows with 50% overlap. Hidden units
    /// are swept externally over {128, 256, 512}.
    pub fn paper_protocol(dataset: DatasetSpec, rounds: usize, experiment_seed: u64) -> Self {
        Self {
            dataset,
            sample_rate_hz: 50,
            window_stride: None,
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            strategy: StrategyConfig::default(),
            ledger: LedgerConfig::default(),
            num_clients: 3,
            rounds,
            folds: 5,
            runs: 5,
            partition_mode: PartitionMode::Iid,
            experiment_seed,
        }
    }
}

/// Derive an independent 64-bit seed from the experiment seed, a role tag,
/// and coordinates, via SHA-256 (lower 8 bytes, little-endian).
pub fn derive_seed(experiment_seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(experiment_seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Deterministic millisecond clock for block timestamps.
#[derive(Debug, Clone, Default)]
pub struct LogicalClock {
    next_ms: u64,
}

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick(&mut self) -> u64 {
        let now = self.next_ms;
        self.next_ms += 1000;
        now
    }
}

/// One (fold, run) cell's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub fold: usize,
    pub run: usize,
    pub metrics: Metrics,
    /// Digest of the committed global parameters after each round (for
    /// centralized runs, after each training segment).
    pub round_digests: Vec<String>,
    pub failed_rounds: Vec<FailedRound>,
    /// Ledger filename relative to the output directory; federated only.
    pub ledger_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRound {
    pub round: u64,
    pub reason: String,
}

/// Aggregated outcome of a full experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// "federated" or "centralized".
    pub mode: String,
    pub strategy: String,
    pub hidden_units: usize,
    pub experiment_seed: u64,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    /// Per-fold means over runs, fold order.
    pub per_fold_mean: Vec<MacroSummary>,
    /// Mean over runs then folds.
    pub mean: MacroSummary,
    /// Chains per (fold, run), written next to the result JSON; kept out of
    /// the serialized result so result files stay byte-identical given a
    /// seed.
    #[serde(skip)]
    pub chains: Vec<((usize, usize), crate::ledger::Chain)>,
    /// Wall-clock milliseconds per phase, logged rather than serialized so
    /// identical seeds give byte-identical result files.
    #[serde(skip)]
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timings {
    pub data_ms: u128,
    pub train_ms: u128,
    pub eval_ms: u128,
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub hidden_units: usize,
    pub strategy: String,
    pub federated: Option<ExperimentResult>,
    pub error: Option<String>,
    /// Deltas against the same-hidden-units centralized baseline.
    pub improvement: Option<crate::metrics::ImprovementRow>,
}

/// Full sweep outcome: Cartesian product of hidden units and strategies,
/// one centralized baseline per hidden-units value, plus the per-strategy
/// mean improvement across hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub hidden_units: Vec<usize>,
    pub strategies: Vec<String>,
    pub centralized: Vec<ExperimentResult>,
    pub cells: Vec<SweepCell>,
    pub mean_improvement: crate::metrics::ImprovementTable,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_tags_and_parts() {
        let a = derive_seed(1, "client", &[0, 0, 0, 0]);
        let b = derive_seed(1, "client", &[0, 0, 0, 1]);
        let c = derive_seed(1, "init", &[0, 0, 0, 0]);
        let d = derive_seed(2, "client", &[0, 0, 0, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a, derive_seed(1, "client", &[0, 0, 0, 0]));
    }

    #[test]
    fn logical_clock_steps_by_a_second() {
        let mut clock = LogicalClock::new();
        assert_eq!(clock.tick(), 0);
        assert_eq!(clock.tick(), 1000);
        assert_eq!(clock.tick(), 2000);
    }

    #[test]
    fn config_defaults_and_resolution() {
        let json = r#"{
            "dataset": {"kind": "synthetic", "num_classes": 6, "samples_per_class": 100},
            "rounds": 2
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(cfg.num_clients, 3);
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.runs, 5);
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.train.weight_decay, 1e-6);
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.window_len, 50);
        assert_eq!(resolved.window_stride, 25);
        assert_eq!(resolved.model.filter_size, 11);
        assert_eq!(resolved.model.num_classes, 6);
        assert_eq!(resolved.model.in_channels, 3);
    }

    #[test]
    fn hundred_hz_gets_filter_21() {
        let mut cfg = ExperimentConfig::paper_protocol(
            DatasetSpec::Synthetic {
                num_classes: 4,
                samples_per_class: 500,
                noise_sigma: 0.2,
            },
            1,
            0,
        );
        cfg.sample_rate_hz = 100;
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.window_len, 100);
        assert_eq!(resolved.model.filter_size, 21);
    }

    #[test]
    fn unknown_config_fields_rejected() {
        let json = r#"{
            "dataset": {"kind": "synthetic", "num_classes": 6, "samples_per_class": 100},
            "rounds": 2,
            "roundz": 3
        }"#;
        assert!(ExperimentConfig::from_json(json).is_err());
    }

    #[test]
    fn invalid_window_rejected_at_resolve() {
        let mut cfg = ExperimentConfig::paper_protocol(
            DatasetSpec::Synthetic {
                num_classes: 3,
                samples_per_class: 100,
                noise_sigma: 0.2,
            },
            1,
            0,
        );
        cfg.model.window_len = Some(10);
        // 4 conv layers of size 11 need more than 40 samples.
        assert!(cfg.resolve().is_err());
    }
}
