//! The classifier: a stack of valid 1-D convolutions over the time axis, a
//! single LSTM layer, and a dense head on the final hidden state, together
//! with Glorot initialization, analytic gradients, Adam with decoupled
//! weight decay, and client-local training (optionally with a FedProx
//! proximal anchor).
//!
//! Everything is plain `f64` with fixed loop order, so repeated calls with
//! identical inputs are bitwise identical, and clients running concurrently
//! on independent seeds cannot observe scheduling.

mod net;
mod train;

pub use net::{evaluate, forward, loss_and_grad, predict, ForwardCache};
pub use train::{adam_step, local_train};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamEntry, ParameterSet};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub window_len: usize,
    pub conv_layers: usize,
    pub conv_filters: usize,
    pub filter_size: usize,
    pub hidden_units: usize,
    pub num_classes: usize,
    /// Initialize the LSTM forget-gate bias to 1.0. Disabled in tests that
    /// assert exact zero propagation through all-zero parameters.
    #[serde(default = "default_true")]
    pub forget_gate_bias_one: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("in_channels", self.in_channels),
            ("window_len", self.window_len),
            ("conv_layers", self.conv_layers),
            ("conv_filters", self.conv_filters),
            ("filter_size", self.filter_size),
            ("hidden_units", self.hidden_units),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.window_len <= self.conv_layers * (self.filter_size - 1) {
            return Err(Error::Config(format!(
                "window_len {} leaves no sequence after {} convolutions of size {}",
                self.window_len, self.conv_layers, self.filter_size
            )));
        }
        Ok(())
    }

    /// Sequence length remaining after the valid convolution stack.
    pub fn conv_out_len(&self) -> usize {
        self.window_len - self.conv_layers * (self.filter_size - 1)
    }

    /// The ordered name + shape schema of this architecture's parameters.
    pub fn param_schema(&self) -> Vec<(String, Vec<usize>)> {
        let mut schema = Vec::new();
        for l in 0..self.conv_layers {
            let in_c = if l == 0 {
                self.in_channels
            } else {
                self.conv_filters
            };
            schema.push((
                format!("conv{l}.weight"),
                vec![self.conv_filters, in_c, self.filter_size],
            ));
            schema.push((format!("conv{l}.bias"), vec![self.conv_filters]));
        }
        let h = self.hidden_units;
        schema.push(("lstm.weight_ih".into(), vec![4 * h, self.conv_filters]));
        schema.push(("lstm.weight_hh".into(), vec![4 * h, h]));
        schema.push(("lstm.bias".into(), vec![4 * h]));
        schema.push(("dense.weight".into(), vec![self.num_classes, h]));
        schema.push(("dense.bias".into(), vec![self.num_classes]));
        schema
    }

    pub(crate) fn check_schema(&self, params: &ParameterSet) -> Result<()> {
        let want = self.param_schema();
        let reference = ParameterSet::from_entries_unchecked(
            want.iter()
                .map(|(n, s)| ParamEntry::new(n.clone(), s.clone(), vec![0.0; s.iter().product()]))
                .collect(),
        );
        params.same_schema(&reference)
    }
}

/// Filter size preserving the one-fifth-of-a-second filter duration across
/// sample rates: 11 taps at 50 Hz, 21 at 100 Hz.
pub fn filter_size_for_rate(sample_rate_hz: u32) -> usize {
    sample_rate_hz as usize / 5 + 1
}

/// Training hyperparameters for one client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// 0 disables the proximal term; > 0 anchors local training to the
    /// received global parameters.
    pub prox_mu: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-6,
            local_epochs: 1,
            batch_size: 64,
            prox_mu: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.weight_decay < 0.0 || self.prox_mu < 0.0 {
            return Err(Error::Config(
                "weight_decay and prox_mu must be nonnegative".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moment buffers, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: ParameterSet,
    pub second_moment: ParameterSet,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(template: &ParameterSet) -> Self {
        Self {
            first_moment: template.zeros_like(),
            second_moment: template.zeros_like(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

fn uniform_pm(rng: &mut ChaCha8Rng, limit: f64) -> f64 {
    use rand::Rng;
    (rng.gen::<f64>() * 2.0 - 1.0) * limit
}

/// Glorot-uniform initialization: every weight matrix or kernel is drawn
/// from [-L, L] with L = sqrt(6 / (fan_in + fan_out)); biases are zero
/// except the LSTM forget-gate block, set to 1.0 unless disabled.
///
/// Fans: a conv kernel [out, in, k] has fan_in = in * k and fan_out =
/// out * k; a matrix [rows, cols] has fan_in = cols and fan_out = rows.
pub fn init_glorot(config: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.hidden_units;
    let mut entries = Vec::new();
    for (name, shape) in config.param_schema() {
        let count: usize = shape.iter().product();
        let values = if name.ends_with(".weight") || name.starts_with("lstm.weight") {
            let (fan_in, fan_out) = match shape.len() {
                3 => (shape[1] * shape[2], shape[0] * shape[2]),
                2 => (shape[1], shape[0]),
                _ => unreachable!("weights are rank 2 or 3"),
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..count).map(|_| uniform_pm(&mut rng, limit)).collect()
        } else {
            let mut values = vec![0.0; count];
            if name == "lstm.bias" && config.forget_gate_bias_one {
                values[h..2 * h].fill(1.0);
            }
            values
        };
        entries.push(ParamEntry::new(name, shape, values));
    }
    ParameterSet::new(entries)
}

/// Inverse-frequency class weights w_k = N / (K * count_k) over the given
/// labels; classes absent from the labels get weight 0.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes,
            });
        }
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    let k = num_classes as f64;
    Ok(counts
        .iter()
        .map(|&c| if c > 0 { n / (k * c as f64) } else { 0.0 })
        .collect())
}

/// Entry indices into the flat parameter schema.
pub(crate) struct Layout {
    pub conv_layers: usize,
}

impl Layout {
    pub(crate) fn of(cfg: &ModelConfig) -> Self {
        Self {
            conv_layers: cfg.conv_layers,
        }
    }

    pub(crate) fn conv_w(&self, l: usize) -> usize {
        2 * l
    }

    pub(crate) fn conv_b(&self, l: usize) -> usize {
        2 * l + 1
    }

    pub(crate) fn lstm_w_ih(&self) -> usize {
        2 * self.conv_layers
    }

    pub(crate) fn lstm_w_hh(&self) -> usize {
        2 * self.conv_layers + 1
    }

    pub(crate) fn lstm_b(&self) -> usize {
        2 * self.conv_layers + 2
    }

    pub(crate) fn dense_w(&self) -> usize {
        2 * self.conv_layers + 3
    }

    pub(crate) fn dense_b(&self) -> usize {
        2 * self.conv_layers + 4
    }
}
