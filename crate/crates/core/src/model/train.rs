//! Adam with decoupled weight decay, and the client-local training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregation::ClientUpdate;
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::params::{ParamEntry, ParameterSet};

use super::net::loss_and_grad;
use super::{class_weights, AdamState, ModelConfig, TrainConfig};

/// One Adam step with bias correction and decoupled weight decay:
/// `p' = p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p`.
pub fn adam_step(
    params: &ParameterSet,
    grads: &ParameterSet,
    state: AdamState,
    train: &TrainConfig,
) -> Result<(ParameterSet, AdamState)> {
    params.same_schema(grads)?;
    params.same_schema(&state.first_moment)?;
    let t = state.step_count + 1;
    let bias1 = 1.0 - state.beta1.powi(t as i32);
    let bias2 = 1.0 - state.beta2.powi(t as i32);
    let lr = train.learning_rate;
    let wd = train.weight_decay;

    let mut new_params = Vec::with_capacity(params.len());
    let mut new_m = Vec::with_capacity(params.len());
    let mut new_v = Vec::with_capacity(params.len());
    for (e, entry) in params.entries().iter().enumerate() {
        let g = &grads.entry(e).values;
        let m = &state.first_moment.entry(e).values;
        let v = &state.second_moment.entry(e).values;
        let mut pv = Vec::with_capacity(entry.values.len());
        let mut mv = Vec::with_capacity(entry.values.len());
        let mut vv = Vec::with_capacity(entry.values.len());
        for c in 0..entry.values.len() {
            let m_c = state.beta1 * m[c] + (1.0 - state.beta1) * g[c];
            let v_c = state.beta2 * v[c] + (1.0 - state.beta2) * g[c] * g[c];
            let m_hat = m_c / bias1;
            let v_hat = v_c / bias2;
            let p = entry.values[c];
            pv.push(p - lr * m_hat / (v_hat.sqrt() + state.epsilon) - lr * wd * p);
            mv.push(m_c);
            vv.push(v_c);
        }
        new_params.push(ParamEntry::new(entry.name.clone(), entry.shape.clone(), pv));
        new_m.push(ParamEntry::new(entry.name.clone(), entry.shape.clone(), mv));
        new_v.push(ParamEntry::new(entry.name.clone(), entry.shape.clone(), vv));
    }
    Ok((
        ParameterSet::from_entries_unchecked(new_params),
        AdamState {
            first_moment: ParameterSet::from_entries_unchecked(new_m),
            second_moment: ParameterSet::from_entries_unchecked(new_v),
            step_count: t,
            ..state
        },
    ))
}

/// Run `local_epochs` of seeded mini-batch Adam from `start_params` on the
/// client's shard. Batches are drawn by a fresh shuffle each epoch and the
/// final partial batch is kept. With `prox_mu > 0` the proximal anchor is
/// `start_params`, the parameters received from the server. Returns the
/// final parameters, the shard size, and the final epoch's example-mean
/// loss (0.0 when no epochs run).
pub fn local_train(
    start_params: &ParameterSet,
    shard: &WindowedDataset,
    cfg: &ModelConfig,
    train: &TrainConfig,
    client_id: u64,
    round: u64,
) -> Result<ClientUpdate> {
    cfg.validate()?;
    train.validate()?;
    if shard.is_empty() {
        return Err(Error::EmptyShard);
    }
    let n = shard.len();
    let weights = class_weights(&shard.labels, cfg.num_classes)?;
    let anchor = (train.prox_mu > 0.0).then(|| start_params.clone());
    let mut params = start_params.clone();
    let mut adam = AdamState::new(start_params);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut final_epoch_loss = 0.0;
    for _ in 0..train.local_epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in indices.chunks(train.batch_size) {
            let windows: Vec<Vec<f64>> =
                batch.iter().map(|&i| shard.windows[i].clone()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| shard.labels[i]).collect();
            let (loss, grads) = loss_and_grad(
                &params,
                &windows,
                &labels,
                &weights,
                cfg,
                train.prox_mu,
                anchor.as_ref(),
            )?;
            let (next, next_state) = adam_step(&params, &grads, adam, train)?;
            params = next;
            adam = next_state;
            epoch_loss += loss * batch.len() as f64;
        }
        final_epoch_loss = epoch_loss / n as f64;
    }
    Ok(ClientUpdate {
        client_id,
        round,
        params,
        num_examples: n,
        train_loss: final_epoch_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{tiny_batch, tiny_config};
    use super::super::init_glorot;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn shard_from(cfg: &ModelConfig, count: usize, seed: u64) -> WindowedDataset {
        let (windows, labels) = tiny_batch(cfg, count, seed);
        WindowedDataset {
            windows,
            labels,
            channels: cfg.in_channels,
            window_len: cfg.window_len,
            stride: 1,
            num_classes: cfg.num_classes,
        }
    }

    #[test]
    fn adam_zero_gradient_zero_decay_is_fixed_point() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 1).unwrap();
        let grads = params.zeros_like();
        let state = AdamState::new(&params);
        let train = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let (next, state) = adam_step(&params, &grads, state, &train).unwrap();
        assert_eq!(next, params);
        assert_eq!(state.first_moment, params.zeros_like());
        assert_eq!(state.second_moment, params.zeros_like());
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        // Scalar parameter 0, gradient 0.5, wd 0: bias-corrected
        // m_hat / sqrt(v_hat) = sign(g), so the step is -lr within eps noise.
        let params = ParameterSet::new(vec![ParamEntry::new("w", vec![1], vec![0.0])]).unwrap();
        let grads = ParameterSet::new(vec![ParamEntry::new("w", vec![1], vec![0.5])]).unwrap();
        let state = AdamState::new(&params);
        let train = TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let (next, _) = adam_step(&params, &grads, state, &train).unwrap();
        let step = next.entry(0).values[0];
        assert_abs_diff_eq!(step, -1e-4, epsilon = 1e-11);
    }

    #[test]
    fn adam_is_deterministic() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 3).unwrap();
        let grads = init_glorot(&cfg, 4).unwrap();
        let train = TrainConfig::default();
        let (a, sa) = adam_step(&params, &grads, AdamState::new(&params), &train).unwrap();
        let (b, sb) = adam_step(&params, &grads, AdamState::new(&params), &train).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa.first_moment, sb.first_moment);
        assert_eq!(sa.second_moment, sb.second_moment);
    }

    #[test]
    fn zero_epochs_returns_start_params() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 5).unwrap();
        let shard = shard_from(&cfg, 6, 7);
        let train = TrainConfig {
            local_epochs: 0,
            ..TrainConfig::default()
        };
        let update = local_train(&params, &shard, &cfg, &train, 2, 9).unwrap();
        assert_eq!(update.params, params);
        assert_eq!(update.client_id, 2);
        assert_eq!(update.round, 9);
        assert_eq!(update.num_examples, 6);
        assert_eq!(update.train_loss, 0.0);
    }

    #[test]
    fn local_train_is_bitwise_deterministic() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 11).unwrap();
        let shard = shard_from(&cfg, 10, 13);
        let train = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            local_epochs: 2,
            seed: 77,
            ..TrainConfig::default()
        };
        let a = local_train(&params, &shard, &cfg, &train, 0, 0).unwrap();
        let b = local_train(&params, &shard, &cfg, &train, 0, 0).unwrap();
        assert_eq!(a, b);
        let other_seed = TrainConfig { seed: 78, ..train };
        let c = local_train(&params, &shard, &cfg, &other_seed, 0, 0).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn training_reduces_loss_on_separable_toy_shard() {
        // Two channels: class 0 windows are +1, class 1 windows are -1.
        let mut cfg = tiny_config();
        cfg.num_classes = 2;
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            windows.push(vec![sign; cfg.in_channels * cfg.window_len]);
            labels.push(usize::from(i % 2 == 1));
        }
        let shard = WindowedDataset {
            windows,
            labels,
            channels: cfg.in_channels,
            window_len: cfg.window_len,
            stride: 1,
            num_classes: 2,
        };
        let params = init_glorot(&cfg, 21).unwrap();
        let weights = class_weights(&shard.labels, 2).unwrap();
        let (initial_loss, _) = loss_and_grad(
            &params,
            &shard.windows,
            &shard.labels,
            &weights,
            &cfg,
            0.0,
            None,
        )
        .unwrap();
        let train = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 4,
            local_epochs: 5,
            seed: 3,
            ..TrainConfig::default()
        };
        let update = local_train(&params, &shard, &cfg, &train, 0, 0).unwrap();
        assert!(
            update.train_loss < initial_loss,
            "{} !< {initial_loss}",
            update.train_loss
        );
    }

    #[test]
    fn empty_shard_is_an_error() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 1).unwrap();
        let shard = WindowedDataset {
            windows: vec![],
            labels: vec![],
            channels: cfg.in_channels,
            window_len: cfg.window_len,
            stride: 1,
            num_classes: cfg.num_classes,
        };
        assert!(matches!(
            local_train(&params, &shard, &cfg, &TrainConfig::default(), 0, 0),
            Err(Error::EmptyShard)
        ));
    }

    #[test]
    fn output_schema_matches_input_schema() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 2).unwrap();
        let shard = shard_from(&cfg, 5, 6);
        let train = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        let update = local_train(&params, &shard, &cfg, &train, 0, 0).unwrap();
        update.params.same_schema(&params).unwrap();
    }

    #[test]
    fn strong_proximal_pull_keeps_params_near_anchor() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 8).unwrap();
        let shard = shard_from(&cfg, 8, 9);
        let base = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 4,
            local_epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let free = local_train(&params, &shard, &cfg, &base, 0, 0).unwrap();
        let proxed = local_train(
            &params,
            &shard,
            &cfg,
            &TrainConfig {
                prox_mu: 1e6,
                ..base
            },
            0,
            0,
        )
        .unwrap();
        let d_free = crate::params::l2_distance_sq(&free.params, &params).unwrap();
        let d_prox = crate::params::l2_distance_sq(&proxed.params, &params).unwrap();
        assert!(d_prox < d_free, "{d_prox} !< {d_free}");
    }
}
