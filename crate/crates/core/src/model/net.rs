//! Forward pass, analytic gradients, prediction, and evaluation.
//!
//! Data layout: a window is `in_channels * window_len` values, channel-major.
//! Conv activations are `filters * seq_len`, feature-major. LSTM gates are
//! packed input/forget/cell/output, matching the parameter schema.

use crate::error::{Error, Result};
use crate::exec;
use crate::metrics::{self, Metrics};
use crate::params::{self, ParamEntry, ParameterSet};

use super::{Layout, ModelConfig};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-window intermediate activations retained for the backward pass.
struct WindowCacheInner {
    /// Input of each conv layer; the final element is the LSTM input
    /// sequence (post-ReLU output of the last conv layer).
    conv_inputs: Vec<Vec<f64>>,
    /// Pre-ReLU output of each conv layer.
    conv_pre: Vec<Vec<f64>>,
    gates_i: Vec<Vec<f64>>,
    gates_f: Vec<Vec<f64>>,
    gates_g: Vec<Vec<f64>>,
    gates_o: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    cell_tanh: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
}

/// Cached activations for a batch, opaque to callers.
pub struct ForwardCache {
    windows: Vec<WindowCacheInner>,
}

struct ParamRefs<'a> {
    conv_w: Vec<&'a [f64]>,
    conv_b: Vec<&'a [f64]>,
    w_ih: &'a [f64],
    w_hh: &'a [f64],
    lstm_b: &'a [f64],
    dense_w: &'a [f64],
    dense_b: &'a [f64],
}

impl<'a> ParamRefs<'a> {
    fn resolve(params: &'a ParameterSet, cfg: &ModelConfig) -> Result<Self> {
        cfg.check_schema(params)?;
        let lay = Layout::of(cfg);
        Ok(Self {
            conv_w: (0..cfg.conv_layers)
                .map(|l| params.entry(lay.conv_w(l)).values.as_slice())
                .collect(),
            conv_b: (0..cfg.conv_layers)
                .map(|l| params.entry(lay.conv_b(l)).values.as_slice())
                .collect(),
            w_ih: &params.entry(lay.lstm_w_ih()).values,
            w_hh: &params.entry(lay.lstm_w_hh()).values,
            lstm_b: &params.entry(lay.lstm_b()).values,
            dense_w: &params.entry(lay.dense_w()).values,
            dense_b: &params.entry(lay.dense_b()).values,
        })
    }
}

fn check_window_shape(window: &[f64], cfg: &ModelConfig) -> Result<()> {
    let want = cfg.in_channels * cfg.window_len;
    if window.len() != want {
        return Err(Error::Shape(format!(
            "window holds {} values, expected {} ({} channels x {} samples)",
            window.len(),
            want,
            cfg.in_channels,
            cfg.window_len
        )));
    }
    Ok(())
}

/// Valid 1-D convolution plus bias: input `in_c x t_in`, output `out_c x t_out`.
fn conv_forward(
    input: &[f64],
    weights: &[f64],
    bias: &[f64],
    in_c: usize,
    t_in: usize,
    out_c: usize,
    ksize: usize,
) -> Vec<f64> {
    let t_out = t_in - (ksize - 1);
    let mut out = vec![0.0; out_c * t_out];
    for f in 0..out_c {
        let w_f = &weights[f * in_c * ksize..(f + 1) * in_c * ksize];
        let out_f = &mut out[f * t_out..(f + 1) * t_out];
        for t in 0..t_out {
            let mut acc = bias[f];
            for c in 0..in_c {
                let w = &w_f[c * ksize..(c + 1) * ksize];
                let x = &input[c * t_in + t..c * t_in + t + ksize];
                for k in 0..ksize {
                    acc += w[k] * x[k];
                }
            }
            out_f[t] = acc;
        }
    }
    out
}

fn forward_window(
    p: &ParamRefs<'_>,
    window: &[f64],
    cfg: &ModelConfig,
    want_cache: bool,
) -> (Vec<f64>, Option<WindowCacheInner>) {
    let h = cfg.hidden_units;
    let feat = cfg.conv_filters;
    let ksize = cfg.filter_size;

    let mut conv_inputs = Vec::new();
    let mut conv_pre = Vec::new();
    let mut current = window.to_vec();
    let mut t_in = cfg.window_len;
    let mut in_c = cfg.in_channels;
    for l in 0..cfg.conv_layers {
        let pre = conv_forward(&current, p.conv_w[l], p.conv_b[l], in_c, t_in, feat, ksize);
        let post: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        if want_cache {
            conv_inputs.push(std::mem::take(&mut current));
            conv_pre.push(pre);
        }
        current = post;
        t_in -= ksize - 1;
        in_c = feat;
    }
    let seq_len = t_in;
    debug_assert_eq!(seq_len, cfg.conv_out_len());

    // Single-layer LSTM over the sequence; zero initial hidden and cell
    // state; gate packing i, f, g, o.
    let mut gates_i = Vec::new();
    let mut gates_f = Vec::new();
    let mut gates_g = Vec::new();
    let mut gates_o = Vec::new();
    let mut cells = Vec::new();
    let mut cell_tanh = Vec::new();
    let mut hidden = Vec::new();

    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut x_t = vec![0.0; feat];
    for t in 0..seq_len {
        for f in 0..feat {
            x_t[f] = current[f * seq_len + t];
        }
        let mut gi = vec![0.0; h];
        let mut gf = vec![0.0; h];
        let mut gg = vec![0.0; h];
        let mut go = vec![0.0; h];
        for (gate, out) in [&mut gi, &mut gf, &mut gg, &mut go].into_iter().enumerate() {
            for u in 0..h {
                let row = gate * h + u;
                let mut z = p.lstm_b[row];
                let w_row = &p.w_ih[row * feat..(row + 1) * feat];
                for f in 0..feat {
                    z += w_row[f] * x_t[f];
                }
                let r_row = &p.w_hh[row * h..(row + 1) * h];
                for v in 0..h {
                    z += r_row[v] * h_prev[v];
                }
                out[u] = z;
            }
        }
        let mut c_t = vec![0.0; h];
        let mut tc = vec![0.0; h];
        let mut h_t = vec![0.0; h];
        for u in 0..h {
            gi[u] = sigmoid(gi[u]);
            gf[u] = sigmoid(gf[u]);
            gg[u] = gg[u].tanh();
            go[u] = sigmoid(go[u]);
            c_t[u] = gf[u] * c_prev[u] + gi[u] * gg[u];
            tc[u] = c_t[u].tanh();
            h_t[u] = go[u] * tc[u];
        }
        h_prev.copy_from_slice(&h_t);
        c_prev.copy_from_slice(&c_t);
        if want_cache {
            gates_i.push(gi);
            gates_f.push(gf);
            gates_g.push(gg);
            gates_o.push(go);
            cells.push(c_t);
            cell_tanh.push(tc);
            hidden.push(h_t);
        }
    }

    let k = cfg.num_classes;
    let mut scores = vec![0.0; k];
    for cls in 0..k {
        let mut s = p.dense_b[cls];
        let w_row = &p.dense_w[cls * h..(cls + 1) * h];
        for u in 0..h {
            s += w_row[u] * h_prev[u];
        }
        scores[cls] = s;
    }

    let cache = want_cache.then(|| WindowCacheInner {
        conv_inputs: {
            conv_inputs.push(current);
            conv_inputs
        },
        conv_pre,
        gates_i,
        gates_f,
        gates_g,
        gates_o,
        cells,
        cell_tanh,
        hidden,
    });
    (scores, cache)
}

/// Run the network over a batch of windows, returning unnormalized class
/// scores per window plus the activations needed for gradients.
pub fn forward(
    params: &ParameterSet,
    windows: &[Vec<f64>],
    cfg: &ModelConfig,
) -> Result<(Vec<Vec<f64>>, ForwardCache)> {
    cfg.validate()?;
    let p = ParamRefs::resolve(params, cfg)?;
    let mut scores = Vec::with_capacity(windows.len());
    let mut caches = Vec::with_capacity(windows.len());
    for w in windows {
        check_window_shape(w, cfg)?;
        let (s, c) = forward_window(&p, w, cfg, true);
        scores.push(s);
        caches.push(c.expect("cache requested"));
    }
    Ok((scores, ForwardCache { windows: caches }))
}

/// Scores without cache, batch-parallel.
fn scores_only(params: &ParameterSet, windows: &[Vec<f64>], cfg: &ModelConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let p = ParamRefs::resolve(params, cfg)?;
    for w in windows {
        check_window_shape(w, cfg)?;
    }
    Ok(exec::map_indexed(windows.len(), |i| {
        forward_window(&p, &windows[i], cfg, false).0
    }))
}

/// Numerically stable softmax.
fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

struct GradBuffers {
    conv_w: Vec<Vec<f64>>,
    conv_b: Vec<Vec<f64>>,
    w_ih: Vec<f64>,
    w_hh: Vec<f64>,
    lstm_b: Vec<f64>,
    dense_w: Vec<f64>,
    dense_b: Vec<f64>,
}

impl GradBuffers {
    fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden_units;
        let feat = cfg.conv_filters;
        let conv_w = (0..cfg.conv_layers)
            .map(|l| {
                let in_c = if l == 0 { cfg.in_channels } else { feat };
                vec![0.0; feat * in_c * cfg.filter_size]
            })
            .collect();
        let conv_b = (0..cfg.conv_layers).map(|_| vec![0.0; feat]).collect();
        Self {
            conv_w,
            conv_b,
            w_ih: vec![0.0; 4 * h * feat],
            w_hh: vec![0.0; 4 * h * h],
            lstm_b: vec![0.0; 4 * h],
            dense_w: vec![0.0; cfg.num_classes * h],
            dense_b: vec![0.0; cfg.num_classes],
        }
    }

    fn into_parameter_set(self, cfg: &ModelConfig) -> ParameterSet {
        let schema = cfg.param_schema();
        let mut entries = Vec::with_capacity(schema.len());
        let mut conv_w = self.conv_w.into_iter();
        let mut conv_b = self.conv_b.into_iter();
        let tail = [self.w_ih, self.w_hh, self.lstm_b, self.dense_w, self.dense_b];
        let mut tail = tail.into_iter();
        for (name, shape) in schema {
            let values = if name.starts_with("conv") {
                if name.ends_with(".weight") {
                    conv_w.next().unwrap()
                } else {
                    conv_b.next().unwrap()
                }
            } else {
                tail.next().unwrap()
            };
            entries.push(ParamEntry::new(name, shape, values));
        }
        ParameterSet::from_entries_unchecked(entries)
    }
}

/// Backpropagate one window's score gradient into the parameter buffers.
fn backward_window(
    p: &ParamRefs<'_>,
    cache: &WindowCacheInner,
    dscores: &[f64],
    cfg: &ModelConfig,
    grads: &mut GradBuffers,
) {
    let h = cfg.hidden_units;
    let feat = cfg.conv_filters;
    let ksize = cfg.filter_size;
    let seq_len = cfg.conv_out_len();
    let lstm_input = cache.conv_inputs.last().expect("lstm input cached");

    // Dense head.
    let h_last = &cache.hidden[seq_len - 1];
    let mut dh = vec![0.0; h];
    for cls in 0..cfg.num_classes {
        let d = dscores[cls];
        grads.dense_b[cls] += d;
        let w_row = &p.dense_w[cls * h..(cls + 1) * h];
        let g_row = &mut grads.dense_w[cls * h..(cls + 1) * h];
        for u in 0..h {
            g_row[u] += d * h_last[u];
            dh[u] += d * w_row[u];
        }
    }

    // Backpropagation through time.
    let mut dc = vec![0.0; h];
    let mut d_lstm_in = vec![0.0; feat * seq_len];
    let mut x_t = vec![0.0; feat];
    for t in (0..seq_len).rev() {
        let gi = &cache.gates_i[t];
        let gf = &cache.gates_f[t];
        let gg = &cache.gates_g[t];
        let go = &cache.gates_o[t];
        let tc = &cache.cell_tanh[t];
        let zeros = vec![0.0; h];
        let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zeros };
        let h_prev = if t > 0 { &cache.hidden[t - 1] } else { &zeros };
        for f in 0..feat {
            x_t[f] = lstm_input[f * seq_len + t];
        }

        let mut dh_prev = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        for u in 0..h {
            let d_o = dh[u] * tc[u];
            let d_c = dc[u] + dh[u] * go[u] * (1.0 - tc[u] * tc[u]);
            let d_i = d_c * gg[u];
            let d_g = d_c * gi[u];
            let d_f = d_c * c_prev[u];
            dc_prev[u] = d_c * gf[u];

            let dz = [
                d_i * gi[u] * (1.0 - gi[u]),
                d_f * gf[u] * (1.0 - gf[u]),
                d_g * (1.0 - gg[u] * gg[u]),
                d_o * go[u] * (1.0 - go[u]),
            ];
            for (gate, dzv) in dz.into_iter().enumerate() {
                let row = gate * h + u;
                grads.lstm_b[row] += dzv;
                let gw_row = &mut grads.w_ih[row * feat..(row + 1) * feat];
                for f in 0..feat {
                    gw_row[f] += dzv * x_t[f];
                }
                let gr_row = &mut grads.w_hh[row * h..(row + 1) * h];
                let w_row = &p.w_hh[row * h..(row + 1) * h];
                for v in 0..h {
                    gr_row[v] += dzv * h_prev[v];
                    dh_prev[v] += dzv * w_row[v];
                }
                let wi_row = &p.w_ih[row * feat..(row + 1) * feat];
                for f in 0..feat {
                    d_lstm_in[f * seq_len + t] += dzv * wi_row[f];
                }
            }
        }
        dh = dh_prev;
        dc = dc_prev;
    }

    // Conv stack, last layer first.
    let mut d_out = d_lstm_in;
    for l in (0..cfg.conv_layers).rev() {
        let in_c = if l == 0 { cfg.in_channels } else { feat };
        let t_out = cfg.window_len - (l + 1) * (ksize - 1);
        let t_in = t_out + (ksize - 1);
        let input = &cache.conv_inputs[l];
        let pre = &cache.conv_pre[l];
        let mut d_in = vec![0.0; in_c * t_in];
        for f in 0..feat {
            let w_f = &p.conv_w[l][f * in_c * ksize..(f + 1) * in_c * ksize];
            let gw_f = &mut grads.conv_w[l][f * in_c * ksize..(f + 1) * in_c * ksize];
            for t in 0..t_out {
                let idx = f * t_out + t;
                if pre[idx] <= 0.0 {
                    continue;
                }
                let dz = d_out[idx];
                grads.conv_b[l][f] += dz;
                for c in 0..in_c {
                    let x = &input[c * t_in + t..c * t_in + t + ksize];
                    let di = &mut d_in[c * t_in + t..c * t_in + t + ksize];
                    let w = &w_f[c * ksize..(c + 1) * ksize];
                    let gw = &mut gw_f[c * ksize..(c + 1) * ksize];
                    for k in 0..ksize {
                        gw[k] += dz * x[k];
                        di[k] += dz * w[k];
                    }
                }
            }
        }
        d_out = d_in;
    }
}

/// Class-weighted softmax cross-entropy (mean over the batch) plus, when
/// `prox_mu > 0`, the proximal penalty `(mu/2) * ||params - global_ref||^2`,
/// with exact analytic gradients of the total.
pub fn loss_and_grad(
    params: &ParameterSet,
    windows: &[Vec<f64>],
    labels: &[usize],
    class_weights: &[f64],
    cfg: &ModelConfig,
    prox_mu: f64,
    global_ref: Option<&ParameterSet>,
) -> Result<(f64, ParameterSet)> {
    cfg.validate()?;
    if windows.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} windows but {} labels",
            windows.len(),
            labels.len()
        )));
    }
    if class_weights.len() != cfg.num_classes {
        return Err(Error::Shape(format!(
            "{} class weights for {} classes",
            class_weights.len(),
            cfg.num_classes
        )));
    }
    for &l in labels {
        if l >= cfg.num_classes {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes: cfg.num_classes,
            });
        }
    }
    let p = ParamRefs::resolve(params, cfg)?;
    let batch = windows.len() as f64;
    let mut grads = GradBuffers::zeros(cfg);
    let mut total_loss = 0.0;
    let mut dscores = vec![0.0; cfg.num_classes];
    let (all_scores, cache) = forward(params, windows, cfg)?;
    for ((scores, window_cache), &label) in
        all_scores.iter().zip(&cache.windows).zip(labels)
    {
        let probs = softmax(scores);
        let weight = class_weights[label];
        total_loss += weight * -probs[label].max(f64::MIN_POSITIVE).ln();
        for k in 0..cfg.num_classes {
            let indicator = if k == label { 1.0 } else { 0.0 };
            dscores[k] = weight / batch * (probs[k] - indicator);
        }
        backward_window(&p, window_cache, &dscores, cfg, &mut grads);
    }
    let mut loss = total_loss / batch;
    let mut grad_set = grads.into_parameter_set(cfg);
    if prox_mu > 0.0 {
        let anchor = global_ref.ok_or_else(|| {
            Error::Config("prox_mu > 0 requires the received global parameters".into())
        })?;
        loss += prox_mu / 2.0 * params::l2_distance_sq(params, anchor)?;
        let pull = params::sub(params, anchor)?;
        grad_set = params::axpy(prox_mu, &pull, &grad_set)?;
    }
    Ok((loss, grad_set))
}

/// Argmax class per window; ties break to the lowest class index.
pub fn predict(params: &ParameterSet, windows: &[Vec<f64>], cfg: &ModelConfig) -> Result<Vec<usize>> {
    let scores = scores_only(params, windows, cfg)?;
    Ok(scores.iter().map(|s| argmax(s)).collect())
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Evaluate on a windowed dataset: predictions plus full metrics.
pub fn evaluate(
    params: &ParameterSet,
    dataset: &crate::data::WindowedDataset,
    cfg: &ModelConfig,
) -> Result<Metrics> {
    let predicted = predict(params, &dataset.windows, cfg)?;
    metrics::evaluate_predictions(&dataset.labels, &predicted, cfg.num_classes)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{tiny_batch, tiny_config};
    use super::super::{class_weights, init_glorot, ModelConfig};
    use super::*;
    use approx::assert_abs_diff_eq;

    fn zero_params(cfg: &ModelConfig) -> ParameterSet {
        init_glorot(cfg, 0).unwrap().zeros_like()
    }

    #[test]
    fn all_zero_parameters_give_all_zero_scores() {
        let mut cfg = tiny_config();
        cfg.forget_gate_bias_one = false;
        let params = zero_params(&cfg);
        let (windows, _) = tiny_batch(&cfg, 3, 5);
        let (scores, _) = forward(&params, &windows, &cfg).unwrap();
        for row in scores {
            assert!(row.iter().all(|&s| s == 0.0), "{row:?}");
        }
    }

    #[test]
    fn forward_is_pure_and_batch_consistent() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 9).unwrap();
        let (windows, _) = tiny_batch(&cfg, 2, 6);
        let (a, _) = forward(&params, &windows, &cfg).unwrap();
        let (b, _) = forward(&params, &windows, &cfg).unwrap();
        assert_eq!(a, b);
        // A batch of identical windows yields identical score rows.
        let same = vec![windows[0].clone(), windows[0].clone(), windows[0].clone()];
        let (rows, _) = forward(&params, &same, &cfg).unwrap();
        assert_eq!(rows[0], rows[1]);
        assert_eq!(rows[1], rows[2]);
    }

    #[test]
    fn wrong_window_shape_rejected() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 1).unwrap();
        let bad = vec![vec![0.0; 5]];
        assert!(matches!(
            forward(&params, &bad, &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn uniform_weights_zero_scores_loss_is_ln_k() {
        let mut cfg = tiny_config();
        cfg.num_classes = 7;
        cfg.forget_gate_bias_one = false;
        let params = zero_params(&cfg);
        let (windows, _) = tiny_batch(&cfg, 4, 8);
        let labels = vec![0, 3, 5, 6];
        let weights = vec![1.0; 7];
        let (loss, _) = loss_and_grad(&params, &windows, &labels, &weights, &cfg, 0.0, None).unwrap();
        assert_abs_diff_eq!(loss, (7.0f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 1.9459, epsilon = 1e-4);
    }

    #[test]
    fn loss_is_nonnegative_and_label_checked() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 2).unwrap();
        let (windows, labels) = tiny_batch(&cfg, 5, 3);
        let weights = class_weights(&labels, cfg.num_classes).unwrap();
        let (loss, _) =
            loss_and_grad(&params, &windows, &labels, &weights, &cfg, 0.0, None).unwrap();
        assert!(loss >= 0.0);
        let bad = vec![cfg.num_classes; windows.len()];
        assert!(matches!(
            loss_and_grad(&params, &windows, &bad, &weights, &cfg, 0.0, None),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_prox_mu_ignores_global_ref() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 4).unwrap();
        let other = init_glorot(&cfg, 5).unwrap();
        let (windows, labels) = tiny_batch(&cfg, 4, 4);
        let weights = class_weights(&labels, cfg.num_classes).unwrap();
        let (l0, g0) =
            loss_and_grad(&params, &windows, &labels, &weights, &cfg, 0.0, None).unwrap();
        let (l1, g1) =
            loss_and_grad(&params, &windows, &labels, &weights, &cfg, 0.0, Some(&other)).unwrap();
        assert_eq!(l0, l1);
        assert_eq!(g0, g1);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 12).unwrap();
        let anchor = init_glorot(&cfg, 13).unwrap();
        let (windows, labels) = tiny_batch(&cfg, 6, 21);
        let weights = class_weights(&labels, cfg.num_classes).unwrap();
        for (mu, anchor_ref) in [(0.0, None), (0.1, Some(&anchor))] {
            let (_, grads) =
                loss_and_grad(&params, &windows, &labels, &weights, &cfg, mu, anchor_ref)
                    .unwrap();
            let mut checked = 0usize;
            for (e, entry) in params.entries().iter().enumerate() {
                for c in (0..entry.values.len()).step_by(3) {
                    let fd = finite_difference(
                        &params, &windows, &labels, &weights, &cfg, mu, anchor_ref, e, c,
                    );
                    let analytic = grads.entry(e).values[c];
                    let rel = (analytic - fd).abs() / analytic.abs().max(1.0);
                    assert!(
                        rel < 1e-4,
                        "entry {} coord {c}: analytic {analytic} vs fd {fd} (rel {rel})",
                        entry.name
                    );
                    checked += 1;
                }
            }
            assert!(checked >= 70, "only {checked} coordinates checked");
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finite_difference(
        params: &ParameterSet,
        windows: &[Vec<f64>],
        labels: &[usize],
        weights: &[f64],
        cfg: &ModelConfig,
        mu: f64,
        anchor: Option<&ParameterSet>,
        entry: usize,
        coord: usize,
    ) -> f64 {
        let h = 1e-5;
        let loss_at = |delta: f64| {
            let mut entries: Vec<ParamEntry> = params.entries().to_vec();
            entries[entry].values[coord] += delta;
            let shifted = ParameterSet::from_entries_unchecked(entries);
            loss_and_grad(&shifted, windows, labels, weights, cfg, mu, anchor)
                .unwrap()
                .0
        };
        (loss_at(h) - loss_at(-h)) / (2.0 * h)
    }

    #[test]
    fn predict_argmax_and_tie_break() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[-1.0]), 0);
    }

    #[test]
    fn evaluate_perfect_predictions_give_macro_f1_one() {
        let cfg = tiny_config();
        let params = init_glorot(&cfg, 30).unwrap();
        let (windows, _) = tiny_batch(&cfg, 9, 31);
        // Label the dataset with the model's own predictions.
        let predicted = predict(&params, &windows, &cfg).unwrap();
        let ds = crate::data::WindowedDataset {
            windows,
            labels: predicted,
            channels: cfg.in_channels,
            window_len: cfg.window_len,
            stride: 1,
            num_classes: cfg.num_classes,
        };
        let m = evaluate(&params, &ds, &cfg).unwrap();
        assert_eq!(m.macro_f1, 1.0);
    }
}
