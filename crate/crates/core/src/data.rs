//! Synthetic triaxial time-series generation, CSV ingestion, sliding-window
//! segmentation, normalization, stratified k-fold splits, and client
//! partitioning.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Multichannel time series with one integer class label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRecord {
    /// `channels[c][t]`, all channels the same length as `labels`.
    pub channels: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub sample_rate_hz: u32,
}

impl TimeSeriesRecord {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }
}

/// Sliding-window view of a record: each window is `channels x window_len`
/// stored row-major (channel-major) in a flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub windows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub channels: usize,
    pub window_len: usize,
    pub stride: usize,
    pub num_classes: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Clone the windows named by `indices`, preserving their order.
    pub fn subset(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            channels: self.channels,
            window_len: self.window_len,
            stride: self.stride,
            num_classes: self.num_classes,
        }
    }
}

/// Parameters for the synthetic stand-in signal: one sinusoid per class with
/// class-specific frequency `1 + k` Hz and amplitude `1 + 0.25 k`, per-channel
/// phase offsets of 0, 2pi/3 and 4pi/3, plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
}

fn default_noise_sigma() -> f64 {
    0.2
}

/// Generate the synthetic record: classes concatenated in label order,
/// deterministic given the seed.
pub fn gen_synthetic(
    spec: &SyntheticSpec,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<TimeSeriesRecord> {
    if spec.num_classes < 2 {
        return Err(Error::Config(format!(
            "synthetic data needs at least 2 classes, got {}",
            spec.num_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let phases = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
    let total = spec.num_classes * spec.samples_per_class;
    let mut channels = vec![Vec::with_capacity(total); 3];
    let mut labels = Vec::with_capacity(total);
    let rate = f64::from(sample_rate_hz);
    for k in 0..spec.num_classes {
        let freq = 1.0 + k as f64;
        let amp = 1.0 + 0.25 * k as f64;
        for t in 0..spec.samples_per_class {
            for (j, chan) in channels.iter_mut().enumerate() {
                let clean = amp * (2.0 * PI * freq * t as f64 / rate + phases[j]).sin();
                let noise = if spec.noise_sigma > 0.0 {
                    spec.noise_sigma * normal.sample(&mut rng)
                } else {
                    0.0
                };
                chan.push(clean + noise);
            }
            labels.push(k);
        }
    }
    Ok(TimeSeriesRecord {
        channels,
        labels,
        sample_rate_hz,
    })
}

/// Segment a record into windows `stride` apart starting at 0. The window
/// label is the majority label of its samples, ties to the lowest class
/// index; trailing samples that do not fill a window are dropped.
pub fn window(record: &TimeSeriesRecord, window_len: usize, stride: usize) -> Result<WindowedDataset> {
    let len = record.len();
    if window_len == 0 || stride == 0 {
        return Err(Error::Config("window_len and stride must be positive".into()));
    }
    if window_len > len {
        return Err(Error::WindowTooLong {
            window_len,
            record_len: len,
        });
    }
    let num_classes = record.labels.iter().max().map_or(0, |m| m + 1);
    let count = (len - window_len) / stride + 1;
    let channels = record.num_channels();
    let mut windows = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        let mut flat = Vec::with_capacity(channels * window_len);
        for chan in &record.channels {
            flat.extend_from_slice(&chan[start..start + window_len]);
        }
        let mut counts = vec![0usize; num_classes];
        for &l in &record.labels[start..start + window_len] {
            counts[l] += 1;
        }
        let majority = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .unwrap_or(0);
        windows.push(flat);
        labels.push(majority);
    }
    Ok(WindowedDataset {
        windows,
        labels,
        channels,
        window_len,
        stride,
        num_classes,
    })
}

/// Per-channel normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Z-score a dataset per channel and return the statistics so the same
/// transform can be applied to a held-out split. Standard deviations are
/// floored at 1e-8.
pub fn normalize(dataset: &WindowedDataset) -> Result<(WindowedDataset, ChannelStats)> {
    if dataset.is_empty() {
        return Err(Error::EmptyShard);
    }
    let c = dataset.channels;
    let t = dataset.window_len;
    let n = (dataset.len() * t) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for w in &dataset.windows {
        for ch in 0..c {
            for &v in &w[ch * t..(ch + 1) * t] {
                mean[ch] += v;
            }
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for w in &dataset.windows {
        for ch in 0..c {
            for &v in &w[ch * t..(ch + 1) * t] {
                let d = v - mean[ch];
                var[ch] += d * d;
            }
        }
    }
    let std: Vec<f64> = var.iter().map(|&v| (v / n).sqrt().max(1e-8)).collect();
    let stats = ChannelStats { mean, std };
    Ok((apply_stats(dataset, &stats), stats))
}

/// Apply previously computed channel statistics.
pub fn apply_stats(dataset: &WindowedDataset, stats: &ChannelStats) -> WindowedDataset {
    let t = dataset.window_len;
    let windows = dataset
        .windows
        .iter()
        .map(|w| {
            let mut out = Vec::with_capacity(w.len());
            for ch in 0..dataset.channels {
                for &v in &w[ch * t..(ch + 1) * t] {
                    out.push((v - stats.mean[ch]) / stats.std[ch]);
                }
            }
            out
        })
        .collect();
    WindowedDataset {
        windows,
        ..dataset.clone()
    }
}

/// Stratified k-fold split: within each class a seeded shuffle is cut into k
/// near-equal parts; fold i's test set is the union of part i across classes.
/// Returns `(train, test)` index pairs with indices sorted ascending.
pub fn kfold_split(
    dataset: &WindowedDataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if dataset.len() < k {
        return Err(Error::Config(format!(
            "dataset of {} windows cannot be split into {} folds",
            dataset.len(),
            k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, indices) in per_class.iter_mut().enumerate() {
        if indices.is_empty() {
            continue;
        }
        if indices.len() < k {
            log::warn!(
                "class {class} has only {} windows; it will be absent from some folds",
                indices.len()
            );
        }
        indices.shuffle(&mut rng);
        let base = indices.len() / k;
        let rem = indices.len() % k;
        let mut cursor = 0;
        for (fold, test) in test_sets.iter_mut().enumerate() {
            let size = base + usize::from(fold < rem);
            test.extend_from_slice(&indices[cursor..cursor + size]);
            cursor += size;
        }
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    Ok(test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train: Vec<usize> = all
                .iter()
                .copied()
                .filter(|i| test.binary_search(i).is_err())
                .collect();
            (train, test)
        })
        .collect())
}

/// How windows are distributed across clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    LabelSkew,
}

/// Assignment of every window to exactly one client.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    /// `assignment[window_index] = client_id`.
    pub assignment: Vec<usize>,
    pub mode: PartitionMode,
    pub num_clients: usize,
}

impl PartitionPlan {
    /// Window indices owned by `client`, ascending.
    pub fn client_indices(&self, client: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == client)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Split windows across clients. `Iid` distributes a seeded shuffle round
/// robin. `LabelSkew` routes each window to the client owning its class
/// (class `c` belongs to client `c % num_clients`), except a 10% spillover
/// reassigned uniformly at random so every shard stays heterogeneous.
pub fn partition_clients(
    dataset: &WindowedDataset,
    num_clients: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<PartitionPlan> {
    if num_clients == 0 {
        return Err(Error::Config("need at least one client".into()));
    }
    if num_clients > dataset.len() {
        return Err(Error::TooManyClients {
            clients: num_clients,
            windows: dataset.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dataset.len();
    let mut assignment = vec![0usize; n];
    match mode {
        PartitionMode::Iid => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for (pos, &idx) in order.iter().enumerate() {
                assignment[idx] = pos % num_clients;
            }
        }
        PartitionMode::LabelSkew => {
            for i in 0..n {
                let dominant = dataset.labels[i] % num_clients;
                let spill: f64 = rng.gen();
                assignment[i] = if spill < 0.10 {
                    rng.gen_range(0..num_clients)
                } else {
                    dominant
                };
            }
            // Every client must end up non-empty; steal from the largest.
            loop {
                let mut counts = vec![0usize; num_clients];
                for &c in &assignment {
                    counts[c] += 1;
                }
                let Some(empty) = counts.iter().position(|&c| c == 0) else {
                    break;
                };
                let largest = counts
                    .iter()
                    .enumerate()
                    .max_by_key(|(_, &c)| c)
                    .map(|(i, _)| i)
                    .unwrap();
                let donor = assignment.iter().position(|&c| c == largest).unwrap();
                assignment[donor] = empty;
            }
        }
    }
    Ok(PartitionPlan {
        assignment,
        mode,
        num_clients,
    })
}

const CSV_HEADER: &str = "t,x,y,z,label";

/// Load a `t,x,y,z,label` CSV into a record. The sample rate is supplied by
/// the caller, never inferred. Malformed rows are reported with their
/// 1-based line number (the header is line 1).
pub fn load_csv(path: &Path, sample_rate_hz: u32) -> Result<TimeSeriesRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    {
        let headers = reader.headers().map_err(|e| Error::Csv {
            line: 1,
            msg: e.to_string(),
        })?;
        let expected: Vec<&str> = CSV_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Csv {
                line: 1,
                msg: format!("expected header {CSV_HEADER:?}, found {headers:?}"),
            });
        }
    }
    let mut channels = vec![Vec::new(), Vec::new(), Vec::new()];
    let mut labels = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Csv {
            line,
            msg: e.to_string(),
        })?;
        if row.len() != 5 {
            return Err(Error::Csv {
                line,
                msg: format!("expected 5 fields, found {}", row.len()),
            });
        }
        for (ch, field) in [(0usize, 1usize), (1, 2), (2, 3)] {
            let raw = row.get(field).unwrap();
            let value: f64 = raw.trim().parse().map_err(|_| Error::Csv {
                line,
                msg: format!("non-numeric value {raw:?} in column {}", &"txyz!"[field..=field]),
            })?;
            channels[ch].push(value);
        }
        let raw_label = row.get(4).unwrap();
        let label: usize = raw_label.trim().parse().map_err(|_| Error::Csv {
            line,
            msg: format!("unknown label {raw_label:?}"),
        })?;
        labels.push(label);
    }
    Ok(TimeSeriesRecord {
        channels,
        labels,
        sample_rate_hz,
    })
}

/// Write a record to the CSV format accepted by [`load_csv`]. Values are
/// printed with Rust's shortest round-trip float formatting, so a
/// write-then-load cycle is lossless.
pub fn write_csv(record: &TimeSeriesRecord, path: &Path) -> Result<()> {
    if record.num_channels() != 3 {
        return Err(Error::Config(format!(
            "csv export is defined for 3 channels, record has {}",
            record.num_channels()
        )));
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{CSV_HEADER}")?;
    for t in 0..record.len() {
        writeln!(
            file,
            "{},{},{},{},{}",
            t,
            record.channels[0][t],
            record.channels[1][t],
            record.channels[2][t],
            record.labels[t]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(k: usize, n: usize, sigma: f64) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: k,
            samples_per_class: n,
            noise_sigma: sigma,
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = gen_synthetic(&spec(3, 40, 0.2), 50, 7).unwrap();
        let b = gen_synthetic(&spec(3, 40, 0.2), 50, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(&spec(3, 40, 0.2), 50, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_class_zero_is_pure_sine() {
        let r = gen_synthetic(&spec(2, 25, 0.0), 50, 1).unwrap();
        for t in 0..25 {
            let expected = (2.0 * PI * 1.0 * t as f64 / 50.0).sin();
            assert_abs_diff_eq!(r.channels[0][t], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn label_histogram_matches_construction() {
        let r = gen_synthetic(&spec(4, 30, 0.2), 50, 3).unwrap();
        for k in 0..4 {
            assert_eq!(r.labels.iter().filter(|&&l| l == k).count(), 30);
        }
    }

    #[test]
    fn window_count_and_starts() {
        // L=10, T=4, stride=2 -> 4 windows starting at 0,2,4,6.
        let r = TimeSeriesRecord {
            channels: vec![(0..10).map(f64::from).collect()],
            labels: vec![0; 10],
            sample_rate_hz: 10,
        };
        let w = window(&r, 4, 2).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w.windows[2], vec![4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn windows_are_exact_slices_of_the_source() {
        let r = gen_synthetic(&spec(3, 30, 0.2), 50, 11).unwrap();
        let w = window(&r, 12, 5).unwrap();
        for (i, win) in w.windows.iter().enumerate() {
            let start = i * w.stride;
            for ch in 0..3 {
                assert_eq!(
                    &win[ch * 12..(ch + 1) * 12],
                    &r.channels[ch][start..start + 12]
                );
            }
        }
    }

    #[test]
    fn window_longer_than_record_is_rejected() {
        let r = gen_synthetic(&spec(2, 5, 0.0), 50, 1).unwrap();
        assert!(matches!(
            window(&r, 100, 1),
            Err(Error::WindowTooLong { .. })
        ));
    }

    #[test]
    fn majority_label_breaks_ties_low() {
        let r = TimeSeriesRecord {
            channels: vec![vec![0.0; 4]],
            labels: vec![1, 1, 0, 0],
            sample_rate_hz: 4,
        };
        let w = window(&r, 4, 4).unwrap();
        assert_eq!(w.labels, vec![0]);
    }

    #[test]
    fn normalize_zeroes_constant_channels_and_is_idempotent() {
        let r = TimeSeriesRecord {
            channels: vec![vec![5.0; 20], (0..20).map(f64::from).collect(), vec![0.0; 20]],
            labels: vec![0; 20],
            sample_rate_hz: 10,
        };
        let w = window(&r, 4, 4).unwrap();
        let (normed, stats) = normalize(&w).unwrap();
        for win in &normed.windows {
            for &v in &win[0..4] {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
            }
        }
        // Re-applying the transform built from the normalized data changes
        // nothing: its stats are ~(0, 1).
        let (renormed, stats2) = normalize(&normed).unwrap();
        assert_abs_diff_eq!(stats2.mean[1], 0.0, epsilon = 1e-10);
        for (a, b) in renormed.windows.iter().zip(&normed.windows) {
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
            }
        }
        // Already-standardized data passes through unchanged.
        let again = apply_stats(&normed, &ChannelStats {
            mean: vec![0.0; 3],
            std: vec![1.0; 3],
        });
        assert_eq!(again.windows, normed.windows);
        let _ = stats;
    }

    #[test]
    fn kfold_partitions_the_index_set() {
        let r = gen_synthetic(&spec(3, 60, 0.2), 50, 5).unwrap();
        let w = window(&r, 10, 5).unwrap();
        for k in [2, 3, 5] {
            let folds = kfold_split(&w, k, 99).unwrap();
            assert_eq!(folds.len(), k);
            let mut seen = vec![false; w.len()];
            for (train, test) in &folds {
                let mut union: Vec<usize> = train.iter().chain(test).copied().collect();
                union.sort_unstable();
                assert_eq!(union, (0..w.len()).collect::<Vec<_>>());
                for &i in test {
                    assert!(!seen[i], "index {i} in two test folds");
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn kfold_single_class_sizes() {
        let w = WindowedDataset {
            windows: vec![vec![0.0]; 10],
            labels: vec![0; 10],
            channels: 1,
            window_len: 1,
            stride: 1,
            num_classes: 1,
        };
        let folds = kfold_split(&w, 5, 1).unwrap();
        for (_, test) in &folds {
            assert_eq!(test.len(), 2);
        }
    }

    #[test]
    fn kfold_is_stratified_within_one_window() {
        let r = gen_synthetic(&spec(4, 50, 0.2), 50, 5).unwrap();
        let w = window(&r, 10, 10).unwrap();
        let folds = kfold_split(&w, 5, 3).unwrap();
        let global: Vec<usize> = (0..4)
            .map(|c| w.labels.iter().filter(|&&l| l == c).count())
            .collect();
        for (_, test) in &folds {
            for c in 0..4 {
                let in_fold = test.iter().filter(|&&i| w.labels[i] == c).count() as f64;
                let expected = global[c] as f64 / 5.0;
                assert!(
                    (in_fold - expected).abs() <= 1.0,
                    "class {c}: {in_fold} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn iid_partition_balances_counts() {
        let w = WindowedDataset {
            windows: vec![vec![0.0]; 99],
            labels: vec![0; 99],
            channels: 1,
            window_len: 1,
            stride: 1,
            num_classes: 1,
        };
        let plan = partition_clients(&w, 3, PartitionMode::Iid, 17).unwrap();
        for c in 0..3 {
            assert_eq!(plan.client_indices(c).len(), 33);
        }
    }

    #[test]
    fn single_client_gets_everything() {
        let w = WindowedDataset {
            windows: vec![vec![0.0]; 5],
            labels: vec![0; 5],
            channels: 1,
            window_len: 1,
            stride: 1,
            num_classes: 1,
        };
        let plan = partition_clients(&w, 1, PartitionMode::Iid, 0).unwrap();
        assert_eq!(plan.client_indices(0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn label_skew_dominant_classes_are_disjoint() {
        let r = gen_synthetic(&spec(6, 80, 0.2), 50, 23).unwrap();
        let w = window(&r, 10, 10).unwrap();
        let plan = partition_clients(&w, 3, PartitionMode::LabelSkew, 41).unwrap();
        let mut dominant: Vec<Vec<usize>> = vec![Vec::new(); 3];
        for class in 0..6 {
            let holders: Vec<usize> = (0..3)
                .map(|c| {
                    plan.client_indices(c)
                        .iter()
                        .filter(|&&i| w.labels[i] == class)
                        .count()
                })
                .collect();
            let total: usize = holders.iter().sum();
            let (owner, &count) = holders.iter().enumerate().max_by_key(|(_, &c)| c).unwrap();
            assert!(count * 2 > total, "class {class} has no majority holder");
            dominant[owner].push(class);
        }
        for c in 0..3 {
            assert_eq!(dominant[c].len(), 2, "client {c}: {:?}", dominant);
        }
    }

    #[test]
    fn every_window_assigned_exactly_once() {
        let r = gen_synthetic(&spec(4, 60, 0.2), 50, 2).unwrap();
        let w = window(&r, 10, 5).unwrap();
        for mode in [PartitionMode::Iid, PartitionMode::LabelSkew] {
            let plan = partition_clients(&w, 3, mode, 9).unwrap();
            assert_eq!(plan.assignment.len(), w.len());
            let total: usize = (0..3).map(|c| plan.client_indices(c).len()).sum();
            assert_eq!(total, w.len());
            for c in 0..3 {
                assert!(!plan.client_indices(c).is_empty());
            }
        }
    }

    #[test]
    fn more_clients_than_windows_is_an_error() {
        let w = WindowedDataset {
            windows: vec![vec![0.0]; 2],
            labels: vec![0; 2],
            channels: 1,
            window_len: 1,
            stride: 1,
            num_classes: 1,
        };
        assert!(matches!(
            partition_clients(&w, 3, PartitionMode::Iid, 0),
            Err(Error::TooManyClients { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.csv");
        let r = gen_synthetic(&spec(3, 20, 0.2), 50, 77).unwrap();
        write_csv(&r, &path).unwrap();
        let loaded = load_csv(&path, 50).unwrap();
        assert_eq!(loaded, r);
    }

    #[test]
    fn csv_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.csv");
        std::fs::write(&path, "t,x,y,z,label\n0,1.0,2.0,3.0,0\n1,1.5,2.5,3.5,1\n").unwrap();
        let r = load_csv(&path, 50).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.channels[2], vec![3.0, 3.5]);
        assert_eq!(r.labels, vec![0, 1]);
    }

    #[test]
    fn csv_bad_value_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "t,x,y,z,label\n0,1.0,2.0,3.0,0\n1,oops,2.5,3.5,1\n",
        )
        .unwrap();
        match load_csv(&path, 50) {
            Err(Error::Csv { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("oops"), "{msg}");
            }
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn csv_bad_label_cites_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("badlabel.csv");
        std::fs::write(&path, "t,x,y,z,label\n0,1.0,2.0,3.0,walking\n").unwrap();
        match load_csv(&path, 50) {
            Err(Error::Csv { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("walking"), "{msg}");
            }
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn csv_wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hdr.csv");
        std::fs::write(&path, "time,x,y,z,label\n0,1,2,3,0\n").unwrap();
        assert!(matches!(load_csv(&path, 50), Err(Error::Csv { line: 1, .. })));
    }

    #[test]
    fn csv_accepts_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crlf.csv");
        std::fs::write(&path, "t,x,y,z,label\r\n0,1.0,2.0,3.0,0\r\n").unwrap();
        let r = load_csv(&path, 50).unwrap();
        assert_eq!(r.len(), 1);
    }
}
