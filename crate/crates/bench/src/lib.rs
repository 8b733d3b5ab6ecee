//! Shared fixtures for the pipeline benchmarks.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use glucast::linalg::Mat;
use glucast::nn::{ModelConfig, ModelParams, Pooling};
use glucast::types::{EventLabel, SubjectLog, Timestamp, Window, WindowSet};

/// A raw CGM-only log with occasional gaps, for resampling benchmarks.
pub fn gappy_log(days: usize, seed: u64) -> SubjectLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = SubjectLog::new("bench");
    let mut t = 0i64;
    for _ in 0..days * 288 {
        if rng.random::<f64>() > 0.03 {
            log.cgm
                .push((Timestamp(t), 80.0 + 200.0 * rng.random::<f64>()));
        }
        t += 300;
        if rng.random::<f64>() < 0.005 {
            t += 1800; // long gap
        }
    }
    log
}

/// Labeled windows with class imbalance, for SMOTE benchmarks.
pub fn imbalanced_windows(n_normal: usize, n_minority: usize, seed: u64) -> WindowSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut window = |label: EventLabel| Window {
        subject_id: "bench".into(),
        obs: Mat::from_fn(24, 4, |_, _| rng.random::<f64>()),
        target_deltas: (0..6).map(|_| rng.random::<f64>() * 40.0 - 20.0).collect(),
        anchor_glucose: 120.0,
        label,
    };
    let mut windows = Vec::new();
    for _ in 0..n_normal {
        windows.push(window(EventLabel::Normal));
    }
    for _ in 0..n_minority {
        windows.push(window(EventLabel::Hypo));
    }
    WindowSet::new(windows)
}

/// Desk-preset-sized model plus a batch of random inputs.
pub fn desk_model_and_batch(batch: usize, seed: u64) -> (ModelParams, Vec<Mat>) {
    let config = ModelConfig {
        input_dim: 4,
        seq_len: 24,
        bigru_hidden: 16,
        gru_hidden: 32,
        fc_dim: 32,
        output_dim: 6,
        dropout: 0.4,
        pooling: Pooling::Window2,
    };
    let model = ModelParams::init(config, seed).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let inputs = (0..batch)
        .map(|_| Mat::from_fn(24, 4, |_, _| rng.random::<f64>()))
        .collect();
    (model, inputs)
}
