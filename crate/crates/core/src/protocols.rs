//! Experiment drivers: patient identification, leave-one-subject-out
//! training, patient-specific fine-tuning, and the data-fraction ablation.
//!
//! Every stage derives its own sub-seed from the experiment seed, so whole
//! experiments reproduce bitwise from (cohort, spec, preset).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    classification_report, event_sensitivity, rmse, time_gain, ClassReport, EvalReport, EventKind,
    SubjectMetrics,
};
use crate::ingest::synchronize;
use crate::nn::{predict, ModelConfig, ModelParams, Pooling};
use crate::preprocess::{
    fit_norm_stats, make_windows, resample_and_split, CurveParams, NormStats, WindowConfig,
};
use crate::sampling::{smote_oversample, stratified_split, stratified_split_by, SplitSpec};
use crate::seed::derive_seed;
use crate::train::{fit, EpochStats, LossKind, ShrinkageParams, TrainConfig};
use crate::types::{GlucoseSeries, SubjectLog, WindowSet};

/// Which experiment to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Identify,
    Forecast,
}

/// A fully specified experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub task: Task,
    pub ph_minutes: u32,
    pub multimodal: bool,
    pub patient_specific: bool,
    /// Fraction of each subject's training windows used for fine-tuning.
    pub data_fraction: f64,
    pub seed: u64,
    pub dataset_id: String,
}

impl ExperimentSpec {
    pub fn forecast(ph_minutes: u32, multimodal: bool, seed: u64) -> Self {
        ExperimentSpec {
            task: Task::Forecast,
            ph_minutes,
            multimodal,
            patient_specific: false,
            data_fraction: 1.0,
            seed,
            dataset_id: "synthetic".into(),
        }
    }

    pub fn identify(multimodal: bool, seed: u64) -> Self {
        ExperimentSpec {
            task: Task::Identify,
            ph_minutes: 30,
            multimodal,
            patient_specific: false,
            data_fraction: 1.0,
            seed,
            dataset_id: "synthetic".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ph_minutes != 30 && self.ph_minutes != 60 {
            return Err(Error::InvalidInput(format!(
                "prediction horizon {} min (expected 30 or 60)",
                self.ph_minutes
            )));
        }
        if !(0.0..=1.0).contains(&self.data_fraction) || self.data_fraction == 0.0 {
            return Err(Error::InvalidInput(format!(
                "data fraction {} outside (0, 1]",
                self.data_fraction
            )));
        }
        if self.data_fraction < 1.0 && !self.patient_specific {
            return Err(Error::InvalidInput(
                "data_fraction < 1.0 requires patient_specific".into(),
            ));
        }
        Ok(())
    }
}

/// Network widths of a preset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchPreset {
    pub bigru_hidden: usize,
    pub gru_hidden: usize,
    pub fc_dim: usize,
    pub pooling: Pooling,
}

/// Scale preset: architecture, training configuration, window stride and
/// derived-channel curve constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub arch: ArchPreset,
    pub train: TrainConfig,
    /// Stride between training windows.
    pub stride: usize,
    pub smote_k: usize,
    pub curves: CurveParams,
    /// Fine-tuning shrinks the learning rate by this factor.
    pub finetune_lr_scale: f64,
    /// Fine-tuning divides the early-stop patience by this factor.
    pub finetune_patience_div: usize,
}

impl Preset {
    /// The full-scale configuration; practical only for dataset holders
    /// with long training budgets.
    pub fn full() -> Self {
        Preset {
            arch: ArchPreset {
                bigru_hidden: 128,
                gru_hidden: 256,
                fc_dim: 64,
                pooling: Pooling::Window2,
            },
            train: TrainConfig::full(0),
            stride: 1,
            smote_k: 5,
            curves: CurveParams::default(),
            finetune_lr_scale: 0.5,
            finetune_patience_div: 4,
        }
    }

    /// Laptop-scale preset: reduced widths, strided windows, short budget.
    pub fn desk() -> Self {
        Preset {
            arch: ArchPreset {
                bigru_hidden: 16,
                gru_hidden: 32,
                fc_dim: 32,
                pooling: Pooling::Window2,
            },
            train: TrainConfig::desk(0),
            stride: 12,
            smote_k: 5,
            curves: CurveParams::default(),
            finetune_lr_scale: 0.5,
            finetune_patience_div: 4,
        }
    }

    /// Minimal preset for wiring tests; makes no claim of model quality.
    pub fn smoke() -> Self {
        Preset {
            arch: ArchPreset {
                bigru_hidden: 3,
                gru_hidden: 4,
                fc_dim: 4,
                pooling: Pooling::Window2,
            },
            train: TrainConfig {
                batch_size: 32,
                max_epochs: 3,
                early_stop_patience: 3,
                ..TrainConfig::full(0)
            },
            stride: 24,
            smote_k: 3,
            curves: CurveParams::default(),
            finetune_lr_scale: 0.5,
            finetune_patience_div: 1,
        }
    }

    fn model_config(&self, wcfg: &WindowConfig, output_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim: wcfg.n_features(),
            seq_len: wcfg.obs_len,
            bigru_hidden: self.arch.bigru_hidden,
            gru_hidden: self.arch.gru_hidden,
            fc_dim: self.arch.fc_dim,
            output_dim,
            dropout: 0.4,
            pooling: self.arch.pooling,
        }
    }
}

/// Synchronized and resampled series per subject, ready for windowing.
pub struct CohortSeries {
    pub subjects: Vec<(String, Vec<GlucoseSeries>)>,
}

/// Synchronize each log and resample it into gap-free segments long enough
/// for at least one window.
pub fn prepare_cohort(
    cohort: &[SubjectLog],
    curves: &CurveParams,
    wcfg: &WindowConfig,
) -> Result<CohortSeries> {
    let mut subjects = Vec::new();
    for log in cohort {
        let (synced, _) = synchronize(log);
        let (series, _) = resample_and_split(&synced, curves, wcfg.span())?;
        subjects.push((log.subject_id.clone(), series));
    }
    Ok(CohortSeries { subjects })
}

fn windows_for_subject(
    series: &[GlucoseSeries],
    stats: &NormStats,
    wcfg: &WindowConfig,
) -> Result<WindowSet> {
    let mut all = WindowSet::default();
    for s in series {
        all.extend(make_windows(s, stats, wcfg)?);
    }
    Ok(all)
}

// ---------------------------------------------------------------------------
// patient identification
// ---------------------------------------------------------------------------

/// Split identification windows plus the subject-to-class mapping.
pub struct IdentificationData {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub classes: BTreeMap<String, usize>,
    pub excluded_subjects: Vec<String>,
}

/// Build 24-step observation windows per subject and a stratified-by-subject
/// 64/16/20 split.
pub fn build_identification_data(
    cohort: &[SubjectLog],
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<IdentificationData> {
    spec.validate()?;
    if cohort.len() < 2 {
        return Err(Error::InvalidInput(
            "identification needs at least 2 subjects".into(),
        ));
    }
    let wcfg = WindowConfig::identification(spec.multimodal).with_stride(preset.stride);
    let prepared = prepare_cohort(cohort, &preset.curves, &wcfg)?;
    let all_series: Vec<GlucoseSeries> = prepared
        .subjects
        .iter()
        .flat_map(|(_, s)| s.iter().cloned())
        .collect();
    let stats = fit_norm_stats(&all_series)?;

    let mut pool = WindowSet::default();
    let mut excluded = Vec::new();
    for (id, series) in &prepared.subjects {
        let ws = windows_for_subject(series, &stats, &wcfg)?;
        if ws.is_empty() {
            excluded.push(id.clone());
        } else {
            pool.extend(ws);
        }
    }
    let classes: BTreeMap<String, usize> = {
        let mut ids: Vec<String> = pool.iter().map(|w| w.subject_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
    };
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "identification needs >= 2 subjects with windows, got {}",
            classes.len()
        )));
    }

    let split_spec = SplitSpec::new(derive_seed(spec.seed, "ident/split"));
    let (train, val, test, _) =
        stratified_split_by(&pool, &split_spec, |w| w.subject_id.clone())?;
    Ok(IdentificationData {
        train,
        val,
        test,
        classes,
        excluded_subjects: excluded,
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Train the classifier head on prepared identification data and score the
/// held-out test split.
pub fn train_identifier(
    data: &IdentificationData,
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<(ModelParams, ClassReport)> {
    let wcfg = WindowConfig::identification(spec.multimodal);
    let config = preset.model_config(&wcfg, data.classes.len());
    let model = ModelParams::init(config, derive_seed(spec.seed, "ident/init"))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(spec.seed, "ident/fit"),
        ..preset.train
    };
    let result = fit(&model, &data.train, &data.val, &train_cfg, &LossKind::CrossEntropy)?;

    let inputs: Vec<&crate::linalg::Mat> = data.test.iter().map(|w| &w.obs).collect();
    let logits = predict(&result.model, &inputs)?;
    let truth: Vec<usize> = data
        .test
        .iter()
        .map(|w| data.classes[&w.subject_id])
        .collect();
    let predicted: Vec<usize> = (0..logits.rows()).map(|r| argmax(logits.row(r))).collect();
    let report = classification_report(&truth, &predicted, data.classes.len())?;
    Ok((result.model, report))
}

/// The full identification experiment: windows, split, training, report.
pub fn run_patient_identification(
    cohort: &[SubjectLog],
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<ClassReport> {
    let data = build_identification_data(cohort, spec, preset)?;
    let (_, report) = train_identifier(&data, spec, preset)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// forecasting: LOSOCV, fine-tuning, ablation
// ---------------------------------------------------------------------------

/// Everything one fold needs: normalization fitted on the training
/// subjects, per-subject splits, and the raw series for profile metrics.
pub struct FoldContext {
    pub held_out: String,
    pub stats: NormStats,
    pub wcfg: WindowConfig,
    pub splits: BTreeMap<String, (WindowSet, WindowSet, WindowSet)>,
    pub series: BTreeMap<String, Vec<GlucoseSeries>>,
}

fn build_fold(
    prepared: &CohortSeries,
    held_out: &str,
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<FoldContext> {
    let wcfg = WindowConfig::forecast(spec.ph_minutes, spec.multimodal)?
        .with_stride(preset.stride);
    let train_series: Vec<GlucoseSeries> = prepared
        .subjects
        .iter()
        .filter(|(id, _)| id != held_out)
        .flat_map(|(_, s)| s.iter().cloned())
        .collect();
    let stats = fit_norm_stats(&train_series)?;

    let mut splits = BTreeMap::new();
    let mut series_map = BTreeMap::new();
    for (id, series) in &prepared.subjects {
        let ws = windows_for_subject(series, &stats, &wcfg)?;
        if ws.is_empty() {
            continue;
        }
        let split_spec = SplitSpec::new(derive_seed(spec.seed, &format!("split/{id}")));
        let (train, val, test, _) = stratified_split(&ws, &split_spec)?;
        splits.insert(id.clone(), (train, val, test));
        series_map.insert(id.clone(), series.clone());
    }
    if !splits.contains_key(held_out) {
        return Err(Error::InvalidInput(format!(
            "held-out subject {held_out} has no usable windows"
        )));
    }
    Ok(FoldContext {
        held_out: held_out.to_string(),
        stats,
        wcfg,
        splits,
        series: series_map,
    })
}

/// Forecast metrics of one subject under one model: RMSE and sensitivities
/// over the test windows, time gain over the subject's contiguous series
/// reconstructed from each window's first-step prediction.
fn evaluate_subject(
    model: &ModelParams,
    ctx: &FoldContext,
    subject: &str,
    ph_minutes: u32,
) -> Result<SubjectMetrics> {
    let (_, _, test) = &ctx.splits[subject];
    let inputs: Vec<&crate::linalg::Mat> = test.iter().map(|w| &w.obs).collect();
    let pred = predict(model, &inputs)?;

    let mut g_all = Vec::new();
    let mut g_hat_all = Vec::new();
    let mut g_windows = Vec::new();
    let mut g_hat_windows = Vec::new();
    for (r, w) in test.iter().enumerate() {
        let truth = w.target_glucose();
        let forecast: Vec<f64> = pred
            .row(r)
            .iter()
            .map(|d| w.anchor_glucose + d)
            .collect();
        g_all.extend_from_slice(&truth);
        g_hat_all.extend_from_slice(&forecast);
        g_windows.push(truth);
        g_hat_windows.push(forecast);
    }
    let rmse_val = rmse(&g_all, &g_hat_all)?;
    let hyper = event_sensitivity(&g_windows, &g_hat_windows, EventKind::Hyper)?;
    let hypo = event_sensitivity(&g_windows, &g_hat_windows, EventKind::Hypo)?;

    // series-level time gain from the one-step-ahead reconstruction
    let dense_cfg = WindowConfig { stride: 1, ..ctx.wcfg };
    let mut tgs = Vec::new();
    for series in &ctx.series[subject] {
        let ws = make_windows(series, &ctx.stats, &dense_cfg)?;
        if ws.is_empty() {
            continue;
        }
        let inputs: Vec<&crate::linalg::Mat> = ws.iter().map(|w| &w.obs).collect();
        let dense_pred = predict(model, &inputs)?;
        let truth: Vec<f64> = ws
            .iter()
            .enumerate()
            .map(|(i, _)| series.cgm_at(i + dense_cfg.obs_len))
            .collect();
        let forecast: Vec<f64> = ws
            .iter()
            .enumerate()
            .map(|(i, w)| w.anchor_glucose + dense_pred.get(i, 0))
            .collect();
        if let Some(tg) = time_gain(&truth, &forecast, ph_minutes)? {
            tgs.push(tg);
        }
    }
    let tg_minutes = if tgs.is_empty() {
        None
    } else {
        Some(tgs.iter().sum::<f64>() / tgs.len() as f64)
    };

    Ok(SubjectMetrics {
        rmse_mg_dl: rmse_val,
        tg_minutes,
        hyper_sen: hyper,
        hypo_sen: hypo,
        n_windows: test.len(),
    })
}

fn shrinkage_for(stats: &NormStats) -> ShrinkageParams {
    ShrinkageParams::with_error_scale(stats.cgm_range().max(1.0))
}

/// One LOSOCV fold.
#[derive(Clone, Debug)]
pub enum FoldOutcome {
    Trained {
        model: ModelParams,
        metrics: SubjectMetrics,
        history: Vec<EpochStats>,
    },
    Failed {
        reason: String,
    },
}

/// LOSOCV results keyed by held-out subject.
pub struct LosocvResult {
    pub folds: BTreeMap<String, FoldOutcome>,
}

impl LosocvResult {
    /// Per-subject and aggregate report over the successful folds.
    pub fn report(&self) -> EvalReport {
        let per: BTreeMap<String, SubjectMetrics> = self
            .folds
            .iter()
            .filter_map(|(id, f)| match f {
                FoldOutcome::Trained { metrics, .. } => Some((id.clone(), *metrics)),
                FoldOutcome::Failed { .. } => None,
            })
            .collect();
        EvalReport::from_subjects(per)
    }

    pub fn failures(&self) -> BTreeMap<String, String> {
        self.folds
            .iter()
            .filter_map(|(id, f)| match f {
                FoldOutcome::Failed { reason } => Some((id.clone(), reason.clone())),
                FoldOutcome::Trained { .. } => None,
            })
            .collect()
    }
}

/// Score a model on any subject's test split under a given fold's
/// normalization (the fold is named by its held-out subject).
pub fn evaluate_on_subject(
    model: &ModelParams,
    cohort: &[SubjectLog],
    held_out: &str,
    subject: &str,
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<SubjectMetrics> {
    spec.validate()?;
    let wcfg = WindowConfig::forecast(spec.ph_minutes, spec.multimodal)?
        .with_stride(preset.stride);
    let prepared = prepare_cohort(cohort, &preset.curves, &wcfg)?;
    let ctx = build_fold(&prepared, held_out, spec, preset)?;
    if !ctx.splits.contains_key(subject) {
        return Err(Error::InvalidInput(format!(
            "evaluate_on_subject: unknown subject {subject}"
        )));
    }
    evaluate_subject(model, &ctx, subject, spec.ph_minutes)
}

/// Train one patient-independent fold: the held-out subject's windows never
/// enter training (enforced by an id audit), the other subjects' train
/// splits (SMOTE-balanced) drive updates, their val splits drive early
/// stopping, and the held-out test split is scored.
pub fn run_losocv_fold(
    cohort: &[SubjectLog],
    held_out: &str,
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<(ModelParams, SubjectMetrics, Vec<EpochStats>)> {
    spec.validate()?;
    let wcfg = WindowConfig::forecast(spec.ph_minutes, spec.multimodal)?
        .with_stride(preset.stride);
    let prepared = prepare_cohort(cohort, &preset.curves, &wcfg)?;
    fold_from_prepared(&prepared, held_out, spec, preset)
}

fn fold_from_prepared(
    prepared: &CohortSeries,
    held_out: &str,
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<(ModelParams, SubjectMetrics, Vec<EpochStats>)> {
    let ctx = build_fold(prepared, held_out, spec, preset)?;

    let mut train_pool = WindowSet::default();
    let mut val_pool = WindowSet::default();
    for (id, (train, val, _)) in &ctx.splits {
        if id == held_out {
            continue;
        }
        train_pool.extend(train.clone());
        val_pool.extend(val.clone());
    }
    if train_pool.is_empty() || val_pool.is_empty() {
        return Err(Error::InvalidInput(format!(
            "fold {held_out}: empty training pool"
        )));
    }
    // id audit: the held-out subject must not leak into training
    if train_pool
        .iter()
        .chain(val_pool.iter())
        .any(|w| w.subject_id == held_out)
    {
        return Err(Error::Validation(format!(
            "fold {held_out}: held-out windows leaked into the training pool"
        )));
    }

    let (balanced, _) = smote_oversample(
        &train_pool,
        preset.smote_k,
        derive_seed(spec.seed, &format!("smote/{held_out}")),
    )?;

    let config = preset.model_config(&ctx.wcfg, ctx.wcfg.horizon);
    let model = ModelParams::init(config, derive_seed(spec.seed, &format!("init/{held_out}")))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(spec.seed, &format!("fit/{held_out}")),
        ..preset.train
    };
    let loss = LossKind::Shrinkage(shrinkage_for(&ctx.stats));
    let fit_res = fit(&model, &balanced, &val_pool, &train_cfg, &loss)?;
    let metrics = evaluate_subject(&fit_res.model, &ctx, held_out, spec.ph_minutes)?;
    Ok((fit_res.model, metrics, fit_res.history))
}

/// Leave-one-subject-out cross-validation over the whole cohort. Folds run
/// independently; a diverged fold is marked failed and the rest proceed.
pub fn run_losocv(
    cohort: &[SubjectLog],
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<LosocvResult> {
    spec.validate()?;
    if cohort.len() < 2 {
        return Err(Error::InvalidInput("LOSOCV needs at least 2 subjects".into()));
    }
    let wcfg = WindowConfig::forecast(spec.ph_minutes, spec.multimodal)?
        .with_stride(preset.stride);
    let prepared = prepare_cohort(cohort, &preset.curves, &wcfg)?;
    let ids: Vec<String> = prepared.subjects.iter().map(|(id, _)| id.clone()).collect();
    let outcomes: Vec<(String, FoldOutcome)> = ids
        .par_iter()
        .map(|id| {
            let outcome = match fold_from_prepared(&prepared, id, spec, preset) {
                Ok((model, metrics, history)) => FoldOutcome::Trained {
                    model,
                    metrics,
                    history,
                },
                Err(e) => FoldOutcome::Failed {
                    reason: e.to_string(),
                },
            };
            (id.clone(), outcome)
        })
        .collect();
    Ok(LosocvResult {
        folds: outcomes.into_iter().collect(),
    })
}

/// Fine-tuning output.
#[derive(Clone, Debug)]
pub struct FineTuneResult {
    pub model: ModelParams,
    pub metrics: SubjectMetrics,
    pub history: Vec<EpochStats>,
    /// Training windows actually used (after fraction subsampling, before SMOTE).
    pub train_windows_used: usize,
}

/// Continue training a patient-independent model on one subject's own train
/// split (optionally subsampled to `spec.data_fraction`), early-stopped on
/// the subject's val split and scored on its test split.
pub fn fine_tune(
    base: &ModelParams,
    cohort: &[SubjectLog],
    subject_id: &str,
    spec: &ExperimentSpec,
    preset: &Preset,
) -> Result<FineTuneResult> {
    spec.validate()?;
    let wcfg = WindowConfig::forecast(spec.ph_minutes, spec.multimodal)?
        .with_stride(preset.stride);
    let prepared = prepare_cohort(cohort, &preset.curves, &wcfg)?;
    let ctx = build_fold(&prepared, subject_id, spec, preset)?;
    let (train, val, _) = ctx.splits[subject_id].clone();
    if train.is_empty() {
        return Err(Error::InvalidInput(format!(
            "fine_tune: subject {subject_id} has an empty train split"
        )));
    }

    let frac_tag = format!("{:.4}", spec.data_fraction);
    let subsampled = if spec.data_fraction < 1.0 {
        let keep = ((spec.data_fraction * train.len() as f64).floor() as usize).max(1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            spec.seed,
            &format!("subsample/{subject_id}/{frac_tag}"),
        ));
        order.shuffle(&mut rng);
        order.truncate(keep);
        order.sort_unstable();
        WindowSet::new(order.into_iter().map(|i| train.windows[i].clone()).collect())
    } else {
        train
    };
    let used = subsampled.len();

    let (balanced, _) = smote_oversample(
        &subsampled,
        preset.smote_k,
        derive_seed(spec.seed, &format!("ft-smote/{subject_id}/{frac_tag}")),
    )?;

    let train_cfg = TrainConfig {
        init_lr: preset.train.init_lr * preset.finetune_lr_scale,
        early_stop_patience: (preset.train.early_stop_patience / preset.finetune_patience_div)
            .max(1),
        seed: derive_seed(spec.seed, &format!("ft/{subject_id}/{frac_tag}")),
        ..preset.train
    };
    let loss = LossKind::Shrinkage(shrinkage_for(&ctx.stats));
    let fit_res = fit(base, &balanced, &val, &train_cfg, &loss)?;
    let metrics = evaluate_subject(&fit_res.model, &ctx, subject_id, spec.ph_minutes)?;
    Ok(FineTuneResult {
        model: fit_res.model,
        metrics,
        history: fit_res.history,
        train_windows_used: used,
    })
}

/// The training-data fractions of the ablation, largest first.
pub const ABLATION_FRACTIONS: [f64; 4] = [1.0, 0.75, 0.5, 0.25];

/// One aggregate row of the ablation table. `fraction` is `None` for the
/// patient-independent reference row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub fraction: Option<f64>,
    pub metrics: SubjectMetrics,
}

/// Ablation output: aggregate rows plus the per-subject long-format data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// (fraction, subject, metrics) per fine-tuned fold.
    pub per_subject: Vec<(f64, String, SubjectMetrics)>,
}

impl AblationTable {
    /// `fraction,rmse_mg_dl,tg_min,hyper_sen,hypo_sen` with a `reference`
    /// row for the patient-independent baseline.
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map_or_else(|| "n.a.".to_string(), |x| format!("{x}"))
        }
        let mut out = String::from("fraction,rmse_mg_dl,tg_min,hyper_sen,hypo_sen\n");
        for row in &self.rows {
            let label = row
                .fraction
                .map_or_else(|| "reference".to_string(), |f| format!("{f}"));
            out.push_str(&format!(
                "{label},{},{},{},{}\n",
                row.metrics.rmse_mg_dl,
                opt(row.metrics.tg_minutes),
                opt(row.metrics.hyper_sen),
                opt(row.metrics.hypo_sen)
            ));
        }
        out
    }

    /// Plot-ready long format: `fraction,metric,value,subject`.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("fraction,metric,value,subject\n");
        for (fraction, subject, m) in &self.per_subject {
            out.push_str(&format!("{fraction},rmse_mg_dl,{},{subject}\n", m.rmse_mg_dl));
            if let Some(tg) = m.tg_minutes {
                out.push_str(&format!("{fraction},tg_min,{tg},{subject}\n"));
            }
            if let Some(s) = m.hyper_sen {
                out.push_str(&format!("{fraction},hyper_sen,{s},{subject}\n"));
            }
            if let Some(s) = m.hypo_sen {
                out.push_str(&format!("{fraction},hypo_sen,{s},{subject}\n"));
            }
        }
        out
    }
}

/// Fine-tune every subject at each ablation fraction from the same LOSOCV
/// bases and aggregate per fraction, with the patient-independent result as
/// the reference row.
pub fn run_ablation(
    cohort: &[SubjectLog],
    spec_base: &ExperimentSpec,
    preset: &Preset,
) -> Result<AblationTable> {
    if spec_base.task != Task::Forecast {
        return Err(Error::InvalidInput("ablation runs the forecast task".into()));
    }
    let mut spec = spec_base.clone();
    spec.patient_specific = true;
    spec.data_fraction = 1.0;
    spec.validate()?;

    let losocv = run_losocv(cohort, &spec, preset)?;
    let reference = losocv.report();

    let mut table = AblationTable::default();
    if let Some(agg) = reference.aggregate {
        table.rows.push(AblationRow {
            fraction: None,
            metrics: agg,
        });
    }
    for &fraction in &ABLATION_FRACTIONS {
        let mut per = BTreeMap::new();
        for (id, outcome) in &losocv.folds {
            let FoldOutcome::Trained { model, .. } = outcome else {
                continue;
            };
            let frac_spec = ExperimentSpec {
                data_fraction: fraction,
                ..spec.clone()
            };
            let ft = fine_tune(model, cohort, id, &frac_spec, preset)?;
            per.insert(id.clone(), ft.metrics);
            table.per_subject.push((fraction, id.clone(), ft.metrics));
        }
        let report = EvalReport::from_subjects(per);
        if let Some(agg) = report.aggregate {
            table.rows.push(AblationRow {
                fraction: Some(fraction),
                metrics: agg,
            });
        }
    }
    Ok(table)
}
