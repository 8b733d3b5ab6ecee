//! Conversion of synchronized subject logs into gap-free series with derived
//! insulin/carb channels, min-max normalization, and supervised windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::types::{
    label_window, EventLabel, GlucoseSeries, SubjectLog, Timestamp, Window, WindowSet, N_CHANNELS,
    STEP_SECONDS,
};

/// A run of missing grid points longer than this splits the series instead
/// of being interpolated. 20 minutes of missing data = 4 grid points; the
/// boundary is strict, so exactly 20 minutes still interpolates.
pub const MAX_INTERP_GAP_SECONDS: i64 = 4 * STEP_SECONDS + STEP_SECONDS; // 1500 s between samples

/// Time constants of the derived insulin and carbohydrate channels.
///
/// Defaults: rapid-acting insulin decays with a one-hour constant (activity
/// spread over roughly 4-6 h); carb absorption rises within ~15 min and
/// decays over ~90 min.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub iob_tau_seconds: f64,
    pub carb_rise_tau_seconds: f64,
    pub carb_decay_tau_seconds: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams {
            iob_tau_seconds: 3600.0,
            carb_rise_tau_seconds: 900.0,
            carb_decay_tau_seconds: 5400.0,
        }
    }
}

impl CurveParams {
    pub fn validate(&self) -> Result<()> {
        if self.iob_tau_seconds <= 0.0
            || self.carb_rise_tau_seconds <= 0.0
            || self.carb_decay_tau_seconds <= 0.0
        {
            return Err(Error::InvalidInput(
                "curve time constants must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// What the resampler dropped or filled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub segments_kept: usize,
    pub segments_discarded: usize,
    pub gaps_split: usize,
    pub points_interpolated: usize,
}

/// Resample CGM onto an exact 300 s grid and split at long gaps.
///
/// Each segment's grid anchors at its first CGM stamp. Interior gaps of at
/// most four consecutive missing grid points fill by linear interpolation;
/// anything longer ends the segment and starts a new one. Segments shorter
/// than `min_len` samples are discarded and counted. The derived basal, IOB
/// and COB channels are evaluated on the grid from the full synchronized
/// event lists, so doses taken during an excised gap still decay into the
/// following segment.
pub fn resample_and_split(
    log: &SubjectLog,
    curves: &CurveParams,
    min_len: usize,
) -> Result<(Vec<GlucoseSeries>, ResampleReport)> {
    curves.validate()?;
    let mut report = ResampleReport::default();
    if log.cgm.is_empty() {
        return Ok((Vec::new(), report));
    }

    // Segment boundaries on the raw samples: a spacing > 1500 s means more
    // than four grid points would need imputation.
    let mut segments: Vec<&[(Timestamp, f64)]> = Vec::new();
    let mut seg_start = 0usize;
    for i in 1..log.cgm.len() {
        let dt = log.cgm[i].0.seconds() - log.cgm[i - 1].0.seconds();
        if dt > MAX_INTERP_GAP_SECONDS {
            segments.push(&log.cgm[seg_start..i]);
            seg_start = i;
            report.gaps_split += 1;
        }
    }
    segments.push(&log.cgm[seg_start..]);

    let mut out = Vec::new();
    for seg in segments {
        let start = seg[0].0;
        let end = seg[seg.len() - 1].0.seconds();
        let n = ((end - start.seconds()) / STEP_SECONDS) as usize + 1;
        if n < min_len {
            report.segments_discarded += 1;
            continue;
        }
        let mut cgm = Vec::with_capacity(n);
        let mut raw_idx = 0usize;
        for k in 0..n {
            let t = start.seconds() + STEP_SECONDS * k as i64;
            while raw_idx + 1 < seg.len() && seg[raw_idx + 1].0.seconds() <= t {
                raw_idx += 1;
            }
            let (ta, va) = (seg[raw_idx].0.seconds(), seg[raw_idx].1);
            if ta == t {
                cgm.push(va);
            } else {
                let (tb, vb) = (seg[raw_idx + 1].0.seconds(), seg[raw_idx + 1].1);
                let frac = (t - ta) as f64 / (tb - ta) as f64;
                cgm.push(va + (vb - va) * frac);
                report.points_interpolated += 1;
            }
        }

        let grid: Vec<Timestamp> = (0..n)
            .map(|k| start.offset(STEP_SECONDS * k as i64))
            .collect();
        let basal = basal_on_grid(&log.basal, &grid);
        let iob = insulin_on_board(&log.bolus, &grid, curves)?;
        let cob = carbs_on_board(&log.carbs, &grid, curves)?;

        let mut channels = Mat::zeros(n, N_CHANNELS);
        for k in 0..n {
            channels.set(k, 0, cgm[k]);
            channels.set(k, 1, basal[k]);
            channels.set(k, 2, iob[k]);
            channels.set(k, 3, cob[k]);
        }
        out.push(GlucoseSeries {
            subject_id: log.subject_id.clone(),
            start,
            step_seconds: STEP_SECONDS,
            channels,
        });
        report.segments_kept += 1;
    }
    Ok((out, report))
}

/// Instantaneous basal rate on the grid: the latest rate at or before each
/// stamp, zero before the first basal event.
pub fn basal_on_grid(basal_events: &[(Timestamp, f64)], grid: &[Timestamp]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut idx = 0usize;
    let mut rate = 0.0;
    for &t in grid {
        while idx < basal_events.len() && basal_events[idx].0 <= t {
            rate = basal_events[idx].1;
            idx += 1;
        }
        out.push(rate);
    }
    out
}

/// Insulin on board: superposition of exponentially decaying boluses,
/// `IOB(t) = Σ dose · exp(−(t − t_b)/τ)` over boluses with `t_b <= t`.
pub fn insulin_on_board(
    bolus_events: &[(Timestamp, f64)],
    grid: &[Timestamp],
    params: &CurveParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    check_grid(grid)?;
    let tau = params.iob_tau_seconds;
    Ok(grid
        .iter()
        .map(|&t| {
            bolus_events
                .iter()
                .take_while(|&&(tb, _)| tb <= t)
                .fold(0.0, |acc, &(tb, dose)| {
                    let dt = (t.seconds() - tb.seconds()) as f64;
                    acc + dose * (-dt / tau).exp()
                })
        })
        .collect())
}

/// Carbs on board: each meal contributes a rise-decay product
/// `C · (1 − exp(−Δ/τ_rise)) · exp(−Δ/τ_decay)` that starts at zero,
/// peaks, and decays back toward zero.
pub fn carbs_on_board(
    carb_events: &[(Timestamp, f64)],
    grid: &[Timestamp],
    params: &CurveParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    check_grid(grid)?;
    let rise = params.carb_rise_tau_seconds;
    let decay = params.carb_decay_tau_seconds;
    Ok(grid
        .iter()
        .map(|&t| {
            carb_events
                .iter()
                .take_while(|&&(tm, _)| tm <= t)
                .fold(0.0, |acc, &(tm, grams)| {
                    let dt = (t.seconds() - tm.seconds()) as f64;
                    acc + grams * (1.0 - (-dt / rise).exp()) * (-dt / decay).exp()
                })
        })
        .collect())
}

fn check_grid(grid: &[Timestamp]) -> Result<()> {
    for pair in grid.windows(2) {
        if pair[1].seconds() - pair[0].seconds() != STEP_SECONDS {
            return Err(Error::InvalidInput(format!(
                "grid is not uniform {STEP_SECONDS} s"
            )));
        }
    }
    Ok(())
}

/// Per-channel min/max fitted on training data only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// (min, max) per channel, in [`crate::types::CHANNEL_NAMES`] order.
    pub per_channel: Vec<(f64, f64)>,
}

impl NormStats {
    /// Glucose span used to put loss errors on a normalized scale.
    pub fn cgm_range(&self) -> f64 {
        let (lo, hi) = self.per_channel[0];
        hi - lo
    }
}

/// Pool per-channel extremes over the provided (training) series.
pub fn fit_norm_stats(train_series: &[GlucoseSeries]) -> Result<NormStats> {
    if train_series.is_empty() || train_series.iter().all(|s| s.is_empty()) {
        return Err(Error::InvalidInput(
            "fit_norm_stats: no samples in training series".into(),
        ));
    }
    let n_ch = train_series[0].channels.cols();
    let mut per_channel = vec![(f64::INFINITY, f64::NEG_INFINITY); n_ch];
    for s in train_series {
        for r in 0..s.len() {
            for (c, stat) in per_channel.iter_mut().enumerate() {
                let v = s.channels.get(r, c);
                stat.0 = stat.0.min(v);
                stat.1 = stat.1.max(v);
            }
        }
    }
    Ok(NormStats { per_channel })
}

#[inline]
fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Min-max scale every channel to [0, 1]. Out-of-range test values clamp;
/// degenerate channels (max = min) map to 0.
pub fn normalize(series: &GlucoseSeries, stats: &NormStats) -> GlucoseSeries {
    let mut channels = series.channels.clone();
    for r in 0..channels.rows() {
        for c in 0..channels.cols() {
            let (lo, hi) = stats.per_channel[c];
            channels.set(r, c, scale(channels.get(r, c), lo, hi));
        }
    }
    GlucoseSeries {
        subject_id: series.subject_id.clone(),
        start: series.start,
        step_seconds: series.step_seconds,
        channels,
    }
}

/// Inverse of [`normalize`] where the range is non-degenerate and no
/// clamping occurred.
pub fn denormalize(series: &GlucoseSeries, stats: &NormStats) -> GlucoseSeries {
    let mut channels = series.channels.clone();
    for r in 0..channels.rows() {
        for c in 0..channels.cols() {
            let (lo, hi) = stats.per_channel[c];
            let v = channels.get(r, c);
            channels.set(r, c, if hi > lo { lo + v * (hi - lo) } else { lo });
        }
    }
    GlucoseSeries {
        subject_id: series.subject_id.clone(),
        start: series.start,
        step_seconds: series.step_seconds,
        channels,
    }
}

/// Shape of the supervised windows cut from a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Observed samples per window.
    pub obs_len: usize,
    /// Prediction steps; 0 builds observation-only windows for classification.
    pub horizon: usize,
    pub stride: usize,
    /// All four channels when true, CGM only when false.
    pub multimodal: bool,
}

impl WindowConfig {
    /// Forecasting shape for a prediction horizon in minutes (30 or 60).
    pub fn forecast(ph_minutes: u32, multimodal: bool) -> Result<WindowConfig> {
        let (obs_len, horizon) = match ph_minutes {
            30 => (24, 6),
            60 => (48, 12),
            other => {
                return Err(Error::InvalidInput(format!(
                    "unsupported prediction horizon {other} min (expected 30 or 60)"
                )))
            }
        };
        Ok(WindowConfig {
            obs_len,
            horizon,
            stride: 1,
            multimodal,
        })
    }

    /// Observation-only shape used by the patient identification task.
    pub fn identification(multimodal: bool) -> WindowConfig {
        WindowConfig {
            obs_len: 24,
            horizon: 0,
            stride: 1,
            multimodal,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> WindowConfig {
        self.stride = stride;
        self
    }

    pub fn n_features(&self) -> usize {
        if self.multimodal {
            N_CHANNELS
        } else {
            1
        }
    }

    /// Total samples one window spans.
    pub fn span(&self) -> usize {
        self.obs_len + self.horizon
    }
}

/// Cut sliding windows from a raw (unnormalized) series.
///
/// Observations are normalized with `stats`; target deltas and the anchor
/// stay on raw mg/dL so metric computation needs no denormalization. A
/// series shorter than one window yields an empty set.
pub fn make_windows(
    series: &GlucoseSeries,
    stats: &NormStats,
    cfg: &WindowConfig,
) -> Result<WindowSet> {
    if cfg.obs_len == 0 || cfg.stride == 0 {
        return Err(Error::InvalidInput(
            "make_windows: obs_len and stride must be positive".into(),
        ));
    }
    let total = series.len();
    let span = cfg.span();
    if span > total {
        return Ok(WindowSet::default());
    }
    let n_feat = cfg.n_features();
    let mut windows = Vec::new();
    let mut offset = 0usize;
    while offset + span <= total {
        let anchor_idx = offset + cfg.obs_len - 1;
        let mut obs = Mat::zeros(cfg.obs_len, n_feat);
        for r in 0..cfg.obs_len {
            for c in 0..n_feat {
                let (lo, hi) = stats.per_channel[c];
                obs.set(r, c, scale(series.channels.get(offset + r, c), lo, hi));
            }
        }
        let anchor_glucose = series.cgm_at(anchor_idx);
        let mut target_deltas = Vec::with_capacity(cfg.horizon);
        let mut target_glucose = Vec::with_capacity(cfg.horizon);
        for j in 1..=cfg.horizon {
            let g = series.cgm_at(anchor_idx + j);
            target_deltas.push(g - anchor_glucose);
            target_glucose.push(g);
        }
        let label = if cfg.horizon == 0 {
            EventLabel::Normal
        } else {
            label_window(&target_glucose)?
        };
        windows.push(Window {
            subject_id: series.subject_id.clone(),
            obs,
            target_deltas,
            anchor_glucose,
            label,
        });
        offset += cfg.stride;
    }
    Ok(WindowSet::new(windows))
}

/// Dump a series as CSV (`timestamp,cgm,basal,iob,cob`) for inspection.
pub fn series_to_csv(series: &GlucoseSeries) -> String {
    let mut out = String::from("timestamp,cgm,basal,iob,cob\n");
    for r in 0..series.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            series.time_at(r).seconds(),
            series.channels.get(r, 0),
            series.channels.get(r, 1),
            series.channels.get(r, 2),
            series.channels.get(r, 3),
        ));
    }
    out
}
