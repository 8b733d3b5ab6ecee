//! Shared domain types: subject logs, resampled series, supervised windows
//! and adverse-event labels.
//!
//! All glucose values are mg/dL, insulin in units (bolus) or units/hour
//! (basal), carbohydrates in grams. Series run on a fixed 5-minute grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Glucose below this bound marks a hypoglycemic sample.
pub const HYPO_THRESHOLD_MG_DL: f64 = 70.0;
/// Glucose above this bound marks a hyperglycemic sample.
pub const HYPER_THRESHOLD_MG_DL: f64 = 180.0;
/// Plausible CGM reading range; values outside are ingestion errors.
pub const GLUCOSE_MIN_MG_DL: f64 = 0.0;
pub const GLUCOSE_MAX_MG_DL: f64 = 600.0;
/// Grid spacing of every resampled series.
pub const STEP_SECONDS: i64 = 300;

/// Seconds since a fixed epoch. Plain integer seconds; no timezone handling.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct Timestamp(pub i64);

impl Timestamp {
    #[inline]
    pub fn seconds(self) -> i64 {
        self.0
    }

    #[inline]
    pub fn offset(self, seconds: i64) -> Timestamp {
        Timestamp(self.0 + seconds)
    }
}

/// Raw multimodal event stream for one patient.
///
/// Each channel is sorted by timestamp ascending with no duplicate stamps
/// within a channel (ingest collapses duplicates).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubjectLog {
    pub subject_id: String,
    /// (time, glucose mg/dL)
    pub cgm: Vec<(Timestamp, f64)>,
    /// (time, basal rate units/hour)
    pub basal: Vec<(Timestamp, f64)>,
    /// (time, bolus dose units)
    pub bolus: Vec<(Timestamp, f64)>,
    /// (time, carbohydrate grams)
    pub carbs: Vec<(Timestamp, f64)>,
}

impl SubjectLog {
    pub fn new(subject_id: impl Into<String>) -> Self {
        SubjectLog {
            subject_id: subject_id.into(),
            ..Default::default()
        }
    }
}

/// Column order of the derived feature channels in a [`GlucoseSeries`].
pub const CHANNEL_NAMES: [&str; 4] = ["cgm", "basal", "iob", "cob"];
pub const N_CHANNELS: usize = 4;

/// Gap-free multichannel segment on an exact 300 s grid.
///
/// Channels are `[T x 4]`: cgm mg/dL, basal units/hour, insulin on board
/// (units), carbs on board (grams-equivalent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlucoseSeries {
    pub subject_id: String,
    pub start: Timestamp,
    pub step_seconds: i64,
    pub channels: Mat,
}

impl GlucoseSeries {
    #[inline]
    pub fn len(&self) -> usize {
        self.channels.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.channels.rows() == 0
    }

    /// Grid timestamp of sample `i`.
    #[inline]
    pub fn time_at(&self, i: usize) -> Timestamp {
        self.start.offset(self.step_seconds * i as i64)
    }

    /// Glucose value of sample `i`.
    #[inline]
    pub fn cgm_at(&self, i: usize) -> f64 {
        self.channels.get(i, 0)
    }
}

/// Adverse-event label of a prediction window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventLabel {
    Normal,
    Hypo,
    Hyper,
}

impl EventLabel {
    pub const ALL: [EventLabel; 3] = [EventLabel::Normal, EventLabel::Hypo, EventLabel::Hyper];

    pub fn as_str(self) -> &'static str {
        match self {
            EventLabel::Normal => "normal",
            EventLabel::Hypo => "hypo",
            EventLabel::Hyper => "hyper",
        }
    }
}

/// Label a window from the glucose values of its prediction targets.
///
/// Hypo wins when a window contains both excursions: hypoglycemia is the
/// more acute risk, and the rule keeps labels single-valued.
pub fn label_window(targets: &[f64]) -> Result<EventLabel> {
    if targets.is_empty() {
        return Err(Error::InvalidInput(
            "label_window: empty target vector".into(),
        ));
    }
    for &g in targets {
        if !g.is_finite() || g <= GLUCOSE_MIN_MG_DL || g > GLUCOSE_MAX_MG_DL {
            return Err(Error::InvalidInput(format!(
                "label_window: glucose {g} outside (0, 600] mg/dL"
            )));
        }
    }
    if targets.iter().any(|&g| g < HYPO_THRESHOLD_MG_DL) {
        Ok(EventLabel::Hypo)
    } else if targets.iter().any(|&g| g > HYPER_THRESHOLD_MG_DL) {
        Ok(EventLabel::Hyper)
    } else {
        Ok(EventLabel::Normal)
    }
}

/// One supervised (observation, target-delta) pair.
///
/// `obs` holds normalized features `[L x F]`; `target_deltas[j]` is the raw
/// mg/dL difference `g(t + (j+1)·5min) − g(t)` where `t` is the window's
/// anchor time. `anchor_glucose` is `g(t)` unnormalized, so absolute
/// predictions reconstruct as `anchor + delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub subject_id: String,
    pub obs: Mat,
    pub target_deltas: Vec<f64>,
    pub anchor_glucose: f64,
    pub label: EventLabel,
}

impl Window {
    /// Absolute glucose values of the window's targets.
    pub fn target_glucose(&self) -> Vec<f64> {
        self.target_deltas
            .iter()
            .map(|d| self.anchor_glucose + d)
            .collect()
    }

    /// Flattened feature vector used for SMOTE neighbor search:
    /// observation matrix followed by the target deltas.
    pub fn feature_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.obs.len() + self.target_deltas.len());
        v.extend_from_slice(self.obs.as_slice());
        v.extend_from_slice(&self.target_deltas);
        v
    }
}

/// An ordered collection of windows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowSet {
    pub windows: Vec<Window>,
}

impl WindowSet {
    pub fn new(windows: Vec<Window>) -> Self {
        WindowSet { windows }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Window> {
        self.windows.iter()
    }

    /// Window counts per label in `EventLabel::ALL` order.
    pub fn label_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for w in &self.windows {
            let i = EventLabel::ALL.iter().position(|&l| l == w.label).unwrap();
            counts[i] += 1;
        }
        counts
    }

    pub fn extend(&mut self, other: WindowSet) {
        self.windows.extend(other.windows);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn label_all_in_range_is_normal() {
        let l = label_window(&[100.0, 110.0, 120.0, 115.0, 118.0, 122.0]).unwrap();
        assert_eq!(l, EventLabel::Normal);
    }

    #[test]
    fn label_below_70_is_hypo() {
        let l = label_window(&[100.0, 90.0, 80.0, 72.0, 69.0, 65.0]).unwrap();
        assert_eq!(l, EventLabel::Hypo);
    }

    #[test]
    fn label_above_180_is_hyper() {
        let l = label_window(&[150.0, 165.0, 178.0, 182.0, 190.0, 200.0]).unwrap();
        assert_eq!(l, EventLabel::Hyper);
    }

    #[test]
    fn label_tie_break_hypo_dominates() {
        let l = label_window(&[185.0, 120.0, 69.0, 80.0, 90.0, 95.0]).unwrap();
        assert_eq!(l, EventLabel::Hypo);
    }

    #[test]
    fn label_thresholds_are_strict() {
        assert_eq!(label_window(&[70.0]).unwrap(), EventLabel::Normal);
        assert_eq!(label_window(&[180.0]).unwrap(), EventLabel::Normal);
        assert_eq!(label_window(&[69.999]).unwrap(), EventLabel::Hypo);
        assert_eq!(label_window(&[180.001]).unwrap(), EventLabel::Hyper);
    }

    #[test]
    fn label_rejects_empty_and_out_of_range() {
        assert!(label_window(&[]).is_err());
        assert!(label_window(&[-5.0]).is_err());
        assert!(label_window(&[0.0]).is_err());
        assert!(label_window(&[600.5]).is_err());
        assert!(label_window(&[600.0]).is_ok());
    }

    #[test]
    fn label_invariant_under_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = vec![185.0, 120.0, 69.0, 80.0, 90.0, 95.0, 200.0, 60.0];
        let expected = label_window(&base).unwrap();
        let mut perm = base.clone();
        for _ in 0..50 {
            perm.shuffle(&mut rng);
            assert_eq!(label_window(&perm).unwrap(), expected);
        }
    }

    #[test]
    fn window_reconstructs_targets() {
        let w = Window {
            subject_id: "s".into(),
            obs: Mat::zeros(2, 1),
            target_deltas: vec![5.0, -3.0],
            anchor_glucose: 100.0,
            label: EventLabel::Normal,
        };
        assert_eq!(w.target_glucose(), vec![105.0, 97.0]);
    }
}
