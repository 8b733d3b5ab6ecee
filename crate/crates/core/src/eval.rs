//! Forecast and classification metrics: RMSE, adverse-event sensitivities,
//! prediction delay / time gain, and confusion-matrix reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{HYPER_THRESHOLD_MG_DL, HYPO_THRESHOLD_MG_DL};

/// Root mean square difference between reference and predicted glucose.
pub fn rmse(g: &[f64], g_hat: &[f64]) -> Result<f64> {
    if g.is_empty() || g.len() != g_hat.len() {
        return Err(Error::InvalidInput(format!(
            "rmse: lengths {} vs {}",
            g.len(),
            g_hat.len()
        )));
    }
    let sum: f64 = g
        .iter()
        .zip(g_hat)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok((sum / g.len() as f64).sqrt())
}

/// Which adverse event a sensitivity measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Hypo,
    Hyper,
}

impl EventKind {
    fn crossed(self, values: &[f64]) -> bool {
        match self {
            EventKind::Hypo => values.iter().any(|&v| v < HYPO_THRESHOLD_MG_DL),
            EventKind::Hyper => values.iter().any(|&v| v > HYPER_THRESHOLD_MG_DL),
        }
    }
}

/// Fraction of true event windows whose prediction crosses the same
/// threshold anywhere in the window. `None` when no true events exist
/// (reported as n.a., mirroring subjects without events of that kind).
pub fn event_sensitivity(
    g_windows: &[Vec<f64>],
    g_hat_windows: &[Vec<f64>],
    kind: EventKind,
) -> Result<Option<f64>> {
    if g_windows.len() != g_hat_windows.len() {
        return Err(Error::InvalidInput(format!(
            "event_sensitivity: {} reference vs {} predicted windows",
            g_windows.len(),
            g_hat_windows.len()
        )));
    }
    let mut true_events = 0usize;
    let mut detected = 0usize;
    for (g, g_hat) in g_windows.iter().zip(g_hat_windows) {
        if kind.crossed(g) {
            true_events += 1;
            if kind.crossed(g_hat) {
                detected += 1;
            }
        }
    }
    if true_events == 0 {
        return Ok(None);
    }
    Ok(Some(detected as f64 / true_events as f64))
}

/// Time shift `k` by which the prediction lags the reference: the shift
/// that minimizes the mean squared distance between the two profiles after
/// rewinding the reference by `k` steps, comparing only the overlapping
/// region. A prediction satisfying `ĝ_i = g_{i−k}` yields exactly `k`;
/// ties break toward the smallest shift.
pub fn delay(g: &[f64], g_hat: &[f64], max_shift: usize) -> Result<usize> {
    let len = g.len();
    if len == 0 || g_hat.len() != len {
        return Err(Error::InvalidInput(
            "delay: empty or mismatched series".into(),
        ));
    }
    if max_shift >= len {
        return Err(Error::InvalidInput(format!(
            "delay: max_shift {max_shift} must be < series length {len}"
        )));
    }
    let mut best_k = 0usize;
    let mut best = f64::INFINITY;
    for k in 0..=max_shift {
        let overlap = len - k;
        let sum: f64 = (k..len)
            .map(|i| {
                let d = g[i - k] - g_hat[i];
                d * d
            })
            .sum();
        let mean = sum / overlap as f64;
        if mean < best {
            best = mean;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Time gained for early detection: `TG = PH − 5·delay` in minutes,
/// searched over shifts up to the horizon. Series shorter than 2 samples
/// are skipped (`None`).
pub fn time_gain(g: &[f64], g_hat: &[f64], ph_minutes: u32) -> Result<Option<f64>> {
    if ph_minutes == 0 || ph_minutes % 5 != 0 {
        return Err(Error::InvalidInput(format!(
            "time_gain: horizon {ph_minutes} min is not a multiple of the 5-min step"
        )));
    }
    if g.len() < 2 {
        return Ok(None);
    }
    let horizon_steps = (ph_minutes / 5) as usize;
    let max_shift = horizon_steps.min(g.len() - 1);
    let k = delay(g, g_hat, max_shift)?;
    Ok(Some(ph_minutes as f64 - 5.0 * k as f64))
}

/// Forecast metrics of one subject.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub rmse_mg_dl: f64,
    /// Minutes; `None` when every series was too short to score.
    pub tg_minutes: Option<f64>,
    pub hyper_sen: Option<f64>,
    pub hypo_sen: Option<f64>,
    pub n_windows: usize,
}

/// Per-subject and aggregate forecast metrics. Aggregate metric fields are
/// means over subjects (subjects without events of a kind are excluded from
/// that sensitivity mean); the aggregate window count is the total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub per_subject: BTreeMap<String, SubjectMetrics>,
    pub aggregate: Option<SubjectMetrics>,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

impl EvalReport {
    pub fn from_subjects(per_subject: BTreeMap<String, SubjectMetrics>) -> Self {
        let subjects: Vec<&SubjectMetrics> = per_subject.values().collect();
        let aggregate = if subjects.is_empty() {
            None
        } else {
            let rmses: Vec<f64> = subjects.iter().map(|m| m.rmse_mg_dl).collect();
            let tgs: Vec<f64> = subjects.iter().filter_map(|m| m.tg_minutes).collect();
            let hypers: Vec<f64> = subjects.iter().filter_map(|m| m.hyper_sen).collect();
            let hypos: Vec<f64> = subjects.iter().filter_map(|m| m.hypo_sen).collect();
            Some(SubjectMetrics {
                rmse_mg_dl: mean(&rmses).unwrap(),
                tg_minutes: mean(&tgs),
                hyper_sen: mean(&hypers),
                hypo_sen: mean(&hypos),
                n_windows: subjects.iter().map(|m| m.n_windows).sum(),
            })
        };
        EvalReport {
            per_subject,
            aggregate,
        }
    }

    /// CSV with one row per subject plus an aggregate row
    /// (`subject,n_windows,rmse_mg_dl,tg_min,hyper_sen,hypo_sen`).
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map_or_else(|| "n.a.".to_string(), |x| format!("{x}"))
        }
        let mut out = String::from("subject,n_windows,rmse_mg_dl,tg_min,hyper_sen,hypo_sen\n");
        for (id, m) in &self.per_subject {
            out.push_str(&format!(
                "{id},{},{},{},{},{}\n",
                m.n_windows,
                m.rmse_mg_dl,
                opt(m.tg_minutes),
                opt(m.hyper_sen),
                opt(m.hypo_sen)
            ));
        }
        if let Some(m) = &self.aggregate {
            out.push_str(&format!(
                "aggregate,{},{},{},{},{}\n",
                m.n_windows,
                m.rmse_mg_dl,
                opt(m.tg_minutes),
                opt(m.hyper_sen),
                opt(m.hypo_sen)
            ));
        }
        out
    }
}

/// Confusion matrix plus accuracy and macro-averaged metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Classes whose precision or recall had a zero denominator; they
    /// contribute 0 to the macro averages.
    pub zero_support_classes: Vec<usize>,
}

/// Build the confusion matrix and derived metrics for `n_classes` classes.
pub fn classification_report(
    true_labels: &[usize],
    predicted_labels: &[usize],
    n_classes: usize,
) -> Result<ClassReport> {
    if true_labels.len() != predicted_labels.len() {
        return Err(Error::InvalidInput(format!(
            "classification_report: {} true vs {} predicted labels",
            true_labels.len(),
            predicted_labels.len()
        )));
    }
    if true_labels.is_empty() || n_classes == 0 {
        return Err(Error::InvalidInput(
            "classification_report: empty input".into(),
        ));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in true_labels.iter().zip(predicted_labels) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::InvalidInput(format!(
                "classification_report: label ({t}, {p}) out of range [0, {n_classes})"
            )));
        }
        confusion[t][p] += 1;
    }
    let total: usize = true_labels.len();
    let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let accuracy = trace as f64 / total as f64;

    let mut zero_support = Vec::new();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..n_classes {
        let tp = confusion[c][c] as f64;
        let pred_c: usize = (0..n_classes).map(|t| confusion[t][c]).sum();
        let true_c: usize = confusion[c].iter().sum();
        let degenerate = pred_c == 0 || true_c == 0;
        if degenerate {
            zero_support.push(c);
        }
        let precision = if pred_c > 0 { tp / pred_c as f64 } else { 0.0 };
        let recall = if true_c > 0 { tp / true_c as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    Ok(ClassReport {
        confusion,
        accuracy,
        macro_precision: p_sum / n_classes as f64,
        macro_recall: r_sum / n_classes as f64,
        macro_f1: f_sum / n_classes as f64,
        zero_support_classes: zero_support,
    })
}

impl ClassReport {
    /// Long-format heat-map data: `true,predicted,count` per cell.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true,predicted,count\n");
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                out.push_str(&format!("{t},{p},{count}\n"));
            }
        }
        out
    }
}
