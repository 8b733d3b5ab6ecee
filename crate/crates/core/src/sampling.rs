//! Stratified splitting that preserves adverse-event proportions, and SMOTE
//! oversampling of minority event classes for regression training.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sq_dist;
use crate::types::{EventLabel, Window, WindowSet};

/// Train/validation/test fractions. The canonical split is 64/16/20.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train_frac: 0.64,
            val_frac: 0.16,
            test_frac: 0.20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split fractions sum to {sum}, expected 1.0"
            )));
        }
        if self.train_frac < 0.0 || self.val_frac < 0.0 || self.test_frac < 0.0 {
            return Err(Error::InvalidInput("split fractions must be >= 0".into()));
        }
        Ok(())
    }
}

/// Strata too small to split, with their window counts; everything in such
/// a stratum lands in train.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub small_strata: Vec<(String, usize)>,
}

/// Split windows per event-label stratum: shuffle with the spec seed, then
/// partition by count with floor-rounded val/test and the remainder in train.
pub fn stratified_split(
    windows: &WindowSet,
    spec: &SplitSpec,
) -> Result<(WindowSet, WindowSet, WindowSet, SplitReport)> {
    stratified_split_by(windows, spec, |w| w.label.as_str().to_string())
}

/// Split with an arbitrary stratum key; the identification task stratifies
/// by subject instead of event label.
pub fn stratified_split_by(
    windows: &WindowSet,
    spec: &SplitSpec,
    key: impl Fn(&Window) -> String,
) -> Result<(WindowSet, WindowSet, WindowSet, SplitReport)> {
    spec.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidInput("stratified_split: no windows".into()));
    }

    // Strata in first-seen order keyed deterministically.
    let mut order: Vec<String> = Vec::new();
    let mut strata: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for (i, w) in windows.iter().enumerate() {
        let k = key(w);
        if !strata.contains_key(&k) {
            order.push(k.clone());
        }
        strata.entry(k).or_default().push(i);
    }
    order.sort();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut report = SplitReport::default();
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for k in &order {
        let mut idx = strata[k].clone();
        idx.shuffle(&mut rng);
        if idx.len() < 3 {
            report.small_strata.push((k.clone(), idx.len()));
            train.extend(idx);
            continue;
        }
        let n = idx.len();
        let n_val = (spec.val_frac * n as f64).floor() as usize;
        let n_test = (spec.test_frac * n as f64).floor() as usize;
        let n_train = n - n_val - n_test;
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..n_train + n_val]);
        test.extend_from_slice(&idx[n_train + n_val..]);
    }

    let gather = |ids: &[usize]| WindowSet::new(ids.iter().map(|&i| windows.windows[i].clone()).collect());
    Ok((gather(&train), gather(&val), gather(&test), report))
}

/// Contiguous split in window order, offered for leakage-sensitive
/// experiments: overlapping stride-1 windows do not cross split boundaries
/// except at the block edges.
pub fn contiguous_split(
    windows: &WindowSet,
    spec: &SplitSpec,
) -> Result<(WindowSet, WindowSet, WindowSet)> {
    spec.validate()?;
    if windows.is_empty() {
        return Err(Error::InvalidInput("contiguous_split: no windows".into()));
    }
    let n = windows.len();
    let n_val = (spec.val_frac * n as f64).floor() as usize;
    let n_test = (spec.test_frac * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;
    let take = |lo: usize, hi: usize| WindowSet::new(windows.windows[lo..hi].to_vec());
    Ok((
        take(0, n_train),
        take(n_train, n_train + n_val),
        take(n_train + n_val, n),
    ))
}

/// Provenance of the synthetic windows appended by [`smote_oversample`]:
/// parent indices into the original window list, plus replication warnings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoteReport {
    /// (base index, neighbor index) per synthetic, in emission order.
    pub parents: Vec<(usize, usize)>,
    /// Classes with a single member that were replicated instead of interpolated.
    pub replicated_classes: Vec<EventLabel>,
}

/// Oversample minority event classes (Hypo, Hyper) up to the Normal count.
///
/// Each synthetic window is `x + u·(z − x)` for a random minority window
/// `x`, one of its `k` nearest same-class neighbors `z` (Euclidean distance
/// over flattened observations concatenated with target deltas), and
/// `u ~ U[0,1)` applied to observations, targets and anchor alike. Output
/// order is originals first, then synthetics.
pub fn smote_oversample(
    train: &WindowSet,
    k: usize,
    seed: u64,
) -> Result<(WindowSet, SmoteReport)> {
    if k == 0 {
        return Err(Error::InvalidInput("smote_oversample: k must be >= 1".into()));
    }
    let counts = train.label_counts();
    let target = counts[0]; // Normal count
    let mut out = train.clone();
    let mut report = SmoteReport::default();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &label in &[EventLabel::Hypo, EventLabel::Hyper] {
        let members: Vec<usize> = train
            .iter()
            .enumerate()
            .filter(|(_, w)| w.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() || members.len() >= target {
            continue;
        }
        let need = target - members.len();

        if members.len() == 1 {
            report.replicated_classes.push(label);
            let idx = members[0];
            for _ in 0..need {
                out.windows.push(train.windows[idx].clone());
                report.parents.push((idx, idx));
            }
            continue;
        }

        // Neighbor lists over the class members only.
        let feats: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| train.windows[i].feature_vector())
            .collect();
        let k_eff = k.min(members.len() - 1);
        let neighbors: Vec<Vec<usize>> = (0..members.len())
            .map(|a| {
                let mut dist: Vec<(f64, usize)> = (0..members.len())
                    .filter(|&b| b != a)
                    .map(|b| (sq_dist(&feats[a], &feats[b]), b))
                    .collect();
                dist.sort_by(|x, y| x.partial_cmp(y).unwrap());
                dist.into_iter().take(k_eff).map(|(_, b)| b).collect()
            })
            .collect();

        for _ in 0..need {
            let a = rng.random_range(0..members.len());
            let z = neighbors[a][rng.random_range(0..k_eff)];
            let u: f64 = rng.random();
            let base = &train.windows[members[a]];
            let nb = &train.windows[members[z]];
            out.windows.push(interpolate(base, nb, u));
            report.parents.push((members[a], members[z]));
        }
    }
    Ok((out, report))
}

fn interpolate(x: &Window, z: &Window, u: f64) -> Window {
    let mut obs = x.obs.clone();
    for (o, &zv) in obs.as_mut_slice().iter_mut().zip(z.obs.as_slice()) {
        *o += u * (zv - *o);
    }
    let target_deltas = x
        .target_deltas
        .iter()
        .zip(&z.target_deltas)
        .map(|(&a, &b)| a + u * (b - a))
        .collect();
    Window {
        subject_id: x.subject_id.clone(),
        obs,
        target_deltas,
        anchor_glucose: x.anchor_glucose + u * (z.anchor_glucose - x.anchor_glucose),
        label: x.label,
    }
}

/// Distance from `point` to the segment between `a` and `b` in the
/// flattened feature space; used to audit that synthetics are convex
/// combinations of their parents.
pub fn distance_to_segment(point: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let dim = point.len();
    debug_assert!(a.len() == dim && b.len() == dim);
    let mut ab_sq = 0.0;
    let mut ap_ab = 0.0;
    for i in 0..dim {
        let ab = b[i] - a[i];
        ab_sq += ab * ab;
        ap_ab += (point[i] - a[i]) * ab;
    }
    let t = if ab_sq > 0.0 {
        (ap_ab / ab_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut d = 0.0;
    for i in 0..dim {
        let proj = a[i] + t * (b[i] - a[i]);
        let diff = point[i] - proj;
        d += diff * diff;
    }
    d.sqrt()
}

/// CSV manifest mapping each window index to its split, for reproducibility
/// audits.
pub fn split_manifest_csv(train: &WindowSet, val: &WindowSet, test: &WindowSet) -> String {
    let mut out = String::from("index,split,subject,label\n");
    let mut idx = 0usize;
    for (name, set) in [("train", train), ("val", val), ("test", test)] {
        for w in set.iter() {
            out.push_str(&format!(
                "{idx},{name},{},{}\n",
                w.subject_id,
                w.label.as_str()
            ));
            idx += 1;
        }
    }
    out
}
