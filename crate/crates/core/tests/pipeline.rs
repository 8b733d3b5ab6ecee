//! End-to-end pipeline checks on synthetic cohorts: files in, windows out,
//! with the invariants that hold across module boundaries.

use glucast::ingest::{parse_subject_log, synchronize, write_subject_log_csv, LogFormat};
use glucast::preprocess::{
    fit_norm_stats, make_windows, resample_and_split, CurveParams, WindowConfig,
};
use glucast::sampling::{smote_oversample, stratified_split, SplitSpec};
use glucast::synth::{make_cohort_days, Separation};
use glucast::types::{EventLabel, WindowSet};

#[test]
fn synthetic_cohort_round_trips_through_files() {
    let cohort = make_cohort_days(2, Separation::WellSeparated, 3, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for log in &cohort {
        let path = dir.path().join(format!("{}.csv", log.subject_id));
        write_subject_log_csv(log, &path).unwrap();
        let parsed = parse_subject_log(&path, LogFormat::Csv).unwrap();
        assert_eq!(&parsed, log, "file round trip must be lossless");
    }
}

#[test]
fn cohort_flows_from_ingest_to_balanced_windows() {
    let cohort = make_cohort_days(2, Separation::WellSeparated, 5, 11).unwrap();
    let wcfg = WindowConfig::forecast(30, true).unwrap().with_stride(4);
    let curves = CurveParams::default();

    let mut all_series = Vec::new();
    for log in &cohort {
        let (synced, _) = synchronize(log);
        let (series, report) = resample_and_split(&synced, &curves, wcfg.span()).unwrap();
        assert!(report.segments_kept > 0, "{}", log.subject_id);
        all_series.extend(series);
    }
    let stats = fit_norm_stats(&all_series).unwrap();
    assert!(stats.cgm_range() > 50.0);

    let mut windows = WindowSet::default();
    for series in &all_series {
        windows.extend(make_windows(series, &stats, &wcfg).unwrap());
    }
    assert!(windows.len() > 100);
    for w in windows.iter() {
        // observations normalized, targets on raw mg/dL
        assert!(w.obs.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(w.target_deltas.iter().all(|d| d.abs() < 400.0));
        assert!(w.anchor_glucose > 20.0 && w.anchor_glucose < 600.0);
    }

    let (train, val, test, _) = stratified_split(&windows, &SplitSpec::new(3)).unwrap();
    assert_eq!(train.len() + val.len() + test.len(), windows.len());

    let before = train.label_counts();
    let (balanced, _) = smote_oversample(&train, 5, 4).unwrap();
    let after = balanced.label_counts();
    assert_eq!(after[0], before[0]);
    for (cls, idx) in [(EventLabel::Hypo, 1), (EventLabel::Hyper, 2)] {
        if before[idx] >= 2 {
            assert_eq!(after[idx], after[0], "{cls:?} should reach parity");
        }
    }
}

#[test]
fn gap_heavy_logs_still_produce_clean_segments() {
    let cohort = make_cohort_days(2, Separation::WellSeparated, 4, 23).unwrap();
    for log in &cohort {
        let (synced, _) = synchronize(log);
        let (series, _) = resample_and_split(&synced, &CurveParams::default(), 30).unwrap();
        for s in &series {
            assert!(s.len() >= 30);
            for i in 0..s.len() {
                let g = s.cgm_at(i);
                assert!((20.0..=600.0).contains(&g));
                assert!(s.channels.get(i, 2) >= 0.0, "iob must be non-negative");
                assert!(s.channels.get(i, 3) >= 0.0, "cob must be non-negative");
            }
        }
    }
}
