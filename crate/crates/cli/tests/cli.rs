//! Subcommand behavior: outputs, exit codes, overwrite guards, config
//! overrides. All runs use the smoke preset on tiny cohorts.

use std::path::{Path, PathBuf};
use std::process::Output;

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_glucast"))
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .output()
        .expect("spawn glucast")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn synth_cohort(dir: &Path, subjects: usize, days: usize) {
    let out = run(&[
        "synth",
        "--subjects",
        &subjects.to_string(),
        "--days",
        &days.to_string(),
        "--seed",
        "9",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_one_csv_per_subject_plus_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cohort");
    synth_cohort(&dir, 3, 2);
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "manifest.txt",
            "subject_s01.csv",
            "subject_s02.csv",
            "subject_s03.csv"
        ]
    );
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("spec_hash = "));
    assert!(manifest.contains("seed = 9"));
}

#[test]
fn synth_rejects_single_subject_with_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "--subjects",
        "1",
        "--days",
        "2",
        "--seed",
        "1",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2"));
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["synth", "--bogus"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn identify_on_missing_dir_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "identify",
        "--data",
        tmp.path().join("nope").to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn identify_writes_report_and_confusion() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("cohort");
    synth_cohort(&data, 2, 3);
    let out_dir = tmp.path().join("ident");
    let out = run(&[
        "identify",
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
        "--preset",
        "smoke",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("class_report.json")).unwrap())
            .unwrap();
    assert!(report["accuracy"].as_f64().is_some());
    let confusion = std::fs::read_to_string(out_dir.join("confusion.csv")).unwrap();
    assert!(confusion.starts_with("true,predicted,count\n"));
    // 2 classes -> 4 cells
    assert_eq!(confusion.lines().count(), 5);
}

#[test]
fn forecast_rejects_bad_horizon_and_fraction_without_personalize() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("cohort");
    synth_cohort(&data, 2, 3);
    let out = run(&[
        "forecast",
        "--data",
        data.to_str().unwrap(),
        "--ph",
        "45",
        "--seed",
        "1",
        "--out",
        tmp.path().join("o1").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);

    let out = run(&[
        "forecast",
        "--data",
        data.to_str().unwrap(),
        "--ph",
        "30",
        "--fraction",
        "0.5",
        "--seed",
        "1",
        "--out",
        tmp.path().join("o2").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("patient_specific"));
}

#[test]
fn forecast_emits_table_with_expected_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("cohort");
    synth_cohort(&data, 2, 3);
    let out_dir = tmp.path().join("fc");
    let out = run(&[
        "forecast",
        "--data",
        data.to_str().unwrap(),
        "--ph",
        "30",
        "--multimodal",
        "on",
        "--personalize",
        "on",
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
        "--preset",
        "smoke",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(out_dir.join("finetuned_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "subject,n_windows,rmse_mg_dl,tg_min,hyper_sen,hypo_sen"
    );
    assert!(table.lines().last().unwrap().starts_with("aggregate,"));
    assert!(out_dir.join("independent_report.json").exists());
    assert!(out_dir.join("history_subject_s01.csv").exists());
    assert!(out_dir.join("history_ft_subject_s01.csv").exists());
}

#[test]
fn ablate_emits_fraction_rows_and_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("cohort");
    synth_cohort(&data, 2, 3);
    let out_dir = tmp.path().join("ab");
    let out = run(&[
        "ablate",
        "--data",
        data.to_str().unwrap(),
        "--ph",
        "30",
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
        "--preset",
        "smoke",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("reference,"));
    let fractions: Vec<&str> = rows[1..]
        .iter()
        .map(|r| r.split(',').next().unwrap())
        .collect();
    assert_eq!(fractions, vec!["1", "0.75", "0.5", "0.25"]);
    let long = std::fs::read_to_string(out_dir.join("ablation_long.csv")).unwrap();
    assert!(long.starts_with("fraction,metric,value,subject\n"));
}

#[test]
fn out_dir_refuses_a_different_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cohort");
    synth_cohort(&dir, 2, 2);
    // same out dir, different seed -> different spec hash -> refuse
    let out = run(&[
        "synth",
        "--subjects",
        "2",
        "--days",
        "2",
        "--seed",
        "10",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("different configuration"));
}

#[test]
fn config_file_overrides_preset_values() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("cohort");
    synth_cohort(&data, 2, 3);
    let cfg = tmp.path().join("run.conf");
    std::fs::write(&cfg, "# run overrides\nstride = 30\nmax_epochs = 2\n").unwrap();
    let out_dir = tmp.path().join("ident");
    let out = run(&[
        "identify",
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
        "--preset",
        "smoke",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("\"stride\":30"));
    assert!(manifest.contains("\"max_epochs\":2"));

    let bad_cfg = tmp.path().join("bad.conf");
    std::fs::write(&bad_cfg, "no_such_key = 1\n").unwrap();
    let out = run(&[
        "identify",
        "--data",
        data.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
        "--config",
        bad_cfg.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn jobs_flag_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("cohort");
    synth_cohort(&data, 2, 3);
    let mut outputs = Vec::new();
    for (name, jobs) in [("j1", "1"), ("j2", "2")] {
        let out_dir = tmp.path().join(name);
        let out = run(&[
            "forecast",
            "--data",
            data.to_str().unwrap(),
            "--ph",
            "30",
            "--seed",
            "4",
            "--preset",
            "smoke",
            "--jobs",
            jobs,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(
            std::fs::read_to_string(out_dir.join("independent_report.json")).unwrap(),
        );
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the results");
}
