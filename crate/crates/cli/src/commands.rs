//! The four subcommands: synth, identify, forecast, ablate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glucast::ingest::{parse_subject_log, write_subject_log_csv, LogFormat};
use glucast::nn::save_checkpoint;
use glucast::protocols::{
    fine_tune, run_ablation, run_losocv, run_patient_identification, ExperimentSpec,
    FoldOutcome, Preset, Task,
};
use glucast::synth::{make_cohort_days, Separation};
use glucast::train::history_to_csv;
use glucast::types::SubjectLog;

use crate::run_dir::{prepare_out_dir, write_file};
use crate::{SeparationArg, UsageError};

fn snapshot(parts: &[(&str, String)]) -> String {
    parts
        .iter()
        .map(|(k, v)| format!("{k} = {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn preset_snapshot(preset: &Preset) -> String {
    serde_json::to_string(preset).expect("preset serializes")
}

/// Load every `*.csv` subject log under `dir`, sorted by file name.
fn load_cohort(dir: &Path) -> Result<Vec<SubjectLog>> {
    if !dir.is_dir() {
        bail!(UsageError(format!("--data {} is not a directory", dir.display())));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!(UsageError(format!(
            "no subject CSV files under {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            parse_subject_log(p, LogFormat::Csv)
                .with_context(|| format!("loading {}", p.display()))
        })
        .collect()
}

pub fn synth(
    subjects: usize,
    days: usize,
    seed: u64,
    out: &Path,
    separation: SeparationArg,
) -> Result<()> {
    if subjects < 2 {
        bail!(UsageError("--subjects must be at least 2".into()));
    }
    if days == 0 {
        bail!(UsageError("--days must be at least 1".into()));
    }
    let separation = match separation {
        SeparationArg::WellSeparated => Separation::WellSeparated,
        SeparationArg::Overlapping => Separation::Overlapping,
    };
    let snap = snapshot(&[
        ("command", "synth".into()),
        ("subjects", subjects.to_string()),
        ("days", days.to_string()),
        ("separation", format!("{separation:?}")),
        ("seed", seed.to_string()),
    ]);
    prepare_out_dir(out, &snap, seed)?;
    let cohort = make_cohort_days(subjects, separation, days, seed)?;
    for log in &cohort {
        write_subject_log_csv(log, &out.join(format!("subject_{}.csv", log.subject_id)))?;
    }
    println!("wrote {} subjects to {}", cohort.len(), out.display());
    Ok(())
}

pub fn identify(
    data: &Path,
    seed: u64,
    out: &Path,
    preset: &Preset,
    multimodal: bool,
) -> Result<()> {
    let cohort = load_cohort(data)?;
    let spec = ExperimentSpec {
        dataset_id: data.display().to_string(),
        ..ExperimentSpec::identify(multimodal, seed)
    };
    let snap = snapshot(&[
        ("command", "identify".into()),
        ("data", data.display().to_string()),
        ("multimodal", multimodal.to_string()),
        ("seed", seed.to_string()),
        ("preset", preset_snapshot(preset)),
    ]);
    prepare_out_dir(out, &snap, seed)?;

    let report = run_patient_identification(&cohort, &spec, preset)
        .map_err(usage_if_invalid)?;
    write_file(out, "class_report.json", &serde_json::to_string_pretty(&report)?)?;
    write_file(out, "confusion.csv", &report.confusion_csv())?;
    println!(
        "identification accuracy {:.4} (macro F1 {:.4}) over {} classes -> {}",
        report.accuracy,
        report.macro_f1,
        report.confusion.len(),
        out.display()
    );
    Ok(())
}

pub struct ForecastArgs {
    pub data: PathBuf,
    pub ph: u32,
    pub multimodal: bool,
    pub personalize: bool,
    pub fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub preset: Preset,
    pub save_models: bool,
}

const FRACTIONS: [f64; 4] = [1.0, 0.75, 0.5, 0.25];

pub fn forecast(args: ForecastArgs) -> Result<()> {
    if !FRACTIONS.contains(&args.fraction) {
        bail!(UsageError(format!(
            "--fraction {} must be one of 1.0, 0.75, 0.5, 0.25",
            args.fraction
        )));
    }
    let spec = ExperimentSpec {
        task: Task::Forecast,
        ph_minutes: args.ph,
        multimodal: args.multimodal,
        patient_specific: args.personalize,
        data_fraction: args.fraction,
        seed: args.seed,
        dataset_id: args.data.display().to_string(),
    };
    spec.validate().map_err(usage_if_invalid)?;
    let cohort = load_cohort(&args.data)?;
    let snap = snapshot(&[
        ("command", "forecast".into()),
        ("data", args.data.display().to_string()),
        ("ph_minutes", args.ph.to_string()),
        ("multimodal", args.multimodal.to_string()),
        ("personalize", args.personalize.to_string()),
        ("fraction", args.fraction.to_string()),
        ("seed", args.seed.to_string()),
        ("preset", preset_snapshot(&args.preset)),
    ]);
    prepare_out_dir(&args.out, &snap, args.seed)?;

    let losocv = run_losocv(&cohort, &spec, &args.preset).map_err(usage_if_invalid)?;
    let independent = losocv.report();
    write_file(
        &args.out,
        "independent_report.json",
        &serde_json::to_string_pretty(&independent)?,
    )?;
    write_file(&args.out, "independent_table.csv", &independent.to_csv())?;
    for (id, outcome) in &losocv.folds {
        if let FoldOutcome::Trained { history, model, .. } = outcome {
            write_file(&args.out, &format!("history_{id}.csv"), &history_to_csv(history))?;
            if args.save_models {
                save_checkpoint(model, &args.out.join(format!("model_{id}.json")))?;
            }
        }
    }

    let mut fine_tuned_report = None;
    if args.personalize {
        let mut per = BTreeMap::new();
        for (id, outcome) in &losocv.folds {
            let FoldOutcome::Trained { model, .. } = outcome else {
                continue;
            };
            let ft = fine_tune(model, &cohort, id, &spec, &args.preset)?;
            write_file(
                &args.out,
                &format!("history_ft_{id}.csv"),
                &history_to_csv(&ft.history),
            )?;
            if args.save_models {
                save_checkpoint(&ft.model, &args.out.join(format!("model_ft_{id}.json")))?;
            }
            per.insert(id.clone(), ft.metrics);
        }
        let report = glucast::eval::EvalReport::from_subjects(per);
        write_file(
            &args.out,
            "finetuned_report.json",
            &serde_json::to_string_pretty(&report)?,
        )?;
        write_file(&args.out, "finetuned_table.csv", &report.to_csv())?;
        fine_tuned_report = Some(report);
    }

    let failures = losocv.failures();
    write_file(
        &args.out,
        "failures.json",
        &serde_json::to_string_pretty(&failures)?,
    )?;

    if let Some(agg) = &independent.aggregate {
        println!("patient-independent RMSE {:.2} mg/dL", agg.rmse_mg_dl);
    }
    if let Some(report) = &fine_tuned_report {
        if let Some(agg) = &report.aggregate {
            println!("patient-specific  RMSE {:.2} mg/dL", agg.rmse_mg_dl);
        }
    }
    println!("reports -> {}", args.out.display());
    if !failures.is_empty() {
        bail!("{} fold(s) failed: {failures:?}", failures.len());
    }
    Ok(())
}

pub fn ablate(
    data: &Path,
    ph: u32,
    multimodal: bool,
    seed: u64,
    out: &Path,
    preset: &Preset,
) -> Result<()> {
    let spec = ExperimentSpec {
        task: Task::Forecast,
        ph_minutes: ph,
        multimodal,
        patient_specific: true,
        data_fraction: 1.0,
        seed,
        dataset_id: data.display().to_string(),
    };
    spec.validate().map_err(usage_if_invalid)?;
    let cohort = load_cohort(data)?;
    let snap = snapshot(&[
        ("command", "ablate".into()),
        ("data", data.display().to_string()),
        ("ph_minutes", ph.to_string()),
        ("multimodal", multimodal.to_string()),
        ("seed", seed.to_string()),
        ("preset", preset_snapshot(preset)),
    ]);
    prepare_out_dir(out, &snap, seed)?;

    let table = run_ablation(&cohort, &spec, preset)?;
    write_file(out, "ablation.csv", &table.to_csv())?;
    write_file(out, "ablation_long.csv", &table.to_long_csv())?;
    write_file(out, "ablation.json", &serde_json::to_string_pretty(&table)?)?;
    println!(
        "{} ablation rows -> {}",
        table.rows.len(),
        out.display()
    );
    Ok(())
}

/// Precondition violations from the core map to usage exits.
fn usage_if_invalid(e: glucast::Error) -> anyhow::Error {
    match e {
        glucast::Error::InvalidInput(msg) => UsageError(msg).into(),
        other => other.into(),
    }
}
