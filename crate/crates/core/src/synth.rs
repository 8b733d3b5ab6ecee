//! Synthetic T1D cohort generator: a linear single-compartment glucose
//! model with per-subject metabolic parameters, meal schedules and bolus
//! dosing. Serves as the controlled-ground-truth stand-in for restricted
//! clinical datasets.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::types::{SubjectLog, Timestamp, STEP_SECONDS};

/// One scheduled meal: hour of day plus the gram distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MealSlot {
    pub hour: f64,
    pub grams_mean: f64,
    pub grams_sd: f64,
}

/// Metabolic and behavioral parameters of one simulated subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientParams {
    /// Steady-state glucose the subject relaxes toward, mg/dL (90..=160).
    pub basal_glucose: f64,
    /// Glucose drop per unit of insulin fully absorbed, mg/dL.
    pub insulin_sensitivity: f64,
    /// Glucose rise per gram of carbohydrate fully absorbed, mg/dL.
    pub carb_sensitivity: f64,
    /// Mean-reversion rate toward basal, 1/min.
    pub glucose_decay: f64,
    pub meal_schedule: Vec<MealSlot>,
    /// Bolus units dosed per gram of a meal.
    pub bolus_ratio: f64,
    /// Per-step CGM noise, mg/dL.
    pub noise_sd: f64,
    pub seed: u64,
}

impl PatientParams {
    pub fn validate(&self) -> Result<()> {
        if !(90.0..=160.0).contains(&self.basal_glucose) {
            return Err(Error::InvalidInput(format!(
                "basal_glucose {} outside [90, 160]",
                self.basal_glucose
            )));
        }
        let positives = [
            ("insulin_sensitivity", self.insulin_sensitivity),
            ("carb_sensitivity", self.carb_sensitivity),
            ("glucose_decay", self.glucose_decay),
            ("bolus_ratio", self.bolus_ratio),
        ];
        for (name, v) in positives {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.noise_sd < 0.0 {
            return Err(Error::InvalidInput("noise_sd must be >= 0".into()));
        }
        for m in &self.meal_schedule {
            if !(0.0..24.0).contains(&m.hour) || m.grams_mean <= 0.0 || m.grams_sd < 0.0 {
                return Err(Error::InvalidInput("bad meal slot".into()));
            }
        }
        Ok(())
    }
}

/// Gap injection applied to the emitted CGM channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapProfile {
    /// Per-sample dropout probability.
    pub sample_dropout: f64,
    /// Daily probability of one long gap (6..=24 samples).
    pub long_gap_daily: f64,
}

impl Default for GapProfile {
    fn default() -> Self {
        GapProfile {
            sample_dropout: 0.02,
            long_gap_daily: 0.3,
        }
    }
}

impl GapProfile {
    pub fn none() -> Self {
        GapProfile {
            sample_dropout: 0.0,
            long_gap_daily: 0.0,
        }
    }
}

const STEP_MINUTES: f64 = 5.0;
const SAMPLES_PER_DAY: usize = 288;
/// Insulin action time constant, minutes.
const IOB_TAU_MIN: f64 = 60.0;
/// Carb absorption time constant, minutes.
const CARB_TAU_MIN: f64 = 40.0;
/// Emitted CGM clamps to the sensor range.
const SENSOR_MIN: f64 = 40.0;
const SENSOR_MAX: f64 = 400.0;

/// Standard normal draw via Box-Muller from two uniform draws.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Simulate one subject with the default gap profile.
pub fn simulate_subject(params: &PatientParams, days: usize) -> Result<SubjectLog> {
    simulate_subject_with(params, days, GapProfile::default())
}

/// Discrete 5-minute simulation:
/// `dG/dt = −decay·(G − basal) − Si·iob_use + Sc·carb_absorption + noise`.
///
/// Insulin on board and gut carbs are single-compartment states; each step
/// consumes a fixed fraction of both, moving glucose by the respective
/// sensitivities. Meals draw from the schedule and trigger a proportional
/// bolus. CGM samples clamp to the sensor range and may be dropped per the
/// gap profile.
pub fn simulate_subject_with(
    params: &PatientParams,
    days: usize,
    gaps: GapProfile,
) -> Result<SubjectLog> {
    params.validate()?;
    if days == 0 {
        return Err(Error::InvalidInput("simulate_subject: days must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "simulate"));
    let mut log = SubjectLog::new(format!("synth_{:04x}", params.seed & 0xffff));

    // basal rate pattern: four six-hour blocks, subject-scaled
    let base_rate = 0.5 + (params.basal_glucose - 90.0) / 100.0;
    let block_scale: Vec<f64> = (0..4).map(|_| 0.85 + 0.3 * rng.random::<f64>()).collect();
    for day in 0..days {
        for (block, scale) in block_scale.iter().enumerate() {
            let t = ((day * 24 + block * 6) * 3600) as i64;
            log.basal
                .push((Timestamp(t), round3(base_rate * scale)));
        }
    }

    // meal plan: jittered times and sizes per day
    let mut meals: Vec<(i64, f64)> = Vec::new();
    for day in 0..days {
        for slot in &params.meal_schedule {
            let jitter_min = (rng.random::<f64>() - 0.5) * 60.0;
            let minute = (slot.hour * 60.0 + jitter_min).clamp(0.0, 24.0 * 60.0 - 5.0);
            let grams = (slot.grams_mean + slot.grams_sd * gauss(&mut rng)).max(5.0);
            let step = (minute / STEP_MINUTES).floor() as i64;
            let t = day as i64 * 86_400 + step * STEP_SECONDS;
            meals.push((t, round3(grams)));
        }
    }
    meals.sort_by_key(|&(t, _)| t);
    for &(t, grams) in &meals {
        log.carbs.push((Timestamp(t), grams));
        log.bolus
            .push((Timestamp(t), round3(grams * params.bolus_ratio)));
    }

    // state integration
    let iob_step = 1.0 - (-STEP_MINUTES / IOB_TAU_MIN).exp();
    let carb_step = 1.0 - (-STEP_MINUTES / CARB_TAU_MIN).exp();
    let reversion = (-params.glucose_decay * STEP_MINUTES).exp();
    let mut glucose = params.basal_glucose;
    let mut iob = 0.0f64;
    let mut gut = 0.0f64;
    let n_steps = days * SAMPLES_PER_DAY;
    let mut meal_idx = 0usize;
    let mut samples: Vec<(i64, f64)> = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let t = k as i64 * STEP_SECONDS;
        while meal_idx < meals.len() && meals[meal_idx].0 <= t {
            let grams = meals[meal_idx].1;
            gut += grams;
            iob += grams * params.bolus_ratio;
            meal_idx += 1;
        }
        samples.push((t, glucose.clamp(SENSOR_MIN, SENSOR_MAX)));

        let insulin_used = iob * iob_step;
        let carbs_absorbed = gut * carb_step;
        glucose = params.basal_glucose + (glucose - params.basal_glucose) * reversion
            - params.insulin_sensitivity * insulin_used
            + params.carb_sensitivity * carbs_absorbed
            + params.noise_sd * gauss(&mut rng);
        glucose = glucose.clamp(SENSOR_MIN - 10.0, SENSOR_MAX + 50.0);
        iob -= insulin_used;
        gut -= carbs_absorbed;
    }

    // gap injection
    let mut gap_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "gaps"));
    let mut dropped = vec![false; n_steps];
    for day in 0..days {
        if gap_rng.random::<f64>() < gaps.long_gap_daily {
            let len = gap_rng.random_range(6..=24usize);
            let start = day * SAMPLES_PER_DAY + gap_rng.random_range(0..SAMPLES_PER_DAY);
            for i in start..(start + len).min(n_steps) {
                dropped[i] = true;
            }
        }
    }
    for flag in dropped.iter_mut() {
        if gap_rng.random::<f64>() < gaps.sample_dropout {
            *flag = true;
        }
    }
    log.cgm = samples
        .into_iter()
        .zip(&dropped)
        .filter(|(_, &d)| !d)
        .map(|((t, v), _)| (Timestamp(t), round3(v)))
        .collect();

    Ok(log)
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// How distinct the sampled subjects should be.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Separation {
    /// Basal levels and sensitivities spread far apart; identification is
    /// learnable by construction.
    WellSeparated,
    /// All subjects drawn from one tight parameter distribution.
    Overlapping,
}

const DEFAULT_COHORT_DAYS: usize = 30;

/// Sample `n` patient parameter sets.
pub fn make_cohort_params(n: usize, separation: Separation, seed: u64) -> Result<Vec<PatientParams>> {
    if n < 2 {
        return Err(Error::InvalidInput("make_cohort: need n >= 2 subjects".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("cohort/{i}")));
        let frac = i as f64 / (n - 1) as f64;
        let params = match separation {
            Separation::WellSeparated => {
                // spread basal levels across [98, 158]; vary the rest by
                // residue so neighbors differ in several parameters at once
                let basal = 98.0 + 60.0 * frac;
                let insulin_sensitivity = 35.0 + 25.0 * ((i % 3) as f64);
                let carb_sensitivity = 3.0 + 0.5 * ((i % 2) as f64);
                // dose relative to the subject's own carb/insulin balance,
                // monotone in basal: low-basal subjects over-bolus (hypo
                // dips), high-basal subjects under-bolus (hyper excursions).
                // The induced drift also pushes subject means further apart.
                let balance = carb_sensitivity / insulin_sensitivity;
                let dose_scale = 1.25 - 0.5 * frac;
                PatientParams {
                    basal_glucose: basal,
                    insulin_sensitivity,
                    carb_sensitivity,
                    glucose_decay: 0.008 + 0.004 * ((i % 2) as f64),
                    meal_schedule: vec![
                        MealSlot {
                            hour: 7.0 + 1.5 * ((i % 3) as f64),
                            grams_mean: 45.0 + 5.0 * ((i % 4) as f64),
                            grams_sd: 8.0,
                        },
                        MealSlot {
                            hour: 12.5 + 0.5 * ((i % 2) as f64),
                            grams_mean: 60.0 + 6.0 * ((i % 3) as f64),
                            grams_sd: 10.0,
                        },
                        MealSlot {
                            hour: 19.0 - 0.75 * ((i % 4) as f64),
                            grams_mean: 70.0 + 8.0 * ((i % 2) as f64),
                            grams_sd: 12.0,
                        },
                    ],
                    bolus_ratio: balance * dose_scale,
                    noise_sd: 2.0,
                    seed: derive_seed(seed, &format!("subject/{i}")),
                }
            }
            Separation::Overlapping => PatientParams {
                basal_glucose: 118.0 + 4.0 * rng.random::<f64>(),
                insulin_sensitivity: 48.0 + 4.0 * rng.random::<f64>(),
                carb_sensitivity: 3.4 + 0.2 * rng.random::<f64>(),
                glucose_decay: 0.010 + 0.001 * rng.random::<f64>(),
                meal_schedule: vec![
                    MealSlot {
                        hour: 7.5,
                        grams_mean: 50.0,
                        grams_sd: 10.0,
                    },
                    MealSlot {
                        hour: 13.0,
                        grams_mean: 65.0,
                        grams_sd: 10.0,
                    },
                    MealSlot {
                        hour: 19.0,
                        grams_mean: 75.0,
                        grams_sd: 12.0,
                    },
                ],
                bolus_ratio: 0.065 + 0.004 * rng.random::<f64>(),
                noise_sd: 2.5,
                seed: derive_seed(seed, &format!("subject/{i}")),
            },
        };
        out.push(params);
    }
    Ok(out)
}

/// Sample and simulate a cohort over the default 30 days.
pub fn make_cohort(n: usize, separation: Separation, seed: u64) -> Result<Vec<SubjectLog>> {
    make_cohort_days(n, separation, DEFAULT_COHORT_DAYS, seed)
}

/// Sample and simulate a cohort, with one distinct subject id per log.
pub fn make_cohort_days(
    n: usize,
    separation: Separation,
    days: usize,
    seed: u64,
) -> Result<Vec<SubjectLog>> {
    let params = make_cohort_params(n, separation, seed)?;
    params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut log = simulate_subject(p, days)?;
            log.subject_id = format!("s{:02}", i + 1);
            Ok(log)
        })
        .collect()
}
