//! Parsing of raw subject logs and synchronization of auxiliary channels
//! onto the CGM timeline.
//!
//! Two file formats are supported: CSV with header `channel,timestamp,value`
//! and a JSON array of `{channel, timestamp, value}` objects. Timestamps are
//! integer epoch seconds.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{SubjectLog, Timestamp, GLUCOSE_MAX_MG_DL, GLUCOSE_MIN_MG_DL};

/// Auxiliary events are attached to the closest preceding CGM stamp when
/// they occur within this many seconds after it.
pub const SYNC_WINDOW_SECONDS: i64 = 240;

/// Event channel tag of a raw log row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Cgm,
    Basal,
    Bolus,
    Carbs,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Cgm => "cgm",
            Channel::Basal => "basal",
            Channel::Bolus => "bolus",
            Channel::Carbs => "carbs",
        }
    }

    fn parse(s: &str) -> Option<Channel> {
        match s {
            "cgm" => Some(Channel::Cgm),
            "basal" => Some(Channel::Basal),
            "bolus" => Some(Channel::Bolus),
            "carbs" => Some(Channel::Carbs),
            _ => None,
        }
    }
}

/// One event as it appears in a raw log file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub channel: Channel,
    pub timestamp: i64,
    pub value: f64,
}

/// On-disk format of a subject log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogFormat {
    Csv,
    Json,
}

/// Counts of auxiliary events dropped by [`synchronize`] because no CGM
/// stamp preceded them within the alignment window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    pub dropped_basal: usize,
    pub dropped_bolus: usize,
    pub dropped_carbs: usize,
}

impl SyncReport {
    pub fn total_dropped(&self) -> usize {
        self.dropped_basal + self.dropped_bolus + self.dropped_carbs
    }
}

/// Parse a subject log file. The subject id is the file stem.
///
/// Duplicate (channel, timestamp) pairs collapse to the last occurrence;
/// device logs commonly re-emit corrected values.
pub fn parse_subject_log(path: &Path, format: LogFormat) -> Result<SubjectLog> {
    let text = fs::read_to_string(path)?;
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    let records = match format {
        LogFormat::Csv => parse_csv(&text, path)?,
        LogFormat::Json => serde_json::from_str::<Vec<RawRecord>>(&text)?,
    };
    build_log(subject_id, &records, path)
}

fn parse_csv(text: &str, path: &Path) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && trimmed == "channel,timestamp,value" {
            continue;
        }
        let mut fields = trimmed.split(',');
        let (ch, ts, val) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(t), Some(v), None) => (c.trim(), t.trim(), v.trim()),
            _ => {
                return Err(parse_err(path, line_no, "expected 3 comma-separated fields"));
            }
        };
        let channel = Channel::parse(ch)
            .ok_or_else(|| parse_err(path, line_no, &format!("unknown channel `{ch}`")))?;
        let timestamp: i64 = ts
            .parse()
            .map_err(|_| parse_err(path, line_no, &format!("bad timestamp `{ts}`")))?;
        let value: f64 = val
            .parse()
            .map_err(|_| parse_err(path, line_no, &format!("bad value `{val}`")))?;
        records.push(RawRecord {
            channel,
            timestamp,
            value,
        });
    }
    Ok(records)
}

fn parse_err(path: &Path, line: usize, msg: &str) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.to_string(),
    }
}

fn build_log(subject_id: String, records: &[RawRecord], path: &Path) -> Result<SubjectLog> {
    // BTreeMap keyed by timestamp: sorts and applies the last-wins rule in one pass.
    let mut maps: [BTreeMap<i64, f64>; 4] = Default::default();
    for rec in records {
        if !rec.value.is_finite() {
            return Err(Error::Validation(format!(
                "{}: non-finite value on channel {}",
                path.display(),
                rec.channel.as_str()
            )));
        }
        match rec.channel {
            Channel::Cgm => {
                if rec.value <= GLUCOSE_MIN_MG_DL || rec.value > GLUCOSE_MAX_MG_DL {
                    return Err(Error::Validation(format!(
                        "{}: cgm value {} outside (0, 600] mg/dL at t={}",
                        path.display(),
                        rec.value,
                        rec.timestamp
                    )));
                }
            }
            Channel::Basal | Channel::Bolus | Channel::Carbs => {
                if rec.value < 0.0 {
                    return Err(Error::Validation(format!(
                        "{}: negative {} value {} at t={}",
                        path.display(),
                        rec.channel.as_str(),
                        rec.value,
                        rec.timestamp
                    )));
                }
            }
        }
        let slot = match rec.channel {
            Channel::Cgm => 0,
            Channel::Basal => 1,
            Channel::Bolus => 2,
            Channel::Carbs => 3,
        };
        maps[slot].insert(rec.timestamp, rec.value);
    }
    let to_vec = |m: &BTreeMap<i64, f64>| -> Vec<(Timestamp, f64)> {
        m.iter().map(|(&t, &v)| (Timestamp(t), v)).collect()
    };
    Ok(SubjectLog {
        subject_id,
        cgm: to_vec(&maps[0]),
        basal: to_vec(&maps[1]),
        bolus: to_vec(&maps[2]),
        carbs: to_vec(&maps[3]),
    })
}

/// Write a subject log in the CSV schema, channels interleaved by timestamp.
pub fn write_subject_log_csv(log: &SubjectLog, path: &Path) -> Result<()> {
    let mut rows: Vec<(i64, &'static str, f64)> = Vec::new();
    for &(t, v) in &log.cgm {
        rows.push((t.seconds(), "cgm", v));
    }
    for &(t, v) in &log.basal {
        rows.push((t.seconds(), "basal", v));
    }
    for &(t, v) in &log.bolus {
        rows.push((t.seconds(), "bolus", v));
    }
    for &(t, v) in &log.carbs {
        rows.push((t.seconds(), "carbs", v));
    }
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out = String::from("channel,timestamp,value\n");
    for (t, ch, v) in rows {
        out.push_str(&format!("{ch},{t},{v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Re-timestamp auxiliary events onto the CGM timeline.
///
/// Every basal/bolus/carb event moves to the nearest preceding CGM stamp if
/// it occurs within [`SYNC_WINDOW_SECONDS`] after it; events with no
/// qualifying stamp are dropped and counted. When two events of a channel
/// land on the same stamp, bolus and carb quantities sum (doses given in
/// the same bin superpose) while basal keeps the later rate.
pub fn synchronize(log: &SubjectLog) -> (SubjectLog, SyncReport) {
    let cgm_times: Vec<i64> = log.cgm.iter().map(|&(t, _)| t.seconds()).collect();
    let mut report = SyncReport::default();

    let align = |events: &[(Timestamp, f64)],
                 sum_on_collision: bool,
                 dropped: &mut usize|
     -> Vec<(Timestamp, f64)> {
        let mut m: BTreeMap<i64, f64> = BTreeMap::new();
        for &(t, v) in events {
            match preceding_stamp(&cgm_times, t.seconds()) {
                Some(stamp) => {
                    m.entry(stamp)
                        .and_modify(|cur| {
                            if sum_on_collision {
                                *cur += v;
                            } else {
                                *cur = v;
                            }
                        })
                        .or_insert(v);
                }
                None => *dropped += 1,
            }
        }
        m.into_iter().map(|(t, v)| (Timestamp(t), v)).collect()
    };

    let basal = align(&log.basal, false, &mut report.dropped_basal);
    let bolus = align(&log.bolus, true, &mut report.dropped_bolus);
    let carbs = align(&log.carbs, true, &mut report.dropped_carbs);

    (
        SubjectLog {
            subject_id: log.subject_id.clone(),
            cgm: log.cgm.clone(),
            basal,
            bolus,
            carbs,
        },
        report,
    )
}

/// Latest CGM stamp `s` with `s <= t` and `t - s <= SYNC_WINDOW_SECONDS`.
fn preceding_stamp(cgm_times: &[i64], t: i64) -> Option<i64> {
    let idx = cgm_times.partition_point(|&s| s <= t);
    if idx == 0 {
        return None;
    }
    let s = cgm_times[idx - 1];
    (t - s <= SYNC_WINDOW_SECONDS).then_some(s)
}

/// Loader interface for restricted benchmark datasets. Implementations
/// convert a vendor layout into [`SubjectLog`]s so the rest of the pipeline
/// is format-agnostic.
pub trait DatasetAdapter {
    fn dataset_id(&self) -> &'static str;
    fn load(&self, dir: &Path) -> Result<Vec<SubjectLog>>;
}

/// Placeholder for the OhioT1DM XML layout. The dataset is access-restricted;
/// this adapter reports how to convert it rather than parsing XML blindly.
pub struct OhioT1dmAdapter;

impl DatasetAdapter for OhioT1dmAdapter {
    fn dataset_id(&self) -> &'static str {
        "ohiot1dm"
    }

    fn load(&self, dir: &Path) -> Result<Vec<SubjectLog>> {
        Err(Error::AdapterUnavailable(format!(
            "OhioT1DM XML at {} is not parsed directly; convert each subject to \
             the `channel,timestamp,value` CSV schema and load with parse_subject_log",
            dir.display()
        )))
    }
}

/// Placeholder for the DiaTrend workbook layout.
pub struct DiaTrendAdapter;

impl DatasetAdapter for DiaTrendAdapter {
    fn dataset_id(&self) -> &'static str {
        "diatrend"
    }

    fn load(&self, dir: &Path) -> Result<Vec<SubjectLog>> {
        Err(Error::AdapterUnavailable(format!(
            "DiaTrend workbooks at {} are not parsed directly; export each subject to \
             the `channel,timestamp,value` CSV schema and load with parse_subject_log",
            dir.display()
        )))
    }
}
