//! `key = value` configuration files that override preset parameters.
//!
//! Lines starting with `#` and blank lines are ignored. Unknown keys are
//! rejected so typos cannot silently fall back to defaults. The accepted
//! keys are documented in the repository README.

use std::fs;
use std::path::Path;

use anyhow::{bail, Result};
use glucast::nn::Pooling;
use glucast::protocols::Preset;

use crate::UsageError;

pub fn apply_config_file(preset: &mut Preset, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(UsageError(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                idx + 1
            )));
        };
        apply_key(preset, key.trim(), value.trim()).map_err(|e| {
            UsageError(format!("{}:{}: {e}", path.display(), idx + 1))
        })?;
    }
    Ok(())
}

fn apply_key(preset: &mut Preset, key: &str, value: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse::<T>()
            .map_err(|_| anyhow::anyhow!("bad value `{value}` for {key}"))
    }
    match key {
        "iob_tau_seconds" => preset.curves.iob_tau_seconds = num(key, value)?,
        "carb_rise_tau_seconds" => preset.curves.carb_rise_tau_seconds = num(key, value)?,
        "carb_decay_tau_seconds" => preset.curves.carb_decay_tau_seconds = num(key, value)?,
        "stride" => preset.stride = num(key, value)?,
        "smote_k" => preset.smote_k = num(key, value)?,
        "batch_size" => preset.train.batch_size = num(key, value)?,
        "max_epochs" => preset.train.max_epochs = num(key, value)?,
        "early_stop_patience" => preset.train.early_stop_patience = num(key, value)?,
        "plateau_patience" => preset.train.plateau_patience = num(key, value)?,
        "plateau_factor" => preset.train.plateau_factor = num(key, value)?,
        "init_lr" => preset.train.init_lr = num(key, value)?,
        "bigru_hidden" => preset.arch.bigru_hidden = num(key, value)?,
        "gru_hidden" => preset.arch.gru_hidden = num(key, value)?,
        "fc_dim" => preset.arch.fc_dim = num(key, value)?,
        "finetune_lr_scale" => preset.finetune_lr_scale = num(key, value)?,
        "finetune_patience_div" => preset.finetune_patience_div = num(key, value)?,
        "pooling" => {
            preset.arch.pooling = match value {
                "window2" => Pooling::Window2,
                "global" => Pooling::Global,
                other => bail!("unknown pooling `{other}` (window2 or global)"),
            }
        }
        other => bail!("unknown config key `{other}`"),
    }
    Ok(())
}
