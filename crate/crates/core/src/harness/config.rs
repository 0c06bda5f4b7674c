use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::neural::Hyperparams;
use crate::phy::{SlotConfig, MAX_LAYERS};
use crate::training::TrainConfig;

use super::eval::RECEIVERS;

/// Grid and antenna setup shared by training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlotSection {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub n_rx: usize,
    pub bits_per_symbol: usize,
    /// Seed of the DMRS base sequences.
    pub pilot_seed: u64,
}

impl Default for SlotSection {
    fn default() -> Self {
        Self {
            n_subcarriers: 48,
            n_symbols: 14,
            n_rx: 4,
            bits_per_symbol: 4,
            pilot_seed: 0,
        }
    }
}

impl SlotSection {
    pub fn slot_config(&self, n_layers: usize) -> Result<SlotConfig> {
        SlotConfig::new(
            self.n_subcarriers,
            self.n_symbols,
            n_layers,
            self.n_rx,
            self.bits_per_symbol,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub receivers: Vec<String>,
    pub n_layers: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// Stop a point once this many bit errors were seen...
    pub min_errors: usize,
    /// ...or this many slots were simulated.
    pub max_slots: usize,
    /// Slots simulated between stop-rule checks.
    pub chunk_slots: usize,
    pub seed: u64,
    pub kbest_k: usize,
    pub llr_clip: f64,
    /// Channel draws used to estimate the LMMSE channel-estimation statistics.
    pub stats_samples: usize,
    /// Record wall-clock seconds; when false the column is written as 0 so
    /// that reruns are byte-identical.
    pub timing: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            receivers: RECEIVERS.iter().map(|s| s.to_string()).collect(),
            n_layers: vec![1, 2, 3, 4],
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            min_errors: 100,
            max_slots: 2000,
            chunk_slots: 8,
            seed: 7,
            kbest_k: 16,
            llr_clip: 20.0,
            stats_samples: 2000,
            timing: true,
        }
    }
}

/// Everything a run needs; every key can be overridden with
/// `--set section.key=value`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub slot: SlotSection,
    pub channel: ChannelSpec,
    pub model: Hyperparams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parse TOML text, then apply `section.key=value` overrides; values are
    /// read as TOML literals, falling back to plain strings.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for ov in overrides {
            let (key, value) = ov
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{ov}` is not section.key=value")))?;
            let (section, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("override key `{key}` is not section.key")))?;
            let value = parse_value(value.trim());
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let sect = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{section}` is not a section")))?;
            sect.insert(field.to_string(), value);
        }
        let cfg: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.slot.slot_config(self.train.max_layers.clamp(1, MAX_LAYERS))?;
        self.channel.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.train.max_layers > MAX_LAYERS {
            return Err(Error::Config(format!(
                "train.max_layers {} exceeds {MAX_LAYERS}",
                self.train.max_layers
            )));
        }
        let e = &self.eval;
        if let Some(r) = e.receivers.iter().find(|r| !RECEIVERS.contains(&r.as_str())) {
            return Err(Error::Config(format!(
                "unknown receiver `{r}` (known: {})",
                RECEIVERS.join(", ")
            )));
        }
        if let Some(n) = e.n_layers.iter().find(|n| **n == 0 || **n > MAX_LAYERS) {
            return Err(Error::Config(format!(
                "eval.n_layers entry {n} outside 1..={MAX_LAYERS}"
            )));
        }
        if e.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("eval.snr_db entries must be finite".into()));
        }
        if e.min_errors == 0 || e.max_slots == 0 || e.chunk_slots == 0 {
            return Err(Error::Config(
                "eval.min_errors, max_slots and chunk_slots must be at least 1".into(),
            ));
        }
        crate::classic::KBestConfig {
            k: e.kbest_k,
            llr_clip: e.llr_clip,
        }
        .validate()
        .map_err(|err| Error::Config(err.to_string()))?;
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
