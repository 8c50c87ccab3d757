//! Run configuration: TOML file, dotted `key=value` overrides, and the
//! snapshot written next to every run's outputs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use dualoie_core::dataset::{CorpusFormat, SynthConfig};
use dualoie_core::inference::{Decoding, InferenceConfig};
use dualoie_core::metrics::Slotting;
use dualoie_llm::{ChatClientConfig, PromptTemplate};
use dualoie_model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

pub const SNAPSHOT_FILE: &str = "run_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub format: CorpusFormat,
    pub dev_fraction: f64,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { format: CorpusFormat::CanonicalJsonl, dev_fraction: 0.1, test_fraction: 0.2 }
    }
}

/// Dev evaluation inside training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Dev sentences scored per evaluation (0 = all).
    pub dev_limit: usize,
    pub decoding: Decoding,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { dev_limit: 100, decoding: Decoding::Greedy }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub slotting: Slotting,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub client: ChatClientConfig,
    pub template: PromptTemplate,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub rounds: usize,
    /// Sentences labeled with their explicit triplets only.
    pub explicit_pool: usize,
    /// Unlabeled sentences whose gold only the oracle sees.
    pub unlabeled_pool: usize,
    pub noise_rate: f64,
    pub corrections: bool,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig { rounds: 2, explicit_pool: 300, unlabeled_pool: 200, noise_rate: 0.0, corrections: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces every component seed.
    pub seed: Option<u64>,
    pub log_level: String,
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub inference: InferenceConfig,
    pub metrics: MetricsConfig,
    pub llm: LlmConfig,
    pub annotate: AnnotateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            log_level: "info".into(),
            synth: SynthConfig::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            inference: InferenceConfig { decoding: Decoding::Beam(4), ..InferenceConfig::default() },
            metrics: MetricsConfig::default(),
            llm: LlmConfig::default(),
            annotate: AnnotateConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` in order, then `seed`.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> anyhow::Result<Self> {
        let mut root = toml::Value::try_from(RunConfig::default()).context("default config")?;
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let file: toml::Table = text.parse().with_context(|| format!("parsing {}", p.display()))?;
            merge(&mut root, toml::Value::Table(file));
        }
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| anyhow!("override {o:?} is not key=value"))?;
            set_dotted(&mut root, key.trim(), parse_value(raw.trim()))?;
        }
        let mut cfg: RunConfig =
            root.try_into().map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
        if seed.is_some() {
            cfg.seed = seed;
        }
        if let Some(s) = cfg.seed {
            cfg.synth.seed = s;
            cfg.model.seed = s;
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.model.seed)
    }

    pub fn write_snapshot(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = toml::to_string_pretty(self).context("serializing config")?;
        std::fs::write(dir.join(SNAPSHOT_FILE), text)?;
        Ok(())
    }
}

/// Tables merge key by key, except tagged enum values (`strategy = ...`),
/// which replace the old value whole.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) if !o.contains_key("strategy") => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> anyhow::Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad override key {key:?}");
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let table = cur.as_table_mut().ok_or_else(|| anyhow!("{key}: {p} is not a section"))?;
        cur = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cur.as_table_mut().ok_or_else(|| anyhow!("{key}: parent is not a section"))?;
    let last = parts[parts.len() - 1].to_string();
    match table.get_mut(&last) {
        Some(existing) => merge(existing, value),
        None => {
            table.insert(last, value);
        }
    }
    Ok(())
}
