//! Experiment configuration, loaded from a single TOML (or JSON) file.
//!
//! ```toml
//! out_dir = "out"
//! t_obs = 15
//! seeds = [1, 2, 3, 4, 5]
//! decode_mode = "strict"
//!
//! [protocol]
//! kind = "zero_shot"
//! train_scenarios = ["ct", "ecl"]
//! test_scenario = "sg"
//!
//! [[scenarios]]
//! name = "ct"
//! template = "ct"
//! [scenarios.source]
//! path = "raw/ct.csv"
//! object = "city"
//! timestamp = "date"
//! value = "temp"
//! [scenarios.ingest]
//! collection_start = "2017-01-01"
//! collection_end = "2020-04-30"
//! target_object_count = 110
//! selection_seed = 7
//! [scenarios.split]
//! mode = "dates"
//! train_end = "2019-04-30"
//! val_end = "2019-08-31"
//!
//! [[backends]]
//! name = "cy"
//! kind = "cy"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{SplitSpec, DEFAULT_T_OBS};
use crate::decoding::DecodeMode;
use crate::error::{Error, Result};
use crate::forecast::BackendSpec;
use crate::ingest::{ColumnMapping, IngestConfig};
use crate::prompting::{ScenarioTemplate, TemplateDef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub columns: ColumnMapping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateSource {
    /// One of the built-in templates: `ct`, `ecl` or `sg`.
    Builtin(String),
    File { file: PathBuf },
    Inline(TemplateDef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub source: SourceConfig,
    pub ingest: IngestConfig,
    #[serde(default)]
    pub split: SplitSpec,
    pub template: TemplateSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Standard,
    ZeroShot {
        train_scenarios: Vec<String>,
        test_scenario: String,
    },
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_t_obs() -> usize {
    DEFAULT_T_OBS
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_t_obs")]
    pub t_obs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub decode_mode: DecodeMode,
    #[serde(default)]
    pub protocol: Protocol,
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default)]
    pub backends: Vec<BackendSpec>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn check_name(kind: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{kind} name {name:?} must be non-empty and use only [A-Za-z0-9_-]"
        )))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        if path.extension().is_some_and(|e| e == "json") {
            let mut cfg: ExperimentConfig =
                serde_json::from_str(&text).map_err(|source| Error::Json {
                    path: path.to_path_buf(),
                    source,
                })?;
            cfg.base_dir = base;
            cfg.validate()?;
            Ok(cfg)
        } else {
            Self::from_toml_str(&text, &base)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_obs == 0 {
            return Err(Error::Config("t_obs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut names = HashSet::new();
        for s in &self.scenarios {
            check_name("scenario", &s.name)?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate scenario {:?}", s.name)));
            }
            s.ingest.validate()?;
        }
        let mut backends = HashSet::new();
        for b in &self.backends {
            b.validate()?;
            if !backends.insert(b.name.as_str()) {
                return Err(Error::Config(format!("duplicate backend {:?}", b.name)));
            }
        }
        if let Protocol::ZeroShot {
            train_scenarios,
            test_scenario,
        } = &self.protocol
        {
            if train_scenarios.is_empty() {
                return Err(Error::Config("zero-shot protocol needs train scenarios".into()));
            }
            if train_scenarios.contains(test_scenario) {
                return Err(Error::Config(format!(
                    "zero-shot test scenario {test_scenario:?} is also a train scenario"
                )));
            }
            for name in train_scenarios.iter().chain(std::iter::once(test_scenario)) {
                if !names.contains(name.as_str()) {
                    return Err(Error::Config(format!(
                        "zero-shot protocol names unknown scenario {name:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn scenario(&self, name: &str) -> Result<&ScenarioConfig> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("unknown scenario {name:?}")))
    }

    pub fn backend(&self, name: &str) -> Result<&BackendSpec> {
        self.backends.iter().find(|b| b.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.backends.iter().map(|b| b.name.as_str()).collect();
            Error::Config(format!(
                "unknown backend {name:?} (configured: {})",
                known.join(", ")
            ))
        })
    }

    pub fn template(&self, scenario: &ScenarioConfig) -> Result<ScenarioTemplate> {
        match &scenario.template {
            TemplateSource::Builtin(name) => ScenarioTemplate::builtin(name).ok_or_else(|| {
                Error::Config(format!(
                    "scenario {}: unknown built-in template {name:?} (expected ct, ecl or sg)",
                    scenario.name
                ))
            }),
            TemplateSource::File { file } => ScenarioTemplate::from_file(&self.resolve(file)),
            TemplateSource::Inline(def) => ScenarioTemplate::new(def.clone()),
        }
    }
}
