//! Prediction backends: naive numeric baselines, a remote language-model
//! service, and test doubles.

mod lm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use lm::{LmClient, LmRequest, LmResponse};

use crate::dataset::{Instance, NumericalDataset, Split};
use crate::error::{Error, Result};
use crate::prompting::{round_value, ScenarioTemplate};

/// Copy yesterday: the last observed value.
pub fn predict_cy(inst: &Instance) -> Result<f64> {
    inst.window
        .last()
        .copied()
        .ok_or_else(|| Error::Input("empty observation window".into()))
}

/// Historical average: mean of the observation window.
pub fn predict_ha(inst: &Instance) -> Result<f64> {
    if inst.window.is_empty() {
        return Err(Error::Input("empty observation window".into()));
    }
    Ok(inst.window.iter().sum::<f64>() / inst.window.len() as f64)
}

/// Copy last week: the observed value dated seven days before the target.
pub fn predict_clw(inst: &Instance) -> Result<f64> {
    let t_obs = inst.t_obs();
    if t_obs < 7 {
        return Err(Error::Input(format!(
            "copy-last-week needs at least 7 observed days, window has {t_obs}"
        )));
    }
    Ok(inst.window[t_obs - 7])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericBaseline {
    Cy,
    Ha,
    Clw,
}

impl NumericBaseline {
    pub fn predict(&self, inst: &Instance) -> Result<f64> {
        match self {
            NumericBaseline::Cy => predict_cy(inst),
            NumericBaseline::Ha => predict_ha(inst),
            NumericBaseline::Clw => predict_clw(inst),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NumericBaseline::Cy => "cy",
            NumericBaseline::Ha => "ha",
            NumericBaseline::Clw => "clw",
        }
    }
}

impl fmt::Display for NumericBaseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NumericBaseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cy" => Ok(NumericBaseline::Cy),
            "ha" => Ok(NumericBaseline::Ha),
            "clw" => Ok(NumericBaseline::Clw),
            other => Err(Error::Config(format!("unknown numeric baseline {other:?}"))),
        }
    }
}

/// Render a numeric baseline's prediction as the template's answer sentence.
pub fn oracle_wrap(inst: &Instance, inner: NumericBaseline, tpl: &ScenarioTemplate) -> Result<String> {
    let v = inner.predict(inst)?;
    Ok(tpl.render_answer(round_value(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the first retry; doubles on each subsequent retry.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_ms: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
    pub temperature: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_new_tokens: 64,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Cy,
    Ha,
    Clw,
    LmService {
        endpoint: String,
        /// Environment variable holding a bearer token, if any.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    OracleWrap {
        inner: NumericBaseline,
    },
    FixedMock {
        text: String,
    },
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl BackendSpec {
    pub fn new(name: &str, kind: BackendKind) -> Self {
        BackendSpec {
            name: name.to_string(),
            kind,
            generation: GenerationParams::default(),
            concurrency_limit: default_concurrency(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        {
            return Err(Error::Config(format!(
                "backend name {:?} must be non-empty and use only [A-Za-z0-9_.-]",
                self.name
            )));
        }
        if self.concurrency_limit == 0 {
            return Err(Error::Config(format!(
                "backend {}: concurrency_limit must be at least 1",
                self.name
            )));
        }
        if !(self.generation.temperature >= 0.0) {
            return Err(Error::Config(format!(
                "backend {}: temperature must be non-negative",
                self.name
            )));
        }
        if self.retry.max_attempts == 0 {
            return Err(Error::Config(format!(
                "backend {}: retry.max_attempts must be at least 1",
                self.name
            )));
        }
        Ok(())
    }

    /// The numeric baseline behind a purely numeric backend.
    pub fn numeric(&self) -> Option<NumericBaseline> {
        match self.kind {
            BackendKind::Cy => Some(NumericBaseline::Cy),
            BackendKind::Ha => Some(NumericBaseline::Ha),
            BackendKind::Clw => Some(NumericBaseline::Clw),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Numeric(v) => v.len(),
            Predictions::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRun {
    pub scenario: String,
    pub split: Split,
    pub backend: String,
    pub seed: u64,
    pub predictions: Predictions,
}

/// Produce predictions for every instance of `dataset`, in order.
///
/// `prompts` are the input prompts aligned with the dataset; only the
/// language-model backend reads them.
pub fn run_backend(
    spec: &BackendSpec,
    dataset: &NumericalDataset,
    prompts: &[String],
    tpl: &ScenarioTemplate,
    seed: u64,
) -> Result<ForecastRun> {
    spec.validate()?;
    let predictions = match &spec.kind {
        BackendKind::Cy | BackendKind::Ha | BackendKind::Clw => {
            let baseline = spec.numeric().expect("numeric kind");
            Predictions::Numeric(
                dataset
                    .instances
                    .iter()
                    .map(|i| baseline.predict(i))
                    .collect::<Result<_>>()?,
            )
        }
        BackendKind::OracleWrap { inner } => Predictions::Text(
            dataset
                .instances
                .iter()
                .map(|i| oracle_wrap(i, *inner, tpl))
                .collect::<Result<_>>()?,
        ),
        BackendKind::FixedMock { text } => Predictions::Text(vec![text.clone(); dataset.len()]),
        BackendKind::LmService { .. } => {
            if prompts.len() != dataset.len() {
                return Err(Error::Alignment(format!(
                    "{} prompts for {} instances",
                    prompts.len(),
                    dataset.len()
                )));
            }
            let client = LmClient::from_spec(spec)?;
            Predictions::Text(client.generate(prompts, seed)?)
        }
    };
    Ok(ForecastRun {
        scenario: dataset.scenario.clone(),
        split: dataset.split,
        backend: spec.name.clone(),
        seed,
        predictions,
    })
}
