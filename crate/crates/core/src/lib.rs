//! Forecast time series by turning numeric histories into natural-language
//! prompts and decoding generated answers back into numbers.
//!
//! The crate covers the whole loop: raw-record ingest and anonymized object
//! selection ([`ingest`]), chronological splits and sliding windows
//! ([`dataset`]), template rendering ([`prompting`]), answer decoding
//! ([`decoding`]), prediction backends ([`forecast`]), metrics ([`eval`])
//! and the staged pipeline behind the `promptcast` binary ([`pipeline`]).

pub mod config;
pub mod dataset;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod ingest;
pub mod pipeline;
pub mod prompting;

pub use dataset::{Instance, NumericalDataset, Split, SplitSpec};
pub use decoding::{DecodeMode, DecodedPrediction};
pub use error::{Error, Result};
pub use eval::{AggregateReport, EvalResult, Metrics};
pub use forecast::{BackendSpec, NumericBaseline};
pub use ingest::ObjectSeries;
pub use prompting::{PromptPair, ScenarioTemplate};
