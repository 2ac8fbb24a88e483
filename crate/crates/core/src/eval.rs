//! RMSE, MAE and Missing Rate, plus aggregation across seeded runs.
//!
//! Missing predictions are left out of RMSE/MAE and counted only by the
//! Missing Rate. Standard deviations across runs are population (divide by
//! `n`) deviations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decoding::DecodedPrediction;
use crate::error::{Error, Result};

/// `(n_test - n_decoded) / n_test * 100`, with a single rounding step.
pub fn missing_rate(n_test: usize, n_decoded: usize) -> Result<f64> {
    if n_test == 0 {
        return Err(Error::Eval("missing rate is undefined for an empty test set".into()));
    }
    if n_decoded > n_test {
        return Err(Error::Eval(format!(
            "decoded count {n_decoded} exceeds test count {n_test}"
        )));
    }
    Ok((n_test - n_decoded) as f64 * 100.0 / n_test as f64)
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Eval(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Eval("cannot score an empty prediction list".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let abs: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(abs / pred.len() as f64)
}

/// Scores for one prediction set. RMSE and MAE are `None` when nothing
/// decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub missing_rate: f64,
    pub n_test: usize,
    pub n_decoded: usize,
}

pub fn evaluate(preds: &[DecodedPrediction], truths: &[f64]) -> Result<Metrics> {
    if preds.len() != truths.len() {
        return Err(Error::Eval(format!(
            "{} predictions for {} targets",
            preds.len(),
            truths.len()
        )));
    }
    let (p, t): (Vec<f64>, Vec<f64>) = preds
        .iter()
        .zip(truths)
        .filter_map(|(p, t)| p.value.map(|v| (v, *t)))
        .unzip();
    let n_test = truths.len();
    let n_decoded = p.len();
    let missing_rate = missing_rate(n_test, n_decoded)?;
    let (rmse, mae) = if n_decoded == 0 {
        (None, None)
    } else {
        (Some(rmse(&p, &t)?), Some(mae(&p, &t)?))
    };
    Ok(Metrics {
        rmse,
        mae,
        missing_rate,
        n_test,
        n_decoded,
    })
}

/// Score numeric predictions, which are always fully decoded.
pub fn evaluate_numeric(pred: &[f64], truths: &[f64]) -> Result<Metrics> {
    let preds: Vec<DecodedPrediction> = pred
        .iter()
        .enumerate()
        .map(|(i, v)| DecodedPrediction::decoded(i, *v))
        .collect();
    evaluate(&preds, truths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub scenario: String,
    pub backend: String,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub backend: String,
    pub runs: usize,
    /// Over the runs where the metric is defined.
    pub rmse: Option<Stat>,
    pub mae: Option<Stat>,
    pub missing_rate: Stat,
}

pub fn aggregate_runs(results: &[EvalResult]) -> Result<AggregateRow> {
    let first = results
        .first()
        .ok_or_else(|| Error::Eval("no runs to aggregate".into()))?;
    if let Some(odd) = results
        .iter()
        .find(|r| r.scenario != first.scenario || r.backend != first.backend)
    {
        return Err(Error::Eval(format!(
            "cannot aggregate ({}, {}) with ({}, {})",
            first.scenario, first.backend, odd.scenario, odd.backend
        )));
    }
    let collect = |f: fn(&Metrics) -> Option<f64>| -> Vec<f64> {
        results.iter().filter_map(|r| f(&r.metrics)).collect()
    };
    Ok(AggregateRow {
        scenario: first.scenario.clone(),
        backend: first.backend.clone(),
        runs: results.len(),
        rmse: Stat::of(&collect(|m| m.rmse)),
        mae: Stat::of(&collect(|m| m.mae)),
        missing_rate: Stat::of(&collect(|m| Some(m.missing_rate))).expect("non-empty"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub results: Vec<EvalResult>,
    pub aggregate: Vec<AggregateRow>,
}

impl AggregateReport {
    /// Group results by (scenario, backend), preserving first-seen order.
    pub fn from_results(results: Vec<EvalResult>) -> Result<Self> {
        let mut order: Vec<(String, String)> = Vec::new();
        let mut groups: BTreeMap<(String, String), Vec<EvalResult>> = BTreeMap::new();
        for r in &results {
            let key = (r.scenario.clone(), r.backend.clone());
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(r.clone());
        }
        let aggregate = order
            .iter()
            .map(|k| aggregate_runs(&groups[k]))
            .collect::<Result<_>>()?;
        Ok(AggregateReport { results, aggregate })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Aligned plain-text table, one row per (scenario, backend).
    pub fn to_table(&self) -> String {
        let fmt = |s: Option<Stat>| match s {
            Some(s) => format!("{:.3}±{:.3}", s.mean, s.std),
            None => "n/a".to_string(),
        };
        let header = ["scenario", "backend", "RMSE", "MAE", "MissingRate(%)"].map(String::from);
        let mut rows = vec![header];
        for r in &self.aggregate {
            rows.push([
                r.scenario.clone(),
                r.backend.clone(),
                fmt(r.rmse),
                fmt(r.mae),
                fmt(Some(r.missing_rate)),
            ]);
        }
        let widths: Vec<usize> = (0..5)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        }
        out
    }
}
