//! Python bindings for the `promptcast` crate.
//!
//! Dates cross the boundary as ISO `YYYY-MM-DD` strings. Library errors
//! surface as `ValueError`, except I/O failures which raise `OSError`.

use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use promptcast::config::ExperimentConfig;
use promptcast::decoding::{self, DecodeMode};
use promptcast::pipeline::{self, Overrides};
use promptcast::{dataset, eval, forecast, prompting, Error, NumericBaseline, Split};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    s.parse()
        .map_err(|_| PyValueError::new_err(format!("invalid date {s:?}, expected YYYY-MM-DD")))
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| PyValueError::new_err(e.to_string()))
}

/// One sliding-window forecasting instance.
#[pyclass(name = "Instance", module = "promptcast_py", from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: dataset::Instance,
}

#[pymethods]
impl PyInstance {
    #[new]
    fn new(object_index: usize, window_start: &str, window: Vec<f64>, target_value: f64) -> PyResult<Self> {
        Ok(PyInstance {
            inner: dataset::Instance {
                object_index,
                window_start: parse_date(window_start)?,
                window,
                target_value,
            },
        })
    }

    #[getter]
    fn object_index(&self) -> usize {
        self.inner.object_index
    }

    #[getter]
    fn window_start(&self) -> String {
        self.inner.window_start.to_string()
    }

    #[getter]
    fn window(&self) -> Vec<f64> {
        self.inner.window.clone()
    }

    #[getter]
    fn target_value(&self) -> f64 {
        self.inner.target_value
    }

    #[getter]
    fn target_date(&self) -> String {
        self.inner.target_date().to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.t_obs()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(object_index={}, window_start='{}', t_obs={}, target_value={})",
            self.inner.object_index,
            self.inner.window_start,
            self.inner.t_obs(),
            self.inner.target_value
        )
    }
}

/// A validated prompt template.
#[pyclass(name = "ScenarioTemplate", module = "promptcast_py", from_py_object)]
#[derive(Clone)]
struct PyTemplate {
    inner: prompting::ScenarioTemplate,
}

#[pymethods]
impl PyTemplate {
    #[new]
    fn new(name: &str, context: &str, question: &str, answer: &str) -> PyResult<Self> {
        let inner = prompting::ScenarioTemplate::from_patterns(name, context, question, answer).map_err(to_py)?;
        Ok(PyTemplate { inner })
    }

    /// One of "ct", "ecl", "sg".
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        prompting::ScenarioTemplate::builtin(name)
            .map(|inner| PyTemplate { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown builtin template {name:?}")))
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let inner = prompting::ScenarioTemplate::from_file(&path).map_err(to_py)?;
        Ok(PyTemplate { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    fn render_input(&self, inst: &PyInstance) -> String {
        self.inner.render_input(&inst.inner)
    }

    fn render_output(&self, inst: &PyInstance) -> String {
        self.inner.render_output(&inst.inner)
    }

    fn render_answer(&self, value: i64) -> String {
        self.inner.render_answer(value)
    }

    #[pyo3(signature = (text, mode = "strict"))]
    fn decode(&self, text: &str, mode: &str) -> PyResult<Option<f64>> {
        Ok(decoding::decode_value(text, &self.inner, parse::<DecodeMode>(mode)?))
    }

    fn __repr__(&self) -> String {
        format!("ScenarioTemplate('{}')", self.inner.name())
    }
}

#[pyfunction]
fn format_date(date: &str) -> PyResult<String> {
    Ok(prompting::format_date(parse_date(date)?))
}

#[pyfunction]
fn serialize_values(values: Vec<f64>) -> String {
    prompting::serialize_values(&values)
}

#[pyfunction]
fn render_input(inst: &PyInstance, template: &PyTemplate) -> String {
    prompting::render_input(&inst.inner, &template.inner)
}

#[pyfunction]
fn render_output(inst: &PyInstance, template: &PyTemplate) -> String {
    prompting::render_output(&inst.inner, &template.inner)
}

/// Decode one generated line; None when it is missing.
#[pyfunction]
#[pyo3(signature = (text, template, mode = "strict"))]
fn parse_output(text: &str, template: &PyTemplate, mode: &str) -> PyResult<Option<f64>> {
    Ok(decoding::decode_value(text, &template.inner, parse::<DecodeMode>(mode)?))
}

#[pyfunction]
fn predict_cy(inst: &PyInstance) -> PyResult<f64> {
    forecast::predict_cy(&inst.inner).map_err(to_py)
}

#[pyfunction]
fn predict_ha(inst: &PyInstance) -> PyResult<f64> {
    forecast::predict_ha(&inst.inner).map_err(to_py)
}

#[pyfunction]
fn predict_clw(inst: &PyInstance) -> PyResult<f64> {
    forecast::predict_clw(&inst.inner).map_err(to_py)
}

#[pyfunction]
fn oracle_wrap(inst: &PyInstance, inner: &str, template: &PyTemplate) -> PyResult<String> {
    forecast::oracle_wrap(&inst.inner, parse::<NumericBaseline>(inner)?, &template.inner).map_err(to_py)
}

#[pyfunction]
fn rmse(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    eval::rmse(&pred, &truth).map_err(to_py)
}

#[pyfunction]
fn mae(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    eval::mae(&pred, &truth).map_err(to_py)
}

#[pyfunction]
fn missing_rate(n_test: usize, n_decoded: usize) -> PyResult<f64> {
    eval::missing_rate(n_test, n_decoded).map_err(to_py)
}

/// Decode `texts` with `template` and score them against `truths`.
/// Returns a dict with rmse, mae (None if nothing decoded), missing_rate,
/// n_test and n_decoded.
#[pyfunction]
#[pyo3(signature = (texts, truths, template, mode = "strict"))]
fn evaluate<'py>(
    py: Python<'py>,
    texts: Vec<String>,
    truths: Vec<f64>,
    template: &PyTemplate,
    mode: &str,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let preds = decoding::batch_decode(&texts, &template.inner, parse::<DecodeMode>(mode)?);
    let m = eval::evaluate(&preds, &truths).map_err(to_py)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("rmse", m.rmse)?;
    d.set_item("mae", m.mae)?;
    d.set_item("missing_rate", m.missing_rate)?;
    d.set_item("n_test", m.n_test)?;
    d.set_item("n_decoded", m.n_decoded)?;
    Ok(d)
}

/// Slide a window of `t_obs` days over one daily series.
#[pyfunction]
#[pyo3(signature = (object_index, start_date, values, t_obs = dataset::DEFAULT_T_OBS))]
fn make_instances(object_index: usize, start_date: &str, values: Vec<f64>, t_obs: usize) -> PyResult<Vec<PyInstance>> {
    if t_obs == 0 {
        return Err(PyValueError::new_err("t_obs must be positive"));
    }
    let series = promptcast::ObjectSeries {
        object_index,
        start_date: parse_date(start_date)?,
        values,
    };
    Ok(dataset::make_instances(&series, t_obs)
        .into_iter()
        .map(|inner| PyInstance { inner })
        .collect())
}

#[pyfunction]
fn expected_instance_count(days: usize, objects: usize, t_obs: usize) -> usize {
    dataset::expected_instance_count(days, objects, t_obs)
}

fn load_config(config: PathBuf, out_dir: Option<PathBuf>) -> PyResult<(ExperimentConfig, Overrides)> {
    let mut cfg = ExperimentConfig::load(&config).map_err(to_py)?;
    let ov = Overrides {
        out_dir,
        ..Default::default()
    };
    ov.apply(&mut cfg);
    Ok((cfg, ov))
}

/// Ingest, split and window every scenario. Returns (scenario, split, count) rows.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None))]
fn build(config: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Vec<(String, String, usize)>> {
    let (cfg, ov) = load_config(config, out_dir)?;
    let counts = pipeline::cmd_build(&cfg, &ov).map_err(to_py)?;
    Ok(counts.into_iter().map(|c| (c.scenario, c.split.to_string(), c.instances)).collect())
}

/// Render prompt files from the numerical datasets.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None))]
fn prompt(config: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Vec<(String, String, usize)>> {
    let (cfg, ov) = load_config(config, out_dir)?;
    let counts = pipeline::cmd_prompt(&cfg, &ov).map_err(to_py)?;
    Ok(counts.into_iter().map(|c| (c.scenario, c.split.to_string(), c.instances)).collect())
}

/// Run forecasts; returns the prediction file paths.
#[pyfunction]
#[pyo3(signature = (config, backend = None, split = None, out_dir = None))]
fn run_forecast(
    config: PathBuf,
    backend: Option<String>,
    split: Option<&str>,
    out_dir: Option<PathBuf>,
) -> PyResult<Vec<PathBuf>> {
    let (cfg, mut ov) = load_config(config, out_dir)?;
    ov.backend = backend;
    ov.split = split.map(parse::<Split>).transpose()?;
    let outs = pipeline::cmd_forecast(&cfg, &ov).map_err(to_py)?;
    Ok(outs.into_iter().map(|o| o.path).collect())
}

/// Score the predictions; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (config, backend = None, split = None, out_dir = None))]
fn run_eval(config: PathBuf, backend: Option<String>, split: Option<&str>, out_dir: Option<PathBuf>) -> PyResult<String> {
    let (cfg, mut ov) = load_config(config, out_dir)?;
    ov.backend = backend;
    ov.split = split.map(parse::<Split>).transpose()?;
    let (_, report) = pipeline::cmd_eval(&cfg, &ov).map_err(to_py)?;
    Ok(report.to_json())
}

#[pymodule]
fn promptcast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyTemplate>()?;
    m.add_function(wrap_pyfunction!(format_date, m)?)?;
    m.add_function(wrap_pyfunction!(serialize_values, m)?)?;
    m.add_function(wrap_pyfunction!(render_input, m)?)?;
    m.add_function(wrap_pyfunction!(render_output, m)?)?;
    m.add_function(wrap_pyfunction!(parse_output, m)?)?;
    m.add_function(wrap_pyfunction!(predict_cy, m)?)?;
    m.add_function(wrap_pyfunction!(predict_ha, m)?)?;
    m.add_function(wrap_pyfunction!(predict_clw, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_wrap, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(missing_rate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(make_instances, m)?)?;
    m.add_function(wrap_pyfunction!(expected_instance_count, m)?)?;
    m.add_function(wrap_pyfunction!(build, m)?)?;
    m.add_function(wrap_pyfunction!(prompt, m)?)?;
    m.add_function(wrap_pyfunction!(run_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(run_eval, m)?)?;
    Ok(())
}
