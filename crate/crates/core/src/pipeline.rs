//! Build → prompt → forecast → evaluate stages, including zero-shot corpus
//! assembly.
//!
//! Output layout under the configured `out_dir`:
//!
//! ```text
//! datasets/<scenario>/{split}_numerical.csv
//! datasets/<scenario>/{split}_x_prompt.txt, {split}_y_prompt.txt
//! manifests/<scenario>.json                      original key -> index
//! runs/<scenario>/seed_<n>/{split}_pred_<backend>.txt   numeric backends
//! runs/<scenario>/seed_<n>/{split}_yhat_<backend>.txt   text backends
//! reports/{split}_report.json, {split}_report.txt
//! zero_shot/<train..>_to_<test>/                 assembled corpus, runs, reports
//! ```

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Protocol, ScenarioConfig};
use crate::dataset::{build_datasets, read_numerical, write_numerical, NumericalDataset, Split};
use crate::decoding::decode_file;
use crate::error::{Error, Result};
use crate::eval::{evaluate, evaluate_numeric, AggregateReport, EvalResult};
use crate::forecast::{run_backend, BackendSpec, Predictions};
use crate::ingest::{ingest, load_records};
use crate::prompting::{prompt_file_names, read_lines, render_pairs, write_lines, write_prompt_files};

/// Command-line restrictions applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub backend: Option<String>,
    pub split: Option<Split>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    /// Apply the output-directory override to `cfg`.
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(out) = &self.out_dir {
            cfg.out_dir = out.clone();
        }
    }

    fn scenarios<'a>(&self, cfg: &'a ExperimentConfig) -> Result<Vec<&'a ScenarioConfig>> {
        match &self.scenario {
            Some(name) => Ok(vec![cfg.scenario(name)?]),
            None => Ok(cfg.scenarios.iter().collect()),
        }
    }

    fn backends<'a>(&self, cfg: &'a ExperimentConfig) -> Result<Vec<&'a BackendSpec>> {
        match &self.backend {
            Some(name) => Ok(vec![cfg.backend(name)?]),
            None => Ok(cfg.backends.iter().collect()),
        }
    }

    fn seeds(&self, cfg: &ExperimentConfig) -> Vec<u64> {
        match self.seed {
            Some(s) => vec![s],
            None => cfg.seeds.clone(),
        }
    }
}

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Layout { root: cfg.out_dir() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_dir(&self, scenario: &str) -> PathBuf {
        self.root.join("datasets").join(scenario)
    }

    pub fn numerical(&self, scenario: &str, split: Split) -> PathBuf {
        self.dataset_dir(scenario).join(format!("{split}_numerical.csv"))
    }

    pub fn prompts(&self, scenario: &str, split: Split) -> (PathBuf, PathBuf) {
        let (x, y) = prompt_file_names(split);
        let dir = self.dataset_dir(scenario);
        (dir.join(x), dir.join(y))
    }

    pub fn manifest(&self, scenario: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{scenario}.json"))
    }

    pub fn run_dir(&self, scenario: &str, seed: u64) -> PathBuf {
        self.root.join("runs").join(scenario).join(format!("seed_{seed}"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn zero_shot_dir(&self, train: &[String], test: &str) -> PathBuf {
        self.root
            .join("zero_shot")
            .join(format!("{}_to_{test}", train.join("-")))
    }
}

/// Prediction file for a backend within a run directory.
pub fn prediction_path(run_dir: &Path, split: Split, backend: &BackendSpec) -> PathBuf {
    let kind = if backend.is_numeric() { "pred" } else { "yhat" };
    run_dir.join(format!("{split}_{kind}_{}.txt", backend.name))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn check_aligned(expected: usize, what: &str, files: &[(&Path, usize)]) -> Result<()> {
    let bad: Vec<String> = files
        .iter()
        .filter(|(_, n)| *n != expected)
        .map(|(p, n)| format!("{} has {n} lines", p.display()))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Alignment(format!(
            "{what} has {expected} instances but {}",
            bad.join(", ")
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCount {
    pub scenario: String,
    pub split: Split,
    pub instances: usize,
}

/// Ingest, split and window every scenario; write numerical files and
/// manifests.
pub fn cmd_build(cfg: &ExperimentConfig, ov: &Overrides) -> Result<Vec<SplitCount>> {
    let layout = Layout::new(cfg);
    let mut counts = Vec::new();
    for sc in ov.scenarios(cfg)? {
        let path = cfg.resolve(&sc.source.path);
        let records = load_records(&path, &sc.source.columns)?;
        let selection = ingest(&records, &sc.ingest)?;
        let datasets = build_datasets(&sc.name, &selection.series, &sc.split, cfg.t_obs)?;
        create_dir(&layout.dataset_dir(&sc.name))?;
        for ds in &datasets {
            write_numerical(ds, &layout.numerical(&sc.name, ds.split))?;
            info!("{}/{}: {} instances", sc.name, ds.split, ds.len());
            counts.push(SplitCount {
                scenario: sc.name.clone(),
                split: ds.split,
                instances: ds.len(),
            });
        }
        let manifest = serde_json::to_string_pretty(&selection.manifest).expect("manifest") + "\n";
        write_string(&layout.manifest(&sc.name), &manifest)?;
    }
    Ok(counts)
}

fn load_dataset(layout: &Layout, scenario: &str, split: Split) -> Result<NumericalDataset> {
    read_numerical(&layout.numerical(scenario, split), scenario, split)
}

/// Render prompt files for every scenario and split.
pub fn cmd_prompt(cfg: &ExperimentConfig, ov: &Overrides) -> Result<Vec<SplitCount>> {
    let layout = Layout::new(cfg);
    let splits = match ov.split {
        Some(s) => vec![s],
        None => Split::ALL.to_vec(),
    };
    let mut counts = Vec::new();
    for sc in ov.scenarios(cfg)? {
        let tpl = cfg.template(sc)?;
        for &split in &splits {
            let ds = load_dataset(&layout, &sc.name, split)?;
            let pairs = render_pairs(&ds, &tpl);
            let (x, y) = write_prompt_files(&pairs, split, &layout.dataset_dir(&sc.name))?;
            check_aligned(
                ds.len(),
                &layout.numerical(&sc.name, split).display().to_string(),
                &[(&x, read_lines(&x)?.len()), (&y, read_lines(&y)?.len())],
            )?;
            counts.push(SplitCount {
                scenario: sc.name.clone(),
                split,
                instances: ds.len(),
            });
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileProvenance {
    pub scenario: String,
    pub split: Split,
    pub lines: usize,
    pub x_sha256: String,
    pub y_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroShotProvenance {
    /// Train parts in concatenation order.
    pub train_parts: Vec<FileProvenance>,
    pub combined_train_lines: usize,
    pub test: FileProvenance,
}

fn zero_shot_names(cfg: &ExperimentConfig) -> Result<(&[String], &str)> {
    match &cfg.protocol {
        Protocol::ZeroShot {
            train_scenarios,
            test_scenario,
        } => Ok((train_scenarios, test_scenario)),
        Protocol::Standard => Err(Error::Config(
            "config protocol is not zero_shot; set [protocol] kind = \"zero_shot\"".into(),
        )),
    }
}

fn provenance(scenario: &str, split: Split, x: &Path, y: &Path) -> Result<FileProvenance> {
    let xl = read_lines(x)?.len();
    let yl = read_lines(y)?.len();
    check_aligned(xl, &x.display().to_string(), &[(y, yl)])?;
    Ok(FileProvenance {
        scenario: scenario.to_string(),
        split,
        lines: xl,
        x_sha256: sha256_file(x)?,
        y_sha256: sha256_file(y)?,
    })
}

/// Concatenate the train scenarios' train prompts into one corpus and copy
/// the held-out scenario's test prompts alongside it.
pub fn cmd_assemble_zero_shot(cfg: &ExperimentConfig) -> Result<(PathBuf, ZeroShotProvenance)> {
    let (train, test) = zero_shot_names(cfg)?;
    if train.iter().any(|t| t == test) {
        return Err(Error::Config(format!(
            "zero-shot test scenario {test:?} is also a train scenario"
        )));
    }
    let layout = Layout::new(cfg);
    let dir = layout.zero_shot_dir(train, test);
    create_dir(&dir)?;

    let mut parts = Vec::new();
    let mut xs: Vec<String> = Vec::new();
    let mut ys: Vec<String> = Vec::new();
    for name in train {
        cfg.scenario(name)?;
        let (x, y) = layout.prompts(name, Split::Train);
        parts.push(provenance(name, Split::Train, &x, &y)?);
        xs.extend(read_lines(&x)?);
        ys.extend(read_lines(&y)?);
    }
    let (train_x, train_y) = prompt_file_names(Split::Train);
    write_lines(&dir.join(train_x), &xs)?;
    write_lines(&dir.join(train_y), &ys)?;

    cfg.scenario(test)?;
    let (tx, ty) = layout.prompts(test, Split::Test);
    let test_prov = provenance(test, Split::Test, &tx, &ty)?;
    let (test_x, test_y) = prompt_file_names(Split::Test);
    for (src, name) in [(&tx, test_x), (&ty, test_y)] {
        let dst = dir.join(name);
        std::fs::copy(src, &dst).map_err(|e| Error::io(&dst, e))?;
    }

    let prov = ZeroShotProvenance {
        train_parts: parts,
        combined_train_lines: xs.len(),
        test: test_prov,
    };
    write_string(
        &dir.join("provenance.json"),
        &(serde_json::to_string_pretty(&prov).expect("provenance") + "\n"),
    )?;
    Ok((dir, prov))
}

/// One forecasting job: which data to read and where to write.
struct Job<'a> {
    scenario: &'a ScenarioConfig,
    split: Split,
    /// Directory holding `{split}_x_prompt.txt` / `{split}_y_prompt.txt`.
    prompt_dir: PathBuf,
    /// Run directory for a seed.
    run_dir: Box<dyn Fn(u64) -> PathBuf + 'a>,
}

fn jobs<'a>(cfg: &'a ExperimentConfig, ov: &Overrides, layout: &'a Layout) -> Result<Vec<Job<'a>>> {
    match &cfg.protocol {
        Protocol::Standard => {
            let split = ov.split.unwrap_or(Split::Test);
            Ok(ov
                .scenarios(cfg)?
                .into_iter()
                .map(|sc| Job {
                    scenario: sc,
                    split,
                    prompt_dir: layout.dataset_dir(&sc.name),
                    run_dir: Box::new(move |seed| layout.run_dir(&sc.name, seed)),
                })
                .collect())
        }
        Protocol::ZeroShot {
            train_scenarios,
            test_scenario,
        } => {
            if ov.split.is_some_and(|s| s != Split::Test) {
                return Err(Error::Config(
                    "the zero-shot protocol evaluates only the test split".into(),
                ));
            }
            if ov.scenario.as_ref().is_some_and(|s| s != test_scenario) {
                return Err(Error::Config(format!(
                    "the zero-shot protocol evaluates only {test_scenario:?}"
                )));
            }
            let dir = layout.zero_shot_dir(train_scenarios, test_scenario);
            let runs = dir.join("runs");
            Ok(vec![Job {
                scenario: cfg.scenario(test_scenario)?,
                split: Split::Test,
                prompt_dir: dir,
                run_dir: Box::new(move |seed| runs.join(format!("seed_{seed}"))),
            }])
        }
    }
}

fn reports_dir(cfg: &ExperimentConfig, layout: &Layout) -> PathBuf {
    match &cfg.protocol {
        Protocol::Standard => layout.reports_dir(),
        Protocol::ZeroShot {
            train_scenarios,
            test_scenario,
        } => layout.zero_shot_dir(train_scenarios, test_scenario).join("reports"),
    }
}

/// Read prompt files if present and check them against the dataset size.
fn aligned_prompts(job: &Job, n: usize, need: bool) -> Result<Option<Vec<String>>> {
    let (xn, yn) = prompt_file_names(job.split);
    let x = job.prompt_dir.join(xn);
    let y = job.prompt_dir.join(yn);
    if !x.exists() && !need {
        return Ok(None);
    }
    let xs = read_lines(&x)?;
    let yl = read_lines(&y)?.len();
    check_aligned(
        n,
        &format!("{}/{}", job.scenario.name, job.split),
        &[(&x, xs.len()), (&y, yl)],
    )?;
    Ok(Some(xs))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForecastOutput {
    pub scenario: String,
    pub backend: String,
    pub seed: u64,
    pub path: PathBuf,
    pub predictions: usize,
}

/// Run the selected backends and write one prediction file per
/// (scenario, backend, seed).
pub fn cmd_forecast(cfg: &ExperimentConfig, ov: &Overrides) -> Result<Vec<ForecastOutput>> {
    let layout = Layout::new(cfg);
    let backends = ov.backends(cfg)?;
    let mut outputs = Vec::new();
    for job in jobs(cfg, ov, &layout)? {
        let tpl = cfg.template(job.scenario)?;
        let ds = load_dataset(&layout, &job.scenario.name, job.split)?;
        let needs_prompts = backends.iter().any(|b| matches!(b.kind, crate::forecast::BackendKind::LmService { .. }));
        let prompts = aligned_prompts(&job, ds.len(), needs_prompts)?.unwrap_or_default();
        for backend in &backends {
            for seed in ov.seeds(cfg) {
                let run = run_backend(backend, &ds, &prompts, &tpl, seed)?;
                let dir = (job.run_dir)(seed);
                create_dir(&dir)?;
                let path = prediction_path(&dir, job.split, backend);
                match &run.predictions {
                    Predictions::Numeric(v) => write_lines(&path, v.iter().map(|x| x.to_string()))?,
                    Predictions::Text(t) => write_lines(&path, t)?,
                }
                info!("{}: {} predictions", path.display(), run.predictions.len());
                outputs.push(ForecastOutput {
                    scenario: job.scenario.name.clone(),
                    backend: backend.name.clone(),
                    seed,
                    path,
                    predictions: run.predictions.len(),
                });
            }
        }
    }
    Ok(outputs)
}

fn read_numeric_predictions(path: &Path) -> Result<Vec<f64>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::Parse {
                source_name: path.display().to_string(),
                line: i as u64 + 1,
                column: String::new(),
                message: format!("not a number: {l:?}"),
            })
        })
        .collect()
}

/// Decode and score every prediction file, then write JSON and text reports.
pub fn cmd_eval(cfg: &ExperimentConfig, ov: &Overrides) -> Result<(PathBuf, AggregateReport)> {
    let layout = Layout::new(cfg);
    let backends = ov.backends(cfg)?;
    let mut results = Vec::new();
    let mut split_label = Split::Test;
    for job in jobs(cfg, ov, &layout)? {
        split_label = job.split;
        let tpl = cfg.template(job.scenario)?;
        let ds = load_dataset(&layout, &job.scenario.name, job.split)?;
        let truths = ds.targets();
        aligned_prompts(&job, ds.len(), false)?;
        for backend in &backends {
            for seed in ov.seeds(cfg) {
                let path = prediction_path(&(job.run_dir)(seed), job.split, backend);
                let metrics = if backend.is_numeric() {
                    let preds = read_numeric_predictions(&path)?;
                    check_aligned(ds.len(), &job.scenario.name, &[(&path, preds.len())])?;
                    evaluate_numeric(&preds, &truths)?
                } else {
                    let preds = decode_file(&path, &tpl, cfg.decode_mode)?;
                    check_aligned(ds.len(), &job.scenario.name, &[(&path, preds.len())])?;
                    evaluate(&preds, &truths)?
                };
                results.push(EvalResult {
                    scenario: job.scenario.name.clone(),
                    backend: backend.name.clone(),
                    seed,
                    metrics,
                });
            }
        }
    }
    let report = AggregateReport::from_results(results)?;
    let dir = reports_dir(cfg, &layout);
    create_dir(&dir)?;
    let json = dir.join(format!("{split_label}_report.json"));
    write_string(&json, &report.to_json())?;
    write_string(&dir.join(format!("{split_label}_report.txt")), &report.to_table())?;
    Ok((json, report))
}
