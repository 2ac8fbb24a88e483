//! Raw record loading, daily aggregation, completeness filtering and
//! anonymized object selection.
//!
//! The output of this stage is a list of [`ObjectSeries`], one per selected
//! object, each indexed `1..=M` and covering every day of the collection
//! period exactly once. Original object keys never leave this module except
//! through the [`Manifest`], which callers keep apart from published data.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub object_key: String,
    pub date: NaiveDate,
    /// Time of day, when the source is sub-daily.
    pub time: Option<NaiveTime>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    None,
    DailySum,
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Period {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::Config(format!(
                "collection period start {start} is after end {end}"
            )));
        }
        Ok(Period { start, end })
    }

    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Names of the columns holding the object key, timestamp and value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub object: String,
    pub timestamp: String,
    pub value: String,
    /// Field delimiter; inferred from the file extension when absent
    /// (`.tsv`/`.tab` use tabs, everything else commas).
    #[serde(default)]
    pub delimiter: Option<char>,
}

impl ColumnMapping {
    pub fn new(object: &str, timestamp: &str, value: &str) -> Self {
        ColumnMapping {
            object: object.to_string(),
            timestamp: timestamp.to_string(),
            value: value.to_string(),
            delimiter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub collection_start: NaiveDate,
    pub collection_end: NaiveDate,
    #[serde(default)]
    pub aggregation: Aggregation,
    pub target_object_count: usize,
    #[serde(default)]
    pub selection_seed: u64,
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        self.period()?;
        if self.target_object_count == 0 {
            return Err(Error::Config("target_object_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> Result<Period> {
        Period::new(self.collection_start, self.collection_end)
    }
}

/// One anonymized object's contiguous daily series.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSeries {
    pub object_index: usize,
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
}

impl ObjectSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Date of the last value. Equal to `start_date` minus one day for an
    /// empty series.
    pub fn end_date(&self) -> NaiveDate {
        self.start_date + chrono::Days::new(self.values.len() as u64) - chrono::Days::new(1)
    }

    pub fn date_at(&self, offset: usize) -> NaiveDate {
        self.start_date + chrono::Days::new(offset as u64)
    }
}

/// Daily values per original object key, ordered by key and date.
pub type SeriesMap = BTreeMap<String, BTreeMap<NaiveDate, f64>>;

/// Association between an original object key and its published index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub original_key: String,
    pub object_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub selection_seed: u64,
    pub complete_objects: usize,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub series: Vec<ObjectSeries>,
    pub manifest: Manifest,
}

fn parse_timestamp(raw: &str) -> Option<(NaiveDate, Option<NaiveTime>)> {
    let raw = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some((d, None));
    }
    const DATETIME_FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    DATETIME_FORMATS.iter().find_map(|fmt| {
        NaiveDateTime::parse_from_str(raw, fmt)
            .ok()
            .map(|dt| (dt.date(), Some(dt.time())))
    })
}

fn default_delimiter(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    }
}

/// Load records from a delimited file with a header row.
pub fn load_records(path: &Path, mapping: &ColumnMapping) -> Result<Vec<RawRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let delimiter = match mapping.delimiter {
        Some(c) if c.is_ascii() => c as u8,
        Some(c) => return Err(Error::Config(format!("delimiter {c:?} is not ASCII"))),
        None => default_delimiter(path),
    };
    read_records(file, delimiter, mapping, &path.display().to_string())
}

/// Parse records from any reader. `source_name` only labels errors.
pub fn read_records<R: Read>(
    reader: R,
    delimiter: u8,
    mapping: &ColumnMapping,
    source_name: &str,
) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);

    let parse_err = |line: u64, column: &str, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        column: column.to_string(),
        message,
    };

    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(parse_err(1, "", e.to_string())),
    };
    // An empty file has no header row at all.
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(1, name, "column not found in header".into()))
    };
    let object_col = find(&mapping.object)?;
    let time_col = find(&mapping.timestamp)?;
    let value_col = find(&mapping.value)?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, "", e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize, name: &str| {
            row.get(idx)
                .ok_or_else(|| parse_err(line, name, "missing field".into()))
        };

        let object_key = field(object_col, &mapping.object)?.trim().to_string();
        if object_key.is_empty() {
            return Err(parse_err(line, &mapping.object, "empty object key".into()));
        }
        let raw_ts = field(time_col, &mapping.timestamp)?;
        let (date, time) = parse_timestamp(raw_ts).ok_or_else(|| {
            parse_err(line, &mapping.timestamp, format!("unrecognized timestamp {raw_ts:?}"))
        })?;
        let raw_value = field(value_col, &mapping.value)?;
        let value: f64 = raw_value.trim().parse().map_err(|_| {
            parse_err(line, &mapping.value, format!("not a number: {raw_value:?}"))
        })?;
        if !value.is_finite() {
            return Err(parse_err(line, &mapping.value, format!("non-finite value {raw_value:?}")));
        }
        out.push(RawRecord {
            object_key,
            date,
            time,
            value,
        });
    }
    Ok(out)
}

/// Sum sub-daily records into one record per (object, date).
///
/// Output is ordered by object key then date. Days without records produce
/// nothing.
pub fn aggregate_daily(records: &[RawRecord]) -> Vec<RawRecord> {
    let mut sums: BTreeMap<(&str, NaiveDate), f64> = BTreeMap::new();
    for r in records {
        *sums.entry((r.object_key.as_str(), r.date)).or_insert(0.0) += r.value;
    }
    sums.into_iter()
        .map(|((key, date), value)| RawRecord {
            object_key: key.to_string(),
            date,
            time: None,
            value,
        })
        .collect()
}

/// Apply the configured aggregation mode.
pub fn aggregate(records: &[RawRecord], mode: Aggregation) -> Vec<RawRecord> {
    match mode {
        Aggregation::None => records.to_vec(),
        Aggregation::DailySum => aggregate_daily(records),
    }
}

/// Group daily records by object and keep only objects with exactly one
/// value for every day of `period`. Records dated outside the period are
/// ignored.
pub fn filter_complete(records: &[RawRecord], period: Period) -> Result<SeriesMap> {
    let mut map = SeriesMap::new();
    for r in records.iter().filter(|r| period.contains(r.date)) {
        let days = map.entry(r.object_key.clone()).or_default();
        if days.insert(r.date, r.value).is_some() {
            return Err(Error::Input(format!(
                "object {:?} has more than one value for {}",
                r.object_key, r.date
            )));
        }
    }
    let total = map.len();
    let expected = period.days();
    map.retain(|_, days| days.len() == expected);
    if map.is_empty() {
        return Err(Error::Input(format!(
            "none of the {total} objects has a value for every day of {}..={}; \
             check the collection period and the aggregation mode",
            period.start, period.end
        )));
    }
    Ok(map)
}

/// Pick `m` objects by a seeded shuffle of the sorted keys and assign
/// indices `1..=m` in shuffled order. Returned series are ordered by index.
pub fn select_and_reindex(map: &SeriesMap, m: usize, seed: u64) -> Result<Selection> {
    if m == 0 {
        return Err(Error::Config("target_object_count must be at least 1".into()));
    }
    if map.len() < m {
        return Err(Error::Input(format!(
            "not enough complete objects: {} < {}",
            map.len(),
            m
        )));
    }
    // BTreeMap keys are already sorted.
    let mut keys: Vec<&String> = map.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.shuffle(&mut rng);

    let mut series = Vec::with_capacity(m);
    let mut entries = Vec::with_capacity(m);
    for (i, key) in keys.into_iter().take(m).enumerate() {
        let days = &map[key];
        let start_date = *days.keys().next().expect("complete series is non-empty");
        series.push(ObjectSeries {
            object_index: i + 1,
            start_date,
            values: days.values().copied().collect(),
        });
        entries.push(ManifestEntry {
            original_key: key.clone(),
            object_index: i + 1,
        });
    }
    Ok(Selection {
        series,
        manifest: Manifest {
            selection_seed: seed,
            complete_objects: map.len(),
            entries,
        },
    })
}

/// Run aggregation, completeness filtering and selection.
pub fn ingest(records: &[RawRecord], config: &IngestConfig) -> Result<Selection> {
    config.validate()?;
    let daily = aggregate(records, config.aggregation);
    let complete = filter_complete(&daily, config.period()?)?;
    select_and_reindex(&complete, config.target_object_count, config.selection_seed)
}
