//! Chronological train/val/test splitting and sliding-window instances.
//!
//! Each split is windowed on its own, so a window never straddles a split
//! boundary. With `t_obs` observed days and one target day, a segment of
//! `D` days yields `D - t_obs` instances when `D > t_obs` and none
//! otherwise.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ObjectSeries, Period};

pub const DEFAULT_T_OBS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

/// How to cut a collection period into train/val/test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Train is `[start, train_end]`, val `(train_end, val_end]`, test
    /// `(val_end, end]`.
    Dates {
        train_end: NaiveDate,
        val_end: NaiveDate,
    },
    /// Day counts by floor division of the period length; test takes the
    /// remainder.
    Ratio { train: u32, val: u32, test: u32 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Ratio {
            train: 7,
            val: 1,
            test: 2,
        }
    }
}

impl SplitSpec {
    /// Resolve to `(train_end, val_end)` within `period`.
    pub fn boundaries(&self, period: Period) -> Result<(NaiveDate, NaiveDate)> {
        let (train_end, val_end) = match *self {
            SplitSpec::Dates { train_end, val_end } => (train_end, val_end),
            SplitSpec::Ratio { train, val, test } => {
                let total = u64::from(train) + u64::from(val) + u64::from(test);
                if total == 0 {
                    return Err(Error::Config("split ratio must not be all zero".into()));
                }
                let days = period.days() as u64;
                let train_days = days * u64::from(train) / total;
                let val_days = days * u64::from(val) / total;
                if train_days == 0 {
                    return Err(Error::Config(format!(
                        "ratio {train}:{val}:{test} leaves an empty train split over {days} days"
                    )));
                }
                let train_end = period.start + Days::new(train_days - 1);
                (train_end, train_end + Days::new(val_days))
            }
        };
        if !(period.start <= train_end && train_end < val_end && val_end < period.end) {
            return Err(Error::Config(format!(
                "split boundaries train_end={train_end}, val_end={val_end} must satisfy \
                 {} <= train_end < val_end < {}",
                period.start, period.end
            )));
        }
        Ok((train_end, val_end))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    pub train: ObjectSeries,
    pub val: ObjectSeries,
    pub test: ObjectSeries,
}

impl Segments {
    pub fn get(&self, split: Split) -> &ObjectSeries {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn segment(series: &ObjectSeries, from: usize, to: usize) -> ObjectSeries {
    ObjectSeries {
        object_index: series.object_index,
        start_date: series.date_at(from),
        values: series.values[from..to].to_vec(),
    }
}

pub fn split_chronological(series: &ObjectSeries, spec: &SplitSpec) -> Result<Segments> {
    if series.is_empty() {
        return Err(Error::Input(format!(
            "object {} has an empty series",
            series.object_index
        )));
    }
    let period = Period::new(series.start_date, series.end_date())?;
    let (train_end, val_end) = spec.boundaries(period)?;
    let train_len = (train_end - series.start_date).num_days() as usize + 1;
    let val_len = (val_end - train_end).num_days() as usize;
    let n = series.len();
    Ok(Segments {
        train: segment(series, 0, train_len),
        val: segment(series, train_len, train_len + val_len),
        test: segment(series, train_len + val_len, n),
    })
}

/// One forecasting unit: `t_obs` observed days and the following day's value.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub object_index: usize,
    pub window_start: NaiveDate,
    pub window: Vec<f64>,
    pub target_value: f64,
}

impl Instance {
    pub fn t_obs(&self) -> usize {
        self.window.len()
    }

    pub fn window_end(&self) -> NaiveDate {
        self.window_start + Days::new(self.window.len() as u64 - 1)
    }

    pub fn target_date(&self) -> NaiveDate {
        self.window_start + Days::new(self.window.len() as u64)
    }
}

pub fn make_instances(segment: &ObjectSeries, t_obs: usize) -> Vec<Instance> {
    if t_obs == 0 || segment.len() <= t_obs {
        return Vec::new();
    }
    segment
        .values
        .windows(t_obs + 1)
        .enumerate()
        .map(|(offset, w)| Instance {
            object_index: segment.object_index,
            window_start: segment.date_at(offset),
            window: w[..t_obs].to_vec(),
            target_value: w[t_obs],
        })
        .collect()
}

/// Number of instances `objects` series of `days` days produce.
pub fn expected_instance_count(days: usize, objects: usize, t_obs: usize) -> usize {
    objects * days.saturating_sub(t_obs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericalDataset {
    pub scenario: String,
    pub split: Split,
    pub t_obs: usize,
    /// Ordered by `(object_index, window_start)`.
    pub instances: Vec<Instance>,
}

impl NumericalDataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.instances.iter().map(|i| i.target_value).collect()
    }
}

/// Split every series and window each split independently.
pub fn build_datasets(
    scenario: &str,
    series: &[ObjectSeries],
    spec: &SplitSpec,
    t_obs: usize,
) -> Result<Vec<NumericalDataset>> {
    if t_obs == 0 {
        return Err(Error::Config("t_obs must be at least 1".into()));
    }
    let mut sorted: Vec<&ObjectSeries> = series.iter().collect();
    sorted.sort_by_key(|s| s.object_index);

    let mut out: Vec<NumericalDataset> = Split::ALL
        .iter()
        .map(|&split| NumericalDataset {
            scenario: scenario.to_string(),
            split,
            t_obs,
            instances: Vec::new(),
        })
        .collect();
    for s in sorted {
        let segs = split_chronological(s, spec)?;
        for ds in out.iter_mut() {
            ds.instances.extend(make_instances(segs.get(ds.split), t_obs));
        }
    }
    Ok(out)
}

fn header(t_obs: usize) -> String {
    let mut h = String::from("object_index,window_start_date");
    for i in 1..=t_obs {
        h.push_str(&format!(",x{i}"));
    }
    h.push_str(",target_value");
    h
}

pub fn write_numerical_to<W: Write>(dataset: &NumericalDataset, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", header(dataset.t_obs))?;
    for inst in &dataset.instances {
        write!(w, "{},{}", inst.object_index, inst.window_start.format("%Y-%m-%d"))?;
        for v in &inst.window {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", inst.target_value)?;
    }
    w.flush()
}

pub fn write_numerical(dataset: &NumericalDataset, path: &Path) -> Result<()> {
    if let Some(bad) = dataset.instances.iter().find(|i| i.t_obs() != dataset.t_obs) {
        return Err(Error::Input(format!(
            "instance for object {} at {} has {} window values, dataset t_obs is {}",
            bad.object_index,
            bad.window_start,
            bad.t_obs(),
            dataset.t_obs
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_numerical_to(dataset, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_numerical_from<R: Read>(
    reader: R,
    scenario: &str,
    split: Split,
    source_name: &str,
) -> Result<NumericalDataset> {
    let parse_err = |line: u64, column: &str, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        column: column.to_string(),
        message,
    };
    let mut lines = BufReader::new(reader).lines();
    let head = match lines.next() {
        Some(h) => h.map_err(|e| parse_err(1, "", e.to_string()))?,
        None => return Err(parse_err(1, "", "missing header".into())),
    };
    let fields: Vec<&str> = head.split(',').collect();
    if fields.len() < 4 {
        return Err(parse_err(1, "", "header too short".into()));
    }
    let t_obs = fields.len() - 3;
    if head != header(t_obs) {
        return Err(parse_err(1, "", format!("unexpected header {head:?}")));
    }

    let mut instances = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i as u64 + 2;
        let line = line.map_err(|e| parse_err(lineno, "", e.to_string()))?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != t_obs + 3 {
            return Err(parse_err(
                lineno,
                "",
                format!("expected {} fields, found {}", t_obs + 3, cols.len()),
            ));
        }
        let object_index = cols[0]
            .parse()
            .map_err(|_| parse_err(lineno, "object_index", format!("bad index {:?}", cols[0])))?;
        let window_start = NaiveDate::parse_from_str(cols[1], "%Y-%m-%d").map_err(|_| {
            parse_err(lineno, "window_start_date", format!("bad date {:?}", cols[1]))
        })?;
        let num = |idx: usize, name: &str| -> Result<f64> {
            let v: f64 = cols[idx]
                .parse()
                .map_err(|_| parse_err(lineno, name, format!("not a number: {:?}", cols[idx])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(lineno, name, "non-finite value".into()))
            }
        };
        let window = (0..t_obs)
            .map(|k| num(k + 2, &format!("x{}", k + 1)))
            .collect::<Result<Vec<_>>>()?;
        let target_value = num(t_obs + 2, "target_value")?;
        instances.push(Instance {
            object_index,
            window_start,
            window,
            target_value,
        });
    }
    Ok(NumericalDataset {
        scenario: scenario.to_string(),
        split,
        t_obs,
        instances,
    })
}

pub fn read_numerical(path: &Path, scenario: &str, split: Split) -> Result<NumericalDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_numerical_from(file, scenario, split, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn series(start: &str, n: usize) -> ObjectSeries {
        ObjectSeries {
            object_index: 1,
            start_date: d(start),
            values: (0..n).map(|i| i as f64).collect(),
        }
    }

    #[test]
    fn ratio_split_of_100_days() {
        let segs = split_chronological(&series("2020-01-01", 100), &SplitSpec::default()).unwrap();
        assert_eq!(
            (segs.train.len(), segs.val.len(), segs.test.len()),
            (70, 10, 20)
        );
        assert_eq!(segs.val.start_date, d("2020-03-11"));
        assert_eq!(segs.val.values[0], 70.0);
    }

    #[test]
    fn ct_date_boundaries() {
        let n = (d("2020-04-30") - d("2017-01-01")).num_days() as usize + 1;
        let spec = SplitSpec::Dates {
            train_end: d("2019-04-30"),
            val_end: d("2019-08-31"),
        };
        let segs = split_chronological(&series("2017-01-01", n), &spec).unwrap();
        assert_eq!(
            (segs.train.len(), segs.val.len(), segs.test.len()),
            (850, 123, 243)
        );
        assert_eq!(segs.test.start_date, d("2019-09-01"));
    }

    #[test]
    fn train_end_at_collection_end_is_rejected() {
        let s = series("2020-01-01", 10);
        let spec = SplitSpec::Dates {
            train_end: d("2020-01-10"),
            val_end: d("2020-01-10"),
        };
        assert!(matches!(split_chronological(&s, &spec), Err(Error::Config(_))));
        let outside = SplitSpec::Dates {
            train_end: d("2019-12-01"),
            val_end: d("2020-01-05"),
        };
        assert!(split_chronological(&s, &outside).is_err());
    }

    #[test]
    fn window_counts_at_edges() {
        assert_eq!(make_instances(&series("2020-01-01", 16), 15).len(), 1);
        assert!(make_instances(&series("2020-01-01", 15), 15).is_empty());
        assert!(make_instances(&series("2020-01-01", 3), 0).is_empty());
    }

    #[test]
    fn instance_contents() {
        let inst = &make_instances(&series("2020-01-01", 17), 15)[1];
        assert_eq!(inst.window_start, d("2020-01-02"));
        assert_eq!(inst.window.first(), Some(&1.0));
        assert_eq!(inst.window_end(), d("2020-01-16"));
        assert_eq!(inst.target_date(), d("2020-01-17"));
        assert_eq!(inst.target_value, 16.0);
    }

    #[test]
    fn ct_train_count() {
        assert_eq!(expected_instance_count(850, 110, 15), 91_850);
        assert_eq!(expected_instance_count(10, 3, 15), 0);
    }

    fn sample_dataset(n: usize) -> NumericalDataset {
        let mut s = series("2020-01-01", 15 + n);
        s.values[3] = -2.5;
        s.values[7] = 1e-3;
        NumericalDataset {
            scenario: "x".into(),
            split: Split::Val,
            t_obs: 15,
            instances: make_instances(&s, 15),
        }
    }

    #[test]
    fn numerical_file_layout() {
        let mut buf = Vec::new();
        write_numerical_to(&sample_dataset(1), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("object_index,window_start_date,x1,"));
        assert!(lines[0].ends_with(",x15,target_value"));
        assert_eq!(
            lines[1],
            "1,2020-01-01,0,1,2,-2.5,4,5,6,0.001,8,9,10,11,12,13,14,15"
        );
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let mut buf = Vec::new();
        write_numerical_to(&sample_dataset(0), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn reserialization_is_byte_identical() {
        let mut first = Vec::new();
        write_numerical_to(&sample_dataset(5), &mut first).unwrap();
        let parsed = read_numerical_from(first.as_slice(), "x", Split::Val, "mem").unwrap();
        assert_eq!(parsed, sample_dataset(5));
        let mut second = Vec::new();
        write_numerical_to(&parsed, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn truncated_row_is_rejected() {
        let text = format!("{}\n1,2020-01-01,1,2\n", header(15));
        let err = read_numerical_from(text.as_bytes(), "x", Split::Val, "mem").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn build_orders_by_object_then_date() {
        let a = ObjectSeries {
            object_index: 2,
            ..series("2020-01-01", 40)
        };
        let b = series("2020-01-01", 40);
        let sets = build_datasets("s", &[a, b], &SplitSpec::default(), 5).unwrap();
        let train = &sets[0];
        assert_eq!(train.split, Split::Train);
        assert_eq!(train.len(), 2 * (28 - 5));
        assert!(train.instances.windows(2).all(|w| {
            (w[0].object_index, w[0].window_start) < (w[1].object_index, w[1].window_start)
        }));
    }

    proptest! {
        #[test]
        fn count_and_adjacency(len in 0usize..200, t_obs in 1usize..30) {
            let s = series("2019-12-20", len);
            let insts = make_instances(&s, t_obs);
            prop_assert_eq!(insts.len(), expected_instance_count(len, 1, t_obs));
            for (k, inst) in insts.iter().enumerate() {
                prop_assert_eq!(inst.window.len(), t_obs);
                prop_assert_eq!((inst.target_date() - inst.window_end()).num_days(), 1);
                prop_assert_eq!(inst.window_start, s.date_at(k));
            }
        }

        #[test]
        fn splits_partition_the_period(len in 12usize..400, a in 1u32..10, b in 1u32..5, c in 1u32..5) {
            let s = series("2018-02-27", len);
            let spec = SplitSpec::Ratio { train: a, val: b, test: c };
            if let Ok(segs) = split_chronological(&s, &spec) {
                prop_assert_eq!(segs.train.len() + segs.val.len() + segs.test.len(), len);
                prop_assert_eq!(segs.train.start_date, s.start_date);
                prop_assert_eq!(segs.val.start_date, segs.train.end_date() + Days::new(1));
                prop_assert_eq!(segs.test.start_date, segs.val.end_date() + Days::new(1));
                prop_assert_eq!(segs.test.end_date(), s.end_date());
            }
        }
    }
}
