#![allow(dead_code)]

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use chrono::{Days, NaiveDate};

pub fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// Decides the stub's reply from the prompt and the 1-based attempt number
/// for that prompt. Returns (status, body).
pub type Behavior = dyn Fn(&str, u32) -> (u16, String) + Send + Sync;

#[derive(Default)]
pub struct StubStats {
    pub attempts: Mutex<HashMap<String, u32>>,
    pub bodies: Mutex<Vec<serde_json::Value>>,
    pub auth: Mutex<Vec<Option<String>>>,
    in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    pub requests: AtomicUsize,
}

impl StubStats {
    pub fn attempts_for(&self, prompt: &str) -> u32 {
        self.attempts.lock().unwrap().get(prompt).copied().unwrap_or(0)
    }
}

/// Minimal HTTP/1.1 server speaking the generation JSON contract.
pub struct StubServer {
    pub url: String,
    pub stats: Arc<StubStats>,
}

impl StubServer {
    pub fn start(behavior: Arc<Behavior>, delay: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/generate", listener.local_addr().unwrap());
        let stats = Arc::new(StubStats::default());
        let st = stats.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let st = st.clone();
                let behavior = behavior.clone();
                thread::spawn(move || handle(stream, &st, &*behavior, delay));
            }
        });
        StubServer { url, stats }
    }

    /// Replies `{"text": "<reply(prompt)>"}` to every request.
    pub fn echo(reply: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Self::start(
            Arc::new(move |prompt: &str, _| (200, serde_json::json!({ "text": reply(prompt) }).to_string())),
            Duration::ZERO,
        )
    }
}

fn handle(stream: TcpStream, stats: &StubStats, behavior: &Behavior, delay: Duration) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut content_length = 0usize;
    let mut auth = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = v.trim().parse().unwrap_or(0),
                "authorization" => auth = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let prompt = json["prompt"].as_str().unwrap_or_default().to_string();

    let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats.max_in_flight.fetch_max(now, Ordering::SeqCst);
    stats.requests.fetch_add(1, Ordering::SeqCst);
    stats.bodies.lock().unwrap().push(json);
    stats.auth.lock().unwrap().push(auth);
    let attempt = {
        let mut map = stats.attempts.lock().unwrap();
        let a = map.entry(prompt.clone()).or_insert(0);
        *a += 1;
        *a
    };
    if !delay.is_zero() {
        thread::sleep(delay);
    }
    let (status, reply) = behavior(&prompt, attempt);
    stats.in_flight.fetch_sub(1, Ordering::SeqCst);

    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
    let _ = stream.flush();
}

/// A localhost URL nothing listens on.
pub fn dead_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}/generate")
}

/// Description of one synthetic raw source.
pub struct SyntheticSource {
    pub start: NaiveDate,
    pub days: usize,
    /// Objects with every day present.
    pub complete: usize,
    /// Extra objects missing one day, which ingest must drop.
    pub incomplete: usize,
    /// Records per day; more than one means sub-daily timestamps.
    pub per_day: usize,
    pub value: fn(usize, usize) -> f64,
}

/// Write `key,timestamp,value` rows. Object keys are `obj<NNN>`.
pub fn write_source(path: &Path, src: &SyntheticSource) {
    let mut out = String::from("key,timestamp,value\n");
    let step = 24 / src.per_day.max(1);
    for obj in 0..src.complete + src.incomplete {
        let gap = if obj >= src.complete { Some(src.days / 2) } else { None };
        for day in 0..src.days {
            if Some(day) == gap {
                continue;
            }
            let d = src.start + Days::new(day as u64);
            let v = (src.value)(obj, day);
            if src.per_day <= 1 {
                writeln!(out, "obj{obj:03},{d},{v}").unwrap();
            } else {
                for k in 0..src.per_day {
                    let share = v / src.per_day as f64;
                    writeln!(out, "obj{obj:03},{d}T{:02}:00,{share}", k * step).unwrap();
                }
            }
        }
    }
    std::fs::write(path, out).unwrap();
}

pub fn ct_value(obj: usize, day: usize) -> f64 {
    let season = ((day as f64) * std::f64::consts::TAU / 365.0).sin();
    (55.0 + 30.0 * season + (obj % 13) as f64 + ((day * 7 + obj * 3) % 11) as f64 - 5.0).round()
}

pub fn ecl_value(obj: usize, day: usize) -> f64 {
    let weekly = [1.0, 1.05, 1.1, 1.08, 1.02, 0.85, 0.8][day % 7];
    (9000.0 + 150.0 * (obj % 17) as f64) * weekly + ((day * 31 + obj) % 97) as f64
}

pub fn sg_value(obj: usize, day: usize) -> f64 {
    let weekly = [12.0, 10.0, 11.0, 13.0, 18.0, 25.0, 22.0][day % 7];
    weekly + ((obj * 5 + day * 3) % 9) as f64
}

pub fn fractional_value(obj: usize, day: usize) -> f64 {
    20.0 + 10.0 * ((day as f64) / 4.0 + obj as f64).sin() + 0.37 * (obj as f64)
}

/// `[[scenarios]]` block for a synthetic source file.
pub fn scenario_toml(
    name: &str,
    template: &str,
    file: &str,
    start: NaiveDate,
    days: usize,
    objects: usize,
    aggregation: &str,
    split: &str,
) -> String {
    let end = start + Days::new(days as u64 - 1);
    format!(
        r#"
[[scenarios]]
name = "{name}"
template = "{template}"
split = {split}
[scenarios.source]
path = "{file}"
object = "key"
timestamp = "timestamp"
value = "value"
[scenarios.ingest]
collection_start = "{start}"
collection_end = "{end}"
aggregation = "{aggregation}"
target_object_count = {objects}
selection_seed = 11
"#
    )
}

pub const RATIO_SPLIT: &str = r#"{ mode = "ratio", train = 7, val = 1, test = 2 }"#;

pub fn write_config(dir: &Path, header: &str, scenarios: &[String], backends: &str) -> PathBuf {
    let text = format!("{header}\n{}\n{backends}", scenarios.join("\n"));
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub const NUMERIC_AND_ORACLE_BACKENDS: &str = r#"
[[backends]]
name = "cy"
kind = "cy"
[[backends]]
name = "ha"
kind = "ha"
[[backends]]
name = "clw"
kind = "clw"
[[backends]]
name = "oracle_cy"
kind = "oracle_wrap"
inner = "cy"
[[backends]]
name = "oracle_ha"
kind = "oracle_wrap"
inner = "ha"
[[backends]]
name = "oracle_clw"
kind = "oracle_wrap"
inner = "clw"
"#;

/// Relative path -> file bytes for every file under `root`.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}

pub fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}
