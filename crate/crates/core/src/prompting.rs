//! Template-based rendering of instances into input/output prompts.
//!
//! A template has three patterns. The context and question together form
//! the input prompt (joined by `separator`, a single space by default); the
//! answer pattern is the output prompt and holds the target value. Patterns
//! reference instance fields through `{name}` placeholders:
//!
//! | placeholder  | meaning                          | allowed in        |
//! |--------------|----------------------------------|-------------------|
//! | `{t1}`       | first observed date              | context, question |
//! | `{t_obs}`    | last observed date               | context, question |
//! | `{t_obs+1}`  | target date                      | context, question |
//! | `{U_m}`      | object index                     | context, question |
//! | `{values}`   | observed values, `", "`-joined   | context, question |
//! | `{x_target}` | target value                     | answer (once)     |

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::{Instance, NumericalDataset, Split};
use crate::error::{Error, Result};

/// `"June 07, 2021, Monday"`.
pub fn format_date(d: NaiveDate) -> String {
    d.format("%B %d, %Y, %A").to_string()
}

/// Round half away from zero.
pub fn round_value(v: f64) -> i64 {
    v.round() as i64
}

pub fn serialize_values(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{}", round_value(*v)).unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placeholder {
    FirstDate,
    LastDate,
    TargetDate,
    ObjectIndex,
    Values,
    Target,
}

impl Placeholder {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "t1" => Placeholder::FirstDate,
            "t_obs" => Placeholder::LastDate,
            "t_obs+1" => Placeholder::TargetDate,
            "U_m" => Placeholder::ObjectIndex,
            "values" => Placeholder::Values,
            "x_target" => Placeholder::Target,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(Placeholder),
}

fn parse_pattern(field: &str, pattern: &str) -> Result<Vec<Piece>> {
    if pattern.contains(['\n', '\r']) {
        return Err(Error::Template(format!("{field} pattern contains a line break")));
    }
    let mut pieces = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(Error::Template(format!("unmatched '}}' in {field} pattern")));
        }
        if open > 0 {
            pieces.push(Piece::Text(rest[..open].to_string()));
        }
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Template(format!("unclosed '{{' in {field} pattern")))?;
        let name = &after[..close];
        let slot = Placeholder::parse(name).ok_or_else(|| {
            Error::Template(format!("unknown placeholder {{{name}}} in {field} pattern"))
        })?;
        pieces.push(Piece::Slot(slot));
        rest = &after[close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest.to_string()));
    }
    Ok(pieces)
}

fn default_separator() -> String {
    " ".to_string()
}

/// Serialized form of a template, as stored in config files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateDef {
    pub name: String,
    pub context: String,
    pub question: String,
    pub answer: String,
    #[serde(default = "default_separator")]
    pub separator: String,
}

/// A validated scenario template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioTemplate {
    def: TemplateDef,
    context: Vec<Piece>,
    question: Vec<Piece>,
    answer_prefix: String,
    answer_suffix: String,
}

impl ScenarioTemplate {
    pub fn new(def: TemplateDef) -> Result<Self> {
        if def.separator.contains(['\n', '\r']) {
            return Err(Error::Template("separator contains a line break".into()));
        }
        let context = parse_pattern("context", &def.context)?;
        let question = parse_pattern("question", &def.question)?;
        for p in context.iter().chain(&question) {
            if *p == Piece::Slot(Placeholder::Target) {
                return Err(Error::Template(
                    "{x_target} may only appear in the answer pattern".into(),
                ));
            }
        }
        let answer = parse_pattern("answer", &def.answer)?;
        let slots: Vec<&Placeholder> = answer
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect();
        if slots != [&Placeholder::Target] {
            return Err(Error::Template(
                "answer pattern must contain exactly one placeholder, {x_target}".into(),
            ));
        }
        let (answer_prefix, answer_suffix) = def
            .answer
            .split_once("{x_target}")
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .expect("checked above");
        Ok(ScenarioTemplate {
            def,
            context,
            question,
            answer_prefix,
            answer_suffix,
        })
    }

    pub fn from_patterns(name: &str, context: &str, question: &str, answer: &str) -> Result<Self> {
        Self::new(TemplateDef {
            name: name.into(),
            context: context.into(),
            question: question.into(),
            answer: answer.into(),
            separator: default_separator(),
        })
    }

    /// City temperature.
    pub fn ct() -> Self {
        Self::from_patterns(
            "ct",
            "From {t1} to {t_obs}, the average temperature of region {U_m} was {values} degree on each day.",
            "What is the temperature going to be on {t_obs+1}?",
            "The temperature will be {x_target} degree.",
        )
        .expect("built-in template")
    }

    /// Electricity consumption.
    pub fn ecl() -> Self {
        Self::from_patterns(
            "ecl",
            "From {t1} to {t_obs}, client {U_m} consumed {values} kWh of electricity on each day.",
            "What is the consumption going to be on {t_obs+1}?",
            "This client will consume {x_target} kWh of electricity.",
        )
        .expect("built-in template")
    }

    /// Visitor counts at points of interest.
    pub fn sg() -> Self {
        Self::from_patterns(
            "sg",
            "From {t1} to {t_obs}, there were {values} people visiting POI {U_m} on each day.",
            "How many people will visit POI {U_m} on {t_obs+1}?",
            "There will be {x_target} visitors.",
        )
        .expect("built-in template")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "ct" => Some(Self::ct()),
            "ecl" => Some(Self::ecl()),
            "sg" => Some(Self::sg()),
            _ => None,
        }
    }

    /// Load a template definition from a TOML or JSON file (by extension).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let def: TemplateDef = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Self::new(def)
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn def(&self) -> &TemplateDef {
        &self.def
    }

    /// Fixed text before and after the value in the answer pattern.
    pub fn answer_parts(&self) -> (&str, &str) {
        (&self.answer_prefix, &self.answer_suffix)
    }

    fn fill(pieces: &[Piece], inst: &Instance, out: &mut String) {
        for p in pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(Placeholder::FirstDate) => out.push_str(&format_date(inst.window_start)),
                Piece::Slot(Placeholder::LastDate) => out.push_str(&format_date(inst.window_end())),
                Piece::Slot(Placeholder::TargetDate) => {
                    out.push_str(&format_date(inst.target_date()))
                }
                Piece::Slot(Placeholder::ObjectIndex) => {
                    write!(out, "{}", inst.object_index).unwrap()
                }
                Piece::Slot(Placeholder::Values) => out.push_str(&serialize_values(&inst.window)),
                Piece::Slot(Placeholder::Target) => {
                    write!(out, "{}", round_value(inst.target_value)).unwrap()
                }
            }
        }
    }

    /// Context and question joined by the separator.
    pub fn render_input(&self, inst: &Instance) -> String {
        let mut out = String::new();
        Self::fill(&self.context, inst, &mut out);
        out.push_str(&self.def.separator);
        Self::fill(&self.question, inst, &mut out);
        out
    }

    pub fn render_output(&self, inst: &Instance) -> String {
        self.render_answer(round_value(inst.target_value))
    }

    /// The answer sentence for an arbitrary integer value.
    pub fn render_answer(&self, value: i64) -> String {
        format!("{}{}{}", self.answer_prefix, value, self.answer_suffix)
    }
}

pub fn render_input(inst: &Instance, tpl: &ScenarioTemplate) -> String {
    tpl.render_input(inst)
}

pub fn render_output(inst: &Instance, tpl: &ScenarioTemplate) -> String {
    tpl.render_output(inst)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstanceId {
    pub scenario: String,
    pub split: Split,
    /// Zero-based position in the numerical dataset and prompt files.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPair {
    pub id: InstanceId,
    pub input: String,
    pub output: String,
}

pub fn render_pairs(dataset: &NumericalDataset, tpl: &ScenarioTemplate) -> Vec<PromptPair> {
    dataset
        .instances
        .iter()
        .enumerate()
        .map(|(line, inst)| PromptPair {
            id: InstanceId {
                scenario: dataset.scenario.clone(),
                split: dataset.split,
                line,
            },
            input: tpl.render_input(inst),
            output: tpl.render_output(inst),
        })
        .collect()
}

pub fn prompt_file_names(split: Split) -> (String, String) {
    (format!("{split}_x_prompt.txt"), format!("{split}_y_prompt.txt"))
}

/// Write one prompt per line, `\n`-terminated.
pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = impl AsRef<str>>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Write `{split}_x_prompt.txt` and `{split}_y_prompt.txt` into `out_dir`.
pub fn write_prompt_files(
    pairs: &[PromptPair],
    split: Split,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    for (i, p) in pairs.iter().enumerate() {
        if p.id.line != i {
            return Err(Error::Input(format!(
                "prompt pair at position {i} has line index {}",
                p.id.line
            )));
        }
        if p.id.split != split {
            return Err(Error::Input(format!(
                "prompt pair {i} belongs to split {}, not {split}",
                p.id.split
            )));
        }
        for (what, text) in [("input", &p.input), ("output", &p.output)] {
            if text.is_empty() || text.contains(['\n', '\r']) {
                return Err(Error::Input(format!(
                    "{what} prompt {i} must be a single non-empty line"
                )));
            }
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (x_name, y_name) = prompt_file_names(split);
    let x = out_dir.join(x_name);
    let y = out_dir.join(y_name);
    write_lines(&x, pairs.iter().map(|p| &p.input))?;
    write_lines(&y, pairs.iter().map(|p| &p.output))?;
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn dates_from_templates() {
        assert_eq!(format_date(d("2021-06-07")), "June 07, 2021, Monday");
        assert_eq!(format_date(d("2019-08-31")), "August 31, 2019, Saturday");
        assert_eq!(format_date(d("2014-05-31")), "May 31, 2014, Saturday");
    }

    #[test]
    fn value_serialization() {
        assert_eq!(serialize_values(&[78.0, 81.0, 83.0]), "78, 81, 83");
        assert_eq!(serialize_values(&[-5.5]), "-6");
        assert_eq!(serialize_values(&[5.5, 2.4999, -0.4]), "6, 2, 0");
        assert_eq!(serialize_values(&[0.0]), "0");
        assert_eq!(serialize_values(&[]), "");
    }

    fn inst(values: &[f64], target: f64) -> Instance {
        Instance {
            object_index: 3,
            window_start: d("2021-01-01"),
            window: values.to_vec(),
            target_value: target,
        }
    }

    #[test]
    fn custom_template() {
        let tpl = ScenarioTemplate::from_patterns("c", "V: {values}", "Next {t_obs+1}?", "It is {x_target}.")
            .unwrap();
        let i = inst(&[1.0, 2.0], 4.0);
        assert_eq!(tpl.render_input(&i), "V: 1, 2 Next January 03, 2021, Sunday?");
        assert_eq!(tpl.render_output(&i), "It is 4.");
    }

    #[test]
    fn unknown_placeholder_is_named() {
        let err = ScenarioTemplate::from_patterns("c", "{bogus}", "q", "{x_target}").unwrap_err();
        assert!(err.to_string().contains("{bogus}"), "{err}");
    }

    #[test]
    fn answer_needs_exactly_one_target() {
        assert!(ScenarioTemplate::from_patterns("c", "a", "q", "none").is_err());
        assert!(ScenarioTemplate::from_patterns("c", "a", "q", "{x_target} {x_target}").is_err());
        assert!(ScenarioTemplate::from_patterns("c", "a", "q", "{x_target} {U_m}").is_err());
        assert!(ScenarioTemplate::from_patterns("c", "{x_target}", "q", "{x_target}").is_err());
    }

    #[test]
    fn malformed_braces() {
        assert!(ScenarioTemplate::from_patterns("c", "{values", "q", "{x_target}").is_err());
        assert!(ScenarioTemplate::from_patterns("c", "values}", "q", "{x_target}").is_err());
        assert!(ScenarioTemplate::from_patterns("c", "a\nb", "q", "{x_target}").is_err());
    }

    #[test]
    fn template_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.toml");
        std::fs::write(
            &path,
            "name = \"pm\"\ncontext = \"PM {values}\"\nquestion = \"{t_obs+1}?\"\nanswer = \"It will be {x_target} ug.\"\n",
        )
        .unwrap();
        let tpl = ScenarioTemplate::from_file(&path).unwrap();
        assert_eq!(tpl.name(), "pm");
        assert_eq!(tpl.answer_parts(), ("It will be ", " ug."));
        let json = dir.path().join("t.json");
        std::fs::write(&json, serde_json::to_string(tpl.def()).unwrap()).unwrap();
        assert_eq!(ScenarioTemplate::from_file(&json).unwrap(), tpl);
    }

    fn pair(line: usize, input: &str) -> PromptPair {
        PromptPair {
            id: InstanceId {
                scenario: "s".into(),
                split: Split::Val,
                line,
            },
            input: input.into(),
            output: "out".into(),
        }
    }

    #[test]
    fn prompt_files() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![pair(0, "a"), pair(1, "b")];
        let (x, y) = write_prompt_files(&pairs, Split::Val, dir.path()).unwrap();
        assert!(x.ends_with("val_x_prompt.txt"));
        assert_eq!(read_lines(&x).unwrap(), vec!["a", "b"]);
        assert_eq!(read_lines(&y).unwrap().len(), 2);
        let first = std::fs::read(&x).unwrap();
        write_prompt_files(&pairs, Split::Val, dir.path()).unwrap();
        assert_eq!(std::fs::read(&x).unwrap(), first);
    }

    #[test]
    fn newline_in_prompt_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![pair(0, "a\nb")];
        assert!(write_prompt_files(&pairs, Split::Val, dir.path()).is_err());
        let misordered = vec![pair(1, "a")];
        assert!(write_prompt_files(&misordered, Split::Val, dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn integers_render_verbatim(v in -1_000_000i64..1_000_000) {
            prop_assert_eq!(serialize_values(&[v as f64]), v.to_string());
        }
    }
}
