//! Recover numeric predictions from generated answer sentences.
//!
//! Strict mode accepts only the template's answer sentence with a signed
//! integer in the value slot; the fixed words compare case-insensitively and
//! surrounding whitespace is ignored. Lenient mode tries strict first and
//! otherwise takes the first number anywhere in the text, accepting a
//! detached sign (`"- 5"`) and decimal fractions (rounded half away from
//! zero). Text that yields no number is a missing prediction, not an error.

use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompting::{round_value, ScenarioTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Strict,
    Lenient,
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(DecodeMode::Strict),
            "lenient" => Ok(DecodeMode::Lenient),
            other => Err(Error::Config(format!("unknown decode mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStatus {
    Decoded,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedPrediction {
    /// Zero-based line index of the instance.
    pub line: usize,
    pub value: Option<f64>,
    pub raw_text: String,
}

impl DecodedPrediction {
    pub fn decoded(line: usize, value: f64) -> Self {
        DecodedPrediction {
            line,
            value: Some(value),
            raw_text: String::new(),
        }
    }

    pub fn status(&self) -> DecodeStatus {
        if self.value.is_some() {
            DecodeStatus::Decoded
        } else {
            DecodeStatus::Missing
        }
    }

    pub fn is_decoded(&self) -> bool {
        self.value.is_some()
    }
}

fn parse_signed_int(s: &str) -> Option<i64> {
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &text[prefix.len()..])
}

fn strip_suffix_ci<'a>(text: &'a str, suffix: &str) -> Option<&'a str> {
    let cut = text.len().checked_sub(suffix.len())?;
    let tail = text.get(cut..)?;
    tail.eq_ignore_ascii_case(suffix).then(|| &text[..cut])
}

fn decode_strict(text: &str, tpl: &ScenarioTemplate) -> Option<i64> {
    let (prefix, suffix) = tpl.answer_parts();
    let text = text.trim();
    let rest = strip_prefix_ci(text, prefix.trim_start())?;
    let slot = strip_suffix_ci(rest, suffix.trim_end())?;
    parse_signed_int(slot.trim())
}

fn number_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(-\s*)?[0-9]+(\.[0-9]+)?").expect("valid regex"))
}

fn decode_lenient(text: &str) -> Option<f64> {
    let m = number_token().find(text)?;
    let compact: String = m.as_str().chars().filter(|c| !c.is_whitespace()).collect();
    let v: f64 = compact.parse().ok()?;
    v.is_finite().then(|| round_value(v) as f64)
}

/// Decode one generated sentence.
pub fn decode_value(text: &str, tpl: &ScenarioTemplate, mode: DecodeMode) -> Option<f64> {
    if let Some(v) = decode_strict(text, tpl) {
        return Some(v as f64);
    }
    match mode {
        DecodeMode::Strict => None,
        DecodeMode::Lenient => decode_lenient(text),
    }
}

pub fn parse_output(
    line: usize,
    text: &str,
    tpl: &ScenarioTemplate,
    mode: DecodeMode,
) -> DecodedPrediction {
    DecodedPrediction {
        line,
        value: decode_value(text, tpl, mode),
        raw_text: text.to_string(),
    }
}

pub fn batch_decode<S: AsRef<str>>(
    texts: &[S],
    tpl: &ScenarioTemplate,
    mode: DecodeMode,
) -> Vec<DecodedPrediction> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| parse_output(i, t.as_ref(), tpl, mode))
        .collect()
}

/// Read a `{split}_yhat_{backend}.txt` file and decode every line.
pub fn decode_file(path: &Path, tpl: &ScenarioTemplate, mode: DecodeMode) -> Result<Vec<DecodedPrediction>> {
    let lines = crate::prompting::read_lines(path)?;
    Ok(batch_decode(&lines, tpl, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ct() -> ScenarioTemplate {
        ScenarioTemplate::ct()
    }

    #[test]
    fn strict_examples() {
        let tpl = ct();
        let p = parse_output(0, "The temperature will be 78 degree.", &tpl, DecodeMode::Strict);
        assert_eq!(p.value, Some(78.0));
        assert_eq!(p.status(), DecodeStatus::Decoded);
        assert_eq!(
            decode_value("The temperature will be -12 degree.", &tpl, DecodeMode::Strict),
            Some(-12.0)
        );
        let dashes = parse_output(0, "the temperature will be - - - -", &tpl, DecodeMode::Strict);
        assert_eq!(dashes.status(), DecodeStatus::Missing);
        assert_eq!(dashes.raw_text, "the temperature will be - - - -");
        assert_eq!(
            decode_value("the temperature will be - - - -", &tpl, DecodeMode::Lenient),
            None
        );
    }

    #[test]
    fn strict_tolerates_case_and_whitespace() {
        let tpl = ct();
        assert_eq!(
            decode_value("  THE temperature will be  78  DEGREE. \t", &tpl, DecodeMode::Strict),
            Some(78.0)
        );
    }

    #[test]
    fn strict_rejects_variants() {
        let tpl = ct();
        for text in [
            "The temperature will be 78.5 degree.",
            "The temperature will be - 5 degree.",
            "The temperature will be 78 degrees.",
            "It will be 78 degree.",
            "The temperature will be  degree.",
            "",
        ] {
            assert_eq!(decode_value(text, &tpl, DecodeMode::Strict), None, "{text:?}");
        }
    }

    #[test]
    fn lenient_fallbacks() {
        let tpl = ct();
        let lenient = |t: &str| decode_value(t, &tpl, DecodeMode::Lenient);
        assert_eq!(lenient("The temperature will be - 5 degree."), Some(-5.0));
        assert_eq!(lenient("about 78.5 or 80"), Some(79.0));
        assert_eq!(lenient("-2.5"), Some(-3.0));
        assert_eq!(lenient("The temperature will be 78 degrees"), Some(78.0));
        assert_eq!(lenient("no idea"), None);
    }

    #[test]
    fn batch_preserves_order() {
        let tpl = ScenarioTemplate::sg();
        let texts = ["There will be 3 visitors.", "garbage", "There will be 15 visitors."];
        let out = batch_decode(&texts, &tpl, DecodeMode::Strict);
        assert_eq!(out.len(), 3);
        assert_eq!(out.iter().map(|p| p.line).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(out.iter().filter(|p| p.is_decoded()).count(), 2);
        assert!(batch_decode::<&str>(&[], &tpl, DecodeMode::Strict).is_empty());
    }

    proptest! {
        #[test]
        fn render_then_strict_decode(v in -10_000i64..=30_000) {
            for tpl in [ScenarioTemplate::ct(), ScenarioTemplate::ecl(), ScenarioTemplate::sg()] {
                let text = tpl.render_answer(v);
                prop_assert_eq!(decode_value(&text, &tpl, DecodeMode::Strict), Some(v as f64));
            }
        }

        #[test]
        fn lenient_extends_strict(text in "[ A-Za-z0-9.\\-]{0,40}") {
            let tpl = ct();
            if let Some(v) = decode_value(&text, &tpl, DecodeMode::Strict) {
                prop_assert_eq!(decode_value(&text, &tpl, DecodeMode::Lenient), Some(v));
            }
            let wrapped = format!("The temperature will be {text} degree.");
            if let Some(v) = decode_value(&wrapped, &tpl, DecodeMode::Strict) {
                prop_assert_eq!(decode_value(&wrapped, &tpl, DecodeMode::Lenient), Some(v));
            }
        }
    }
}
