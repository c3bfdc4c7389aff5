//! Adapters from upstream benchmark files to [`BenchmarkItem`].
//!
//! Files may be a JSON array or JSON Lines. Context, when a source has it,
//! goes first, separated from the question by a blank line; multiple-choice
//! options follow the question as `A. text` lines and labels become letters.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::io::IoError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub question: String,
    pub label: String,
    pub benchmark: String,
    pub item_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    /// LogiQA 2.0 test split.
    LogiQa,
    Aiw,
    /// The harder AIW variant; same file layout as AIW.
    AiwPlus,
    ArLsat,
    /// US four-option test split.
    MedQa,
    MathQa,
}

impl Benchmark {
    pub const ALL: [Benchmark; 6] = [
        Benchmark::LogiQa,
        Benchmark::Aiw,
        Benchmark::AiwPlus,
        Benchmark::ArLsat,
        Benchmark::MedQa,
        Benchmark::MathQa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::LogiQa => "logiqa",
            Benchmark::Aiw => "aiw",
            Benchmark::AiwPlus => "aiw-plus",
            Benchmark::ArLsat => "ar-lsat",
            Benchmark::MedQa => "medqa",
            Benchmark::MathQa => "mathqa",
        }
    }

    /// Published item count of the evaluation split, where there is one.
    pub fn expected_count(self) -> Option<usize> {
        match self {
            Benchmark::LogiQa => Some(1572),
            Benchmark::Aiw => Some(200),
            Benchmark::AiwPlus => None,
            Benchmark::ArLsat => Some(230),
            Benchmark::MedQa => Some(1273),
            Benchmark::MathQa => Some(2985),
        }
    }

    pub fn is_multiple_choice(self) -> bool {
        !matches!(self, Benchmark::Aiw | Benchmark::AiwPlus)
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '+')
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "logiqa" | "logiqa2" | "logiqa20" => Benchmark::LogiQa,
            "aiw" => Benchmark::Aiw,
            "aiwplus" | "aiw+" => Benchmark::AiwPlus,
            "arlsat" => Benchmark::ArLsat,
            "medqa" => Benchmark::MedQa,
            "mathqa" => Benchmark::MathQa,
            _ => {
                let names: Vec<_> = Benchmark::ALL.iter().map(|b| b.name()).collect();
                return Err(format!("unknown benchmark {s:?} (expected one of {})", names.join(", ")));
            }
        })
    }
}

/// A raw upstream record and the line it starts on.
struct Record {
    line: usize,
    value: Value,
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> IoError {
    IoError::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn line_of(text: &str, fragment: &str) -> usize {
    let offset = fragment.as_ptr() as usize - text.as_ptr() as usize;
    text[..offset].bytes().filter(|&b| b == b'\n').count() + 1
}

fn read_records(path: &Path) -> Result<Vec<Record>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    if text.trim_start().starts_with('[') {
        let raw: Vec<&RawValue> =
            serde_json::from_str(text).map_err(|e| schema(path, e.line(), e.to_string()))?;
        raw.into_iter()
            .map(|r| {
                let line = line_of(text, r.get());
                let value = serde_json::from_str(r.get()).map_err(|e| schema(path, line, e.to_string()))?;
                Ok(Record { line, value })
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value = serde_json::from_str(line).map_err(|e| schema(path, i + 1, e.to_string()))?;
            out.push(Record { line: i + 1, value });
        }
        Ok(out)
    }
}

/// Field accessor that reports the offending file and line.
struct Fields<'a> {
    path: &'a Path,
    line: usize,
    value: &'a Value,
}

impl<'a> Fields<'a> {
    fn get(&self, keys: &[&str]) -> Option<&'a Value> {
        keys.iter().find_map(|k| self.value.get(*k)).filter(|v| !v.is_null())
    }

    fn text(&self, keys: &[&str]) -> Result<String, IoError> {
        match self.get(keys) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(schema(self.path, self.line, format!("field {:?} is empty or not text", keys[0]))),
            None => Err(schema(self.path, self.line, format!("missing field {:?}", keys[0]))),
        }
    }

    fn optional_text(&self, keys: &[&str]) -> Option<String> {
        match self.get(keys)? {
            Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    }

    fn err(&self, message: impl Into<String>) -> IoError {
        schema(self.path, self.line, message)
    }
}

fn letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Drops an upstream `A)` / `(A)` / `A.` prefix so options are not lettered twice.
fn strip_option_prefix(option: &str) -> &str {
    let t = option.trim();
    let t2 = t.strip_prefix('(').unwrap_or(t);
    let mut chars = t2.chars();
    if let (Some(c), Some(sep)) = (chars.next(), chars.next()) {
        if c.is_ascii_alphabetic() && matches!(sep, ')' | '.' | ':') {
            return chars.as_str().trim();
        }
    }
    t
}

fn compose(context: Option<&str>, question: &str, options: &[String]) -> String {
    let mut out = String::new();
    if let Some(c) = context.filter(|c| !c.trim().is_empty()) {
        out.push_str(c.trim());
        out.push_str("\n\n");
    }
    out.push_str(question.trim());
    for (i, option) in options.iter().enumerate() {
        out.push_str(&format!("\n{}. {}", letter(i), strip_option_prefix(option)));
    }
    out
}

fn option_list(fields: &Fields, keys: &[&str]) -> Result<Vec<String>, IoError> {
    let options = match fields.get(keys) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| fields.err("option is not text")))
            .collect::<Result<Vec<_>, _>>()?,
        // keyed by letter, e.g. {"A": "...", "B": "..."}
        Some(Value::Object(map)) => {
            let mut pairs: Vec<_> = map.iter().collect();
            pairs.sort_by(|a, b| a.0.cmp(b.0));
            pairs
                .into_iter()
                .map(|(_, v)| v.as_str().map(str::to_string).ok_or_else(|| fields.err("option is not text")))
                .collect::<Result<Vec<_>, _>>()?
        }
        Some(_) => return Err(fields.err(format!("field {:?} is not a list of options", keys[0]))),
        None => return Err(fields.err(format!("missing field {:?}", keys[0]))),
    };
    if options.len() < 2 || options.len() > 26 {
        return Err(fields.err(format!("expected 2–26 options, found {}", options.len())));
    }
    Ok(options)
}

/// Normalizes an MCQ label (index or letter) to an upper-case letter.
fn letter_label(fields: &Fields, keys: &[&str], n_options: usize) -> Result<String, IoError> {
    let index = match fields.get(keys) {
        Some(Value::Number(n)) => n.as_u64().map(|i| i as usize),
        Some(Value::String(s)) => {
            let s = s.trim().trim_matches(|c| c == '(' || c == ')');
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => Some((c.to_ascii_uppercase() as u8 - b'A') as usize),
                _ => s.parse::<usize>().ok(),
            }
        }
        None => return Err(fields.err(format!("missing field {:?}", keys[0]))),
        Some(_) => None,
    };
    match index {
        Some(i) if i < n_options => Ok(letter(i).to_string()),
        _ => Err(fields.err(format!("label {:?} does not name one of {n_options} options", fields.get(keys)))),
    }
}

/// Splits MathQA's `a ) 38 , b ) 27.675 , c ) 30` option string.
fn mathqa_options(raw: &str) -> Option<Vec<String>> {
    let mut starts = Vec::new();
    let mut from = 0;
    for (i, l) in ('a'..='e').enumerate() {
        let marker = if i == 0 { format!("{l} )") } else { format!(", {l} )") };
        match raw[from..].find(&marker) {
            Some(pos) => {
                starts.push((from + pos, marker.len()));
                from += pos + marker.len();
            }
            None => break,
        }
    }
    if starts.len() < 2 || starts[0].0 != raw.len() - raw.trim_start().len() {
        return None;
    }
    let mut out = Vec::new();
    for (i, &(pos, len)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(raw.len(), |s| s.0);
        out.push(raw[pos + len..end].trim().to_string());
    }
    Some(out)
}

fn adapt(benchmark: Benchmark, fields: &Fields) -> Result<Vec<(Option<String>, String, String)>, IoError> {
    let one = |id, q, l| Ok(vec![(id, q, l)]);
    match benchmark {
        Benchmark::LogiQa => {
            let options = option_list(fields, &["options"])?;
            let label = letter_label(fields, &["answer", "label"], options.len())?;
            let context = fields.optional_text(&["text", "context"]);
            let question = compose(context.as_deref(), &fields.text(&["question"])?, &options);
            one(fields.optional_text(&["id"]), question, label)
        }
        Benchmark::Aiw | Benchmark::AiwPlus => {
            let question = fields.text(&["text", "prompt", "question"])?;
            let label = fields.text(&["right_answer", "answer", "label"])?;
            one(fields.optional_text(&["id"]), question, label)
        }
        Benchmark::MedQa => {
            let options = option_list(fields, &["options"])?;
            let label = letter_label(fields, &["answer_idx", "label"], options.len())?;
            let question = compose(None, &fields.text(&["question"])?, &options);
            one(fields.optional_text(&["id"]), question, label)
        }
        Benchmark::MathQa => {
            let options = match fields.get(&["options"]) {
                Some(Value::String(s)) => {
                    mathqa_options(s).ok_or_else(|| fields.err(format!("unrecognized option string {s:?}")))?
                }
                _ => option_list(fields, &["options"])?,
            };
            let label = letter_label(fields, &["correct", "answer"], options.len())?;
            let question = compose(None, &fields.text(&["Problem", "problem", "question"])?, &options);
            one(fields.optional_text(&["id"]), question, label)
        }
        Benchmark::ArLsat => {
            // one passage record holds several questions
            let passage = fields.text(&["passage", "context"])?;
            let passage_id = fields.optional_text(&["id"]);
            let Some(Value::Array(questions)) = fields.get(&["questions"]) else {
                return Err(fields.err("missing field \"questions\""));
            };
            let mut out = Vec::new();
            for (qi, q) in questions.iter().enumerate() {
                let qf = Fields {
                    path: fields.path,
                    line: fields.line,
                    value: q,
                };
                let options = option_list(&qf, &["options"])?;
                let label = letter_label(&qf, &["answer", "label"], options.len())?;
                let question = compose(Some(&passage), &qf.text(&["question"])?, &options);
                let id = qf
                    .optional_text(&["id"])
                    .or_else(|| passage_id.as_ref().map(|p| format!("{p}_{}", qi + 1)));
                out.push((id, question, label));
            }
            Ok(out)
        }
    }
}

/// Reads `files` in order and maps every record to a [`BenchmarkItem`].
/// Upstream ids are kept when present; otherwise (or on collision) the id is
/// derived from the item's position, so re-ingestion is stable.
pub fn ingest(benchmark: Benchmark, files: &[PathBuf]) -> Result<Vec<BenchmarkItem>, IoError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for path in files {
        for record in read_records(path)? {
            let fields = Fields {
                path,
                line: record.line,
                value: &record.value,
            };
            for (id, question, label) in adapt(benchmark, &fields)? {
                let position = items.len();
                let id = id
                    .filter(|id| !seen.contains(id))
                    .unwrap_or_else(|| format!("{}-{position}", benchmark.name()));
                if !seen.insert(id.clone()) {
                    return Err(fields.err(format!("duplicate item id {id:?}")));
                }
                items.push(BenchmarkItem {
                    question,
                    label,
                    benchmark: benchmark.name().to_string(),
                    item_id: id,
                });
            }
        }
    }
    Ok(items)
}
