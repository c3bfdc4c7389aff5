//! Answer equivalence used by the dataset filter, the evaluator and the
//! answer reward.
//!
//! `Auto` cascades: if both sides read as a multiple-choice letter (A–E) the
//! letters decide; otherwise if both parse as numbers they must agree within
//! a relative tolerance of 1e-6; otherwise the normalized strings must be
//! equal.

use serde::{Deserialize, Serialize};

use crate::graph::normalize_text;

pub const NUMERIC_RELATIVE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Mcq,
    Numeric,
    Freeform,
    #[default]
    Auto,
}

fn strip_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for c in text.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            '*' | '`' | '_' if !in_tag => {}
            c if !in_tag => out.push(c),
            _ => {}
        }
    }
    out
}

fn trim_punct(text: &str) -> &str {
    text.trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
}

/// Extracts a single option letter `A`–`E`, uppercased.
pub fn option_letter(text: &str) -> Option<char> {
    let cleaned = strip_markup(text);
    let is_option = |c: char| matches!(c.to_ascii_uppercase(), 'A'..='E');

    let bare = trim_punct(&cleaned);
    let mut chars = bare.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        return is_option(c).then(|| c.to_ascii_uppercase());
    }

    // "Option B", "choice (c)"
    let lower = bare.to_ascii_lowercase();
    for prefix in ["option", "choice"] {
        if let Some(rest) = lower.strip_prefix(prefix) {
            let rest = trim_punct(rest);
            let mut chars = rest.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                if is_option(c) {
                    return Some(c.to_ascii_uppercase());
                }
            }
        }
    }

    // "(B) text", "B. text", "b) text"
    let lead = cleaned.trim_start_matches(|c: char| c.is_whitespace() || c == '(' || c == '[');
    let mut chars = lead.chars();
    match (chars.next(), chars.next(), chars.next()) {
        (Some(c), Some(')' | '.' | ':' | ']'), next)
            if is_option(c) && next.is_none_or(char::is_whitespace) =>
        {
            Some(c.to_ascii_uppercase())
        }
        _ => None,
    }
}

/// Parses a plain number, tolerating `$`, `%`, thousands separators,
/// a trailing period and simple `a/b` fractions.
pub fn parse_number(text: &str) -> Option<f64> {
    let cleaned = strip_markup(text);
    let mut s = cleaned.trim().trim_end_matches('.').trim();
    s = s.strip_prefix('$').unwrap_or(s);
    s = s.strip_suffix('%').unwrap_or(s).trim();
    if let Some((num, den)) = s.split_once('/') {
        let value = parse_plain(num.trim())? / parse_plain(den.trim())?;
        return value.is_finite().then_some(value);
    }
    parse_plain(s)
}

fn parse_plain(s: &str) -> Option<f64> {
    if s.is_empty()
        || !s.starts_with(|c: char| c.is_ascii_digit() || matches!(c, '-' | '+' | '.'))
        || !s
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E' | ','))
    {
        return None;
    }
    let value: f64 = s.replace(',', "").parse().ok()?;
    value.is_finite().then_some(value)
}

pub fn numbers_match(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= NUMERIC_RELATIVE_TOLERANCE * a.abs().max(b.abs())
}

/// Lowercase, whitespace-collapsed, markup- and punctuation-trimmed form.
pub fn normalize_freeform(text: &str) -> String {
    normalize_text(&strip_markup(text))
}

pub fn answers_match(candidate: &str, label: &str, mode: MatchMode) -> bool {
    match mode {
        MatchMode::Mcq => matches!(
            (option_letter(candidate), option_letter(label)),
            (Some(a), Some(b)) if a == b
        ),
        MatchMode::Numeric => matches!(
            (parse_number(candidate), parse_number(label)),
            (Some(a), Some(b)) if numbers_match(a, b)
        ),
        MatchMode::Freeform => {
            let (a, b) = (normalize_freeform(candidate), normalize_freeform(label));
            !a.is_empty() && a == b
        }
        MatchMode::Auto => {
            if let (Some(a), Some(b)) = (option_letter(candidate), option_letter(label)) {
                return a == b;
            }
            if let (Some(a), Some(b)) = (parse_number(candidate), parse_number(label)) {
                return numbers_match(a, b);
            }
            answers_match(candidate, label, MatchMode::Freeform)
        }
    }
}
