//! Binary format and answer rewards over model completions.
//!
//! The two are independent: the answer reward only needs an `<answer>` tag,
//! so a correct answer is credited even when the template is broken.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{answers_match, MatchMode};
use crate::template::{self, Strictness};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("{completions} completions but {labels} labels")]
    LengthMismatch { completions: usize, labels: usize },
    #[error("reward weights must be finite and nonnegative, got ({format}, {answer})")]
    InvalidWeights { format: f64, answer: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub format: f64,
    pub answer: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            format: 1.0,
            answer: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn new(format: f64, answer: f64) -> Result<Self, RewardError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if ok(format) && ok(answer) {
            Ok(Self { format, answer })
        } else {
            Err(RewardError::InvalidWeights { format, answer })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScore {
    pub format_reward: u8,
    pub answer_reward: u8,
    pub combined: f64,
}

/// 1 iff the completion strictly parses as a reasoning template.
pub fn reward_format(completion: &str) -> u8 {
    u8::from(template::parse(completion, Strictness::Strict).is_ok())
}

/// 1 iff an `<answer>` tag is present and its content matches `label`.
pub fn reward_answer(completion: &str, label: &str) -> u8 {
    template::answer_tag_content(completion)
        .is_some_and(|answer| answers_match(&answer, label, MatchMode::Auto))
        .into()
}

pub fn score(completion: &str, label: &str, weights: RewardWeights) -> RewardScore {
    let format_reward = reward_format(completion);
    let answer_reward = reward_answer(completion, label);
    RewardScore {
        format_reward,
        answer_reward,
        combined: weights.format * f64::from(format_reward) + weights.answer * f64::from(answer_reward),
    }
}

pub fn score_batch<C: AsRef<str>, L: AsRef<str>>(
    completions: &[C],
    labels: &[L],
    weights: RewardWeights,
) -> Result<Vec<RewardScore>, RewardError> {
    if completions.len() != labels.len() {
        return Err(RewardError::LengthMismatch {
            completions: completions.len(),
            labels: labels.len(),
        });
    }
    let weights = RewardWeights::new(weights.format, weights.answer)?;
    Ok(completions
        .iter()
        .zip(labels)
        .map(|(c, l)| score(c.as_ref(), l.as_ref(), weights))
        .collect())
}
