//! Structured prompt rendering, completion parsing and answer verification.
//!
//! A completion is format-valid only when, after trimming the surrounding
//! whitespace, it is exactly
//!
//! ```text
//! <think>...</think> <answer>...</answer> <confidence>...</confidence>
//! ```
//!
//! with whitespace (possibly none) between the three blocks, every tag
//! occurring once, and a plain decimal in `[0, 1]` inside `<confidence>`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Instruction block appended after the question and options.
pub const RESPONSE_SCHEMA_INSTRUCTIONS: &str = "\n Please reason step by step and follow this exact response schema:\n\
<think>your reasoning</think>\n\
<answer>your final answer</answer>\n\
<confidence>your confidence</confidence>\n\
If options are provided, put only the single option letter inside <answer>.\n\
Otherwise, put only the final value or short expression inside <answer>.\n\
Inside <confidence>, output exactly one decimal number between 0.0 and 1.0.\n\
Start your response with <think> and do not output any text before <think> or after </confidence>.";

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";
const CONF_OPEN: &str = "<confidence>";
const CONF_CLOSE: &str = "</confidence>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub letter: String,
    pub text: String,
}

/// A multiple-choice prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    #[serde(rename = "question", alias = "question_text")]
    pub question_text: String,
    pub options: Vec<AnswerOption>,
    pub gold_letter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.options.len();
        ensure((2..=26).contains(&n), || {
            format!(
                "prompt {}: expected 2 to 26 options, found {n}",
                self.prompt_id
            )
        })?;
        for (i, opt) in self.options.iter().enumerate() {
            let expected = char::from(b'A' + i as u8);
            ensure(opt.letter == expected.to_string(), || {
                format!(
                    "prompt {}: option letters must be consecutive from A; position {} has {:?}, expected {expected}",
                    self.prompt_id,
                    i + 1,
                    opt.letter
                )
            })?;
        }
        ensure(
            self.options.iter().any(|o| o.letter == self.gold_letter),
            || {
                format!(
                    "prompt {}: gold letter {:?} is not among the option letters",
                    self.prompt_id, self.gold_letter
                )
            },
        )
    }
}

/// Render the question, its lettered options and the response-schema instructions.
pub fn render_prompt(spec: &PromptSpec) -> Result<String> {
    spec.validate()?;
    let mut out = String::with_capacity(spec.question_text.len() + 512);
    out.push_str(&spec.question_text);
    out.push('\n');
    for opt in &spec.options {
        out.push_str(&opt.letter);
        out.push_str(". ");
        out.push_str(&opt.text);
        out.push('\n');
    }
    // The instruction block opens with its own newline.
    out.pop();
    out.push_str(RESPONSE_SCHEMA_INSTRUCTIONS);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think_text: String,
    pub answer_text: String,
    pub confidence: Option<f64>,
    pub format_ok: bool,
}

/// Render the three schema tags for a parsed response.
pub fn render_completion(think: &str, answer: &str, confidence: f64) -> String {
    format!("<think>{think}</think>\n<answer>{answer}</answer>\n<confidence>{confidence}</confidence>")
}

/// Parse a model completion against the response schema. Never fails:
/// schema violations are reported through `format_ok = false`.
pub fn parse_completion(text: &str) -> ParsedResponse {
    match parse_strict(text) {
        Some(parsed) => parsed,
        None => ParsedResponse {
            think_text: extract_unique(text, THINK_OPEN, THINK_CLOSE)
                .unwrap_or_default()
                .to_string(),
            answer_text: extract_unique(text, ANSWER_OPEN, ANSWER_CLOSE)
                .map(str::trim)
                .unwrap_or_default()
                .to_string(),
            confidence: None,
            format_ok: false,
        },
    }
}

fn parse_strict(text: &str) -> Option<ParsedResponse> {
    let body = text.trim();
    let tags = [
        THINK_OPEN,
        THINK_CLOSE,
        ANSWER_OPEN,
        ANSWER_CLOSE,
        CONF_OPEN,
        CONF_CLOSE,
    ];
    if tags.iter().any(|t| body.matches(t).count() != 1) {
        return None;
    }

    let rest = body.strip_prefix(THINK_OPEN)?;
    let (think, rest) = rest.split_once(THINK_CLOSE)?;
    let rest = rest.trim_start().strip_prefix(ANSWER_OPEN)?;
    let (answer, rest) = rest.split_once(ANSWER_CLOSE)?;
    let rest = rest.trim_start().strip_prefix(CONF_OPEN)?;
    let (conf, rest) = rest.split_once(CONF_CLOSE)?;
    if !rest.is_empty() {
        return None;
    }

    let answer = answer.trim();
    if answer.is_empty() {
        return None;
    }
    let confidence = parse_unit_decimal(conf.trim())?;
    Some(ParsedResponse {
        think_text: think.to_string(),
        answer_text: answer.to_string(),
        confidence: Some(confidence),
        format_ok: true,
    })
}

/// Plain decimal (`0.7`, `1`, `.5`, `1.0`) within `[0, 1]`. Signs and
/// exponents are rejected.
fn parse_unit_decimal(s: &str) -> Option<f64> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let valid = match frac {
        None => !int.is_empty() && digits(int),
        Some(f) => digits(int) && digits(f) && !(int.is_empty() && f.is_empty()),
    };
    if !valid {
        return None;
    }
    let value: f64 = s.parse().ok()?;
    (0.0..=1.0).contains(&value).then_some(value)
}

fn extract_unique<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    if text.matches(open).count() != 1 || text.matches(close).count() != 1 {
        return None;
    }
    let start = text.find(open)? + open.len();
    let end = text.find(close)?;
    (start <= end).then(|| &text[start..end])
}

/// Normalize a free-text answer: trim, peel enclosing `()`/`[]` and trailing
/// periods, uppercase. Applied to a fixpoint so it is idempotent.
pub fn normalize_answer(answer: &str) -> String {
    let mut cur = answer.trim().to_string();
    loop {
        let mut next = cur.trim();
        if let Some(inner) = next
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .or_else(|| next.strip_prefix('[').and_then(|s| s.strip_suffix(']')))
        {
            next = inner.trim();
        }
        let next = next.strip_suffix('.').unwrap_or(next).trim().to_uppercase();
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// 1 iff the normalized answer is a single letter equal to the gold letter.
pub fn verify_answer(answer_text: &str, spec: &PromptSpec) -> u8 {
    let norm = normalize_answer(answer_text);
    let mut chars = norm.chars();
    match (chars.next(), chars.next()) {
        (Some(ch), None) if ch.is_ascii_uppercase() && norm == spec.gold_letter => 1,
        _ => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Clean,
    Corrupted,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Clean => "clean",
            Branch::Corrupted => "corrupted",
        })
    }
}

/// One sampled completion together with its parsed confidence `c`,
/// verifier correctness `a` and format bit `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub rollout_id: String,
    pub prompt_id: String,
    pub branch: Branch,
    pub slot: u32,
    pub severity: f64,
    pub completion: String,
    pub c: f64,
    pub a: u8,
    pub f: u8,
}

impl Rollout {
    pub fn validate(&self) -> Result<()> {
        let id = &self.rollout_id;
        ensure(self.slot >= 1, || format!("rollout {id}: slot must be >= 1"))?;
        ensure(self.a <= 1, || format!("rollout {id}: a must be 0 or 1"))?;
        ensure(self.f <= 1, || format!("rollout {id}: f must be 0 or 1"))?;
        ensure(self.c.is_finite() && (0.0..=1.0).contains(&self.c), || {
            format!("rollout {id}: confidence {} outside [0, 1]", self.c)
        })?;
        ensure(self.f == 1 || self.c == 0.0, || {
            format!("rollout {id}: format-failed rollout must store c = 0")
        })?;
        ensure(
            self.severity.is_finite() && (0.0..=1.0).contains(&self.severity),
            || format!("rollout {id}: severity {} outside [0, 1]", self.severity),
        )?;
        match self.branch {
            Branch::Clean => ensure(self.severity == 0.0, || {
                format!("rollout {id}: clean rollout must have severity 0")
            }),
            Branch::Corrupted => ensure(self.severity > 0.0, || {
                format!("rollout {id}: corrupted rollout must have severity > 0")
            }),
        }
    }

    pub fn format_ok(&self) -> bool {
        self.f == 1
    }
}

pub fn default_rollout_id(prompt_id: &str, branch: Branch, slot: u32) -> String {
    format!("{prompt_id}:{branch}:{slot}")
}

/// Assemble a rollout from a raw completion. Correctness and format are
/// independent bits; a format failure only blanks the confidence.
pub fn make_rollout(
    prompt_id: &str,
    branch: Branch,
    slot: u32,
    n: u32,
    severity: f64,
    completion: &str,
    spec: &PromptSpec,
) -> Result<Rollout> {
    ensure((1..=n).contains(&slot), || {
        format!("prompt {prompt_id}: slot {slot} outside [1, {n}]")
    })?;
    ensure(spec.prompt_id == prompt_id, || {
        format!(
            "rollout prompt id {prompt_id} does not match prompt spec {}",
            spec.prompt_id
        )
    })?;
    let parsed = parse_completion(completion);
    let a = verify_answer(&parsed.answer_text, spec);
    let (c, f) = match parsed.confidence {
        Some(c) if parsed.format_ok => (c, 1),
        _ => (0.0, 0),
    };
    let rollout = Rollout {
        rollout_id: default_rollout_id(prompt_id, branch, slot),
        prompt_id: prompt_id.to_string(),
        branch,
        slot,
        severity,
        completion: completion.to_string(),
        c,
        a,
        f,
    };
    rollout.validate()?;
    Ok(rollout)
}
