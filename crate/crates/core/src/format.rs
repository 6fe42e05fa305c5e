//! Transcript grammar: reasoning wrapped in think tags followed by a
//! structured result block.
//!
//! A compliant transcript is exactly one think block followed by exactly one
//! result block (surrounding whitespace allowed), where the result interior
//! holds a `Request:` verdict line and, when the grammar expects a response
//! verdict, a `Response:` line. Parsing is total: malformed input never
//! raises, it yields `compliant = false` with a reason code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GroundTruth, SafetyLabel};

/// Whether the result block must carry a response verdict.
///
/// Prompt-only samples use [`GrammarMode::RequestOnly`], where a `Response:`
/// line is tolerated but its value is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrammarMode {
    RequestOnly,
    RequestAndResponse,
}

/// Tag strings and result keys of the transcript grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptGrammar {
    pub think_open: String,
    pub think_close: String,
    pub result_open: String,
    pub result_close: String,
    pub request_key: String,
    pub response_key: String,
    pub mode: GrammarMode,
    /// Strict mode rejects any text outside the two blocks. Lenient mode
    /// ignores surrounding text and uses the first block pair found.
    pub strict: bool,
}

impl Default for TranscriptGrammar {
    fn default() -> Self {
        TranscriptGrammar {
            think_open: "<think>".to_string(),
            think_close: "</think>".to_string(),
            result_open: "<result>".to_string(),
            result_close: "</result>".to_string(),
            request_key: "Request:".to_string(),
            response_key: "Response:".to_string(),
            mode: GrammarMode::RequestAndResponse,
            strict: true,
        }
    }
}

impl TranscriptGrammar {
    /// Tags must be non-empty and pairwise distinct.
    pub fn validate(&self) -> Result<(), FormatError> {
        let tags = [
            &self.think_open,
            &self.think_close,
            &self.result_open,
            &self.result_close,
        ];
        if tags.iter().any(|t| t.is_empty()) {
            return Err(FormatError::InvalidGrammar("empty tag".into()));
        }
        for i in 0..tags.len() {
            for j in (i + 1)..tags.len() {
                if tags[i] == tags[j] {
                    return Err(FormatError::InvalidGrammar(format!(
                        "duplicate tag `{}`",
                        tags[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_mode(&self, mode: GrammarMode) -> Self {
        TranscriptGrammar { mode, ..self.clone() }
    }

    /// Grammar mode matching a sample's ground truth: samples with a labeled
    /// response expect a response verdict.
    pub fn for_truth(&self, truth: &GroundTruth) -> Self {
        let mode = if truth.response_label.is_some() {
            GrammarMode::RequestAndResponse
        } else {
            GrammarMode::RequestOnly
        };
        self.with_mode(mode)
    }

    fn tags(&self) -> [&str; 4] {
        [
            &self.think_open,
            &self.think_close,
            &self.result_open,
            &self.result_close,
        ]
    }
}

/// Reason code attached to a non-compliant parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseIssue {
    MissingThink,
    UnclosedThink,
    MissingResult,
    UnclosedResult,
    TextOutsideBlocks,
    NestedTag,
    MissingRequest,
    MissingResponse,
    BadLabel,
    ExtraResultText,
}

impl ParseIssue {
    pub fn code(&self) -> &'static str {
        match self {
            ParseIssue::MissingThink => "missing-think",
            ParseIssue::UnclosedThink => "unclosed-think",
            ParseIssue::MissingResult => "missing-result",
            ParseIssue::UnclosedResult => "unclosed-result",
            ParseIssue::TextOutsideBlocks => "text-outside-blocks",
            ParseIssue::NestedTag => "nested-tag",
            ParseIssue::MissingRequest => "missing-request",
            ParseIssue::MissingResponse => "missing-response",
            ParseIssue::BadLabel => "bad-label",
            ParseIssue::ExtraResultText => "extra-result-text",
        }
    }
}

/// Extracted verdict labels. Fields may be absent on non-compliant parses
/// or in request-only mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Verdict {
    pub request: Option<SafetyLabel>,
    pub response: Option<SafetyLabel>,
}

/// Result of parsing a transcript against the grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub compliant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<ParseIssue>,
    pub reasoning: String,
    pub verdict: Verdict,
    /// Token count of the full transcript, compliant or not.
    pub token_count: usize,
}

impl ParsedOutput {
    fn failed(reason: ParseIssue, token_count: usize) -> Self {
        ParsedOutput {
            compliant: false,
            reason: Some(reason),
            reasoning: String::new(),
            verdict: Verdict::default(),
            token_count,
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),
    #[error("reasoning contains reserved tag `{0}`")]
    ReservedTag(String),
}

/// Token-counting function used for reward lengths and filter bounds.
pub trait TokenCounter {
    fn count_tokens(&self, text: &str) -> usize;
}

/// Desk-scale default tokenizer: whitespace splitting.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl TokenCounter for WhitespaceTokenizer {
    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub fn count_tokens(text: &str, tokenizer: &dyn TokenCounter) -> usize {
    tokenizer.count_tokens(text)
}

/// Parse a transcript. Total over arbitrary input: malformation is reported
/// as `compliant = false` with the first issue found.
pub fn parse_output(
    text: &str,
    grammar: &TranscriptGrammar,
    tokenizer: &dyn TokenCounter,
) -> ParsedOutput {
    let token_count = tokenizer.count_tokens(text);
    let fail = |reason| ParsedOutput::failed(reason, token_count);

    let s = text.trim();
    let Some(think_start) = s.find(&grammar.think_open) else {
        return fail(ParseIssue::MissingThink);
    };
    if grammar.strict && !s[..think_start].trim().is_empty() {
        return fail(ParseIssue::TextOutsideBlocks);
    }
    let after_open = think_start + grammar.think_open.len();
    let Some(rel_close) = s[after_open..].find(&grammar.think_close) else {
        return fail(ParseIssue::UnclosedThink);
    };
    let reasoning = &s[after_open..after_open + rel_close];
    if grammar.tags().iter().any(|tag| reasoning.contains(tag)) {
        return fail(ParseIssue::NestedTag);
    }

    let rest = &s[after_open + rel_close + grammar.think_close.len()..];
    let Some(result_start) = rest.find(&grammar.result_open) else {
        return fail(ParseIssue::MissingResult);
    };
    if grammar.strict && !rest[..result_start].trim().is_empty() {
        return fail(ParseIssue::TextOutsideBlocks);
    }
    let after_result_open = result_start + grammar.result_open.len();
    let Some(rel_result_close) = rest[after_result_open..].find(&grammar.result_close) else {
        return fail(ParseIssue::UnclosedResult);
    };
    let interior = &rest[after_result_open..after_result_open + rel_result_close];
    if grammar.tags().iter().any(|tag| interior.contains(tag)) {
        return fail(ParseIssue::NestedTag);
    }
    let trailing = &rest[after_result_open + rel_result_close + grammar.result_close.len()..];
    if grammar.strict && !trailing.trim().is_empty() {
        return fail(ParseIssue::TextOutsideBlocks);
    }

    // Verdict extraction from the result interior. Consumed spans are
    // blanked out so leftover text can be detected.
    let mut remaining = interior.to_string();

    let request = match take_labeled_value(&mut remaining, &grammar.request_key) {
        KeyedValue::Found(word) => match SafetyLabel::parse(&word) {
            Some(label) => label,
            None => return fail(ParseIssue::BadLabel),
        },
        KeyedValue::KeyMissing => return fail(ParseIssue::MissingRequest),
        KeyedValue::ValueMissing => return fail(ParseIssue::BadLabel),
    };

    let response = match grammar.mode {
        GrammarMode::RequestAndResponse => {
            match take_labeled_value(&mut remaining, &grammar.response_key) {
                KeyedValue::Found(word) => match SafetyLabel::parse(&word) {
                    Some(label) => Some(label),
                    None => return fail(ParseIssue::BadLabel),
                },
                KeyedValue::KeyMissing => return fail(ParseIssue::MissingResponse),
                KeyedValue::ValueMissing => return fail(ParseIssue::BadLabel),
            }
        }
        GrammarMode::RequestOnly => {
            // Tolerated but ignored, whatever its value.
            take_labeled_value(&mut remaining, &grammar.response_key);
            None
        }
    };

    if !remaining.trim().is_empty() {
        return fail(ParseIssue::ExtraResultText);
    }

    ParsedOutput {
        compliant: true,
        reason: None,
        reasoning: reasoning.to_string(),
        verdict: Verdict { request, response: response },
        token_count,
    }
}

enum KeyedValue {
    Found(String),
    KeyMissing,
    ValueMissing,
}

/// Find `key` in `remaining`, extract the whitespace-delimited word after
/// it, and blank both out of `remaining`.
fn take_labeled_value(remaining: &mut String, key: &str) -> KeyedValue {
    let Some(key_pos) = remaining.find(key) else {
        return KeyedValue::KeyMissing;
    };
    let value_region = &remaining[key_pos + key.len()..];
    let Some(word_rel) = value_region.find(|c: char| !c.is_whitespace()) else {
        blank(remaining, key_pos, key_pos + key.len());
        return KeyedValue::ValueMissing;
    };
    let word_start = key_pos + key.len() + word_rel;
    let word_len = remaining[word_start..]
        .find(char::is_whitespace)
        .unwrap_or(remaining.len() - word_start);
    let word = remaining[word_start..word_start + word_len].to_string();
    blank(remaining, key_pos, word_start + word_len);
    KeyedValue::Found(word)
}

fn blank(s: &mut String, start: usize, end: usize) {
    // Replacement preserves byte offsets used by subsequent searches.
    s.replace_range(start..end, &" ".repeat(end - start));
}

/// Render the SFT target transcript for a reasoning trace and ground truth.
///
/// `parse_output(render_target(r, t))` is compliant and recovers `(r, t)`
/// exactly, provided `r` contains no grammar tag.
pub fn render_target(
    reasoning: &str,
    truth: &GroundTruth,
    grammar: &TranscriptGrammar,
) -> Result<String, FormatError> {
    grammar.validate()?;
    for tag in grammar.tags() {
        if reasoning.contains(tag) {
            return Err(FormatError::ReservedTag(tag.to_string()));
        }
    }
    let mut result = format!("{} {}", grammar.request_key, truth.request_label);
    if let Some(response) = truth.response_label {
        result.push('\n');
        result.push_str(&format!("{} {}", grammar.response_key, response));
    }
    Ok(format!(
        "{}{}{}{}{}{}",
        grammar.think_open, reasoning, grammar.think_close, grammar.result_open, result, grammar.result_close
    ))
}
