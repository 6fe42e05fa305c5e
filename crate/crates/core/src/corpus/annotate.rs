//! Chain-of-thought annotation and the rule-based annotation filter.
//!
//! Annotation sends each sample through a pluggable teacher backend that
//! returns a raw transcript; the transcript is parsed against the grammar
//! and becomes an [`AnnotatedSample`]. The filter then keeps only
//! annotations that re-render compliantly, agree with ground truth, and
//! fall inside the configured reasoning-length bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::synthetic::{contains_banned, SyntheticTaskConfig};
use super::{AnnotatedSample, GroundTruth, Sample};
use crate::format::{parse_output, render_target, TokenCounter, TranscriptGrammar};

/// Prompt template with `{request}`, `{response}`, and `{media}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub text: String,
}

pub const DEFAULT_ANNOTATION_TEMPLATE: &str = "\
You are a content moderator. Analyze the interaction step by step, then give \
your verdict inside <result> tags with `Request:` and `Response:` lines, and \
wrap your reasoning in <think> tags.\n\
Modality payload: {media}\n\
Request: {request}\n\
Response: {response}\n";

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate { text: DEFAULT_ANNOTATION_TEMPLATE.to_string() }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        for placeholder in ["{request}", "{response}", "{media}"] {
            if !self.text.contains(placeholder) {
                return Err(AnnotateError::BadTemplate(placeholder.to_string()));
            }
        }
        Ok(())
    }

    pub fn render(&self, sample: &Sample) -> String {
        self.text
            .replace("{request}", sample.request_text.as_deref().unwrap_or("(none)"))
            .replace("{response}", sample.victim_response.as_deref().unwrap_or("(none)"))
            .replace("{media}", &sample.media_refs.join(" "))
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("template missing placeholder `{0}`")]
    BadTemplate(String),
    #[error("backend: {0}")]
    Backend(String),
}

/// Teacher backend producing a raw transcript for one sample.
///
/// Implementations include the external completion-endpoint client and the
/// built-in synthetic rule annotator.
pub trait CotAnnotator: Sync {
    fn annotate(&self, sample: &Sample, prompt: &str) -> Result<String, AnnotateError>;
}

/// Truth-aware annotator for the synthetic task. Its reasoning reports the
/// scan outcome of every banned pattern against every segment, so the trace
/// always names the triggering rule, and its verdict re-applies the
/// labeling rule.
pub struct SyntheticRuleAnnotator {
    config: SyntheticTaskConfig,
    grammar: TranscriptGrammar,
}

impl SyntheticRuleAnnotator {
    pub fn new(config: SyntheticTaskConfig, grammar: TranscriptGrammar) -> Self {
        SyntheticRuleAnnotator { config, grammar }
    }

    fn scan_segment(&self, name: &str, text: &str, reasoning: &mut Vec<String>) {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        for pattern in self.config.patterns() {
            reasoning.push("scan".to_string());
            reasoning.push(name.to_string());
            reasoning.push("pattern".to_string());
            reasoning.extend(pattern.iter().cloned());
            let status = if contains_banned(&tokens, std::slice::from_ref(&pattern)) {
                "hit"
            } else {
                "clean"
            };
            reasoning.push(status.to_string());
        }
    }
}

impl CotAnnotator for SyntheticRuleAnnotator {
    fn annotate(&self, sample: &Sample, _prompt: &str) -> Result<String, AnnotateError> {
        let mut words = Vec::new();
        self.scan_segment("req", sample.request_text.as_deref().unwrap_or(""), &mut words);
        if let Some(response) = &sample.victim_response {
            self.scan_segment("res", response, &mut words);
        }
        words.push("verdict".to_string());
        words.push(sample.truth.request_label.to_string());
        if let Some(response_label) = sample.truth.response_label {
            words.push(response_label.to_string());
        }
        let reasoning = words.join(" ");
        render_target(&reasoning, &sample.truth, &self.grammar)
            .map_err(|e| AnnotateError::Backend(e.to_string()))
    }
}

/// Per-sample annotation failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateFailure {
    pub id: String,
    pub reason: String,
}

/// Annotate samples through a backend. Backend calls run concurrently
/// across samples; failures are reported per sample, never dropped.
pub fn annotate_cot(
    samples: &[Sample],
    backend: &dyn CotAnnotator,
    template: &PromptTemplate,
    grammar: &TranscriptGrammar,
    tokenizer: &(dyn TokenCounter + Sync),
) -> Result<(Vec<AnnotatedSample>, Vec<AnnotateFailure>), AnnotateError> {
    template.validate()?;

    let outcomes: Vec<Result<AnnotatedSample, AnnotateFailure>> = samples
        .par_iter()
        .map(|sample| {
            let prompt = template.render(sample);
            let text = backend.annotate(sample, &prompt).map_err(|e| AnnotateFailure {
                id: sample.id.clone(),
                reason: e.to_string(),
            })?;
            let parsed = parse_output(&text, &grammar.for_truth(&sample.truth), tokenizer);
            if !parsed.compliant {
                return Err(AnnotateFailure {
                    id: sample.id.clone(),
                    reason: format!(
                        "unparseable: {}",
                        parsed.reason.map_or("unknown", |r| r.code())
                    ),
                });
            }
            let request_label = parsed.verdict.request.expect("compliant parse has a request label");
            Ok(AnnotatedSample {
                sample: sample.clone(),
                reasoning: parsed.reasoning,
                teacher_verdict: GroundTruth {
                    request_label,
                    response_label: parsed.verdict.response,
                },
            })
        })
        .collect();

    let mut annotated = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(a) => annotated.push(a),
            Err(f) => failures.push(f),
        }
    }
    Ok((annotated, failures))
}

/// Reasoning-length bounds for the annotation filter, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { min_tokens: 10, max_tokens: 4096 }
    }
}

/// First rule an annotation violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    NonCompliant,
    VerdictMismatch,
    TooShort,
    TooLong,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::NonCompliant => "non-compliant",
            RejectReason::VerdictMismatch => "verdict-mismatch",
            RejectReason::TooShort => "too-short",
            RejectReason::TooLong => "too-long",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedAnnotation {
    pub annotated: AnnotatedSample,
    pub reason: RejectReason,
}

fn first_violation(
    annotated: &AnnotatedSample,
    config: &FilterConfig,
    grammar: &TranscriptGrammar,
    tokenizer: &dyn TokenCounter,
) -> Option<RejectReason> {
    // (a) the annotation re-renders into a compliant transcript
    let grammar = grammar.for_truth(&annotated.teacher_verdict);
    let compliant = render_target(&annotated.reasoning, &annotated.teacher_verdict, &grammar)
        .map(|text| parse_output(&text, &grammar, tokenizer).compliant)
        .unwrap_or(false);
    if !compliant {
        return Some(RejectReason::NonCompliant);
    }
    // (b) teacher verdict agrees with ground truth on all labeled fields
    let truth = &annotated.sample.truth;
    if annotated.teacher_verdict.request_label != truth.request_label {
        return Some(RejectReason::VerdictMismatch);
    }
    if let Some(expected) = truth.response_label {
        if annotated.teacher_verdict.response_label != Some(expected) {
            return Some(RejectReason::VerdictMismatch);
        }
    }
    // (c) reasoning length within bounds
    let tokens = tokenizer.count_tokens(&annotated.reasoning);
    if tokens < config.min_tokens {
        return Some(RejectReason::TooShort);
    }
    if tokens > config.max_tokens {
        return Some(RejectReason::TooLong);
    }
    None
}

/// Partition annotations into kept and rejected. Rejections carry the first
/// violated rule. Filtering is idempotent: every kept record passes again.
pub fn filter_annotations(
    annotated: Vec<AnnotatedSample>,
    config: &FilterConfig,
    grammar: &TranscriptGrammar,
    tokenizer: &dyn TokenCounter,
) -> (Vec<AnnotatedSample>, Vec<RejectedAnnotation>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for a in annotated {
        match first_violation(&a, config, grammar, tokenizer) {
            None => kept.push(a),
            Some(reason) => rejected.push(RejectedAnnotation { annotated: a, reason }),
        }
    }
    (kept, rejected)
}
