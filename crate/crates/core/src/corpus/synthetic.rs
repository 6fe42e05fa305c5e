//! Synthetic moderation task: token sequences labeled by a banned-pattern
//! rule.
//!
//! A segment is harmful iff any configured banned pattern occurs as a
//! contiguous token run. Labels are always assigned by re-applying this
//! rule to the final sequence, never from the generator's intent, so the
//! ground truth is exact by construction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    CorpusError, DatasetManifest, GroundTruth, ManifestRecord, Modality, SafetyLabel, Sample,
    Split,
};
use crate::rng::rng_from_seed;

/// Configuration of the synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTaskConfig {
    /// Content token vocabulary.
    pub vocab: Vec<String>,
    /// Banned trigger patterns, each a space-separated token run.
    pub banned_patterns: Vec<String>,
    /// Inclusive sequence-length bounds per segment.
    pub min_len: usize,
    pub max_len: usize,
    /// Target fraction of harmful segments.
    pub harmful_rate: f64,
    /// Fraction of samples carrying a victim response.
    pub response_rate: f64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            vocab: ('a'..='h').map(|c| c.to_string()).collect(),
            banned_patterns: vec!["f g".to_string(), "c d".to_string()],
            min_len: 4,
            max_len: 12,
            harmful_rate: 0.5,
            response_rate: 1.0,
        }
    }
}

impl SyntheticTaskConfig {
    /// Banned patterns as token runs.
    pub fn patterns(&self) -> Vec<Vec<String>> {
        self.banned_patterns
            .iter()
            .map(|p| p.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.vocab.is_empty() {
            return Err(CorpusError::SyntheticConfig("empty vocabulary".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(CorpusError::SyntheticConfig(format!(
                "bad length bounds [{}, {}]",
                self.min_len, self.max_len
            )));
        }
        if !(0.0..=1.0).contains(&self.harmful_rate) {
            return Err(CorpusError::SyntheticConfig(format!(
                "harmful_rate {} outside [0,1]",
                self.harmful_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.response_rate) {
            return Err(CorpusError::SyntheticConfig(format!(
                "response_rate {} outside [0,1]",
                self.response_rate
            )));
        }
        if self.harmful_rate > 0.0 && self.banned_patterns.is_empty() {
            return Err(CorpusError::SyntheticConfig(
                "harmful_rate > 0 but no banned patterns: target unreachable".into(),
            ));
        }
        for pattern in self.patterns() {
            if pattern.is_empty() {
                return Err(CorpusError::SyntheticConfig("empty banned pattern".into()));
            }
            for token in &pattern {
                if !self.vocab.contains(token) {
                    return Err(CorpusError::SyntheticConfig(format!(
                        "pattern token `{token}` not in vocabulary"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Does any banned pattern occur as a contiguous run in `tokens`?
pub fn contains_banned(tokens: &[String], patterns: &[Vec<String>]) -> bool {
    patterns.iter().any(|pattern| {
        !pattern.is_empty()
            && tokens
                .windows(pattern.len())
                .any(|window| window == pattern.as_slice())
    })
}

/// The labeling rule: harmful iff a banned pattern occurs.
pub fn label_of(tokens: &[String], patterns: &[Vec<String>]) -> SafetyLabel {
    if contains_banned(tokens, patterns) {
        SafetyLabel::Harmful
    } else {
        SafetyLabel::Unharmful
    }
}

const UNHARMFUL_RETRIES: usize = 1000;

/// Generate one segment, placing a banned pattern uniformly at random when
/// a harmful segment is requested, or rejection-sampling a pattern-free
/// sequence otherwise.
fn generate_segment(
    config: &SyntheticTaskConfig,
    patterns: &[Vec<String>],
    want_harmful: bool,
    rng: &mut impl Rng,
) -> Result<Vec<String>, CorpusError> {
    if want_harmful {
        let pattern = &patterns[rng.gen_range(0..patterns.len())];
        let len = rng.gen_range(config.min_len..=config.max_len).max(pattern.len());
        let mut tokens: Vec<String> = (0..len)
            .map(|_| config.vocab[rng.gen_range(0..config.vocab.len())].clone())
            .collect();
        let pos = rng.gen_range(0..=len - pattern.len());
        tokens[pos..pos + pattern.len()].clone_from_slice(pattern);
        Ok(tokens)
    } else {
        for _ in 0..UNHARMFUL_RETRIES {
            let len = rng.gen_range(config.min_len..=config.max_len);
            let tokens: Vec<String> = (0..len)
                .map(|_| config.vocab[rng.gen_range(0..config.vocab.len())].clone())
                .collect();
            if !contains_banned(&tokens, patterns) {
                return Ok(tokens);
            }
        }
        Err(CorpusError::SyntheticConfig(
            "could not generate a pattern-free sequence; banned patterns saturate the vocabulary"
                .into(),
        ))
    }
}

/// Generate `n` synthetic samples, deterministically in `seed`.
pub fn generate_synthetic_task(
    config: &SyntheticTaskConfig,
    n: usize,
    seed: u64,
) -> Result<DatasetManifest, CorpusError> {
    config.validate()?;
    let patterns = config.patterns();
    let mut rng = rng_from_seed(seed);

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let request = generate_segment(config, &patterns, rng.gen_bool(config.harmful_rate), &mut rng)?;
        let with_response = rng.gen_bool(config.response_rate);
        let response = if with_response {
            Some(generate_segment(config, &patterns, rng.gen_bool(config.harmful_rate), &mut rng)?)
        } else {
            None
        };

        let truth = GroundTruth {
            request_label: label_of(&request, &patterns),
            response_label: response.as_deref().map(|r| label_of(r, &patterns)),
        };
        let sample = Sample {
            id: format!("syn-{i:06}"),
            modality: Modality::Text,
            request_text: Some(request.join(" ")),
            media_refs: vec![],
            victim_response: response.map(|r| r.join(" ")),
            truth,
            source: "synthetic".to_string(),
            split: Split::Train,
        };
        records.push(ManifestRecord::from(sample));
    }
    DatasetManifest::new(records)
}
