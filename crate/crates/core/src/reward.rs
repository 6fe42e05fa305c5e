//! Rollout reward: format gate, dual-task accuracy, and the error-driven
//! exploration bonus.
//!
//! The total reward is `fmt * (r_acc + r_exp)`. Accuracy splits equally
//! between the request and response verdicts; the exploration bonus
//! `alpha * tanh(L / sigma)` is paid only while accuracy is imperfect, so a
//! fully correct transcript earns exactly 1.0 at any length.

use serde::{Deserialize, Serialize};

use crate::corpus::GroundTruth;
use crate::format::ParsedOutput;

/// Exploration-bonus parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    /// Maximum exploration bonus.
    pub alpha: f64,
    /// Saturation length in tokens.
    pub sigma: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { alpha: 0.2, sigma: 300.0 }
    }
}

/// Per-rollout reward components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Format-compliance indicator, 0 or 1.
    pub fmt: f64,
    /// Accuracy reward in {0, 0.5, 1}.
    pub r_acc: f64,
    /// Exploration bonus in [0, alpha).
    pub r_exp: f64,
    /// `fmt * (r_acc + r_exp)`.
    pub total: f64,
}

/// Accuracy reward against ground truth.
///
/// Both sub-tasks carry equal weight. Prompt-only samples collapse to a
/// single full-weight request indicator so that 1.0 still means "fully
/// correct". A prediction missing a label the truth requires scores that
/// sub-task as incorrect.
pub fn accuracy_reward(pred: &crate::format::Verdict, truth: &GroundTruth) -> f64 {
    let request_hit = pred.request == Some(truth.request_label);
    match truth.response_label {
        Some(response_label) => {
            let response_hit = pred.response == Some(response_label);
            0.5 * f64::from(request_hit) + 0.5 * f64::from(response_hit)
        }
        None => f64::from(request_hit),
    }
}

/// Exploration bonus: `alpha * tanh(L / sigma)` while accuracy is
/// imperfect, zero otherwise.
pub fn exploration_reward(r_acc: f64, token_count: usize, params: &RewardParams) -> f64 {
    if r_acc < 1.0 {
        params.alpha * (token_count as f64 / params.sigma).tanh()
    } else {
        0.0
    }
}

/// Assemble the breakdown from the format indicator, accuracy reward, and
/// transcript length.
pub fn breakdown(fmt_compliant: bool, r_acc: f64, token_count: usize, params: &RewardParams) -> RewardBreakdown {
    let fmt = f64::from(fmt_compliant);
    let r_exp = exploration_reward(r_acc, token_count, params);
    RewardBreakdown { fmt, r_acc, r_exp, total: fmt * (r_acc + r_exp) }
}

/// Total reward of a parsed transcript. Non-compliant transcripts score 0
/// regardless of content.
pub fn total_reward(parsed: &ParsedOutput, truth: &GroundTruth, params: &RewardParams) -> RewardBreakdown {
    let r_acc = accuracy_reward(&parsed.verdict, truth);
    breakdown(parsed.compliant, r_acc, parsed.token_count, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SafetyLabel::{Harmful, Unharmful};
    use crate::format::{parse_output, TranscriptGrammar, Verdict, WhitespaceTokenizer};

    // tanh via its exp-series definition, independent of f64::tanh.
    fn tanh_oracle(x: f64) -> f64 {
        fn exp_series(x: f64) -> f64 {
            let mut term = 1.0;
            let mut sum = 1.0;
            for n in 1..200 {
                term *= x / n as f64;
                sum += term;
                if term.abs() < 1e-300 {
                    break;
                }
            }
            sum
        }
        (exp_series(2.0 * x) - 1.0) / (exp_series(2.0 * x) + 1.0)
    }

    fn truth(req: crate::corpus::SafetyLabel, res: Option<crate::corpus::SafetyLabel>) -> GroundTruth {
        GroundTruth { request_label: req, response_label: res }
    }

    fn verdict(req: crate::corpus::SafetyLabel, res: Option<crate::corpus::SafetyLabel>) -> Verdict {
        Verdict { request: Some(req), response: res }
    }

    #[test]
    fn accuracy_splits_equally_between_subtasks() {
        let t = truth(Harmful, Some(Unharmful));
        assert_eq!(accuracy_reward(&verdict(Harmful, Some(Unharmful)), &t), 1.0);
        assert_eq!(accuracy_reward(&verdict(Harmful, Some(Harmful)), &t), 0.5);
        assert_eq!(accuracy_reward(&verdict(Unharmful, Some(Harmful)), &t), 0.0);
    }

    #[test]
    fn prompt_only_accuracy_is_full_weight() {
        let t = truth(Harmful, None);
        assert_eq!(accuracy_reward(&verdict(Harmful, None), &t), 1.0);
        assert_eq!(accuracy_reward(&verdict(Unharmful, None), &t), 0.0);
    }

    #[test]
    fn missing_required_label_scores_incorrect() {
        let t = truth(Harmful, Some(Unharmful));
        assert_eq!(accuracy_reward(&verdict(Harmful, None), &t), 0.5);
        assert_eq!(accuracy_reward(&Verdict::default(), &t), 0.0);
    }

    #[test]
    fn exploration_vanishes_on_success_and_at_zero_length() {
        let params = RewardParams::default();
        assert_eq!(exploration_reward(1.0, 500, &params), 0.0);
        assert_eq!(exploration_reward(0.5, 0, &params), 0.0);
    }

    #[test]
    fn exploration_matches_tanh_oracle_at_saturation_length() {
        let params = RewardParams::default();
        let got = exploration_reward(0.5, 300, &params);
        // 0.2 * tanh(1), frozen from the series oracle.
        let expected = 0.2 * tanh_oracle(1.0);
        assert!((expected - 0.152_318_831_191_152_98).abs() < 1e-15);
        assert!((got - expected).abs() < 1e-12, "got {got}, expected {expected}");
    }

    #[test]
    fn exploration_is_increasing_and_bounded() {
        let params = RewardParams::default();
        let mut prev = -1.0;
        for len in (0..5000).step_by(37) {
            let r = exploration_reward(0.0, len, &params);
            assert!(r > prev, "not strictly increasing at L={len}");
            assert!(r < params.alpha);
            prev = r;
        }
    }

    #[test]
    fn non_compliant_transcript_scores_zero() {
        let t = truth(Harmful, None);
        let grammar = TranscriptGrammar::default().for_truth(&t);
        let parsed = parse_output("Request: harmful", &grammar, &WhitespaceTokenizer);
        assert!(!parsed.compliant);
        let r = total_reward(&parsed, &t, &RewardParams::default());
        assert_eq!(r.total, 0.0);
        assert_eq!(r.fmt, 0.0);
    }

    #[test]
    fn fully_correct_long_transcript_earns_exactly_one() {
        let t = truth(Harmful, Some(Unharmful));
        let grammar = TranscriptGrammar::default().for_truth(&t);
        let filler = "w ".repeat(1000);
        let text = format!("<think>{filler}</think><result>Request: harmful\nResponse: unharmful</result>");
        let parsed = parse_output(&text, &grammar, &WhitespaceTokenizer);
        assert!(parsed.compliant);
        assert!(parsed.token_count >= 1000);
        let r = total_reward(&parsed, &t, &RewardParams::default());
        assert_eq!(r.total, 1.0);
        assert_eq!(r.r_exp, 0.0);
    }

    #[test]
    fn half_correct_at_saturation_length_matches_oracle() {
        let params = RewardParams::default();
        let b = breakdown(true, 0.5, 300, &params);
        let expected = 0.5 + 0.2 * tanh_oracle(1.0);
        assert!((b.total - expected).abs() < 1e-12);
        assert!((b.total - 0.652_318_831_191_152_98).abs() < 1e-12);
    }

    #[test]
    fn totals_stay_in_range() {
        let params = RewardParams::default();
        for &fmt in &[false, true] {
            for &r_acc in &[0.0, 0.5, 1.0] {
                for &len in &[0usize, 1, 10, 300, 100_000] {
                    let b = breakdown(fmt, r_acc, len, &params);
                    assert!(b.total >= 0.0 && b.total < 1.0 + params.alpha);
                    assert!((b.total - b.fmt * (b.r_acc + b.r_exp)).abs() < 1e-15);
                }
            }
        }
    }
}
