//! Desk-scale guardrail moderation RL engine.
//!
//! The crate covers the full two-stage training pipeline for a reasoning
//! guardrail classifier: dataset curation (including a synthetic moderation
//! task and chain-of-thought annotation), supervised cold-start of a small
//! differentiable policy, hard-sample mining, group-relative policy
//! optimization with an error-driven exploration reward, and an F1
//! evaluation harness with sample-weighted cross-benchmark aggregation.
//!
//! Modules map onto pipeline stages:
//!
//! - [`corpus`] — samples, manifests, splitting, synthesis, annotation
//! - [`format`] — the `<think>`/`<result>` transcript grammar
//! - [`reward`] — format/accuracy/exploration reward components
//! - [`policy`] — the toy autoregressive policy with analytic gradients
//! - [`grpo`] — advantages, clipped surrogate, training loop
//! - [`mining`] — inconsistency-based hard-sample selection
//! - [`eval`] — F1 scoring, frame-union aggregation, report building
//! - [`backend`] — completion-endpoint client and transcript sources
//! - [`config`] — run configuration shared by all CLI stages

pub mod backend;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod format;
pub mod grpo;
pub mod mining;
pub mod policy;
pub mod reward;
pub mod rng;
