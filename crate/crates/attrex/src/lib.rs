//! # attrex
//!
//! A harness for extracting attribute/value pairs from product titles with
//! chat-completion models, and for measuring how well that works.
//!
//! The pieces, bottom to top:
//!
//! - [`corpus`] — product records, product-disjoint train/validation/test
//!   splits, stratified per-(category, attribute) test-set sampling, and gold
//!   augmentation with normalized value variants.
//! - [`prompt`] — the zero-shot prompt designs (simple, explicit and its
//!   ablations, generated-knowledge, open) and few-shot assembly with
//!   same-category demonstration selection.
//! - [`client`] — chat-completion backends: an OpenAI-compatible HTTP client
//!   with retries, and a deterministic scripted stub; plus a response cache
//!   so reruns never re-bill.
//! - [`parse`] / [`norm`] — turning raw model text into closed answers or
//!   attribute/value pair lists, and unit normalization rules.
//! - [`eval`] — exact-match judgement classes, precision/recall/F1 and
//!   per-title cost accounting with exact decimal arithmetic ([`money`]).
//! - [`pipeline`] / the `attrex` binary — the `prepare`, `run`, `score`,
//!   `report` experiment lifecycle driven by one TOML config.
//!
//! ```
//! use attrex::parse::parse_closed;
//! use attrex::eval::{compute_metrics, judge_closed, GoldClosed, Matcher};
//!
//! let gold = vec!["8 Gigabytes".to_string(), "8GB".to_string()];
//! let answer = parse_closed("  8GB\n", "n/a");
//! let judgement = judge_closed(&answer, GoldClosed::Present(&gold), &Matcher::default());
//! let metrics = compute_metrics([judgement]);
//! assert_eq!(metrics.f1, 1.0);
//! ```

pub mod chat;
pub mod client;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod money;
pub mod norm;
pub mod parse;
pub mod pipeline;
pub mod prompt;

pub use chat::{Message, Role};
pub use client::{Backend, CompletionRequest, CompletionResponse, StubBackend};
pub use config::ExperimentConfig;
pub use corpus::{AttributeAnnotation, ProductRecord, SamplingPolicy, TestCase};
pub use eval::{compute_metrics, Judgement, Matcher, Metrics, OpenEvalMode};
pub use money::Money;
pub use norm::Normalizer;
pub use parse::{parse_closed, parse_open, ClosedAnswer, PairList};
pub use prompt::{AssembledPrompt, PromptDesign, Prompter, TemplateSet};

// The guide's code blocks run as doctests, keeping book and API in sync.
#[cfg(doctest)]
mod book;
