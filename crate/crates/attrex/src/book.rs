//! Compiles the guide's code blocks as doctests (`cargo test --doc`), so the
//! book in `book/` cannot drift from the API.

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}

#[doc = include_str!("../../../book/src/prompts.md")]
pub mod prompts {}

#[doc = include_str!("../../../book/src/backends.md")]
pub mod backends {}

#[doc = include_str!("../../../book/src/parsing-and-normalization.md")]
pub mod parsing_and_normalization {}

#[doc = include_str!("../../../book/src/scoring.md")]
pub mod scoring {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
