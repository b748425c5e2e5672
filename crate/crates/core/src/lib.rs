//! Semi-oblivious chase, homomorphisms, query rewriting and the
//! marked-query rewriting process for existential rules.
//!
//! The crate is organised bottom-up: [`model`] holds the value types,
//! [`textio`] the text formats, [`chase`] and [`homo`] the two basic
//! engines, and [`rewriter`], [`markedrw`], [`analysis`], [`normalizer`]
//! build on them. [`theories`] ships the standard example rule sets.

pub mod model;
pub mod store;
pub mod textio;
pub mod chase;
pub mod homo;
pub mod rewriter;
pub mod theories;
pub mod markedrw;
pub mod analysis;
pub mod normalizer;
