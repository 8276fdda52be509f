//! Detection of privacy disclosures in agile user stories.
//!
//! The crate covers the whole workflow: corpus loading and balanced fold
//! planning, a privacy-word dictionary, sequence and histogram encodings,
//! a small neural-network kit with the three convolutional/transfer
//! pipelines, classical classifiers, and the evaluation harness with
//! McNemar significance testing.

pub mod container;
pub mod corpus;
pub mod encode;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod pipelines;
pub mod nn;
pub mod rng;
pub mod shallow;
pub mod synth;

pub use error::{Error, Result};
