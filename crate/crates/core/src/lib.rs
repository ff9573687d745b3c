//! Zero-shot image classification from attribute and class *names*.
//!
//! A shared two-layer network transforms word vectors so that a class name
//! lands near the posterior-weighted combination of its attribute names.
//! Unseen classes are then recognised by cosine similarity alone.

pub mod cli;
pub mod embedding;
pub mod error;
pub mod io;
pub mod network;
pub mod predicates;
pub mod synthetic;
pub mod training;
pub mod transform;
pub mod zsl;

pub use error::{Error, Result};
