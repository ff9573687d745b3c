//! The mapping applied to initial word vectors before comparison.
//!
//! Zero-shot scoring only needs `T(φ)`, so it works against this trait and
//! accepts either the learned network or the identity baseline.

use std::fmt::Debug;

use crate::error::Result;
use crate::network::NetworkParams;

pub trait Transform: Debug + Send + Sync {
    /// Short name used in logs and manifests.
    fn name(&self) -> &str;

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

/// `T(φ) = φ`: raw word vectors compared directly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Identity;

impl Transform for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }
}

impl Transform for NetworkParams {
    fn name(&self) -> &str {
        "network"
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        NetworkParams::apply(self, v)
    }
}
