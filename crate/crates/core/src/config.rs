//! JSON problem configuration and the named presets.
//!
//! ```json
//! {"sigma": 0.2, "c": 1.5, "jumps": [{"rate": 1.0, "lambda": 1.0}], "q": 0.05, "r": 0.5}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PdkError, Result};
use crate::levy::{JumpTerm, LevyModel, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub sigma: f64,
    pub c: f64,
    pub jumps: Vec<JumpTerm>,
    pub q: f64,
    pub r: f64,
}

pub const PRESET_NAMES: [&str; 6] = ["case1", "case2", "case3", "case1p", "case2p", "case3p"];

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PdkError::Config(format!("malformed config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PdkError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The single-exponential examples with `κ = λ = 1`, `q = 0.05`,
    /// `r = 0.5`; the primed cases have no Gaussian part.
    pub fn preset(name: &str) -> Result<Self> {
        let (sigma, c) = match name {
            "case1" => (0.2, 1.5),
            "case2" => (0.2, 0.1),
            "case3" => (0.2, 0.0),
            "case1p" => (0.0, 1.5),
            "case2p" => (0.0, 1.15),
            "case3p" => (0.0, 0.1),
            other => {
                return Err(PdkError::Config(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(ProblemConfig {
            sigma,
            c,
            jumps: vec![JumpTerm::new(1.0, 1.0)],
            q: 0.05,
            r: 0.5,
        })
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let model = LevyModel::new(self.c, self.sigma, self.jumps.clone())?;
        ProblemSpec::new(model, self.q, self.r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}
