use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EtlpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRule {
    Etlp,
    Eprop,
    Bptt,
    /// Forward simulation only.
    None,
}

impl LearningRule {
    pub const TRAINABLE: [LearningRule; 3] =
        [LearningRule::Bptt, LearningRule::Eprop, LearningRule::Etlp];

    pub fn name(self) -> &'static str {
        match self {
            LearningRule::Etlp => "etlp",
            LearningRule::Eprop => "eprop",
            LearningRule::Bptt => "bptt",
            LearningRule::None => "none",
        }
    }
}

impl fmt::Display for LearningRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearningRule {
    type Err = EtlpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "etlp" => Ok(LearningRule::Etlp),
            "eprop" | "e-prop" => Ok(LearningRule::Eprop),
            "bptt" => Ok(LearningRule::Bptt),
            "none" => Ok(LearningRule::None),
            other => Err(EtlpError::config(
                "rule",
                format!("unknown learning rule `{other}`"),
            )),
        }
    }
}
