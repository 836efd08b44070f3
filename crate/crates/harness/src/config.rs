//! Agent-system configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How the agent system is organized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentStructure {
    /// One agent plans and calls actions in every environment.
    Single,
    /// A main agent plans in text; a tool agent translates each step into
    /// function calls.
    #[serde(rename = "by-func")]
    ByFunctionality,
    /// A main agent plans; one sub-agent per environment (plus the root
    /// environment) acts or skips.
    #[serde(rename = "by-env")]
    ByEnvironment,
}

impl AgentStructure {
    pub const ALL: [AgentStructure; 3] = [
        AgentStructure::Single,
        AgentStructure::ByFunctionality,
        AgentStructure::ByEnvironment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentStructure::Single => "single",
            AgentStructure::ByFunctionality => "by-func",
            AgentStructure::ByEnvironment => "by-env",
        }
    }
}

impl fmt::Display for AgentStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentStructure {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownStructure(s.to_owned()))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown agent structure `{0}` (expected single, by-func or by-env)")]
    UnknownStructure(String),
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("history_turns ({history}) exceeds max_turns ({max})")]
    HistoryExceedsTurns { history: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub structure: AgentStructure,
    /// Prior turns kept in each agent's prompt.
    #[serde(default = "default_history")]
    pub history_turns: usize,
    /// One turn is one observe, plan and act cycle.
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    /// Invalid outputs tolerated per episode before terminating with IA.
    #[serde(default)]
    pub invalid_retries: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_history() -> usize {
    2
}

fn default_max_turns() -> usize {
    15
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::new(AgentStructure::Single)
    }
}

impl AgentConfig {
    pub fn new(structure: AgentStructure) -> Self {
        AgentConfig {
            structure,
            history_turns: default_history(),
            max_turns: default_max_turns(),
            invalid_retries: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_turns == 0 {
            return Err(ConfigError::NotPositive("max_turns"));
        }
        if self.history_turns == 0 {
            return Err(ConfigError::NotPositive("history_turns"));
        }
        if self.history_turns > self.max_turns {
            return Err(ConfigError::HistoryExceedsTurns {
                history: self.history_turns,
                max: self.max_turns,
            });
        }
        Ok(())
    }
}
