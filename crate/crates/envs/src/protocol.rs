//! Wire types shared by workers, clients and the in-process host.
//!
//! Transport is HTTP/1.1 with JSON bodies:
//! `GET /spec`, `POST /execute`, `POST /reset`, `GET /health`.

use std::collections::{BTreeMap, HashSet};

use gdt_core::{ActionRegistry, ActionSchema, ParamValue};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An environment's advertised identity and action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub name: String,
    pub description: String,
    pub actions: Vec<ActionSchema>,
}

impl EnvironmentSpec {
    /// Checks that every action belongs to this environment, names are
    /// unique and each schema is well formed.
    pub fn check(&self) -> Result<(), String> {
        if !gdt_core::action::is_identifier(&self.name) {
            return Err(format!("invalid environment name `{}`", self.name));
        }
        let mut seen = HashSet::new();
        for a in &self.actions {
            if a.env_name != self.name {
                return Err(format!(
                    "action `{}` declares environment `{}` inside `{}`",
                    a.name, a.env_name, self.name
                ));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(format!("duplicate action name `{}`", a.name));
            }
            a.check()?;
        }
        Ok(())
    }

    pub fn registry(&self) -> ActionRegistry {
        ActionRegistry::from_schemas(self.actions.iter().cloned())
            .expect("checked specs build a registry")
    }
}

/// Body of `POST /execute`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecuteRequest {
    pub action: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

/// Operations a worker answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireOp {
    Spec,
    Execute,
    Reset,
    Health,
}

impl WireOp {
    pub fn method(self) -> &'static str {
        match self {
            WireOp::Spec | WireOp::Health => "GET",
            WireOp::Execute | WireOp::Reset => "POST",
        }
    }

    pub fn path(self) -> &'static str {
        match self {
            WireOp::Spec => "/spec",
            WireOp::Execute => "/execute",
            WireOp::Reset => "/reset",
            WireOp::Health => "/health",
        }
    }

    pub fn from_route(method: &str, path: &str) -> Option<Self> {
        [WireOp::Spec, WireOp::Execute, WireOp::Reset, WireOp::Health]
            .into_iter()
            .find(|op| op.method().eq_ignore_ascii_case(method) && op.path() == path)
    }
}

/// Body of a successful `reset` or `health` response.
pub const OK_BODY: &str = r#"{"ok":true}"#;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ConnectError {
    #[error("environment worker at {endpoint} is unreachable: {message}")]
    Unreachable { endpoint: String, message: String },
    #[error("environment worker at {endpoint} advertised an invalid spec: {message}")]
    SpecInvalid { endpoint: String, message: String },
}

/// Failure to exchange a request with an environment.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("transport error in environment `{env}`: {message}")]
pub struct TransportError {
    pub env: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {message}")]
    BindFailure { addr: String, message: String },
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
}
