//! Model backends: the policy behind every agent.

use std::collections::BTreeMap;

use gdt_core::ActionCall;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{AgentRole, BackendRequest, SKIP_ACTION};

/// A backend's answer to one request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    /// Free text, e.g. a planner's instruction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Function calls in emission order. A call whose action is
    /// [`SKIP_ACTION`] declines the turn.
    #[serde(default)]
    pub tool_calls: Vec<ActionCall>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Set when the model's output could not be read as function calls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_failure: Option<String>,
}

impl BackendReply {
    pub fn tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    /// How the reply is remembered in the agent's history.
    pub fn transcript_text(&self) -> String {
        let mut parts: Vec<String> = self.text.iter().cloned().collect();
        parts.extend(self.tool_calls.iter().map(ToString::to_string));
        parts.join("\n")
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// The backend could not be reached or answered with an error.
    #[error("backend failure: {0}")]
    Failure(String),
}

/// The policy: maps a prompt to function calls.
pub trait Backend: Send {
    fn complete(&mut self, request: &BackendRequest) -> Result<BackendReply, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&mut self, request: &BackendRequest) -> Result<BackendReply, BackendError> {
        (**self).complete(request)
    }
}

/// Calls per turn, indexed from turn 0.
pub type Script = Vec<Vec<ActionCall>>;

/// Scripts per task id, as stored in script files.
pub type ScriptBook = BTreeMap<String, Script>;

pub fn parse_script_book(text: &str) -> Result<ScriptBook, String> {
    serde_json::from_str(text).map_err(|e| format!("invalid script file: {e}"))
}

/// Synthetic completion cost of one scripted call.
pub const SCRIPTED_TOKENS_PER_CALL: u64 = 8;

/// `⌈chars / 4⌉`.
pub fn synthetic_prompt_tokens(chars: usize) -> u64 {
    (chars as u64).div_ceil(4)
}

/// A deterministic backend replaying a per-turn script.
///
/// Each role receives its share of the turn's calls: observing and
/// translating agents all of them, environment sub-agents the calls for
/// their environment (or SKIP), and planners a text rendering of the calls
/// as their instruction. Past the end of the script every agent emits
/// nothing, so the episode runs out of turns.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    script: Script,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        ScriptedBackend { script }
    }

    pub fn empty() -> Self {
        ScriptedBackend { script: Vec::new() }
    }

    pub fn script(&self) -> &Script {
        &self.script
    }
}

/// The planner text for a set of calls.
pub fn describe_calls(calls: &[ActionCall]) -> String {
    if calls.is_empty() {
        return "No action is needed in this step.".into();
    }
    let steps: Vec<String> = calls
        .iter()
        .map(|c| format!("In the {} environment, call {}.", c.env_name, c))
        .collect();
    steps.join(" ")
}

impl Backend for ScriptedBackend {
    fn complete(&mut self, request: &BackendRequest) -> Result<BackendReply, BackendError> {
        let prompt_tokens = synthetic_prompt_tokens(request.prompt_chars());
        let Some(calls) = self.script.get(request.turn) else {
            return Ok(BackendReply {
                prompt_tokens,
                ..BackendReply::default()
            });
        };
        let (text, tool_calls) = match &request.role {
            AgentRole::Single | AgentRole::Translator => (None, calls.clone()),
            AgentRole::Planner => (Some(describe_calls(calls)), Vec::new()),
            AgentRole::Environment(env) => (None, share(calls, env)),
            AgentRole::Root => (None, share(calls, gdt_envs::ROOT_ENV)),
        };
        let represented = match &request.role {
            AgentRole::Planner => calls.len(),
            _ => tool_calls.len(),
        };
        Ok(BackendReply {
            text,
            tool_calls,
            prompt_tokens,
            completion_tokens: SCRIPTED_TOKENS_PER_CALL * represented as u64,
            parse_failure: None,
        })
    }
}

fn share(calls: &[ActionCall], env: &str) -> Vec<ActionCall> {
    let mine: Vec<ActionCall> = calls.iter().filter(|c| c.env_name == env).cloned().collect();
    if mine.is_empty() {
        vec![ActionCall::new(env, SKIP_ACTION)]
    } else {
        mine
    }
}
