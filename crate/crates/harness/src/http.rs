//! Backend for chat-completions style HTTP services with function calling.

use std::collections::BTreeMap;
use std::time::Duration;

use gdt_core::registry::split_tool_name;
use gdt_core::{ActionCall, ParamValue};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{Backend, BackendError, BackendReply};
use crate::prompt::{AgentRole, BackendRequest, SKIP_ACTION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// Base URL; requests go to `<base_url>/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Extra headers. Values may reference environment variables as
    /// `${NAME}`, e.g. `"Authorization": "Bearer ${API_KEY}"`.
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

impl HttpBackendConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid backend config: {e}"))
    }
}

/// Replaces every `${NAME}` with `lookup(NAME)`.
pub fn expand_vars(value: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| format!("unterminated variable reference in `{value}`"))?;
        let name = &after[..end];
        let v = lookup(name).ok_or_else(|| format!("environment variable `{name}` is not set"))?;
        out.push_str(&v);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub struct HttpChatBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    headers: Vec<(String, String)>,
    seed: u64,
}

impl HttpChatBackend {
    /// Resolves header variables from the process environment.
    pub fn new(config: &HttpBackendConfig, seed: u64) -> Result<Self, String> {
        Self::with_lookup(config, seed, |k| std::env::var(k).ok())
    }

    pub fn with_lookup(
        config: &HttpBackendConfig,
        seed: u64,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, String> {
        let headers = config
            .headers
            .iter()
            .map(|(k, v)| Ok((k.clone(), expand_vars(v, &lookup)?)))
            .collect::<Result<_, String>>()?;
        Ok(HttpChatBackend {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(config.timeout_secs))
                .build(),
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            headers,
            seed,
        })
    }

    pub fn payload(&self, request: &BackendRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system})];
        messages.extend(request.messages.iter().map(|m| json!(m)));
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "seed": self.seed,
        });
        if !request.tools.is_empty() {
            body["tools"] = request.tools.iter().map(|t| t.to_chat_tool()).collect();
        }
        body
    }
}

impl Backend for HttpChatBackend {
    fn complete(&mut self, request: &BackendRequest) -> Result<BackendReply, BackendError> {
        let mut call = self.agent.post(&self.url);
        for (k, v) in &self.headers {
            call = call.set(k, v);
        }
        let response = call
            .send_json(self.payload(request))
            .map_err(|e| BackendError::Failure(e.to_string()))?;
        let body: Value = response
            .into_json()
            .map_err(|e| BackendError::Failure(format!("unreadable response: {e}")))?;
        parse_completion(&body, &request.role)
    }
}

fn skip_env(role: &AgentRole) -> &str {
    match role {
        AgentRole::Environment(env) => env,
        AgentRole::Root => gdt_envs::ROOT_ENV,
        _ => "",
    }
}

/// Reads a chat-completions response. A malformed envelope is a backend
/// failure; unreadable or missing function calls from an acting agent are
/// a parse failure (the invalid-output pathway).
pub fn parse_completion(body: &Value, role: &AgentRole) -> Result<BackendReply, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Failure("response has no choices[0].message".into()))?;
    let count = |key: &str| body.pointer(&format!("/usage/{key}")).and_then(Value::as_u64).unwrap_or(0);
    let mut reply = BackendReply {
        text: message
            .get("content")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .map(str::to_owned),
        prompt_tokens: count("prompt_tokens"),
        completion_tokens: count("completion_tokens"),
        ..BackendReply::default()
    };
    let raw_calls = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    for raw in &raw_calls {
        match parse_tool_call(raw, role) {
            Ok(c) => reply.tool_calls.push(c),
            Err(e) => {
                reply.tool_calls.clear();
                reply.parse_failure = Some(e);
                return Ok(reply);
            }
        }
    }
    if role.acts() && reply.tool_calls.is_empty() {
        reply.parse_failure = Some("the model answered without a function call".into());
    }
    Ok(reply)
}

fn parse_tool_call(raw: &Value, role: &AgentRole) -> Result<ActionCall, String> {
    let name = raw
        .pointer("/function/name")
        .and_then(Value::as_str)
        .ok_or("tool call without a function name")?;
    let params: BTreeMap<String, ParamValue> = match raw.pointer("/function/arguments") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::String(s)) if s.trim().is_empty() => BTreeMap::new(),
        Some(Value::String(s)) => serde_json::from_str(s).map_err(|e| format!("arguments of `{name}`: {e}"))?,
        Some(v @ Value::Object(_)) => {
            serde_json::from_value(v.clone()).map_err(|e| format!("arguments of `{name}`: {e}"))?
        }
        Some(other) => return Err(format!("arguments of `{name}` are not an object: {other}")),
    };
    let mut call = if name == SKIP_ACTION {
        ActionCall::new(skip_env(role), SKIP_ACTION)
    } else {
        let (env, action) = split_tool_name(name).ok_or_else(|| format!("unknown tool `{name}`"))?;
        ActionCall::new(env, action)
    };
    call.params = params;
    Ok(call)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_expansion() {
        let lookup = |k: &str| (k == "KEY").then(|| "s3cret".to_owned());
        assert_eq!(expand_vars("Bearer ${KEY}", lookup).unwrap(), "Bearer s3cret");
        assert_eq!(expand_vars("plain", lookup).unwrap(), "plain");
        assert!(expand_vars("${NOPE}", lookup).unwrap_err().contains("NOPE"));
        assert!(expand_vars("${KEY", lookup).is_err());
    }

    #[test]
    fn parses_tool_calls_and_usage() {
        let body = json!({
            "choices": [{"message": {"content": null, "tool_calls": [
                {"id": "1", "type": "function", "function": {"name": "desktop__search_application", "arguments": "{\"name\":\"terminal\"}"}}
            ]}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 5}
        });
        let r = parse_completion(&body, &AgentRole::Single).unwrap();
        assert_eq!(r.tool_calls, vec![ActionCall::new("desktop", "search_application").with("name", "terminal")]);
        assert_eq!(r.tokens(), 15);
        assert!(r.parse_failure.is_none());
    }

    #[test]
    fn prose_is_a_parse_failure_for_acting_agents_only() {
        let body = json!({"choices": [{"message": {"content": "I would open the terminal."}}]});
        let acting = parse_completion(&body, &AgentRole::Single).unwrap();
        assert!(acting.parse_failure.is_some());
        let planner = parse_completion(&body, &AgentRole::Planner).unwrap();
        assert!(planner.parse_failure.is_none());
        assert_eq!(planner.text.as_deref(), Some("I would open the terminal."));
    }

    #[test]
    fn skip_and_bad_calls() {
        let call = |name: &str, args: &str| {
            json!({"choices": [{"message": {"tool_calls": [{"function": {"name": name, "arguments": args}}]}}]})
        };
        let r = parse_completion(&call("SKIP", "{}"), &AgentRole::Environment("phone".into())).unwrap();
        assert_eq!(r.tool_calls, vec![ActionCall::new("phone", SKIP_ACTION)]);
        for (name, args) in [("nosep", "{}"), ("root__complete", "{not json"), ("root__submit", "[1]")] {
            let r = parse_completion(&call(name, args), &AgentRole::Single).unwrap();
            assert!(r.parse_failure.is_some(), "{name} {args}");
            assert!(r.tool_calls.is_empty());
        }
        assert!(parse_completion(&json!({"error": "x"}), &AgentRole::Single).is_err());
    }
}
