//! A minimal environment used as the cross-language conformance target.

use gdt_core::{ActionKind, ActionSchema, ActionValue, ParamSpec, ParamType, ParamValue};

use crate::host::{text, Environment, HandlerError, Params};
use crate::protocol::EnvironmentSpec;

pub const ECHO_ENV: &str = "echo";

#[derive(Debug, Clone, Default)]
pub struct EchoEnv {
    pub counter: i64,
}

pub fn echo_spec() -> EnvironmentSpec {
    use ActionKind::*;
    let a = |name: &str, kind, description: &str| ActionSchema::new(ECHO_ENV, name, kind, description);
    EnvironmentSpec {
        name: ECHO_ENV.into(),
        description: "An echo environment with a counter, for protocol conformance.".into(),
        actions: vec![
            a("echo", Regular, "Return the given text.").param(ParamSpec::new("text", ParamType::String, "text to echo.")),
            a("incr", Regular, "Increment the counter and return its new value.").param(
                ParamSpec::new("by", ParamType::Integer, "increment.").optional(Some(ParamValue::Int(1))),
            ),
            a("fail", Regular, "Always fails with a handler error."),
            a("always_true", Evaluator, "Always true."),
            a("counter_at_least", Evaluator, "Whether the counter has reached the bound.")
                .param(ParamSpec::new("bound", ParamType::Integer, "lower bound.")),
        ],
    }
}

impl Environment for EchoEnv {
    fn spec(&self) -> EnvironmentSpec {
        echo_spec()
    }

    fn execute(&mut self, action: &str, params: &Params) -> Result<ActionValue, HandlerError> {
        let int = |k: &str| match params.get(k) {
            Some(ParamValue::Int(i)) => *i,
            _ => 0,
        };
        match action {
            "echo" => Ok(ActionValue::Text(text(params, "text").to_owned())),
            "incr" => {
                self.counter += int("by");
                Ok(ActionValue::Text(self.counter.to_string()))
            }
            "fail" => Err(HandlerError::new("Boom", "requested failure")),
            "always_true" => Ok(ActionValue::Bool(true)),
            "counter_at_least" => Ok(ActionValue::Bool(self.counter >= int("bound"))),
            other => Err(HandlerError::new("UnknownAction", other)),
        }
    }

    fn reset(&mut self) {
        self.counter = 0;
    }
}
