//! In-process environment host: validates calls against the environment's
//! spec and dispatches them to its handlers.

use std::collections::BTreeMap;

use gdt_core::{ActionCall, ActionRegistry, ActionResult, ActionValue, ErrorKind, ParamValue};
use thiserror::Error;

use crate::protocol::{EnvironmentSpec, ExecuteRequest, WireOp, OK_BODY};

/// A domain failure raised by an action handler, e.g. `NoSuchPath`.
/// Travels on the wire as a `HandlerError` whose message starts with the
/// domain kind.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{kind}: {message}")]
pub struct HandlerError {
    pub kind: String,
    pub message: String,
}

impl HandlerError {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        HandlerError {
            kind: kind.into(),
            message: message.into(),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// Reads a parameter the host has already validated as a string.
pub fn text<'a>(params: &'a Params, name: &str) -> &'a str {
    params
        .get(name)
        .and_then(ParamValue::as_str)
        .unwrap_or_default()
}

/// State and handlers of one environment.
pub trait Environment: Send {
    fn spec(&self) -> EnvironmentSpec;

    /// Runs a handler. Parameters are already validated and defaulted.
    fn execute(&mut self, action: &str, params: &Params) -> Result<ActionValue, HandlerError>;

    /// Restores the initial state.
    fn reset(&mut self);
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn spec(&self) -> EnvironmentSpec {
        (**self).spec()
    }
    fn execute(&mut self, action: &str, params: &Params) -> Result<ActionValue, HandlerError> {
        (**self).execute(action, params)
    }
    fn reset(&mut self) {
        (**self).reset()
    }
}

/// A raw wire response: HTTP status and JSON body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireReply {
    pub status: u16,
    pub body: String,
}

impl WireReply {
    fn ok(body: String) -> Self {
        WireReply { status: 200, body }
    }

    fn protocol_error(status: u16, message: impl Into<String>) -> Self {
        let result = ActionResult::failure(ErrorKind::ProtocolError, message);
        WireReply {
            status,
            body: serde_json::to_string(&result).expect("results serialize"),
        }
    }
}

pub struct EnvHost<E> {
    env: E,
    spec: EnvironmentSpec,
    registry: ActionRegistry,
}

impl<E: Environment> EnvHost<E> {
    pub fn new(env: E) -> Result<Self, String> {
        let spec = env.spec();
        spec.check()?;
        let registry = spec.registry();
        Ok(EnvHost { env, spec, registry })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut E {
        &mut self.env
    }

    pub fn execute(&mut self, action: &str, params: &Params) -> ActionResult {
        let call = ActionCall {
            env_name: self.spec.name.clone(),
            action_name: action.to_owned(),
            params: params.clone(),
        };
        let call = match self.registry.validate_call(&call) {
            Ok(c) => c,
            Err(e) => return ActionResult::failure(e.kind(), e.to_string()),
        };
        match self.env.execute(&call.action_name, &call.params) {
            Ok(v) => ActionResult::success(v),
            Err(e) => ActionResult::failure(ErrorKind::HandlerError, e.to_string()),
        }
    }

    pub fn reset(&mut self) {
        self.env.reset();
    }

    /// Answers one wire request; the HTTP worker is a thin shell around this.
    pub fn handle_wire(&mut self, method: &str, path: &str, body: &str) -> WireReply {
        match WireOp::from_route(method, path) {
            Some(WireOp::Spec) => WireReply::ok(serde_json::to_string(&self.spec).expect("specs serialize")),
            Some(WireOp::Health) => WireReply::ok(OK_BODY.to_owned()),
            Some(WireOp::Reset) => {
                self.reset();
                WireReply::ok(OK_BODY.to_owned())
            }
            Some(WireOp::Execute) => match serde_json::from_str::<ExecuteRequest>(body) {
                Ok(req) => {
                    let result = self.execute(&req.action, &req.params);
                    WireReply::ok(serde_json::to_string(&result).expect("results serialize"))
                }
                Err(e) => WireReply::protocol_error(400, format!("malformed execute request: {e}")),
            },
            None => WireReply::protocol_error(404, format!("no route for {method} {path}")),
        }
    }
}
