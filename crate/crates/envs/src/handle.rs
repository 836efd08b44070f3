//! Environment handles: one interface over in-process hosts and remote
//! workers.

use std::sync::Mutex;
use std::time::Duration;

use gdt_core::{ActionCall, ActionResult};

use crate::host::{EnvHost, Environment, WireReply};
use crate::protocol::{ConnectError, EnvironmentSpec, ExecuteRequest, TransportError, WireOp};

pub trait EnvHandle: Send + Sync {
    fn spec(&self) -> &EnvironmentSpec;

    /// Executes a call addressed to this environment.
    fn execute(&self, call: &ActionCall) -> Result<ActionResult, TransportError>;

    fn reset(&self) -> Result<(), TransportError>;

    fn name(&self) -> &str {
        &self.spec().name
    }
}

/// An environment hosted in this process.
pub struct LocalEnv<E> {
    host: Mutex<EnvHost<E>>,
    spec: EnvironmentSpec,
}

impl<E: Environment> LocalEnv<E> {
    pub fn new(env: E) -> Result<Self, String> {
        let host = EnvHost::new(env)?;
        let spec = host.spec().clone();
        Ok(LocalEnv {
            host: Mutex::new(host),
            spec,
        })
    }

    /// Reads the environment state.
    pub fn with_env<R>(&self, f: impl FnOnce(&E) -> R) -> R {
        f(self.lock().env())
    }

    pub fn handle_wire(&self, method: &str, path: &str, body: &str) -> WireReply {
        self.lock().handle_wire(method, path, body)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, EnvHost<E>> {
        self.host.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl<E: Environment> EnvHandle for LocalEnv<E> {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn execute(&self, call: &ActionCall) -> Result<ActionResult, TransportError> {
        Ok(self.lock().execute(&call.action_name, &call.params))
    }

    fn reset(&self) -> Result<(), TransportError> {
        self.lock().reset();
        Ok(())
    }
}

/// A worker reached over HTTP. The spec is fetched once at connect time.
pub struct RemoteEnv {
    endpoint: String,
    agent: ureq::Agent,
    spec: EnvironmentSpec,
}

impl RemoteEnv {
    pub fn connect(endpoint: &str) -> Result<Self, ConnectError> {
        Self::connect_with_timeout(endpoint, Duration::from_secs(10))
    }

    pub fn connect_with_timeout(endpoint: &str, timeout: Duration) -> Result<Self, ConnectError> {
        let endpoint = endpoint.trim_end_matches('/').to_owned();
        // No pooled connections: a request on a stale keep-alive socket to
        // a stopped worker would hang until the timeout instead of failing.
        let agent = ureq::AgentBuilder::new()
            .timeout(timeout)
            .max_idle_connections(0)
            .build();
        let unreachable = |message: String| ConnectError::Unreachable {
            endpoint: endpoint.clone(),
            message,
        };
        let (status, body) = exchange(&agent, &endpoint, WireOp::Spec, None).map_err(unreachable)?;
        let invalid = |message: String| ConnectError::SpecInvalid {
            endpoint: endpoint.clone(),
            message,
        };
        if status != 200 {
            return Err(invalid(format!("status {status}: {body}")));
        }
        let spec: EnvironmentSpec = serde_json::from_str(&body).map_err(|e| invalid(e.to_string()))?;
        spec.check().map_err(invalid)?;
        Ok(RemoteEnv { endpoint, agent, spec })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends one raw wire request, returning status and body.
    pub fn raw(&self, op: WireOp, body: Option<&str>) -> Result<WireReply, TransportError> {
        exchange(&self.agent, &self.endpoint, op, body)
            .map(|(status, body)| WireReply { status, body })
            .map_err(|message| self.transport(message))
    }

    fn transport(&self, message: String) -> TransportError {
        TransportError {
            env: self.spec.name.clone(),
            message,
        }
    }
}

fn exchange(agent: &ureq::Agent, endpoint: &str, op: WireOp, body: Option<&str>) -> Result<(u16, String), String> {
    let url = format!("{endpoint}{}", op.path());
    let request = agent.request(op.method(), &url);
    let outcome = match body {
        Some(b) => request.set("Content-Type", "application/json").send_string(b),
        None if op.method() == "POST" => request.send_string(""),
        None => request.call(),
    };
    let response = match outcome {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(ureq::Error::Transport(t)) => return Err(t.to_string()),
    };
    let status = response.status();
    let text = response.into_string().map_err(|e| e.to_string())?;
    Ok((status, text))
}

impl EnvHandle for RemoteEnv {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn execute(&self, call: &ActionCall) -> Result<ActionResult, TransportError> {
        let body = serde_json::to_string(&ExecuteRequest {
            action: call.action_name.clone(),
            params: call.params.clone(),
        })
        .expect("requests serialize");
        let reply = self.raw(WireOp::Execute, Some(&body))?;
        serde_json::from_str(&reply.body)
            .map_err(|e| self.transport(format!("unparseable response ({e}): {}", reply.body)))
    }

    fn reset(&self) -> Result<(), TransportError> {
        let reply = self.raw(WireOp::Reset, None)?;
        if reply.status == 200 {
            Ok(())
        } else {
            Err(self.transport(format!("reset failed with status {}: {}", reply.status, reply.body)))
        }
    }
}
