//! Wire-level conformance scripts: replay raw requests against any worker
//! and compare canonicalized response transcripts.

use gdt_core::{ActionCall, ParamType, ParamValue};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::handle::{LocalEnv, RemoteEnv};
use crate::host::{Environment, WireReply};
use crate::protocol::{EnvironmentSpec, TransportError, WireOp};

/// The shared script for the echo environment: a spec fetch, 20 valid
/// execute calls, 5 invalid calls and a reset.
pub const ECHO_CONFORMANCE_SCRIPT: &str = include_str!("../data/conformance_echo.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceStep {
    pub op: WireOp,
    /// Raw request body, sent verbatim (may be deliberately malformed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub op: WireOp,
    pub status: u16,
    /// Response body re-serialized with sorted keys.
    pub response: String,
}

/// Anything that answers raw wire requests.
pub trait WireTarget {
    fn send(&self, op: WireOp, body: Option<&str>) -> Result<WireReply, TransportError>;
}

impl<E: Environment> WireTarget for LocalEnv<E> {
    fn send(&self, op: WireOp, body: Option<&str>) -> Result<WireReply, TransportError> {
        Ok(self.handle_wire(op.method(), op.path(), body.unwrap_or("")))
    }
}

impl WireTarget for RemoteEnv {
    fn send(&self, op: WireOp, body: Option<&str>) -> Result<WireReply, TransportError> {
        self.raw(op, body)
    }
}

/// Re-serializes JSON with sorted object keys; non-JSON text is kept as is.
pub fn canonical_json(text: &str) -> String {
    serde_json::from_str::<serde_json::Value>(text)
        .map(|v| v.to_string())
        .unwrap_or_else(|_| text.to_owned())
}

pub fn parse_script(text: &str) -> Result<Vec<ConformanceStep>, String> {
    serde_json::from_str(text).map_err(|e| format!("invalid conformance script: {e}"))
}

pub fn echo_script() -> Vec<ConformanceStep> {
    parse_script(ECHO_CONFORMANCE_SCRIPT).expect("shipped script parses")
}

pub fn run_script(target: &dyn WireTarget, steps: &[ConformanceStep]) -> Result<Vec<TranscriptEntry>, TransportError> {
    steps
        .iter()
        .map(|step| {
            let reply = target.send(step.op, step.body.as_deref())?;
            Ok(TranscriptEntry {
                op: step.op,
                status: reply.status,
                response: canonical_json(&reply.body),
            })
        })
        .collect()
}

/// String arguments drawn by [`random_calls`]: paths, commands, app and
/// package names and contacts that exercise both success and failure paths.
pub const STRING_VOCABULARY: &[&str] = &[
    "terminal",
    "settings",
    "files",
    "calculator",
    "/home/user",
    "/home/user/assets",
    "/home/user/assets/alpha.txt",
    "/home/user/backup",
    "/home/user/notes.txt",
    "mkdir /home/user/backup",
    "cp /home/user/assets/*.txt /home/user/backup",
    "cp /home/user/assets/*.pdf /home/user/backup",
    "rm /home/user/assets/bravo.txt",
    "write /home/user/notes.txt hello there",
    "chmod 777 /",
    "color-scheme",
    "prefer-dark",
    "default",
    "txt",
    "com.google.android.apps.tasks",
    "com.google.android.contacts",
    "com.google.android.gm",
    "com.google.android.keep",
    "com.example.missing",
    "John Lauphin",
    "Nobody",
    "john.lauphin@example.com",
    "Hello John",
    "Buy groceries",
    "Call the dentist",
];

/// A seeded sequence of calls against `spec`. Most calls are valid; about
/// one in ten drops a required parameter, adds an unknown one or names an
/// action that does not exist.
pub fn random_calls(spec: &EnvironmentSpec, seed: u64, len: usize) -> Vec<ActionCall> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let schema = spec.actions.choose(&mut rng).expect("spec has actions");
            let mut call = ActionCall::new(&spec.name, &schema.name);
            for p in &schema.params {
                if !p.required && rng.gen_bool(0.5) {
                    continue;
                }
                let value = match &p.type_tag {
                    ParamType::String => ParamValue::from(*STRING_VOCABULARY.choose(&mut rng).expect("non-empty")),
                    ParamType::Enum(v) => ParamValue::from(v.choose(&mut rng).expect("non-empty").as_str()),
                    ParamType::Integer => ParamValue::Int(rng.gen_range(-3..20)),
                    ParamType::Number => ParamValue::Num(f64::from(rng.gen_range(-30..200)) / 10.0),
                    ParamType::Boolean => ParamValue::Bool(rng.gen()),
                };
                call.params.insert(p.name.clone(), value);
            }
            match rng.gen_range(0..30) {
                0 => {
                    if let Some(k) = call.params.keys().next().cloned() {
                        call.params.remove(&k);
                    }
                }
                1 => {
                    call.params.insert("bogus".into(), ParamValue::Int(1));
                }
                2 => call.action_name = "no_such_action".into(),
                _ => {}
            }
            call
        })
        .collect()
}
