//! Action schemas, calls and results.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A scalar parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
}

impl ParamValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::Bool(_) => "boolean",
            ParamValue::Int(_) => "integer",
            ParamValue::Num(_) => "number",
            ParamValue::Str(_) => "string",
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Num(n) => write!(f, "{n}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for ParamValue {
    fn from(s: &str) -> Self {
        ParamValue::Str(s.to_owned())
    }
}

impl From<String> for ParamValue {
    fn from(s: String) -> Self {
        ParamValue::Str(s)
    }
}

impl From<i64> for ParamValue {
    fn from(i: i64) -> Self {
        ParamValue::Int(i)
    }
}

impl From<f64> for ParamValue {
    fn from(n: f64) -> Self {
        ParamValue::Num(n)
    }
}

impl From<bool> for ParamValue {
    fn from(b: bool) -> Self {
        ParamValue::Bool(b)
    }
}

/// Declared type of an action parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ParamTypeRepr", into = "ParamTypeRepr")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    Enum(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParamTypeRepr {
    Simple(String),
    Enum {
        #[serde(rename = "enum")]
        variants: Vec<String>,
    },
}

impl TryFrom<ParamTypeRepr> for ParamType {
    type Error = String;

    fn try_from(repr: ParamTypeRepr) -> Result<Self, Self::Error> {
        match repr {
            ParamTypeRepr::Simple(s) => ParamType::from_json_type(&s)
                .ok_or_else(|| format!("unknown parameter type `{s}`")),
            ParamTypeRepr::Enum { variants } => Ok(ParamType::Enum(variants)),
        }
    }
}

impl From<ParamType> for ParamTypeRepr {
    fn from(t: ParamType) -> Self {
        match t {
            ParamType::Enum(variants) => ParamTypeRepr::Enum { variants },
            other => ParamTypeRepr::Simple(other.json_type().to_owned()),
        }
    }
}

impl ParamType {
    /// The JSON-schema primitive name for this type.
    pub fn json_type(&self) -> &'static str {
        match self {
            ParamType::String | ParamType::Enum(_) => "string",
            ParamType::Integer => "integer",
            ParamType::Number => "number",
            ParamType::Boolean => "boolean",
        }
    }

    fn from_json_type(s: &str) -> Option<Self> {
        Some(match s {
            "string" => ParamType::String,
            "integer" => ParamType::Integer,
            "number" => ParamType::Number,
            "boolean" => ParamType::Boolean,
            _ => return None,
        })
    }

    /// Checks a value against this type, returning the normalized value.
    ///
    /// Integers are accepted for `number` parameters and widened.
    pub fn admit(&self, value: &ParamValue) -> Option<ParamValue> {
        match (self, value) {
            (ParamType::String, ParamValue::Str(_))
            | (ParamType::Integer, ParamValue::Int(_))
            | (ParamType::Number, ParamValue::Num(_))
            | (ParamType::Boolean, ParamValue::Bool(_)) => Some(value.clone()),
            (ParamType::Number, ParamValue::Int(i)) => Some(ParamValue::Num(*i as f64)),
            (ParamType::Enum(variants), ParamValue::Str(s)) if variants.contains(s) => {
                Some(value.clone())
            }
            _ => None,
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamType::Enum(v) => write!(f, "enum({})", v.join("|")),
            other => f.write_str(other.json_type()),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub type_tag: ParamType,
    pub description: String,
    #[serde(default = "default_true")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, type_tag: ParamType, description: impl Into<String>) -> Self {
        ParamSpec {
            name: name.into(),
            type_tag,
            description: description.into(),
            required: true,
            default: None,
        }
    }

    /// Marks the parameter optional, with an optional default.
    pub fn optional(mut self, default: Option<ParamValue>) -> Self {
        self.required = false;
        self.default = default;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Regular,
    Observation,
    Evaluator,
}

/// A declared action: what an agent may call and an environment executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    #[serde(rename = "env")]
    pub env_name: String,
    pub description: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    pub kind: ActionKind,
}

/// Identifiers are non-empty runs of ASCII alphanumerics, `_`, `-` and `.`.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl ActionSchema {
    pub fn new(
        env_name: impl Into<String>,
        name: impl Into<String>,
        kind: ActionKind,
        description: impl Into<String>,
    ) -> Self {
        ActionSchema {
            name: name.into(),
            env_name: env_name.into(),
            description: description.into(),
            params: Vec::new(),
            kind,
        }
    }

    pub fn param(mut self, spec: ParamSpec) -> Self {
        self.params.push(spec);
        self
    }

    pub fn find_param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Checks the schema's structural invariants.
    pub fn check(&self) -> Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("invalid action name `{}`", self.name));
        }
        if !is_identifier(&self.env_name) {
            return Err(format!("invalid environment name `{}`", self.env_name));
        }
        if self.description.trim().is_empty() {
            return Err(format!("action `{}` has an empty description", self.name));
        }
        if self.kind == ActionKind::Observation && !self.params.is_empty() {
            return Err(format!("observation action `{}` takes parameters", self.name));
        }
        for (i, p) in self.params.iter().enumerate() {
            if !is_identifier(&p.name) {
                return Err(format!("invalid parameter name `{}` in `{}`", p.name, self.name));
            }
            if self.params[..i].iter().any(|q| q.name == p.name) {
                return Err(format!("duplicate parameter `{}` in `{}`", p.name, self.name));
            }
            if p.description.trim().is_empty() {
                return Err(format!("parameter `{}` of `{}` has no description", p.name, self.name));
            }
            if let ParamType::Enum(v) = &p.type_tag {
                if v.is_empty() {
                    return Err(format!("enum parameter `{}` has no variants", p.name));
                }
            }
            if let Some(d) = &p.default {
                if p.type_tag.admit(d).is_none() {
                    return Err(format!("default of `{}` does not match its type", p.name));
                }
            }
        }
        Ok(())
    }
}

/// An agent's request to run an action in a named environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCall {
    #[serde(rename = "env")]
    pub env_name: String,
    #[serde(rename = "action")]
    pub action_name: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

impl ActionCall {
    pub fn new(env_name: impl Into<String>, action_name: impl Into<String>) -> Self {
        ActionCall {
            env_name: env_name.into(),
            action_name: action_name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<ParamValue>) -> Self {
        self.params.insert(name.into(), value.into());
        self
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}(", self.env_name, self.action_name)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={}", serde_json::to_string(v).unwrap_or_default())?;
        }
        f.write_str(")")
    }
}

/// Value produced by an action handler.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ActionValue {
    #[default]
    None,
    Text(String),
    Bool(bool),
    Blob(Vec<u8>),
}

impl ActionValue {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ActionValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            ActionValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value;
        match self {
            ActionValue::None => Value::Null,
            ActionValue::Text(s) => Value::String(s.clone()),
            ActionValue::Bool(b) => Value::Bool(*b),
            ActionValue::Blob(bytes) => serde_json::json!({ "blob": BASE64.encode(bytes) }),
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, String> {
        use serde_json::Value;
        match value {
            Value::Null => Ok(ActionValue::None),
            Value::String(s) => Ok(ActionValue::Text(s.clone())),
            Value::Bool(b) => Ok(ActionValue::Bool(*b)),
            Value::Object(map) if map.len() == 1 => match map.get("blob") {
                Some(Value::String(s)) => BASE64
                    .decode(s)
                    .map(ActionValue::Blob)
                    .map_err(|e| format!("invalid blob encoding: {e}")),
                _ => Err("unsupported result object".into()),
            },
            other => Err(format!("unsupported result value {other}")),
        }
    }
}

/// Failure classes reported by validation, routing and environment workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    UnknownEnvironment,
    UnknownAction,
    UnknownParam,
    MissingParam,
    TypeMismatch,
    ProtocolError,
    HandlerError,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionFailure {
    pub kind: ErrorKind,
    pub message: String,
}

/// Outcome of executing an action.
///
/// Serializes as the worker wire form: `{"ok":true,"result":...}` or
/// `{"ok":false,"error":{"kind":...,"message":...}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionResult {
    pub ok: bool,
    pub value: ActionValue,
    pub error: Option<ActionFailure>,
}

impl ActionResult {
    pub fn success(value: ActionValue) -> Self {
        ActionResult {
            ok: true,
            value,
            error: None,
        }
    }

    pub fn failure(kind: ErrorKind, message: impl Into<String>) -> Self {
        ActionResult {
            ok: false,
            value: ActionValue::None,
            error: Some(ActionFailure {
                kind,
                message: message.into(),
            }),
        }
    }

    pub fn error_kind(&self) -> Option<ErrorKind> {
        self.error.as_ref().map(|e| e.kind)
    }
}

#[derive(Serialize, Deserialize)]
struct ActionResultRepr {
    ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    result: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<ActionFailure>,
}

impl Serialize for ActionResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = if self.ok {
            ActionResultRepr {
                ok: true,
                result: Some(self.value.to_json()),
                error: None,
            }
        } else {
            ActionResultRepr {
                ok: false,
                result: None,
                error: self.error.clone(),
            }
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ActionResult {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = ActionResultRepr::deserialize(deserializer)?;
        if repr.ok {
            let value = match &repr.result {
                Some(v) => ActionValue::from_json(v).map_err(D::Error::custom)?,
                None => ActionValue::None,
            };
            Ok(ActionResult::success(value))
        } else {
            let error = repr
                .error
                .ok_or_else(|| D::Error::custom("failed result without error object"))?;
            Ok(ActionResult {
                ok: false,
                value: ActionValue::None,
                error: Some(error),
            })
        }
    }
}
