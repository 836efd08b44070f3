//! The typed action space: registration, call validation, prompt rendering
//! and function-calling descriptors.

use std::collections::HashMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionCall, ActionKind, ActionSchema, ErrorKind, ParamSpec, ParamType, ParamValue};

/// Table-2 style action space (pixel-level desktop/phone actions plus the
/// root actions), shipped for serialization and conformance tests.
pub const BUILTIN_ACTION_SPACE: &str = include_str!("../data/action_space.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("action `{name}` is already registered in environment `{env}`")]
    DuplicateAction { env: String, name: String },
    #[error("invalid action schema: {0}")]
    InvalidSchema(String),
    #[error("no actions match the selection")]
    EmptySelection,
    #[error("malformed schema document: {0}")]
    Malformed(String),
}

/// Reasons a call is rejected. Checked in the order
/// unknown environment, unknown action, unknown parameter, missing
/// parameter, type mismatch; the first failing rule is reported.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("unknown action `{action}` in environment `{env}`")]
    UnknownAction { env: String, action: String },
    #[error("unknown parameter `{param}` for action `{action}`")]
    UnknownParam { action: String, param: String },
    #[error("missing required parameter `{param}` for action `{action}`")]
    MissingParam { action: String, param: String },
    #[error("parameter `{param}` of `{action}` expects {expected}, got {found}")]
    TypeMismatch {
        action: String,
        param: String,
        expected: String,
        found: String,
    },
}

impl ValidationError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ValidationError::UnknownEnvironment(_) => ErrorKind::UnknownEnvironment,
            ValidationError::UnknownAction { .. } => ErrorKind::UnknownAction,
            ValidationError::UnknownParam { .. } => ErrorKind::UnknownParam,
            ValidationError::MissingParam { .. } => ErrorKind::MissingParam,
            ValidationError::TypeMismatch { .. } => ErrorKind::TypeMismatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub schema: ActionSchema,
    pub handler_id: String,
}

/// Ordered collection of action schemas keyed by `(env, name)`.
#[derive(Debug, Clone, Default)]
pub struct ActionRegistry {
    entries: Vec<RegistryEntry>,
    index: HashMap<(String, String), usize>,
}

impl PartialEq for ActionRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

/// Default handler id used when a schema is registered without one.
pub fn default_handler_id(schema: &ActionSchema) -> String {
    format!("{}.{}", schema.env_name, schema.name)
}

impl ActionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a registry from schemas, binding default handler ids.
    pub fn from_schemas<I>(schemas: I) -> Result<Self, RegistryError>
    where
        I: IntoIterator<Item = ActionSchema>,
    {
        let mut registry = ActionRegistry::new();
        for schema in schemas {
            let handler = default_handler_id(&schema);
            registry.register(schema, handler)?;
        }
        Ok(registry)
    }

    /// Parses a schema-definition document (a JSON array of schemas).
    pub fn from_schema_json(text: &str) -> Result<Self, RegistryError> {
        let schemas: Vec<ActionSchema> =
            serde_json::from_str(text).map_err(|e| RegistryError::Malformed(e.to_string()))?;
        Self::from_schemas(schemas)
    }

    pub fn builtin_action_space() -> Self {
        Self::from_schema_json(BUILTIN_ACTION_SPACE).expect("shipped action space is valid")
    }

    pub fn register(
        &mut self,
        schema: ActionSchema,
        handler_id: impl Into<String>,
    ) -> Result<&RegistryEntry, RegistryError> {
        schema.check().map_err(RegistryError::InvalidSchema)?;
        let key = (schema.env_name.clone(), schema.name.clone());
        if self.index.contains_key(&key) {
            return Err(RegistryError::DuplicateAction {
                env: key.0,
                name: key.1,
            });
        }
        self.index.insert(key, self.entries.len());
        self.entries.push(RegistryEntry {
            schema,
            handler_id: handler_id.into(),
        });
        Ok(self.entries.last().expect("just pushed"))
    }

    pub fn get(&self, env: &str, name: &str) -> Option<&RegistryEntry> {
        self.index
            .get(&(env.to_owned(), name.to_owned()))
            .map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_env(&self, env: &str) -> bool {
        self.entries.iter().any(|e| e.schema.env_name == env)
    }

    /// Environment names in order of first registration.
    pub fn env_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !names.contains(&e.schema.env_name.as_str()) {
                names.push(&e.schema.env_name);
            }
        }
        names
    }

    pub fn schemas(&self) -> impl Iterator<Item = &ActionSchema> {
        self.entries.iter().map(|e| &e.schema)
    }

    /// Entries matching the filter, ordered by environment name and then
    /// registration order.
    pub fn select(&self, env_filter: Option<&str>) -> Result<Vec<&RegistryEntry>, RegistryError> {
        let mut selected: Vec<&RegistryEntry> = self
            .entries
            .iter()
            .filter(|e| env_filter.is_none_or(|env| e.schema.env_name == env))
            .collect();
        if selected.is_empty() {
            return Err(RegistryError::EmptySelection);
        }
        selected.sort_by(|a, b| a.schema.env_name.cmp(&b.schema.env_name));
        Ok(selected)
    }

    /// Validates a call and returns it normalized: integer values widened for
    /// `number` parameters, declared defaults filled in.
    pub fn validate_call(&self, call: &ActionCall) -> Result<ActionCall, ValidationError> {
        if !self.has_env(&call.env_name) {
            return Err(ValidationError::UnknownEnvironment(call.env_name.clone()));
        }
        let schema = &self
            .get(&call.env_name, &call.action_name)
            .ok_or_else(|| ValidationError::UnknownAction {
                env: call.env_name.clone(),
                action: call.action_name.clone(),
            })?
            .schema;
        validate_params(schema, call)
    }
}

/// Validates a call's parameters against a single schema.
pub fn validate_params(schema: &ActionSchema, call: &ActionCall) -> Result<ActionCall, ValidationError> {
    if let Some(param) = call.params.keys().find(|k| schema.find_param(k).is_none()) {
        return Err(ValidationError::UnknownParam {
            action: schema.name.clone(),
            param: param.clone(),
        });
    }
    if let Some(missing) = schema
        .params
        .iter()
        .find(|p| p.required && !call.params.contains_key(&p.name))
    {
        return Err(ValidationError::MissingParam {
            action: schema.name.clone(),
            param: missing.name.clone(),
        });
    }
    let mut normalized = call.clone();
    for spec in &schema.params {
        match call.params.get(&spec.name) {
            Some(value) => {
                let admitted =
                    spec.type_tag
                        .admit(value)
                        .ok_or_else(|| ValidationError::TypeMismatch {
                            action: schema.name.clone(),
                            param: spec.name.clone(),
                            expected: spec.type_tag.to_string(),
                            found: value.type_name().to_owned(),
                        })?;
                normalized.params.insert(spec.name.clone(), admitted);
            }
            None => {
                if let Some(default) = &spec.default {
                    normalized.params.insert(spec.name.clone(), default.clone());
                }
            }
        }
    }
    Ok(normalized)
}

impl ActionRegistry {
    /// Renders the `{action_descriptions}` prompt block.
    pub fn render_action_descriptions(&self, env_filter: Option<&str>) -> Result<String, RegistryError> {
        let mut out = String::new();
        for (i, entry) in self.select(env_filter)?.into_iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            render_stanza(&mut out, &entry.schema);
        }
        Ok(out)
    }

    /// Exports function-calling descriptors.
    pub fn export_tool_schema(&self, env_filter: Option<&str>) -> Result<Vec<ToolDescriptor>, RegistryError> {
        Ok(self
            .select(env_filter)?
            .into_iter()
            .map(ToolDescriptor::from_entry)
            .collect())
    }

    /// Rebuilds a registry from exported descriptors.
    pub fn import_tool_schema(descriptors: &[ToolDescriptor]) -> Result<Self, RegistryError> {
        let mut registry = ActionRegistry::new();
        for d in descriptors {
            let (schema, handler) = d.to_entry()?;
            registry.register(schema, handler)?;
        }
        Ok(registry)
    }
}

fn render_stanza(out: &mut String, schema: &ActionSchema) {
    let _ = writeln!(out, "- {} (environment: {}): {}", schema.name, schema.env_name, schema.description);
    for p in &schema.params {
        let flag = if p.required { "required" } else { "optional" };
        let _ = writeln!(out, "    {}: {}, {}. {}", p.name, p.type_tag, flag, p.description);
    }
}

/// Separator between environment and action in exported tool names.
pub const TOOL_NAME_SEPARATOR: &str = "__";

pub fn tool_name(env: &str, action: &str) -> String {
    format!("{env}{TOOL_NAME_SEPARATOR}{action}")
}

/// Splits an exported tool name back into `(env, action)`.
pub fn split_tool_name(name: &str) -> Option<(&str, &str)> {
    name.split_once(TOOL_NAME_SEPARATOR)
        .filter(|(env, action)| !env.is_empty() && !action.is_empty())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySchema {
    #[serde(rename = "type")]
    pub json_type: String,
    pub description: String,
    #[serde(rename = "enum", default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterObject {
    #[serde(rename = "type")]
    pub json_type: String,
    pub properties: IndexMap<String, PropertySchema>,
    pub required: Vec<String>,
}

/// A function-calling descriptor for one action.
///
/// `name` is `<env>__<action>`; `env`, `kind` and `handler` carry what a
/// chat API does not need but a round trip does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub parameters: ParameterObject,
    pub env: String,
    pub kind: ActionKind,
    pub handler: String,
}

impl ToolDescriptor {
    fn from_entry(entry: &RegistryEntry) -> Self {
        let schema = &entry.schema;
        let properties = schema
            .params
            .iter()
            .map(|p| {
                let variants = match &p.type_tag {
                    ParamType::Enum(v) => Some(v.clone()),
                    _ => None,
                };
                (
                    p.name.clone(),
                    PropertySchema {
                        json_type: p.type_tag.json_type().to_owned(),
                        description: p.description.clone(),
                        variants,
                        default: p.default.clone(),
                    },
                )
            })
            .collect();
        ToolDescriptor {
            name: tool_name(&schema.env_name, &schema.name),
            description: schema.description.clone(),
            parameters: ParameterObject {
                json_type: "object".into(),
                properties,
                required: schema
                    .params
                    .iter()
                    .filter(|p| p.required)
                    .map(|p| p.name.clone())
                    .collect(),
            },
            env: schema.env_name.clone(),
            kind: schema.kind,
            handler: entry.handler_id.clone(),
        }
    }

    fn to_entry(&self) -> Result<(ActionSchema, String), RegistryError> {
        let (env, action) = split_tool_name(&self.name)
            .ok_or_else(|| RegistryError::Malformed(format!("bad tool name `{}`", self.name)))?;
        if env != self.env {
            return Err(RegistryError::Malformed(format!(
                "tool `{}` disagrees with env `{}`",
                self.name, self.env
            )));
        }
        let mut params = Vec::with_capacity(self.parameters.properties.len());
        for (name, prop) in &self.parameters.properties {
            let type_tag = match &prop.variants {
                Some(v) => ParamType::Enum(v.clone()),
                None => serde_json::from_value(serde_json::Value::String(prop.json_type.clone()))
                    .map_err(|e| RegistryError::Malformed(e.to_string()))?,
            };
            params.push(ParamSpec {
                name: name.clone(),
                type_tag,
                description: prop.description.clone(),
                required: self.parameters.required.contains(name),
                default: prop.default.clone(),
            });
        }
        let schema = ActionSchema {
            name: action.to_owned(),
            env_name: env.to_owned(),
            description: self.description.clone(),
            params,
            kind: self.kind,
        };
        Ok((schema, self.handler.clone()))
    }

    /// The `{"type":"function","function":{...}}` form sent to chat APIs.
    pub fn to_chat_tool(&self) -> serde_json::Value {
        serde_json::json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters,
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionKind::*;

    fn search_application() -> ActionSchema {
        ActionSchema::new("desktop", "search_application", Regular, "Search an application name.")
            .param(ParamSpec::new("name", ParamType::String, "the application name."))
    }

    fn sample() -> ActionRegistry {
        let mut r = ActionRegistry::new();
        r.register(search_application(), "desktop.search").unwrap();
        r.register(
            ActionSchema::new("desktop", "press", Regular, "Press a keyboard key.")
                .param(ParamSpec::new("key", ParamType::String, "the key.")),
            "desktop.press",
        )
        .unwrap();
        r.register(
            ActionSchema::new("phone", "swipe", Regular, "Swipe.")
                .param(ParamSpec::new("elem", ParamType::Integer, "element tag."))
                .param(ParamSpec::new(
                    "direction",
                    ParamType::Enum(vec!["up".into(), "down".into()]),
                    "direction.",
                ))
                .param(ParamSpec::new("speed", ParamType::Number, "speed.").optional(Some(1.0.into()))),
            "phone.swipe",
        )
        .unwrap();
        r.register(
            ActionSchema::new("desktop", "screenshot", Observation, "Capture the screen."),
            "desktop.screenshot",
        )
        .unwrap();
        r
    }

    #[test]
    fn register_and_lookup() {
        let r = sample();
        let e = r.get("desktop", "search_application").unwrap();
        assert_eq!(e.handler_id, "desktop.search");
        assert_eq!(e.schema.params[0].description, "the application name.");
    }

    #[test]
    fn duplicate_is_rejected() {
        let mut r = sample();
        let err = r.register(search_application(), "x").unwrap_err();
        assert_eq!(
            err,
            RegistryError::DuplicateAction {
                env: "desktop".into(),
                name: "search_application".into()
            }
        );
        // Same name in another environment is fine.
        let mut other = search_application();
        other.env_name = "phone".into();
        r.register(other, "y").unwrap();
    }

    #[test]
    fn schema_invariants() {
        let mut r = ActionRegistry::new();
        let obs = ActionSchema::new("desktop", "screenshot", Observation, "Capture.")
            .param(ParamSpec::new("x", ParamType::Integer, "x."));
        assert!(matches!(r.register(obs, "h"), Err(RegistryError::InvalidSchema(_))));
        let empty_enum = ActionSchema::new("desktop", "scroll", Regular, "Scroll.")
            .param(ParamSpec::new("d", ParamType::Enum(vec![]), "d."));
        assert!(matches!(r.register(empty_enum, "h"), Err(RegistryError::InvalidSchema(_))));
        let dup = ActionSchema::new("desktop", "a", Regular, "A.")
            .param(ParamSpec::new("x", ParamType::Integer, "x."))
            .param(ParamSpec::new("x", ParamType::String, "x."));
        assert!(matches!(r.register(dup, "h"), Err(RegistryError::InvalidSchema(_))));
        let nodesc = ActionSchema::new("desktop", "a", Regular, "A.")
            .param(ParamSpec::new("x", ParamType::Integer, " "));
        assert!(matches!(r.register(nodesc, "h"), Err(RegistryError::InvalidSchema(_))));
    }

    #[test]
    fn validate_call_accepts_listing_example() {
        let r = sample();
        let call = ActionCall::new("desktop", "search_application").with("name", "slack");
        assert_eq!(r.validate_call(&call).unwrap(), call);
    }

    #[test]
    fn validate_call_errors() {
        let r = sample();
        let missing = ActionCall::new("desktop", "search_application");
        assert!(matches!(
            r.validate_call(&missing),
            Err(ValidationError::MissingParam { ref param, .. }) if param == "name"
        ));
        let mismatch = ActionCall::new("desktop", "press").with("key", 3);
        assert_eq!(r.validate_call(&mismatch).unwrap_err().kind(), ErrorKind::TypeMismatch);
        let env = ActionCall::new("tv", "press");
        assert_eq!(r.validate_call(&env).unwrap_err().kind(), ErrorKind::UnknownEnvironment);
        let action = ActionCall::new("desktop", "click");
        assert_eq!(r.validate_call(&action).unwrap_err().kind(), ErrorKind::UnknownAction);
        // Unknown wins over missing and type errors.
        let both = ActionCall::new("desktop", "press").with("keys", 3);
        assert_eq!(r.validate_call(&both).unwrap_err().kind(), ErrorKind::UnknownParam);
        // Missing wins over type errors.
        let swipe = ActionCall::new("phone", "swipe").with("elem", "one");
        assert_eq!(r.validate_call(&swipe).unwrap_err().kind(), ErrorKind::MissingParam);
        let bad_variant = ActionCall::new("phone", "swipe").with("elem", 1).with("direction", "left");
        assert_eq!(r.validate_call(&bad_variant).unwrap_err().kind(), ErrorKind::TypeMismatch);
    }

    #[test]
    fn validate_call_normalizes() {
        let r = sample();
        let call = ActionCall::new("phone", "swipe").with("elem", 1).with("direction", "up");
        let norm = r.validate_call(&call).unwrap();
        assert_eq!(norm.params["speed"], ParamValue::Num(1.0));
        let call = call.with("speed", 2);
        assert_eq!(r.validate_call(&call).unwrap().params["speed"], ParamValue::Num(2.0));
    }

    #[test]
    fn render_single_and_deterministic() {
        let mut r = ActionRegistry::new();
        r.register(search_application(), "h").unwrap();
        let text = r.render_action_descriptions(None).unwrap();
        assert_eq!(text.matches("\n- ").count() + 1, 1);
        assert!(text.contains("Search an application name."));
        assert!(text.contains("name: string, required. the application name."));
        assert_eq!(text, r.render_action_descriptions(None).unwrap());
    }

    #[test]
    fn render_orders_by_env_then_registration() {
        let r = sample();
        let text = r.render_action_descriptions(None).unwrap();
        let stanzas: Vec<&str> = text.lines().filter(|l| l.starts_with("- ")).collect();
        assert_eq!(stanzas.len(), r.len());
        let names: Vec<&str> = stanzas
            .iter()
            .map(|l| l[2..].split(' ').next().unwrap())
            .collect();
        assert_eq!(names, ["search_application", "press", "screenshot", "swipe"]);
        assert_eq!(
            r.render_action_descriptions(Some("tv")).unwrap_err(),
            RegistryError::EmptySelection
        );
    }

    #[test]
    fn export_shapes() {
        let r = sample();
        let tools = r.export_tool_schema(Some("phone")).unwrap();
        assert_eq!(tools.len(), 1);
        let swipe = &tools[0];
        assert_eq!(swipe.name, "phone__swipe");
        assert_eq!(
            swipe.parameters.properties["direction"].variants.as_deref(),
            Some(&["up".to_owned(), "down".to_owned()][..])
        );
        assert_eq!(swipe.parameters.required, ["elem", "direction"]);
        let shot = r.export_tool_schema(Some("desktop")).unwrap();
        let shot = shot.iter().find(|t| t.name == "desktop__screenshot").unwrap();
        assert!(shot.parameters.properties.is_empty());
        assert!(r.export_tool_schema(Some("tv")).is_err());
    }

    #[test]
    fn export_import_round_trip_through_json() {
        let r = sample();
        let tools = r.export_tool_schema(None).unwrap();
        let text = serde_json::to_string(&tools).unwrap();
        let back: Vec<ToolDescriptor> = serde_json::from_str(&text).unwrap();
        let imported = ActionRegistry::import_tool_schema(&back).unwrap();
        // Export orders by env, so compare per (env, name).
        assert_eq!(imported.len(), r.len());
        for e in r.entries() {
            assert_eq!(imported.get(&e.schema.env_name, &e.schema.name), Some(e));
        }
    }

    #[test]
    fn builtin_action_space_has_seventeen_entries() {
        let raw: Vec<serde_json::Value> = serde_json::from_str(BUILTIN_ACTION_SPACE).unwrap();
        let r = ActionRegistry::builtin_action_space();
        assert_eq!(r.len(), raw.len());
        assert_eq!(r.len(), 17);
        let names: Vec<&str> = r.schemas().map(|s| s.name.as_str()).collect();
        let raw_names: Vec<&str> = raw.iter().map(|v| v["name"].as_str().unwrap()).collect();
        assert_eq!(names, raw_names);
        let press = ActionCall::new("desktop", "press").with("key", 3);
        assert_eq!(r.validate_call(&press).unwrap_err().kind(), ErrorKind::TypeMismatch);
        // The schema file uses exactly the documented field set.
        for v in &raw {
            let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
            keys.sort();
            assert_eq!(keys, ["description", "env", "kind", "name", "params"]);
            for p in v["params"].as_array().unwrap() {
                let mut keys: Vec<&String> = p.as_object().unwrap().keys().collect();
                keys.sort();
                assert_eq!(keys, ["description", "name", "required", "type"]);
            }
        }
    }
}
