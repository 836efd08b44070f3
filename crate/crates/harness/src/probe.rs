//! Evaluates graph nodes against live environments.
//!
//! Predicate arguments that reference an earlier sub-task's output are
//! resolved at probe time: an attribute output resolves to the bound value
//! (recursively, if that value is itself a reference), a query output to
//! the text returned by the template's read action.

use gdt_core::task::{OutputSource, TemplateArg};
use gdt_core::{ActionCall, ActionValue, ArgValue, ComposedTask, EvalNode, ParamValue};
use gdt_envs::{RouteError, SessionRouter};
use thiserror::Error;

/// A probe could not reach an environment. Distinct from a predicate that
/// is merely false.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct ProbeError(pub String);

impl From<RouteError> for ProbeError {
    fn from(e: RouteError) -> Self {
        ProbeError(e.to_string())
    }
}

/// Why an output could not be resolved; the predicate then reads false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unresolved {
    NoOutput(usize),
    Failed(String),
}

pub struct Prober<'a> {
    task: &'a ComposedTask,
    router: &'a SessionRouter,
}

impl<'a> Prober<'a> {
    pub fn new(task: &'a ComposedTask, router: &'a SessionRouter) -> Self {
        Prober { task, router }
    }

    /// The current output of sub-task `index`.
    pub fn output(&self, index: usize) -> Result<Result<String, Unresolved>, ProbeError> {
        self.output_at(index, 0)
    }

    fn output_at(&self, index: usize, depth: usize) -> Result<Result<String, Unresolved>, ProbeError> {
        let Some(sub) = self.task.subtasks.get(index) else {
            return Ok(Err(Unresolved::NoOutput(index)));
        };
        if depth > self.task.subtasks.len() {
            return Ok(Err(Unresolved::Failed("output references form a cycle".into())));
        }
        match &sub.template.output {
            None => Ok(Err(Unresolved::NoOutput(index))),
            Some(OutputSource::Attribute { attribute }) => match sub.bindings.get(attribute) {
                None => Ok(Err(Unresolved::NoOutput(index))),
                Some(v) => self.arg_at(v, depth + 1),
            },
            Some(OutputSource::Query { env, action, args }) => {
                let mut call = ActionCall::new(env, action);
                for (k, a) in args {
                    let value = match a {
                        TemplateArg::Literal(v) => v.clone(),
                        TemplateArg::Attr { name } => match sub.bindings.get(name) {
                            None => return Ok(Err(Unresolved::Failed(format!("attribute `{name}` is unbound")))),
                            Some(v) => match self.arg_at(v, depth + 1)? {
                                Ok(s) => ParamValue::Str(s),
                                Err(u) => return Ok(Err(u)),
                            },
                        },
                    };
                    call.params.insert(k.clone(), value);
                }
                let result = self.router.route(&call)?;
                Ok(match (result.ok, result.value) {
                    (true, ActionValue::Text(t)) => Ok(t),
                    (true, other) => Err(Unresolved::Failed(format!("{call} returned {other:?}"))),
                    (false, _) => Err(Unresolved::Failed(format!(
                        "{call} failed: {}",
                        result.error.map(|e| e.message).unwrap_or_default()
                    ))),
                })
            }
        }
    }

    fn arg_at(&self, value: &ArgValue, depth: usize) -> Result<Result<String, Unresolved>, ProbeError> {
        match value {
            ArgValue::Literal(ParamValue::Str(s)) => Ok(Ok(s.clone())),
            ArgValue::Literal(v) => Ok(Ok(v.to_string())),
            ArgValue::OutputOf { index } => self.output_at(*index, depth),
        }
    }

    /// Evaluates one node. Unresolvable references and failing evaluator
    /// calls read as false; unreachable environments are errors.
    pub fn probe(&self, node: &EvalNode) -> Result<bool, ProbeError> {
        let p = &node.predicate;
        let mut call = ActionCall::new(&p.env_name, &p.predicate);
        for (k, v) in &p.args {
            let value = match v {
                ArgValue::Literal(v) => v.clone(),
                ArgValue::OutputOf { index } => match self.output(*index)? {
                    Ok(s) => ParamValue::Str(s),
                    Err(_) => return Ok(false),
                },
            };
            call.params.insert(k.clone(), value);
        }
        let result = self.router.route(&call)?;
        Ok(result.ok && result.value == ActionValue::Bool(true))
    }
}
