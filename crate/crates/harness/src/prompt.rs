//! Prompt templates and per-agent message construction for the three
//! agent-system structures.

use std::collections::{BTreeMap, VecDeque};

use gdt_core::{ActionKind, ActionRegistry, RegistryError, ToolDescriptor};
use gdt_envs::{EnvironmentSpec, ROOT_ENV};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::AgentStructure;

pub const SINGLE_AGENT_PROMPT: &str = "You are a helpful assistant. Now you have to do a task as described below: \
{task_description}. And this is the description of each given environment: {env_description}. A unit operation \
you can perform is called action in a given environment. For each environment, you are given a limited action \
space as function calls:

{action_descriptions}

You may receive a screenshot of the current system. The interactive UI elements on the screenshot are labeled \
with numeric tags starting from 1. For each step, You must state what actions to take, what the parameters are, \
and you MUST provide in which environment to perform these actions. Your answer must be a least one function \
call. please do not output any other information. You must make sure all function calls get their required \
parameters.";

pub const FUNCTIONALITY_MAIN_PROMPT: &str = "You are a helpful assistant. Now you have to do a task as described \
below: {task_description}. And this is the description of each given environment: {env_description}. A unit \
operation you can perform is called action in a given environment. For each environment, you are given a limited \
action space as function calls:

{action_descriptions}

You may receive a screenshot of the current system. The interactive UI elements on the screenshot are labeled \
with numeric tags starting from 1. For each step, You must state what actions to take, what the parameters are, \
and you MUST provide in which environment to perform these actions.";

pub const FUNCTIONALITY_TOOL_PROMPT: &str = "You are a helpful assistant in generating function calls. I will give \
you a detailed description of what actions to take next, you should translate it into function calls. please do \
not output any other information.";

pub const ENVIRONMENT_MAIN_PROMPT: &str = "You are a main agent, and your goal is to plan and give instructions to \
sub-agents in each environment to complete the final task. Now you have to do a task as described below: \
{description}. The description of each given environment: {env_description}. For each step, you are required to \
provide high-level instructions detailing the next actions to be taken. Additionally, you must specify which \
sub-agent in the designated environment should execute these instructions. If a sub-agent is not needed for a \
particular step, you may instruct it to skip that step.";

pub const ROOT_AGENT_PROMPT: &str = "You are a sub-agent responsible for the benchmark root environment. Your goal \
is to assist the main agent in completing the whole task: \"{description}\". You can only complete the task or \
submit the result when the main agent tells you the whole task has been completed. Otherwise, you can only call \
SKIP.";

pub const SUB_ENVIRONMENT_PROMPT: &str = "You are a sub-agent responsible for the {environment} environment. The \
description of the {environment} environment is: {env_description}. Your goal is to assist the main agent in \
completing the final task by performing actions in the {environment} environment according to the instructions \
from the main agent. The final task is described below: {task_description}. A unit operation you can perform is \
called action in a given environment. You can only execute action in the {environment} environment. For the \
{environment} environment, you are given a limited action space as function calls:

{action_descriptions}

The interactive UI elements on the screenshot are labeled with numeric tags starting from 1. For each step, You \
will receive an instruction telling you what you need to do next. After analyzing the instruction you received \
and the current {environment} system, if you think you don't need to do anything in the current {environment} \
system, you should choose SKIP action. Otherwise, you must state what actions to take, what the parameters are, \
and you MUST provide in which environment to perform these actions. Your answer must be function calls. Please \
do not output any other information. You must make sure all function calls get their required parameters.";

/// Name of the pseudo-action environment sub-agents call to decline a turn.
pub const SKIP_ACTION: &str = "SKIP";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("unresolved placeholder `{{{0}}}`")]
    UnresolvedPlaceholder(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Substitutes `{name}` placeholders in one pass; substituted text is not
/// rescanned. Braces that do not enclose an identifier are kept.
pub fn fill(template: &str, values: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                let v = values
                    .get(n)
                    .ok_or_else(|| PromptError::UnresolvedPlaceholder(n.to_owned()))?;
                out.push_str(v);
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", content = "env", rename_all = "snake_case")]
pub enum AgentRole {
    /// The only agent of the single-agent structure.
    Single,
    /// The main agent of a multi-agent structure; answers in text.
    Planner,
    /// The tool agent of the by-functionality structure.
    Translator,
    /// The sub-agent for one environment.
    Environment(String),
    /// The sub-agent for the root environment.
    Root,
}

impl AgentRole {
    /// Whether this agent is expected to answer with function calls.
    pub fn acts(&self) -> bool {
        !matches!(self, AgentRole::Planner)
    }

    /// Whether this agent's input is the turn's observations (rather than
    /// an instruction from the planner).
    pub fn observes(&self) -> bool {
        matches!(self, AgentRole::Single | AgentRole::Planner)
    }

    pub fn may_skip(&self) -> bool {
        matches!(self, AgentRole::Environment(_) | AgentRole::Root)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

/// One prior turn of one agent: what it was told and what it answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub turn: usize,
    pub user: String,
    pub assistant: String,
}

/// Per-agent conversation memory, bounded to the configured window.
#[derive(Debug, Clone, Default)]
pub struct History {
    window: usize,
    turns: BTreeMap<String, VecDeque<Exchange>>,
}

impl History {
    pub fn new(window: usize) -> Self {
        History {
            window,
            turns: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, agent: &str, exchange: Exchange) {
        let q = self.turns.entry(agent.to_owned()).or_default();
        q.push_back(exchange);
        while q.len() > self.window {
            q.pop_front();
        }
    }

    /// The retained exchanges of `agent`, oldest first.
    pub fn of(&self, agent: &str) -> Vec<Exchange> {
        self.turns
            .get(agent)
            .map(|q| q.iter().cloned().collect())
            .unwrap_or_default()
    }
}

/// What one backend call receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub agent: String,
    pub role: AgentRole,
    pub turn: usize,
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub tools: Vec<ToolDescriptor>,
}

impl BackendRequest {
    /// Prior turns included in this prompt.
    pub fn prior_turns(&self) -> usize {
        self.messages.iter().filter(|m| m.role == ChatRole::Assistant).count()
    }

    /// Characters of prompt text: system prompt, messages and tool schemas.
    pub fn prompt_chars(&self) -> usize {
        let tools: usize = self
            .tools
            .iter()
            .map(|t| t.to_chat_tool().to_string().chars().count())
            .sum();
        self.system.chars().count() + self.messages.iter().map(|m| m.content.chars().count()).sum::<usize>() + tools
    }
}

/// One agent of an agent system.
#[derive(Debug, Clone)]
pub struct Agent {
    pub name: String,
    pub role: AgentRole,
    pub system: String,
    pub tools: Vec<ToolDescriptor>,
    /// Actions this agent may call.
    pub scope: ActionRegistry,
}

impl Agent {
    pub fn request(&self, turn: usize, history: &[Exchange], user: String) -> BackendRequest {
        let mut messages = Vec::with_capacity(2 * history.len() + 1);
        for e in history {
            messages.push(ChatMessage::user(e.user.clone()));
            messages.push(ChatMessage::assistant(e.assistant.clone()));
        }
        messages.push(ChatMessage::user(user));
        BackendRequest {
            agent: self.name.clone(),
            role: self.role.clone(),
            turn,
            system: self.system.clone(),
            messages,
            tools: self.tools.clone(),
        }
    }
}

/// The SKIP pseudo-tool offered to environment sub-agents.
pub fn skip_tool(env: &str) -> ToolDescriptor {
    serde_json::from_value(serde_json::json!({
        "name": SKIP_ACTION,
        "description": "Do nothing in this environment for the current step.",
        "parameters": {"type": "object", "properties": {}, "required": []},
        "env": env,
        "kind": "regular",
        "handler": "skip",
    }))
    .expect("static descriptor")
}

/// Renders the environment descriptions, one `name: description` line each.
pub fn env_description(specs: &[&EnvironmentSpec]) -> String {
    specs
        .iter()
        .map(|s| format!("{}: {}", s.name, s.description))
        .collect::<Vec<_>>()
        .join("\n")
}

fn scoped(registry: &ActionRegistry, env: Option<&str>) -> Result<ActionRegistry, RegistryError> {
    ActionRegistry::from_schemas(
        registry
            .select(env)?
            .into_iter()
            .filter(|e| e.schema.kind == ActionKind::Regular)
            .map(|e| e.schema.clone()),
    )
}

/// The agents of one structure, with filled system prompts.
#[derive(Debug, Clone)]
pub struct AgentSystem {
    pub structure: AgentStructure,
    pub agents: Vec<Agent>,
}

impl AgentSystem {
    /// `specs` lists every environment of the session (root included);
    /// `registry` is the action space agents may call.
    pub fn build(
        structure: AgentStructure,
        task_description: &str,
        specs: &[&EnvironmentSpec],
        registry: &ActionRegistry,
    ) -> Result<Self, PromptError> {
        let envs = env_description(specs);
        let all = scoped(registry, None)?;
        let all_actions = all.render_action_descriptions(None)?;
        let all_tools = all.export_tool_schema(None)?;
        let values = |pairs: &[(&'static str, &str)]| -> BTreeMap<&'static str, String> {
            pairs.iter().map(|(k, v)| (*k, (*v).to_owned())).collect()
        };
        let render = |template: &str, v: BTreeMap<&'static str, String>| {
            let borrowed: BTreeMap<&str, &str> = v.iter().map(|(k, v)| (*k, v.as_str())).collect();
            fill(template, &borrowed)
        };
        let single_values = values(&[
            ("task_description", task_description),
            ("env_description", &envs),
            ("action_descriptions", &all_actions),
        ]);
        let agents = match structure {
            AgentStructure::Single => vec![Agent {
                name: "agent".into(),
                role: AgentRole::Single,
                system: render(SINGLE_AGENT_PROMPT, single_values)?,
                tools: all_tools,
                scope: all,
            }],
            AgentStructure::ByFunctionality => vec![
                Agent {
                    name: "main".into(),
                    role: AgentRole::Planner,
                    system: render(FUNCTIONALITY_MAIN_PROMPT, single_values)?,
                    tools: Vec::new(),
                    scope: ActionRegistry::new(),
                },
                Agent {
                    name: "tool".into(),
                    role: AgentRole::Translator,
                    system: render(FUNCTIONALITY_TOOL_PROMPT, BTreeMap::new())?,
                    tools: all_tools,
                    scope: all,
                },
            ],
            AgentStructure::ByEnvironment => {
                let mut agents = vec![Agent {
                    name: "main".into(),
                    role: AgentRole::Planner,
                    system: render(
                        ENVIRONMENT_MAIN_PROMPT,
                        values(&[("description", task_description), ("env_description", &envs)]),
                    )?,
                    tools: Vec::new(),
                    scope: ActionRegistry::new(),
                }];
                for spec in specs.iter().filter(|s| s.name != ROOT_ENV) {
                    let scope = scoped(registry, Some(&spec.name))?;
                    let actions = scope.render_action_descriptions(None)?;
                    let mut tools = scope.export_tool_schema(None)?;
                    tools.push(skip_tool(&spec.name));
                    agents.push(Agent {
                        name: spec.name.clone(),
                        role: AgentRole::Environment(spec.name.clone()),
                        system: render(
                            SUB_ENVIRONMENT_PROMPT,
                            values(&[
                                ("environment", &spec.name),
                                ("env_description", &spec.description),
                                ("task_description", task_description),
                                ("action_descriptions", &actions),
                            ]),
                        )?,
                        tools,
                        scope,
                    });
                }
                let scope = scoped(registry, Some(ROOT_ENV))?;
                let mut tools = scope.export_tool_schema(None)?;
                tools.push(skip_tool(ROOT_ENV));
                agents.push(Agent {
                    name: ROOT_ENV.into(),
                    role: AgentRole::Root,
                    system: render(ROOT_AGENT_PROMPT, values(&[("description", task_description)]))?,
                    tools,
                    scope,
                });
                agents
            }
        };
        Ok(AgentSystem { structure, agents })
    }
}

/// Observation text per environment, in environment order.
pub type Observations = BTreeMap<String, String>;

/// The user message of an observing agent: feedback on the previous turn's
/// actions, then the current observation of every environment.
pub fn observation_message(turn: usize, feedback: &[String], observations: &Observations) -> String {
    let mut out = format!("Step {}.", turn + 1);
    if !feedback.is_empty() {
        out.push_str("\nResults of your previous actions:");
        for line in feedback {
            out.push_str("\n- ");
            out.push_str(line);
        }
    }
    if !observations.is_empty() {
        out.push_str("\nCurrent observations:");
        for (env, text) in observations {
            out.push_str(&format!("\n[{env}] {text}"));
        }
    }
    out
}

/// The user message of an environment sub-agent: the planner's
/// instruction plus the observation of its own environment.
pub fn sub_agent_message(env: &str, instruction: &str, observation: Option<&str>) -> String {
    match observation {
        Some(obs) => format!("{instruction}\n\nCurrent {env} observation: {obs}"),
        None => instruction.to_owned(),
    }
}

/// Builds every agent's request for one turn. Observing agents receive the
/// observation message; downstream agents receive `instruction` (the
/// planner's answer), or only their history when it is `None`.
#[allow(clippy::too_many_arguments)]
pub fn build_messages(
    structure: AgentStructure,
    task_description: &str,
    specs: &[&EnvironmentSpec],
    registry: &ActionRegistry,
    observations: &Observations,
    history: &History,
    turn: usize,
    instruction: Option<&str>,
) -> Result<Vec<BackendRequest>, PromptError> {
    let system = AgentSystem::build(structure, task_description, specs, registry)?;
    Ok(system
        .agents
        .iter()
        .map(|agent| {
            let past = history.of(&agent.name);
            let user = match (&agent.role, instruction) {
                (role, _) if role.observes() => Some(observation_message(turn, &[], observations)),
                (AgentRole::Environment(env), Some(i)) => {
                    Some(sub_agent_message(env, i, observations.get(env).map(String::as_str)))
                }
                (_, Some(i)) => Some(i.to_owned()),
                (_, None) => None,
            };
            match user {
                Some(u) => agent.request(turn, &past, u),
                None => {
                    let mut r = agent.request(turn, &past, String::new());
                    r.messages.pop();
                    r
                }
            }
        })
        .collect())
}
