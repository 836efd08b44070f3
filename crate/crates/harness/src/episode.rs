//! The episode loop: observe, prompt, act, evaluate; then classify how the
//! episode ended and compute its metrics.

use std::fmt;

use gdt_core::{
    ActionKind, ActionResult, ComposedTask, EpisodeCounts, EvalStepReport, ExactMetrics, GraphError, Metrics,
    RegistryError,
};
use gdt_envs::{SessionRouter, ROOT_ENV};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::config::{AgentConfig, AgentStructure, ConfigError};
use crate::probe::Prober;
use crate::prompt::{
    observation_message, sub_agent_message, AgentRole, AgentSystem, Exchange, History, Observations, PromptError,
    SKIP_ACTION,
};

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Termination {
    /// Every evaluator node completed.
    Success,
    /// False completion: `complete()` was called with nodes outstanding.
    #[serde(rename = "FC")]
    FalseCompletion,
    /// Reached the step limit without completing.
    #[serde(rename = "RSL")]
    StepLimit,
    /// Invalid action output: a call failed parsing or validation and no
    /// retries remained.
    #[serde(rename = "IA")]
    InvalidAction,
}

impl Termination {
    pub const ALL: [Termination; 4] = [
        Termination::Success,
        Termination::FalseCompletion,
        Termination::StepLimit,
        Termination::InvalidAction,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Termination::Success => "Success",
            Termination::FalseCompletion => "FC",
            Termination::StepLimit => "RSL",
            Termination::InvalidAction => "IA",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// What is known when an episode stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EndState {
    pub completed: usize,
    pub total: usize,
    pub complete_called: bool,
    pub invalid_exhausted: bool,
}

/// Success dominates FC, which dominates IA; an episode that ended for no
/// other reason ran out of turns.
pub fn classify_termination(state: &EndState) -> Termination {
    if state.total > 0 && state.completed == state.total {
        Termination::Success
    } else if state.complete_called {
        Termination::FalseCompletion
    } else if state.invalid_exhausted {
        Termination::InvalidAction
    } else {
        Termination::StepLimit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Observation,
    Prompt,
    Reply,
    Action,
    Skip,
    Invalid,
    Eval,
    Termination,
}

/// One transcript record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub turn: usize,
    pub agent: String,
    pub kind: EventKind,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub structure: AgentStructure,
    pub termination: Termination,
    /// `A`: agent actions that executed successfully.
    pub actions_executed: u64,
    /// `T`: prompt plus completion tokens over every backend call.
    pub tokens_total: u64,
    /// `(C, N)` at the end of the episode.
    pub completed: usize,
    pub total: usize,
    pub turns: usize,
    pub transcript: Vec<TranscriptEvent>,
}

impl EpisodeResult {
    pub fn counts(&self) -> EpisodeCounts {
        EpisodeCounts {
            completed: self.completed as u64,
            total: self.total as u64,
            actions: self.actions_executed,
            tokens: self.tokens_total,
        }
    }

    pub fn metrics(&self) -> Metrics {
        compute_metrics(self)
    }

    pub fn exact_metrics(&self) -> ExactMetrics {
        ExactMetrics::compute(self.counts())
    }

    /// The transcript as JSON lines.
    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.transcript {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn compute_metrics(episode: &EpisodeResult) -> Metrics {
    Metrics::compute(episode.counts())
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("task needs environment `{0}`, which the session does not provide")]
    MissingEnvironment(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("evaluator: {0}")]
    Graph(#[from] GraphError),
    #[error("environment unreachable: {0}")]
    Transport(String),
}

fn eval_payload(report: &EvalStepReport, graph: &gdt_core::EvalGraph) -> Value {
    let (c, n) = graph.counts();
    json!({
        "newly_completed": report.newly_completed.iter().map(|id| id.0).collect::<Vec<_>>(),
        "newly_activated": report.newly_activated.iter().map(|id| id.0).collect::<Vec<_>>(),
        "completed": c,
        "total": n,
    })
}

fn summarize(result: &ActionResult) -> String {
    if result.ok {
        match result.value.to_json() {
            Value::Null => "ok".into(),
            v => format!("ok: {v}"),
        }
    } else {
        let e = result.error.as_ref();
        format!(
            "error {}: {}",
            e.map(|e| e.kind.to_string()).unwrap_or_default(),
            e.map(|e| e.message.as_str()).unwrap_or_default()
        )
    }
}

struct Episode<'a> {
    task: &'a ComposedTask,
    router: &'a SessionRouter,
    prober: Prober<'a>,
    graph: gdt_core::EvalGraph,
    events: Vec<TranscriptEvent>,
    actions: u64,
    tokens: u64,
    invalid: usize,
    retries: usize,
    complete_called: bool,
    invalid_exhausted: bool,
}

impl Episode<'_> {
    fn log(&mut self, turn: usize, agent: &str, kind: EventKind, payload: Value) {
        self.events.push(TranscriptEvent {
            turn,
            agent: agent.to_owned(),
            kind,
            payload,
        });
    }

    fn check(&mut self, turn: usize) -> Result<(), EpisodeError> {
        let prober = &self.prober;
        let report = self.graph.check_step(|n| prober.probe(n)).map_err(|e| match e {
            GraphError::ProbeFailure { node, cause } => EpisodeError::Transport(format!("probing {node}: {cause}")),
            other => EpisodeError::Graph(other),
        })?;
        let payload = eval_payload(&report, &self.graph);
        self.log(turn, "evaluator", EventKind::Eval, payload);
        Ok(())
    }

    fn observe(&mut self, turn: usize) -> Result<Observations, EpisodeError> {
        let mut observations = Observations::new();
        let calls: Vec<_> = self
            .router
            .specs()
            .into_iter()
            .filter(|s| s.name != ROOT_ENV)
            .flat_map(|s| {
                s.actions
                    .iter()
                    .filter(|a| a.kind == ActionKind::Observation && a.params.iter().all(|p| !p.required))
                    .map(|a| gdt_core::ActionCall::new(&a.env_name, &a.name))
            })
            .collect();
        for call in calls {
            let result = self
                .router
                .route(&call)
                .map_err(|e| EpisodeError::Transport(e.to_string()))?;
            let text = match result.value.as_text() {
                Some(t) if result.ok => t.to_owned(),
                _ => summarize(&result),
            };
            self.log(turn, &call.env_name, EventKind::Observation, json!({"action": call.action_name, "text": text}));
            let entry = observations.entry(call.env_name.clone()).or_default();
            if !entry.is_empty() {
                entry.push('\n');
            }
            entry.push_str(&text);
        }
        Ok(observations)
    }

    /// Records an invalid output; returns true when retries are exhausted.
    fn invalid(&mut self, turn: usize, agent: &str, payload: Value) -> bool {
        self.invalid += 1;
        self.log(turn, agent, EventKind::Invalid, payload);
        if self.invalid > self.retries {
            self.invalid_exhausted = true;
        }
        self.invalid_exhausted
    }

    fn end_state(&self) -> EndState {
        let (completed, total) = self.graph.counts();
        EndState {
            completed,
            total,
            complete_called: self.complete_called,
            invalid_exhausted: self.invalid_exhausted,
        }
    }

    fn finished(&self) -> bool {
        self.graph.is_complete() || self.complete_called || self.invalid_exhausted
    }
}

/// Runs one episode of `task`.
///
/// The evaluator is checked once before the first turn and after every
/// executed action. The episode ends when the graph completes, when the
/// agent calls `root.complete`, when an invalid output exhausts the retry
/// budget, or after `max_turns` turns.
pub fn run_episode(
    task: &ComposedTask,
    router: &SessionRouter,
    config: &AgentConfig,
    backend: &mut dyn Backend,
) -> Result<EpisodeResult, EpisodeError> {
    config.validate()?;
    if let Some(missing) = task.environments().into_iter().find(|e| !router.has_env(e)) {
        return Err(EpisodeError::MissingEnvironment(missing));
    }
    let registry = router.agent_registry()?;
    let specs = router.specs();
    let system = AgentSystem::build(config.structure, &task.description, &specs, &registry)?;
    let mut graph = task.evaluator.clone();
    graph.reset();
    let initial = graph.activate_initial()?;
    let mut ep = Episode {
        task,
        router,
        prober: Prober::new(task, router),
        graph,
        events: Vec::new(),
        actions: 0,
        tokens: 0,
        invalid: 0,
        retries: config.invalid_retries,
        complete_called: false,
        invalid_exhausted: false,
    };
    let payload = eval_payload(&initial, &ep.graph);
    ep.log(0, "evaluator", EventKind::Eval, payload);
    ep.check(0)?;

    let mut history = History::new(config.history_turns);
    let mut feedback: Vec<String> = Vec::new();
    let mut turns = 0;
    'turns: for turn in 0..config.max_turns {
        if ep.finished() {
            break;
        }
        turns = turn + 1;
        let observations = ep.observe(turn)?;
        let previous = std::mem::take(&mut feedback);
        let mut instruction = String::new();
        for agent in &system.agents {
            let user = match &agent.role {
                role if role.observes() => observation_message(turn, &previous, &observations),
                AgentRole::Environment(env) => {
                    sub_agent_message(env, &instruction, observations.get(env).map(String::as_str))
                }
                _ => instruction.clone(),
            };
            let request = agent.request(turn, &history.of(&agent.name), user.clone());
            ep.log(
                turn,
                &agent.name,
                EventKind::Prompt,
                json!({
                    "system": request.system,
                    "messages": request.messages,
                    "tools": request.tools.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(),
                    "prior_turns": request.prior_turns(),
                }),
            );
            let reply = backend.complete(&request)?;
            ep.tokens += reply.tokens();
            ep.log(turn, &agent.name, EventKind::Reply, json!(reply));
            history.record(
                &agent.name,
                Exchange {
                    turn,
                    user,
                    assistant: reply.transcript_text(),
                },
            );
            if agent.role == AgentRole::Planner {
                instruction = reply.text.unwrap_or_default();
                continue;
            }
            if let Some(why) = reply.parse_failure {
                feedback.push(format!("invalid output: {why}"));
                if ep.invalid(turn, &agent.name, json!({"reason": why})) {
                    break 'turns;
                }
                continue;
            }
            for call in reply.tool_calls {
                let own_env = match &agent.role {
                    AgentRole::Environment(env) => Some(env.as_str()),
                    AgentRole::Root => Some(ROOT_ENV),
                    _ => None,
                };
                if call.action_name == SKIP_ACTION && own_env == Some(call.env_name.as_str()) {
                    ep.log(turn, &agent.name, EventKind::Skip, json!({"env": call.env_name}));
                    continue;
                }
                let validated = match agent.scope.validate_call(&call) {
                    Ok(v) => v,
                    Err(e) => {
                        feedback.push(format!("{call} -> invalid: {e}"));
                        let payload = json!({"call": call, "kind": e.kind(), "message": e.to_string()});
                        if ep.invalid(turn, &agent.name, payload) {
                            break 'turns;
                        }
                        continue;
                    }
                };
                let result = router
                    .route(&validated)
                    .map_err(|e| EpisodeError::Transport(e.to_string()))?;
                if result.ok {
                    ep.actions += 1;
                }
                feedback.push(format!("{validated} -> {}", summarize(&result)));
                ep.log(turn, &agent.name, EventKind::Action, json!({"call": validated, "result": result}));
                if result.ok && validated.env_name == ROOT_ENV && validated.action_name == "complete" {
                    ep.complete_called = true;
                }
                ep.check(turn)?;
                if ep.finished() {
                    break 'turns;
                }
            }
        }
    }
    // A final check so completion reached by the last action is not
    // missed, whatever ended the episode.
    ep.check(turns)?;
    let state = ep.end_state();
    let termination = classify_termination(&state);
    ep.log(
        turns,
        "harness",
        EventKind::Termination,
        json!({
            "termination": termination,
            "completed": state.completed,
            "total": state.total,
            "actions": ep.actions,
            "tokens": ep.tokens,
        }),
    );
    Ok(EpisodeResult {
        task_id: ep.task.id.clone(),
        structure: config.structure,
        termination,
        actions_executed: ep.actions,
        tokens_total: ep.tokens,
        completed: state.completed,
        total: state.total,
        turns,
        transcript: ep.events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(c: usize, n: usize, complete: bool, invalid: bool) -> EndState {
        EndState {
            completed: c,
            total: n,
            complete_called: complete,
            invalid_exhausted: invalid,
        }
    }

    #[test]
    fn classification_precedence() {
        assert_eq!(classify_termination(&state(3, 3, true, false)), Termination::Success);
        assert_eq!(classify_termination(&state(3, 3, false, true)), Termination::Success);
        assert_eq!(classify_termination(&state(1, 3, true, true)), Termination::FalseCompletion);
        assert_eq!(classify_termination(&state(1, 3, false, true)), Termination::InvalidAction);
        assert_eq!(classify_termination(&state(2, 3, false, false)), Termination::StepLimit);
    }

    #[test]
    fn labels_serialize_as_reported() {
        let labels: Vec<String> = Termination::ALL
            .iter()
            .map(|t| serde_json::to_string(t).unwrap())
            .collect();
        assert_eq!(labels, ["\"Success\"", "\"FC\"", "\"RSL\"", "\"IA\""]);
        for t in Termination::ALL {
            assert_eq!(format!("\"{t}\""), serde_json::to_string(&t).unwrap());
        }
    }
}
