//! Human mode: an operator types action calls against the task's
//! environments; after each one the evaluator runs and node statuses are
//! printed. Invalid input is reported and the session continues.

use std::io::{self, BufRead, Write};

use gdt_core::{ActionCall, ActionRegistry, ComposedTask, EvalGraph, NodeStatus, ParamType, ParamValue};
use gdt_envs::{SessionRouter, ROOT_ENV};
use gdt_harness::Prober;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HumanError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("evaluator: {0}")]
    Graph(String),
    #[error("environment unreachable: {0}")]
    Transport(String),
}

/// Evaluator progress when the session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HumanOutcome {
    pub completed: usize,
    pub total: usize,
    /// Calls that reached an environment.
    pub actions: usize,
}

impl HumanOutcome {
    pub fn is_complete(&self) -> bool {
        self.total > 0 && self.completed == self.total
    }
}

const HELP: &str = "\
Enter an action as `env.action key=value ...` (quote values with spaces)
or as JSON: {\"env\": ..., \"action\": ..., \"params\": {...}}.
Commands: actions, status, help, quit.";

fn coerce(registry: &ActionRegistry, env: &str, action: &str, key: &str, raw: &str) -> ParamValue {
    let ty = registry
        .get(env, action)
        .and_then(|e| e.schema.find_param(key))
        .map(|p| &p.type_tag);
    let parsed = match ty {
        Some(ParamType::Integer) => raw.parse().ok().map(ParamValue::Int),
        Some(ParamType::Number) => raw.parse().ok().map(ParamValue::Num),
        Some(ParamType::Boolean) => raw.parse().ok().map(ParamValue::Bool),
        _ => None,
    };
    parsed.unwrap_or_else(|| ParamValue::Str(raw.to_owned()))
}

/// Parses one line of operator input into a call. Values are typed by the
/// parameter's declared type where they parse as it; anything else stays a
/// string so validation can report the mismatch.
pub fn parse_call(line: &str, registry: &ActionRegistry) -> Result<ActionCall, String> {
    if line.starts_with('{') {
        return serde_json::from_str(line).map_err(|e| format!("invalid JSON call: {e}"));
    }
    let words = shlex::split(line).ok_or("unbalanced quotes")?;
    let (head, args) = words.split_first().ok_or("empty input")?;
    let (env, action) = head
        .split_once('.')
        .ok_or_else(|| format!("`{head}` is not of the form env.action"))?;
    let mut call = ActionCall::new(env, action);
    for arg in args {
        let (key, raw) = arg
            .split_once('=')
            .ok_or_else(|| format!("argument `{arg}` is not of the form key=value"))?;
        let value = coerce(registry, env, action, key, raw);
        call.params.insert(key.to_owned(), value);
    }
    Ok(call)
}

fn print_status<W: Write + ?Sized>(graph: &EvalGraph, out: &mut W) -> io::Result<()> {
    for node in graph.nodes() {
        let mark = match node.status {
            NodeStatus::Completed => "[x]",
            NodeStatus::Active => "[>]",
            NodeStatus::Pending => "[ ]",
        };
        writeln!(out, "  {mark} {} {}", node.id, node.predicate)?;
    }
    let (c, n) = graph.counts();
    writeln!(out, "progress: {c}/{n}")
}

fn check<W: Write + ?Sized>(graph: &mut EvalGraph, prober: &Prober, out: &mut W) -> Result<(), HumanError> {
    let report = graph
        .check_step(|n| prober.probe(n))
        .map_err(|e| HumanError::Transport(e.to_string()))?;
    for id in &report.newly_completed {
        let node = graph.node(*id).expect("reported nodes exist");
        writeln!(out, "completed {id}: {}", node.predicate)?;
    }
    Ok(())
}

/// Runs a session until the task completes, `complete()` is called, the
/// operator quits, or input ends.
pub fn human_session<R: BufRead, W: Write + ?Sized>(
    task: &ComposedTask,
    router: &SessionRouter,
    input: R,
    out: &mut W,
) -> Result<HumanOutcome, HumanError> {
    router.reset_all().map_err(|e| HumanError::Transport(e.to_string()))?;
    let registry = router.agent_registry().map_err(|e| HumanError::Graph(e.to_string()))?;
    let prober = Prober::new(task, router);
    let mut graph = task.evaluator.clone();
    graph.reset();
    graph.activate_initial().map_err(|e| HumanError::Graph(e.to_string()))?;

    writeln!(out, "task {}: {}", task.id, task.description)?;
    writeln!(out, "{HELP}")?;
    check(&mut graph, &prober, out)?;
    print_status(&graph, out)?;

    let mut actions = 0;
    let mut lines = input.lines();
    while !graph.is_complete() {
        write!(out, "> ")?;
        out.flush()?;
        let Some(line) = lines.next().transpose()? else {
            writeln!(out)?;
            break;
        };
        let line = line.trim();
        match line {
            "" => continue,
            "quit" | "exit" => break,
            "help" => {
                writeln!(out, "{HELP}")?;
                continue;
            }
            "status" => {
                print_status(&graph, out)?;
                continue;
            }
            "actions" => {
                let text = registry
                    .render_action_descriptions(None)
                    .map_err(|e| HumanError::Graph(e.to_string()))?;
                writeln!(out, "{text}")?;
                continue;
            }
            _ => {}
        }
        let call = match parse_call(line, &registry).and_then(|c| {
            registry
                .validate_call(&c)
                .map_err(|e| format!("error {}: {e}", e.kind()))
        }) {
            Ok(call) => call,
            Err(message) => {
                writeln!(out, "{message}")?;
                continue;
            }
        };
        let result = router.route(&call).map_err(|e| HumanError::Transport(e.to_string()))?;
        actions += 1;
        match (&result.ok, &result.error) {
            (true, _) => match result.value.to_json() {
                serde_json::Value::Null => writeln!(out, "ok")?,
                v => writeln!(out, "ok: {v}")?,
            },
            (false, Some(e)) => writeln!(out, "error {}: {}", e.kind, e.message)?,
            (false, None) => writeln!(out, "error")?,
        }
        check(&mut graph, &prober, out)?;
        print_status(&graph, out)?;
        if call.env_name == ROOT_ENV && call.action_name == "complete" && result.ok {
            writeln!(out, "complete() called; ending session")?;
            break;
        }
    }
    let (completed, total) = graph.counts();
    writeln!(out, "final: {completed}/{total} nodes completed")?;
    Ok(HumanOutcome {
        completed,
        total,
        actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gdt_envs::data::mock_router;
    use gdt_envs::Fixture;

    #[test]
    fn values_follow_declared_types() {
        let registry = mock_router(&Fixture::shipped()).agent_registry().unwrap();
        let call = parse_call("desktop.exec_command cmd='ls /home/user'", &registry).unwrap();
        assert_eq!(call.params["cmd"], ParamValue::Str("ls /home/user".into()));
        let call = parse_call("phone.open_app package=42", &registry).unwrap();
        assert_eq!(call.params["package"], ParamValue::Str("42".into()));
        let json = parse_call(r#"{"env":"root","action":"complete","params":{}}"#, &registry).unwrap();
        assert_eq!(json, ActionCall::new("root", "complete"));
        assert!(parse_call("no_dot", &registry).is_err());
        assert!(parse_call("a.b novalue", &registry).is_err());
        assert!(parse_call("a.b x='open", &registry).is_err());
    }
}
