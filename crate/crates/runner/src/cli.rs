//! The `gdt` command line.

use std::fs;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gdt_core::task::{documents_to_json, has_errors, parse_documents, validate_document};
use gdt_core::{generate, save_task, validate, Diagnostic, DiagnosticKind, Severity, Shape};
use gdt_envs::{serve, EchoEnv, MockDesktop, MockPhone};
use gdt_harness::AgentStructure;

use crate::exit;
use crate::human::human_session;
use crate::suite::{load_fixture, load_pool, load_tasks, run_suite, BackendSpec, EnvSetup, Suite, SuiteError};

#[derive(Debug, Parser)]
#[command(name = "gdt", version, about = "Cross-environment agent benchmark runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every task once per agent structure and write a report.
    Run(RunArgs),
    /// Generate task documents from a template pool.
    Compose(ComposeArgs),
    /// Check task documents; exits nonzero on any error diagnostic.
    Validate(ValidateArgs),
    /// Drive a task's environments by hand with evaluator feedback.
    HumanCheck(HumanArgs),
    /// Serve a mock environment over the worker protocol.
    ServeEnv(ServeArgs),
}

#[derive(Debug, Args)]
pub struct EnvArgs {
    /// Fixture seeding the mock environments (default: shipped fixture).
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    /// Use a remote worker for an environment: `name=http://host:port`.
    #[arg(long = "env", value_name = "NAME=URL")]
    pub remotes: Vec<String>,
}

impl EnvArgs {
    fn setup(&self) -> Result<EnvSetup, SuiteError> {
        Ok(EnvSetup {
            fixture: load_fixture(self.fixture.as_deref())?,
            remotes: self
                .remotes
                .iter()
                .map(|r| EnvSetup::parse_remote(r))
                .collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    /// Agent structure; repeat to run several.
    #[arg(long = "agent", required = true, value_name = "single|by-func|by-env")]
    pub agents: Vec<AgentStructure>,
    /// `scripted:FILE` or `http:FILE`.
    #[arg(long)]
    pub backend: String,
    #[arg(long, default_value_t = 15)]
    pub max_turns: usize,
    #[arg(long, default_value_t = 2)]
    pub history: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 0)]
    pub invalid_retries: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Omit the timestamp so identical runs give identical reports.
    #[arg(long)]
    pub deterministic: bool,
    /// Template pool the tasks reference (default: shipped pool).
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[command(flatten)]
    pub envs: EnvArgs,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Template pool (default: shipped pool).
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Generation `i` uses seed `seed + i`.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub subtasks: usize,
    /// Restrict templates to these platforms.
    #[arg(long = "platform")]
    pub platforms: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub pool: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HumanArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub task_id: String,
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[command(flatten)]
    pub envs: EnvArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ServedEnv {
    Desktop,
    Phone,
    Echo,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum)]
    pub env: ServedEnv,
    #[arg(long, default_value_t = 0)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub fixture: Option<PathBuf>,
}

/// Streams a command writes to.
pub struct Io<'a, R> {
    pub input: R,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

/// Runs a parsed command and returns its exit status.
pub fn execute<R: BufRead>(cli: Cli, io: Io<'_, R>) -> i32 {
    let Io { input, out, err } = io;
    let result = match cli.command {
        Command::Run(args) => cmd_run(args, out),
        Command::Compose(args) => cmd_compose(args, out, err),
        Command::Validate(args) => cmd_validate(args, out),
        Command::HumanCheck(args) => cmd_human(args, input, out),
        Command::ServeEnv(args) => cmd_serve(args, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_error(e: std::io::Error) -> SuiteError {
    SuiteError::Io(e)
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<i32, SuiteError> {
    let pool = load_pool(args.pool.as_deref())?;
    let suite = Suite {
        tasks: load_tasks(&args.tasks, &pool)?,
        structures: args.agents,
        backend: BackendSpec::parse(&args.backend)?,
        max_turns: args.max_turns,
        history_turns: args.history,
        invalid_retries: args.invalid_retries,
        seed: args.seed,
        jobs: args.jobs,
        envs: args.envs.setup()?,
    };
    let stamp = (!args.deterministic).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let run = run_suite(&suite, stamp)?;
    run.write(&args.out)?;
    for (name, row) in run.report.table() {
        writeln!(out, "{name:>8}  {}", row.to_cells().join("  ")).map_err(io_error)?;
    }
    if run.report.failures > 0 {
        writeln!(out, "{} episode(s) failed; see report.json", run.report.failures).map_err(io_error)?;
    }
    writeln!(out, "report written to {}", args.out.display()).map_err(io_error)?;
    Ok(run.exit_code())
}

fn cmd_compose(args: ComposeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, SuiteError> {
    let pool = load_pool(args.pool.as_deref())?;
    let shape = Shape {
        subtask_count: args.subtasks,
        platforms: args.platforms,
    };
    let mut docs = Vec::with_capacity(args.count);
    let mut failed = false;
    for i in 0..args.count {
        let seed = args.seed.wrapping_add(i as u64);
        match generate(&pool, seed, &shape) {
            Ok(task) => {
                let diagnostics = validate(&task);
                if has_errors(&diagnostics) {
                    failed = true;
                    for d in diagnostics {
                        writeln!(err, "generation {i} (seed {seed}): {d}").map_err(io_error)?;
                    }
                } else {
                    docs.push(save_task(&task));
                }
            }
            Err(e) => {
                failed = true;
                writeln!(err, "generation {i} (seed {seed}): {e}").map_err(io_error)?;
            }
        }
    }
    if failed {
        return Ok(exit::FAILURE);
    }
    fs::write(&args.out, documents_to_json(&docs))?;
    writeln!(out, "wrote {} task(s) to {}", docs.len(), args.out.display()).map_err(io_error)?;
    Ok(exit::OK)
}

fn cmd_validate(args: ValidateArgs, out: &mut dyn Write) -> Result<i32, SuiteError> {
    let pool = load_pool(args.pool.as_deref())?;
    let text = fs::read_to_string(&args.file)
        .map_err(|e| SuiteError::Config(format!("reading {}: {e}", args.file.display())))?;
    let docs = match parse_documents(&text) {
        Ok(docs) => docs,
        Err(e) => {
            let d = Diagnostic {
                severity: Severity::Error,
                kind: DiagnosticKind::SchemaViolation,
                message: e.to_string(),
            };
            writeln!(out, "{}: {d}", args.file.display()).map_err(io_error)?;
            return Ok(exit::FAILURE);
        }
    };
    let mut any_error = false;
    for doc in &docs {
        let diagnostics = validate_document(doc, &pool);
        any_error |= has_errors(&diagnostics);
        if diagnostics.is_empty() {
            writeln!(out, "{}: ok", doc.id).map_err(io_error)?;
        }
        for d in diagnostics {
            writeln!(out, "{}: {d}", doc.id).map_err(io_error)?;
        }
    }
    Ok(if any_error { exit::FAILURE } else { exit::OK })
}

fn cmd_human<R: BufRead>(args: HumanArgs, input: R, out: &mut dyn Write) -> Result<i32, SuiteError> {
    let pool = load_pool(args.pool.as_deref())?;
    let task = load_tasks(&args.tasks, &pool)?
        .into_iter()
        .find(|t| t.id == args.task_id)
        .ok_or_else(|| SuiteError::Config(format!("no task `{}` in {}", args.task_id, args.tasks.display())))?;
    let router = args.envs.setup()?.router()?;
    let outcome = human_session(&task, &router, input, out).map_err(|e| match e {
        crate::human::HumanError::Io(e) => SuiteError::Io(e),
        other => SuiteError::Unreachable(other.to_string()),
    })?;
    Ok(if outcome.is_complete() { exit::OK } else { exit::FAILURE })
}

fn cmd_serve(args: ServeArgs, out: &mut dyn Write) -> Result<i32, SuiteError> {
    let addr = format!("{}:{}", args.host, args.port);
    let fixture = load_fixture(args.fixture.as_deref())?;
    let worker = match args.env {
        ServedEnv::Desktop => serve(MockDesktop::new(fixture.desktop), &addr),
        ServedEnv::Phone => serve(MockPhone::new(fixture.phone), &addr),
        ServedEnv::Echo => serve(EchoEnv::default(), &addr),
    }
    .map_err(|e| SuiteError::Config(e.to_string()))?;
    writeln!(out, "listening on {}", worker.endpoint()).map_err(io_error)?;
    out.flush().map_err(io_error)?;
    worker.join();
    Ok(exit::OK)
}
