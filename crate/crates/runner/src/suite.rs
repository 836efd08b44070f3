//! Suite execution: every task once per agent structure, each episode on a
//! freshly built and reset session, in parallel up to a job limit.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use gdt_core::task::{load_task, parse_documents};
use gdt_core::{ComposedTask, TemplatePool};
use gdt_envs::data::shipped_pool;
use gdt_envs::{EnvHandle, Fixture, LocalEnv, MockDesktop, MockPhone, RemoteEnv, SessionRouter};
use gdt_harness::{
    parse_script_book, run_episode, AgentConfig, AgentStructure, Backend, EpisodeResult, HttpBackendConfig,
    HttpChatBackend, ScriptBook, ScriptedBackend,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::exit;
use crate::report::{EpisodeRow, RunSettings, SuiteReport};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("environment unreachable: {0}")]
    Unreachable(String),
    #[error("writing results: {0}")]
    Io(#[from] io::Error),
}

impl SuiteError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SuiteError::Config(_) | SuiteError::Io(_) => exit::CONFIG,
            SuiteError::Unreachable(_) => exit::UNREACHABLE,
        }
    }
}

fn read(path: &Path) -> Result<String, SuiteError> {
    fs::read_to_string(path).map_err(|e| SuiteError::Config(format!("reading {}: {e}", path.display())))
}

/// The template pool at `path`, or the shipped pool.
pub fn load_pool(path: Option<&Path>) -> Result<TemplatePool, SuiteError> {
    match path {
        None => Ok(shipped_pool()),
        Some(p) => TemplatePool::from_json(&read(p)?)
            .map_err(|e| SuiteError::Config(format!("pool {}: {e}", p.display()))),
    }
}

/// Loads every task document in `path` against `pool`.
pub fn load_tasks(path: &Path, pool: &TemplatePool) -> Result<Vec<ComposedTask>, SuiteError> {
    let docs = parse_documents(&read(path)?)
        .map_err(|e| SuiteError::Config(format!("tasks {}: {e}", path.display())))?;
    docs.iter()
        .map(|d| load_task(d, pool).map_err(|e| SuiteError::Config(format!("task {}: {e}", d.id))))
        .collect()
}

pub fn load_fixture(path: Option<&Path>) -> Result<Fixture, SuiteError> {
    match path {
        None => Ok(Fixture::shipped()),
        Some(p) => Fixture::load(p).map_err(|e| SuiteError::Config(format!("fixture {}: {e}", p.display()))),
    }
}

/// Where a suite's environments come from: in-process mocks seeded from a
/// fixture, with any named environment replaced by a remote worker.
#[derive(Debug, Clone)]
pub struct EnvSetup {
    pub fixture: Fixture,
    /// `(name, endpoint)` pairs.
    pub remotes: Vec<(String, String)>,
}

impl EnvSetup {
    pub fn mock(fixture: Fixture) -> Self {
        EnvSetup {
            fixture,
            remotes: Vec::new(),
        }
    }

    /// Parses a `name=url` remote argument.
    pub fn parse_remote(arg: &str) -> Result<(String, String), SuiteError> {
        match arg.split_once('=') {
            Some((name, url)) if !name.is_empty() && !url.is_empty() => Ok((name.to_owned(), url.to_owned())),
            _ => Err(SuiteError::Config(format!("`{arg}` is not of the form name=url"))),
        }
    }

    /// A fresh session router. Connecting to a remote fetches its spec,
    /// which must carry the name it was given.
    pub fn router(&self) -> Result<SessionRouter, SuiteError> {
        let remote: BTreeSet<&str> = self.remotes.iter().map(|(n, _)| n.as_str()).collect();
        let mut handles: Vec<Box<dyn EnvHandle>> = Vec::new();
        if !remote.contains("desktop") {
            handles.push(Box::new(
                LocalEnv::new(MockDesktop::new(self.fixture.desktop.clone())).map_err(SuiteError::Config)?,
            ));
        }
        if !remote.contains("phone") {
            handles.push(Box::new(
                LocalEnv::new(MockPhone::new(self.fixture.phone.clone())).map_err(SuiteError::Config)?,
            ));
        }
        for (name, url) in &self.remotes {
            let handle = RemoteEnv::connect(url).map_err(|e| SuiteError::Unreachable(e.to_string()))?;
            if handle.name() != name {
                return Err(SuiteError::Config(format!(
                    "worker at {url} serves `{}`, not `{name}`",
                    handle.name()
                )));
            }
            handles.push(Box::new(handle));
        }
        let mut router = SessionRouter::new();
        for h in handles {
            router.attach(h).map_err(|e| SuiteError::Config(e.to_string()))?;
        }
        Ok(router)
    }
}

/// Which backend drives the agents.
#[derive(Debug, Clone)]
pub enum BackendSpec {
    /// Scripts keyed by task id; a task without a script gets an empty one.
    Scripted { label: String, book: ScriptBook },
    Http { label: String, config: HttpBackendConfig },
}

impl BackendSpec {
    /// Parses `scripted:FILE` or `http:FILE`.
    pub fn parse(arg: &str) -> Result<Self, SuiteError> {
        let (kind, path) = arg
            .split_once(':')
            .ok_or_else(|| SuiteError::Config(format!("backend `{arg}` is not scripted:FILE or http:FILE")))?;
        let text = read(Path::new(path))?;
        let label = arg.to_owned();
        match kind {
            "scripted" => Ok(BackendSpec::Scripted {
                label,
                book: parse_script_book(&text).map_err(|e| SuiteError::Config(format!("scripts {path}: {e}")))?,
            }),
            "http" => Ok(BackendSpec::Http {
                label,
                config: HttpBackendConfig::from_json(&text)
                    .map_err(|e| SuiteError::Config(format!("backend {path}: {e}")))?,
            }),
            other => Err(SuiteError::Config(format!("unknown backend kind `{other}`"))),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            BackendSpec::Scripted { label, .. } | BackendSpec::Http { label, .. } => label,
        }
    }

    pub fn instantiate(&self, task_id: &str, seed: u64) -> Result<Box<dyn Backend>, SuiteError> {
        match self {
            BackendSpec::Scripted { book, .. } => Ok(Box::new(
                book.get(task_id)
                    .cloned()
                    .map(ScriptedBackend::new)
                    .unwrap_or_else(ScriptedBackend::empty),
            )),
            BackendSpec::Http { config, .. } => Ok(Box::new(
                HttpChatBackend::new(config, seed).map_err(|e| SuiteError::Config(format!("backend: {e}")))?,
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub tasks: Vec<ComposedTask>,
    pub structures: Vec<AgentStructure>,
    pub backend: BackendSpec,
    pub max_turns: usize,
    pub history_turns: usize,
    pub invalid_retries: usize,
    pub seed: u64,
    pub jobs: usize,
    pub envs: EnvSetup,
}

impl Suite {
    /// A suite over `tasks` with default agent settings and mock environments.
    pub fn new(tasks: Vec<ComposedTask>, structures: Vec<AgentStructure>, backend: BackendSpec) -> Self {
        let defaults = AgentConfig::default();
        Suite {
            tasks,
            structures,
            backend,
            max_turns: defaults.max_turns,
            history_turns: defaults.history_turns,
            invalid_retries: defaults.invalid_retries,
            seed: defaults.seed,
            jobs: 1,
            envs: EnvSetup::mock(Fixture::shipped()),
        }
    }

    pub fn agent_config(&self, structure: AgentStructure) -> AgentConfig {
        AgentConfig {
            structure,
            history_turns: self.history_turns,
            max_turns: self.max_turns,
            invalid_retries: self.invalid_retries,
            seed: self.seed,
        }
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            structures: self.structures.clone(),
            backend: self.backend.label().to_owned(),
            max_turns: self.max_turns,
            history_turns: self.history_turns,
            invalid_retries: self.invalid_retries,
            seed: self.seed,
            tasks: self.tasks.len(),
        }
    }

    /// Remote workers hold one state each, so episodes sharing them must
    /// run one at a time.
    pub fn effective_jobs(&self) -> usize {
        if self.envs.remotes.is_empty() {
            self.jobs.max(1)
        } else {
            1
        }
    }
}

/// One cell of the task × structure matrix.
#[derive(Debug)]
pub struct EpisodeOutcome {
    pub task_id: String,
    pub structure: AgentStructure,
    pub result: Result<EpisodeResult, String>,
}

#[derive(Debug)]
pub struct SuiteRun {
    pub report: SuiteReport,
    pub outcomes: Vec<EpisodeOutcome>,
}

impl SuiteRun {
    /// Exit status: partial failure when any episode could not run.
    pub fn exit_code(&self) -> i32 {
        if self.report.failures > 0 {
            exit::PARTIAL
        } else {
            exit::OK
        }
    }

    /// Writes the report files and one JSON-lines transcript per episode
    /// under `transcripts/<structure>/<task id>.jsonl`.
    pub fn write(&self, out: &Path) -> io::Result<()> {
        self.report.write(out)?;
        for o in &self.outcomes {
            if let Ok(episode) = &o.result {
                let dir: PathBuf = out.join("transcripts").join(o.structure.as_str());
                fs::create_dir_all(&dir)?;
                fs::write(dir.join(format!("{}.jsonl", o.task_id)), episode.transcript_jsonl())?;
            }
        }
        Ok(())
    }
}

fn run_one(suite: &Suite, task: &ComposedTask, structure: AgentStructure) -> Result<EpisodeResult, String> {
    let router = suite.envs.router().map_err(|e| e.to_string())?;
    router.reset_all().map_err(|e| format!("resetting: {e}"))?;
    let mut backend = suite.backend.instantiate(&task.id, suite.seed).map_err(|e| e.to_string())?;
    run_episode(task, &router, &suite.agent_config(structure), backend.as_mut()).map_err(|e| e.to_string())
}

/// Runs every task once per structure. Configuration and reachability are
/// checked up front; failures of single episodes become error rows.
pub fn run_suite(suite: &Suite, generated_unix: Option<u64>) -> Result<SuiteRun, SuiteError> {
    if suite.structures.is_empty() {
        return Err(SuiteError::Config("no agent structure selected".into()));
    }
    for s in &suite.structures {
        suite
            .agent_config(*s)
            .validate()
            .map_err(|e| SuiteError::Config(e.to_string()))?;
    }
    suite.backend.instantiate("", suite.seed)?;
    suite.envs.router()?;

    let matrix: Vec<(AgentStructure, &ComposedTask)> = suite
        .structures
        .iter()
        .flat_map(|s| suite.tasks.iter().map(move |t| (*s, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(suite.effective_jobs())
        .build()
        .map_err(|e| SuiteError::Config(e.to_string()))?;
    let outcomes: Vec<EpisodeOutcome> = pool.install(|| {
        matrix
            .par_iter()
            .map(|(structure, task)| EpisodeOutcome {
                task_id: task.id.clone(),
                structure: *structure,
                result: run_one(suite, task, *structure),
            })
            .collect()
    });
    let rows = matrix
        .iter()
        .zip(&outcomes)
        .map(|((structure, task), o)| match &o.result {
            Ok(episode) => EpisodeRow::from_episode(task, episode),
            Err(e) => EpisodeRow::failed(task, *structure, e.clone()),
        })
        .collect();
    Ok(SuiteRun {
        report: SuiteReport::from_rows(suite.settings(), rows, generated_unix),
        outcomes,
    })
}
