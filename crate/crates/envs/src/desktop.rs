//! Deterministic desk-scale desktop: an in-memory file tree, settings, an
//! application switcher and a four-verb terminal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use gdt_core::{ActionKind, ActionSchema, ActionValue, ParamSpec, ParamType};

use crate::fixture::DesktopSeed;
use crate::host::{text, Environment, HandlerError, Params};
use crate::protocol::EnvironmentSpec;

pub const DESKTOP_ENV: &str = "desktop";
pub const TERMINAL: &str = "terminal";
pub const SETTINGS: &str = "settings";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DesktopState {
    pub files: BTreeMap<String, String>,
    pub dirs: BTreeSet<String>,
    pub settings: BTreeMap<String, String>,
    pub current_app: Option<String>,
    pub installed_apps: BTreeSet<String>,
    pub command_log: Vec<String>,
}

fn err(kind: &str, message: impl Into<String>) -> HandlerError {
    HandlerError::new(kind, message)
}

/// Canonical absolute path: single separators, no trailing slash.
pub fn normalize(path: &str) -> Result<String, HandlerError> {
    if !path.starts_with('/') {
        return Err(err("NoSuchPath", format!("`{path}` is not an absolute path")));
    }
    let parts: Vec<&str> = path.split('/').filter(|p| !p.is_empty()).collect();
    if parts.iter().any(|p| *p == "." || *p == "..") {
        return Err(err("NoSuchPath", format!("`{path}` uses relative components")));
    }
    Ok(format!("/{}", parts.join("/")))
}

pub fn parent(path: &str) -> Option<&str> {
    if path == "/" {
        return None;
    }
    path.rsplit_once('/').map(|(head, _)| if head.is_empty() { "/" } else { head })
}

pub fn basename(path: &str) -> &str {
    path.rsplit_once('/').map_or(path, |(_, b)| b)
}

impl DesktopState {
    pub fn from_seed(seed: &DesktopSeed) -> Self {
        let mut state = DesktopState {
            settings: seed.settings.clone(),
            installed_apps: seed.apps.iter().cloned().collect(),
            ..Default::default()
        };
        state
            .settings
            .entry("color-scheme".into())
            .or_insert_with(|| "default".into());
        for dir in &seed.dirs {
            let dir = normalize(dir).expect("fixture directories are absolute");
            state.add_dir_with_ancestors(&dir);
        }
        for (path, content) in &seed.files {
            let path = normalize(path).expect("fixture files are absolute");
            if let Some(p) = parent(&path) {
                state.add_dir_with_ancestors(p);
            }
            state.files.insert(path, content.clone());
        }
        state
    }

    fn add_dir_with_ancestors(&mut self, dir: &str) {
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d != "/" {
                self.dirs.insert(d.to_owned());
            }
            cur = parent(d);
        }
    }

    pub fn dir_exists(&self, path: &str) -> bool {
        path == "/" || self.dirs.contains(path)
    }

    fn require_parent(&self, path: &str) -> Result<(), HandlerError> {
        match parent(path) {
            Some(p) if self.dir_exists(p) => Ok(()),
            _ => Err(err("NoSuchPath", format!("parent directory of `{path}` does not exist"))),
        }
    }

    /// Files directly inside `dir`.
    pub fn files_in<'a>(&'a self, dir: &'a str) -> impl Iterator<Item = (&'a String, &'a String)> + 'a {
        self.files.iter().filter(move |(p, _)| parent(p) == Some(dir))
    }

    fn write(&mut self, path: &str, content: &str) -> Result<(), HandlerError> {
        let path = normalize(path)?;
        if self.dir_exists(&path) {
            return Err(err("NoSuchPath", format!("`{path}` is a directory")));
        }
        self.require_parent(&path)?;
        self.files.insert(path, content.to_owned());
        Ok(())
    }

    /// Runs one terminal command:
    /// `mkdir <p>` | `cp <src-glob-or-file> <dst-dir>` | `rm <p>` | `write <p> <text>`.
    pub fn run_command(&mut self, cmd: &str) -> Result<String, HandlerError> {
        let cmd = cmd.trim();
        let (verb, rest) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
        let rest = rest.trim_start();
        let args: Vec<&str> = rest.split_whitespace().collect();
        let usage = |u: &str| err("CommandParseError", format!("usage: {u}"));
        match verb {
            "mkdir" => {
                let [p] = args[..] else { return Err(usage("mkdir <path>")) };
                let p = normalize(p)?;
                if self.dir_exists(&p) || self.files.contains_key(&p) {
                    return Err(err("PathExists", format!("`{p}` already exists")));
                }
                self.require_parent(&p)?;
                self.dirs.insert(p.clone());
                Ok(format!("created {p}"))
            }
            "cp" => {
                let [src, dst] = args[..] else { return Err(usage("cp <src> <dst-dir>")) };
                let dst = normalize(dst)?;
                if !self.dir_exists(&dst) {
                    return Err(err("NoSuchPath", format!("destination `{dst}` is not a directory")));
                }
                let sources: Vec<(String, String)> = match basename(src).strip_prefix("*.") {
                    Some(ext) => {
                        let dir = normalize(parent(src).unwrap_or("/"))?;
                        let suffix = format!(".{ext}");
                        self.files_in(&dir)
                            .filter(|(p, _)| basename(p).ends_with(&suffix))
                            .map(|(p, c)| (p.clone(), c.clone()))
                            .collect()
                    }
                    None if src.contains('*') => {
                        return Err(err("CommandParseError", "only `*.<ext>` globs are supported"))
                    }
                    None => {
                        let p = normalize(src)?;
                        self.files.get(&p).map(|c| (p.clone(), c.clone())).into_iter().collect()
                    }
                };
                if sources.is_empty() {
                    return Err(err("NoSuchPath", format!("`{src}` matches no files")));
                }
                let target = |p: &str| {
                    if dst == "/" {
                        format!("/{}", basename(p))
                    } else {
                        format!("{dst}/{}", basename(p))
                    }
                };
                for (p, c) in &sources {
                    self.files.insert(target(p), c.clone());
                }
                Ok(format!("copied {} file(s) to {dst}", sources.len()))
            }
            "rm" => {
                let [p] = args[..] else { return Err(usage("rm <path>")) };
                let p = normalize(p)?;
                if self.files.remove(&p).is_some() {
                    return Ok(format!("removed {p}"));
                }
                if p != "/" && self.dirs.remove(&p) {
                    let prefix = format!("{p}/");
                    self.dirs.retain(|d| !d.starts_with(&prefix));
                    self.files.retain(|f, _| !f.starts_with(&prefix));
                    return Ok(format!("removed {p}"));
                }
                Err(err("NoSuchPath", format!("`{p}` does not exist")))
            }
            "write" => {
                let Some((p, body)) = rest.split_once(char::is_whitespace) else {
                    return Err(usage("write <path> <text>"));
                };
                let body = body.trim_start();
                if body.is_empty() {
                    return Err(usage("write <path> <text>"));
                }
                self.write(p, body)?;
                Ok(format!("wrote {}", normalize(p)?))
            }
            "" => Err(err("CommandParseError", "empty command")),
            other => Err(err("CommandParseError", format!("unknown command `{other}`"))),
        }
    }

    /// Deterministic textual digest of the whole state.
    pub fn digest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "current_app: {}", self.current_app.as_deref().unwrap_or("none"));
        let _ = writeln!(
            out,
            "installed_apps: {}",
            self.installed_apps.iter().cloned().collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(out, "dirs:");
        for d in &self.dirs {
            let _ = writeln!(out, "  {d}");
        }
        let _ = writeln!(out, "files:");
        for (p, c) in &self.files {
            let _ = writeln!(out, "  {p}: {}", serde_json::to_string(c).expect("strings serialize"));
        }
        let _ = writeln!(out, "settings:");
        for (k, v) in &self.settings {
            let _ = writeln!(out, "  {k} = {v}");
        }
        let _ = writeln!(out, "command_log:");
        for c in &self.command_log {
            let _ = writeln!(out, "  {c}");
        }
        out
    }
}

/// Whitespace/punctuation-delimited tokens of `text`.
fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'))
        .filter(|t| !t.is_empty())
}

#[derive(Debug, Clone)]
pub struct MockDesktop {
    seed: DesktopSeed,
    initial: DesktopState,
    pub state: DesktopState,
}

impl MockDesktop {
    pub fn new(seed: DesktopSeed) -> Self {
        let initial = DesktopState::from_seed(&seed);
        MockDesktop {
            seed,
            state: initial.clone(),
            initial,
        }
    }

    pub fn seed(&self) -> &DesktopSeed {
        &self.seed
    }

    fn require_app(&self, app: &str, action: &str) -> Result<(), HandlerError> {
        if self.state.current_app.as_deref() == Some(app) {
            Ok(())
        } else {
            Err(err("AppNotOpen", format!("`{action}` needs the {app} application in front")))
        }
    }

    fn predicate(&self, name: &str, params: &Params) -> Option<bool> {
        let s = &self.state;
        let path = |k: &str| normalize(text(params, k)).ok();
        Some(match name {
            "check_file_content" => path("path").is_some_and(|p| s.files.get(&p).map(String::as_str) == Some(text(params, "content"))),
            "check_file_exists" => path("path").is_some_and(|p| s.files.contains_key(&p)),
            "check_dir_exists" => path("path").is_some_and(|p| s.dir_exists(&p)),
            "check_files_copied" => {
                let (Some(src), Some(dst)) = (path("src_dir"), path("dst_dir")) else { return Some(false) };
                let suffix = format!(".{}", text(params, "ext").trim_start_matches('.'));
                let copied = s
                    .files_in(&src)
                    .filter(|(p, _)| basename(p).ends_with(&suffix))
                    .all(|(p, c)| {
                        let target = if dst == "/" { format!("/{}", basename(p)) } else { format!("{dst}/{}", basename(p)) };
                        s.files.get(&target) == Some(c)
                    });
                copied
            }
            "check_setting" => s.settings.get(text(params, "key")).map(String::as_str) == Some(text(params, "value")),
            "check_setting_in_text" => {
                let key = text(params, "key");
                match (s.settings.get(key), self.initial.settings.get(key)) {
                    (Some(v), initial) if Some(v) != initial => tokens(text(params, "text")).any(|t| t == v),
                    _ => false,
                }
            }
            "check_current_app" => s.current_app.as_deref() == Some(text(params, "name")),
            "check_command_logged" => {
                let prefix = text(params, "prefix");
                s.command_log.iter().any(|c| c.starts_with(prefix))
            }
            _ => return None,
        })
    }
}

impl Default for MockDesktop {
    fn default() -> Self {
        MockDesktop::new(crate::fixture::Fixture::shipped().desktop)
    }
}

fn string(name: &str, description: &str) -> ParamSpec {
    ParamSpec::new(name, ParamType::String, description)
}

pub fn desktop_spec() -> EnvironmentSpec {
    use ActionKind::*;
    let a = |name: &str, kind, description: &str| ActionSchema::new(DESKTOP_ENV, name, kind, description);
    EnvironmentSpec {
        name: DESKTOP_ENV.into(),
        description: "A desk-scale Linux desktop with a terminal, a settings panel and a home directory at /home/user.".into(),
        actions: vec![
            a("search_application", Regular, "Search for an application by name and bring it to the front.")
                .param(string("name", "the application name, e.g. terminal or settings.")),
            a(
                "exec_command",
                Regular,
                "Run a command in the open terminal. Supported: mkdir <path>; cp <dir>/*.<ext> <dst-dir> or cp <file> <dst-dir>; rm <path>; write <path> <text>.",
            )
            .param(string("cmd", "the command line.")),
            a("write_file", Regular, "Write text to a file, replacing its content.")
                .param(string("path", "absolute file path."))
                .param(string("content", "the new file content.")),
            a("set_setting", Regular, "Change a system setting in the open settings application.")
                .param(string("key", "the setting name, e.g. color-scheme."))
                .param(string("value", "the new value.")),
            a("observe", Observation, "Describe the current desktop state."),
            a("check_file_content", Evaluator, "Whether a file holds exactly the given content.")
                .param(string("path", "absolute file path."))
                .param(string("content", "expected content.")),
            a("check_file_exists", Evaluator, "Whether a file exists.").param(string("path", "absolute file path.")),
            a("check_dir_exists", Evaluator, "Whether a directory exists.")
                .param(string("path", "absolute directory path.")),
            a(
                "check_files_copied",
                Evaluator,
                "Whether every file with the extension in the source directory exists with equal content in the destination.",
            )
            .param(string("src_dir", "source directory."))
            .param(string("dst_dir", "destination directory."))
            .param(string("ext", "file extension without the dot.")),
            a("check_setting", Evaluator, "Whether a setting has the given value.")
                .param(string("key", "the setting name."))
                .param(string("value", "expected value.")),
            a(
                "check_setting_in_text",
                Evaluator,
                "Whether a setting was changed from its initial value to a value named in the text.",
            )
            .param(string("key", "the setting name."))
            .param(string("text", "text naming the value.")),
            a("check_current_app", Evaluator, "Whether the named application is in front.")
                .param(string("name", "the application name.")),
            a("check_command_logged", Evaluator, "Whether a terminal command with the prefix has succeeded.")
                .param(string("prefix", "command prefix.")),
        ],
    }
}

impl Environment for MockDesktop {
    fn spec(&self) -> EnvironmentSpec {
        desktop_spec()
    }

    fn execute(&mut self, action: &str, params: &Params) -> Result<ActionValue, HandlerError> {
        if let Some(b) = self.predicate(action, params) {
            return Ok(ActionValue::Bool(b));
        }
        match action {
            "search_application" => {
                let name = text(params, "name").trim().to_lowercase();
                if !self.state.installed_apps.contains(&name) {
                    return Err(err("AppNotInstalled", format!("no application named `{name}`")));
                }
                self.state.current_app = Some(name);
                Ok(ActionValue::None)
            }
            "exec_command" => {
                self.require_app(TERMINAL, action)?;
                let cmd = text(params, "cmd");
                let out = self.state.run_command(cmd)?;
                self.state.command_log.push(cmd.trim().to_owned());
                Ok(ActionValue::Text(out))
            }
            "write_file" => {
                self.state.write(text(params, "path"), text(params, "content"))?;
                Ok(ActionValue::None)
            }
            "set_setting" => {
                self.require_app(SETTINGS, action)?;
                self.state
                    .settings
                    .insert(text(params, "key").to_owned(), text(params, "value").to_owned());
                Ok(ActionValue::None)
            }
            "observe" => Ok(ActionValue::Text(self.state.digest())),
            other => Err(err("UnknownAction", other)),
        }
    }

    fn reset(&mut self) {
        self.state = self.initial.clone();
    }
}
