//! Deterministic desk-scale phone: contacts, a task list, mail and notes
//! behind package-named apps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use gdt_core::{ActionKind, ActionSchema, ActionValue, ParamSpec, ParamType, ParamValue};

use crate::fixture::{PhoneSeed, TaskItem};
use crate::host::{text, Environment, HandlerError, Params};
use crate::protocol::EnvironmentSpec;

pub const PHONE_ENV: &str = "phone";
pub const LAUNCHER: &str = "com.google.android.apps.nexuslauncher";
pub const TASKS_APP: &str = "com.google.android.apps.tasks";
pub const CONTACTS_APP: &str = "com.google.android.contacts";
pub const GMAIL_APP: &str = "com.google.android.gm";
pub const KEEP_APP: &str = "com.google.android.keep";
pub const SETTINGS_APP: &str = "com.android.settings";

pub const DEFAULT_APPS: [&str; 5] = [TASKS_APP, CONTACTS_APP, GMAIL_APP, KEEP_APP, SETTINGS_APP];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Email {
    pub to: String,
    pub subject: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneState {
    pub contacts: BTreeMap<String, String>,
    pub sent_emails: Vec<Email>,
    pub notes: BTreeMap<String, String>,
    pub task_list: Vec<TaskItem>,
    pub current_package: String,
    pub installed: BTreeSet<String>,
}

impl PhoneState {
    pub fn from_seed(seed: &PhoneSeed) -> Self {
        let mut installed: BTreeSet<String> = if seed.apps.is_empty() {
            DEFAULT_APPS.iter().map(|s| s.to_string()).collect()
        } else {
            seed.apps.iter().cloned().collect()
        };
        installed.insert(LAUNCHER.into());
        PhoneState {
            contacts: seed.contacts.clone(),
            sent_emails: Vec::new(),
            notes: BTreeMap::new(),
            task_list: seed.tasks.clone(),
            current_package: LAUNCHER.into(),
            installed,
        }
    }

    pub fn digest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "current_package: {}", self.current_package);
        let _ = writeln!(out, "contacts: {}", self.contacts.len());
        let _ = writeln!(out, "tasks:");
        for t in &self.task_list {
            let _ = writeln!(out, "  [{}] {}", if t.done { 'x' } else { ' ' }, t.text);
        }
        let _ = writeln!(out, "sent_emails:");
        for e in &self.sent_emails {
            let _ = writeln!(
                out,
                "  to={} subject={} body={}",
                e.to,
                serde_json::to_string(&e.subject).expect("strings serialize"),
                serde_json::to_string(&e.body).expect("strings serialize")
            );
        }
        let _ = writeln!(out, "notes:");
        for (title, body) in &self.notes {
            let _ = writeln!(out, "  {title}: {}", serde_json::to_string(body).expect("strings serialize"));
        }
        out
    }
}

fn err(kind: &str, message: impl Into<String>) -> HandlerError {
    HandlerError::new(kind, message)
}

#[derive(Debug, Clone)]
pub struct MockPhone {
    seed: PhoneSeed,
    pub state: PhoneState,
}

impl MockPhone {
    pub fn new(seed: PhoneSeed) -> Self {
        MockPhone {
            state: PhoneState::from_seed(&seed),
            seed,
        }
    }

    fn require_app(&self, package: &str, action: &str) -> Result<(), HandlerError> {
        if self.state.current_package == package {
            Ok(())
        } else {
            Err(err("AppNotOpen", format!("`{action}` needs {package} in front")))
        }
    }

    fn predicate(&self, name: &str, params: &Params) -> Option<bool> {
        let s = &self.state;
        Some(match name {
            "check_current_package" => s.current_package == text(params, "name"),
            "check_email_sent" => s.sent_emails.iter().any(|e| {
                e.to.eq_ignore_ascii_case(text(params, "to")) && e.subject == text(params, "subject")
            }),
            "check_task_done" => s.task_list.iter().any(|t| t.done && t.text == text(params, "text")),
            "check_note_content" => s.notes.get(text(params, "title")).map(String::as_str) == Some(text(params, "text")),
            _ => return None,
        })
    }
}

impl Default for MockPhone {
    fn default() -> Self {
        MockPhone::new(crate::fixture::Fixture::shipped().phone)
    }
}

fn string(name: &str, description: &str) -> ParamSpec {
    ParamSpec::new(name, ParamType::String, description)
}

pub fn phone_spec() -> EnvironmentSpec {
    use ActionKind::*;
    let a = |name: &str, kind, description: &str| ActionSchema::new(PHONE_ENV, name, kind, description);
    EnvironmentSpec {
        name: PHONE_ENV.into(),
        description: "A desk-scale Android phone with Tasks, Contacts, Gmail and Keep Notes apps.".into(),
        actions: vec![
            a("open_app", Regular, "Open an app by package name.").param(string(
                "package",
                "the package, e.g. com.google.android.apps.tasks, com.google.android.contacts, com.google.android.gm or com.google.android.keep.",
            )),
            a("go_home", Regular, "Return to the home screen."),
            a("read_tasks", Regular, "List the task-list entries with their done flags."),
            a("first_incomplete_task", Regular, "Read the text of the first task that is not done."),
            a("read_contact", Regular, "Read the email address of a contact.")
                .param(string("name", "the contact's full name.")),
            a("send_email", Regular, "Send an email from the open Gmail app.")
                .param(string("to", "recipient address."))
                .param(string("subject", "subject line."))
                .param(string("body", "message body.").optional(Some(ParamValue::from("")))),
            a("create_note", Regular, "Create a note in the open Keep Notes app.")
                .param(string("title", "note title."))
                .param(string("text", "note text.")),
            a("mark_task_done", Regular, "Mark a task done in the open Tasks app.")
                .param(string("text", "the task text.")),
            a("observe", Observation, "Describe the current phone state."),
            a("check_current_package", Evaluator, "Whether the app with the package is in front.")
                .param(string("name", "the package name.")),
            a("check_email_sent", Evaluator, "Whether an email with the recipient and subject was sent.")
                .param(string("to", "recipient address."))
                .param(string("subject", "subject line.")),
            a("check_task_done", Evaluator, "Whether the task is marked done.").param(string("text", "the task text.")),
            a("check_note_content", Evaluator, "Whether a note with the title holds exactly the text.")
                .param(string("title", "note title."))
                .param(string("text", "expected text.")),
        ],
    }
}

impl Environment for MockPhone {
    fn spec(&self) -> EnvironmentSpec {
        phone_spec()
    }

    fn execute(&mut self, action: &str, params: &Params) -> Result<ActionValue, HandlerError> {
        if let Some(b) = self.predicate(action, params) {
            return Ok(ActionValue::Bool(b));
        }
        let s = &mut self.state;
        match action {
            "open_app" => {
                let package = text(params, "package").trim();
                if !s.installed.contains(package) {
                    return Err(err("AppNotInstalled", format!("no package `{package}`")));
                }
                s.current_package = package.to_owned();
                Ok(ActionValue::None)
            }
            "go_home" => {
                s.current_package = LAUNCHER.into();
                Ok(ActionValue::None)
            }
            "read_tasks" => {
                let mut out = String::new();
                for t in &s.task_list {
                    let _ = writeln!(out, "[{}] {}", if t.done { 'x' } else { ' ' }, t.text);
                }
                Ok(ActionValue::Text(out))
            }
            "first_incomplete_task" => s
                .task_list
                .iter()
                .find(|t| !t.done)
                .map(|t| ActionValue::Text(t.text.clone()))
                .ok_or_else(|| err("NoIncompleteTask", "every task is done")),
            "read_contact" => {
                let name = text(params, "name");
                s.contacts
                    .get(name)
                    .map(|e| ActionValue::Text(e.clone()))
                    .ok_or_else(|| err("NoSuchContact", format!("no contact named `{name}`")))
            }
            "send_email" => {
                self.require_app(GMAIL_APP, action)?;
                self.state.sent_emails.push(Email {
                    to: text(params, "to").to_owned(),
                    subject: text(params, "subject").to_owned(),
                    body: text(params, "body").to_owned(),
                });
                Ok(ActionValue::None)
            }
            "create_note" => {
                self.require_app(KEEP_APP, action)?;
                self.state
                    .notes
                    .insert(text(params, "title").to_owned(), text(params, "text").to_owned());
                Ok(ActionValue::None)
            }
            "mark_task_done" => {
                self.require_app(TASKS_APP, action)?;
                let wanted = text(params, "text");
                let task = self
                    .state
                    .task_list
                    .iter_mut()
                    .find(|t| t.text == wanted)
                    .ok_or_else(|| err("NoSuchTask", format!("no task `{wanted}`")))?;
                task.done = true;
                Ok(ActionValue::None)
            }
            "observe" => Ok(ActionValue::Text(s.digest())),
            other => Err(err("UnknownAction", other)),
        }
    }

    fn reset(&mut self) {
        self.state = PhoneState::from_seed(&self.seed);
    }
}
