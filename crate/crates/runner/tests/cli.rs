mod common;

use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};

use common::{gdt, read, stderr, stdout, Workspace};
use gdt_core::ActionCall;
use gdt_envs::data::{golden_documents, GOLDEN_FULL_SCRIPTS, G1_ID};
use gdt_envs::{EnvHandle, RemoteEnv};
use gdt_harness::parse_script_book;
use gdt_runner::{exit, SuiteReport};
use serde_json::Value;

fn run_args<'a>(ws: &'a Workspace, backend: &'a str, out: &'a str) -> Vec<String> {
    vec![
        "run".into(),
        "--tasks".into(),
        ws.arg("tasks.json"),
        "--agent".into(),
        "single".into(),
        "--agent".into(),
        "by-env".into(),
        "--backend".into(),
        backend.into(),
        "--out".into(),
        ws.arg(out),
        "--deterministic".into(),
    ]
}

fn gdt_owned(args: &[String], stdin: Option<&str>) -> std::process::Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    gdt(&refs, stdin)
}

#[test]
fn run_golden_suite_with_full_and_empty_scripts() {
    let ws = Workspace::new();
    let o = gdt_owned(&run_args(&ws, &format!("scripted:{}", ws.arg("full.json")), "full"), None);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
    let report = SuiteReport::from_json(&read(&ws.path("full/report.json"))).unwrap();
    assert_eq!(report.overall.sr_pct, 100.0);
    assert_eq!(report.overall.cr_pct, 100.0);
    assert_eq!(report.rows.len(), 6);
    assert!(stdout(&o).contains("100.00"));

    let o = gdt_owned(&run_args(&ws, &format!("scripted:{}", ws.arg("empty.json")), "empty"), None);
    assert_eq!(o.status.code(), Some(exit::OK));
    let report = SuiteReport::from_json(&read(&ws.path("empty/report.json"))).unwrap();
    assert_eq!(report.overall.sr_pct, 0.0);
    assert_eq!(report.overall.termination_pct["RSL"], 100.0);
    let table = read(&ws.path("empty/table.csv"));
    assert_eq!(table.lines().next(), Some("structure,SR,CR,EE,CE,FC,RSL,IA"));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let ws = Workspace::new();
    let backend = format!("scripted:{}", ws.arg("prefix.json"));
    for out in ["a", "b"] {
        let o = gdt_owned(&run_args(&ws, &backend, out), None);
        assert_eq!(o.status.code(), Some(exit::OK));
    }
    assert_eq!(read(&ws.path("a/report.json")), read(&ws.path("b/report.json")));
    assert_eq!(read(&ws.path("a/episodes.csv")), read(&ws.path("b/episodes.csv")));

    let mut args = run_args(&ws, &backend, "c");
    args.pop();
    assert_eq!(gdt_owned(&args, None).status.code(), Some(exit::OK));
    assert!(read(&ws.path("c/report.json")).contains("generated_unix"));
}

#[test]
fn run_exit_codes() {
    let ws = Workspace::new();
    let full = format!("scripted:{}", ws.arg("full.json"));

    let o = gdt_owned(&run_args(&ws, "scripted:/nonexistent.json", "x"), None);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    let o = gdt(&["run", "--tasks", "x", "--agent", "solo", "--backend", "b", "--out", "o"], None);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    let mut args = run_args(&ws, &full, "x");
    args.extend(["--max-turns".into(), "0".into()]);
    assert_eq!(gdt_owned(&args, None).status.code(), Some(exit::CONFIG));

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let dead = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let mut args = run_args(&ws, &full, "x");
    args.extend(["--env".into(), format!("phone={dead}")]);
    let o = gdt_owned(&args, None);
    assert_eq!(o.status.code(), Some(exit::UNREACHABLE), "{}", stderr(&o));

    let backend = ws.write(
        "http.json",
        &format!(r#"{{"base_url": "{dead}", "model": "m", "timeout_secs": 2}}"#),
    );
    let o = gdt_owned(&run_args(&ws, &format!("http:{backend}"), "partial"), None);
    assert_eq!(o.status.code(), Some(exit::PARTIAL), "{}", stderr(&o));
    let report = SuiteReport::from_json(&read(&ws.path("partial/report.json"))).unwrap();
    assert_eq!(report.failures, 6);
}

#[test]
fn compose_is_deterministic_and_valid() {
    let ws = Workspace::new();
    for out in ["a.json", "b.json"] {
        let o = gdt(&["compose", "--seed", "42", "--count", "5", "--subtasks", "2", "--out", &ws.arg(out)], None);
        assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
    }
    assert_eq!(read(&ws.path("a.json")), read(&ws.path("b.json")));

    let o = gdt(&["compose", "--seed", "0", "--count", "100", "--subtasks", "3", "--out", &ws.arg("many.json")], None);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stderr(&o));
    let o = gdt(&["validate", &ws.arg("many.json")], None);
    assert_eq!(o.status.code(), Some(exit::OK));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with(": ok")).count(), 100);
}

#[test]
fn compose_reports_unsatisfiable_generations_by_index() {
    let ws = Workspace::new();
    let o = gdt(
        &["compose", "--seed", "1", "--count", "2", "--subtasks", "2", "--platform", "tv", "--out", &ws.arg("x.json")],
        None,
    );
    assert_eq!(o.status.code(), Some(exit::FAILURE));
    let err = stderr(&o);
    assert!(err.contains("generation 0") && err.contains("generation 1"), "{err}");
    assert!(err.contains("unsatisfiable"), "{err}");
    assert!(!ws.path("x.json").exists());
}

#[test]
fn validate_flags_broken_documents() {
    let ws = Workspace::new();
    let o = gdt(&["validate", &ws.arg("tasks.json")], None);
    assert_eq!(o.status.code(), Some(exit::OK), "{}", stdout(&o));

    let mut docs = golden_documents();
    docs[0].adjacency.insert("0".into(), vec![9]);
    let broken = ws.write("adjacency.json", &serde_json::to_string(&docs).unwrap());
    let o = gdt(&["validate", &broken], None);
    assert_eq!(o.status.code(), Some(exit::FAILURE));
    assert!(stdout(&o).contains("SchemaViolation"), "{}", stdout(&o));

    let mut docs = golden_documents();
    docs[1].subtasks[0].template = "no_such_template".into();
    let unknown = ws.write("unknown.json", &serde_json::to_string(&docs).unwrap());
    let o = gdt(&["validate", &unknown], None);
    assert_eq!(o.status.code(), Some(exit::FAILURE));
    assert!(stdout(&o).contains("UnknownTemplate"));
    // The other documents are still checked.
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with(": ok")).count(), 2);

    let garbled = ws.write("garbled.json", "{\"id\": 3");
    let o = gdt(&["validate", &garbled], None);
    assert_eq!(o.status.code(), Some(exit::FAILURE));
    assert!(stdout(&o).contains("SchemaViolation"));
}

fn g1_replay() -> String {
    parse_script_book(GOLDEN_FULL_SCRIPTS).unwrap()[G1_ID]
        .iter()
        .flatten()
        .map(|c| serde_json::to_string(c).unwrap() + "\n")
        .collect()
}

fn human(ws: &Workspace, input: &str) -> std::process::Output {
    gdt(&["human-check", "--tasks", &ws.arg("tasks.json"), "--task-id", G1_ID], Some(input))
}

#[test]
fn human_check_replays_g1() {
    let ws = Workspace::new();
    let o = human(&ws, &g1_replay());
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(exit::OK), "{text}");
    assert_eq!(text.lines().filter(|l| l.contains("completed n")).count(), 3, "{text}");
    assert!(text.contains("final: 3/3 nodes completed"));
}

#[test]
fn human_check_quit_and_typos() {
    let ws = Workspace::new();
    let o = human(&ws, "quit\n");
    assert_eq!(o.status.code(), Some(exit::FAILURE));
    assert!(stdout(&o).contains("final: 0/3 nodes completed"));

    let o = human(&ws, "");
    assert!(stdout(&o).contains("final: 0/3 nodes completed"));

    let o = human(
        &ws,
        "phone.open_ap package=com.google.android.apps.tasks\n\
         phone.open_app package=com.google.android.apps.tasks\nstatus\nhelp\nexit\n",
    );
    let text = stdout(&o);
    assert!(text.contains("error UnknownAction"), "{text}");
    assert!(text.contains("final: 1/3 nodes completed"), "{text}");

    let o = human(&ws, "root.complete\n");
    assert!(stdout(&o).contains("complete() called"));
    assert_eq!(o.status.code(), Some(exit::FAILURE));

    let o = gdt(&["human-check", "--tasks", &ws.arg("tasks.json"), "--task-id", "nope"], None);
    assert_eq!(o.status.code(), Some(exit::CONFIG));
}

#[test]
fn serve_env_answers_the_worker_protocol() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_gdt"))
        .args(["serve-env", "--env", "phone", "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let endpoint = line.trim().strip_prefix("listening on ").unwrap().to_owned();
    let remote = RemoteEnv::connect(&endpoint).unwrap();
    assert_eq!(remote.name(), "phone");
    let result = remote
        .execute(&ActionCall::new("phone", "open_app").with("package", "com.google.android.apps.tasks"))
        .unwrap();
    assert!(result.ok);
    let spec: Value = serde_json::to_value(remote.spec()).unwrap();
    assert_eq!(spec["name"], "phone");
    child.kill().unwrap();
    child.wait().unwrap();
}
