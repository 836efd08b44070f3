mod common;

use std::collections::BTreeMap;
use std::fs;

use common::{aggregates_match, termination_sum};
use gdt_core::ActionCall;
use gdt_envs::data::{golden_tasks, GOLDEN_FULL_SCRIPTS, GOLDEN_PREFIX_SCRIPTS, G1_ID};
use gdt_envs::{serve, Fixture, MockPhone};
use gdt_harness::{parse_script_book, AgentStructure, HttpBackendConfig, ScriptBook, Termination};
use gdt_runner::{exit, run_suite, BackendSpec, EnvSetup, Suite, SuiteError, SuiteReport, TableRow};
use serde_json::{json, Value};

fn scripted(book: ScriptBook) -> BackendSpec {
    BackendSpec::Scripted {
        label: "scripted".into(),
        book,
    }
}

fn golden_suite(book: &str) -> Suite {
    Suite::new(
        golden_tasks(),
        AgentStructure::ALL.to_vec(),
        scripted(parse_script_book(book).unwrap()),
    )
}

#[test]
fn golden_scripts_succeed_everywhere() {
    let run = run_suite(&golden_suite(GOLDEN_FULL_SCRIPTS), None).unwrap();
    let r = &run.report;
    assert_eq!(r.rows.len(), 9);
    assert_eq!(r.failures, 0);
    assert_eq!(r.overall.sr_pct, 100.0);
    assert_eq!(r.overall.cr_pct, 100.0);
    assert_eq!(r.overall.pooled_cr_pct, Some(100.0));
    assert_eq!(r.overall.termination_pct["Success"], 100.0);
    for s in AgentStructure::ALL {
        assert_eq!(r.by_structure[s.as_str()].sr_pct, 100.0);
    }
    assert_eq!(run.exit_code(), exit::OK);
}

#[test]
fn empty_scripts_hit_the_step_limit() {
    let run = run_suite(&golden_suite("{}"), None).unwrap();
    let o = &run.report.overall;
    assert_eq!(o.sr_pct, 0.0);
    assert_eq!(o.cr_pct, 0.0);
    assert_eq!(o.termination_pct["RSL"], 100.0);
    assert_eq!(o.ee_pct, None);
    assert_eq!(o.ee_undefined, 9);
    assert!(run.report.rows.iter().all(|r| r.turns == 15));
}

#[test]
fn prefix_scripts_give_partial_ratios() {
    let mut suite = golden_suite(GOLDEN_PREFIX_SCRIPTS);
    suite.structures = vec![AgentStructure::Single];
    let run = run_suite(&suite, None).unwrap();
    let crs: BTreeMap<&str, f64> = run.report.rows.iter().map(|r| (r.task_id.as_str(), r.cr)).collect();
    assert!((crs[G1_ID] - 2.0 / 3.0).abs() < 1e-9);
    assert!(run.report.rows.iter().all(|r| r.termination == Some(Termination::StepLimit)));
    assert!(run.report.rows.iter().all(|r| r.cr > 0.0 && r.cr < 1.0));
}

/// Four scripted agents on G1: full, premature complete(), empty and a
/// malformed call.
fn taxonomy_books() -> Vec<(Termination, ScriptBook)> {
    let full = parse_script_book(GOLDEN_FULL_SCRIPTS).unwrap()[G1_ID].clone();
    let premature = vec![vec![ActionCall::new("root", "complete")]];
    let malformed = vec![vec![ActionCall::new("phone", "open_app").with("pkg", "x")]];
    [
        (Termination::Success, full),
        (Termination::FalseCompletion, premature),
        (Termination::StepLimit, vec![]),
        (Termination::InvalidAction, malformed),
    ]
    .into_iter()
    .map(|(t, script)| (t, BTreeMap::from([(G1_ID.to_owned(), script)])))
    .collect()
}

#[test]
fn termination_taxonomy_is_covered_and_sums_to_one_hundred() {
    let g1: Vec<_> = golden_tasks().into_iter().filter(|t| t.id == G1_ID).collect();
    let mut rows = Vec::new();
    let mut settings = None;
    for (expected, book) in taxonomy_books() {
        let run = run_suite(&Suite::new(g1.clone(), vec![AgentStructure::Single], scripted(book)), None).unwrap();
        assert_eq!(run.report.rows[0].termination, Some(expected));
        settings.get_or_insert(run.report.settings.clone());
        rows.extend(run.report.rows);
    }
    let report = SuiteReport::from_rows(settings.unwrap(), rows, None);
    for t in Termination::ALL {
        assert_eq!(report.overall.termination_pct[t.label()], 25.0);
    }
    assert!((termination_sum(&report.overall) - 100.0).abs() < 0.01);
}

#[test]
fn written_report_recomputes_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut suite = golden_suite(GOLDEN_PREFIX_SCRIPTS);
    suite.jobs = 1;
    run_suite(&suite, None).unwrap().write(&dir.path().join("a")).unwrap();
    suite.jobs = 4;
    run_suite(&suite, None).unwrap().write(&dir.path().join("b")).unwrap();
    for file in ["report.json", "episodes.csv", "table.csv"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }

    let text = fs::read_to_string(dir.path().join("a/report.json")).unwrap();
    assert!(!text.contains("generated_unix"));
    let reread = SuiteReport::from_json(&text).unwrap();
    let recomputed = reread.recomputed();
    assert!(aggregates_match(&reread.overall, &recomputed.overall));
    for (k, a) in &reread.by_structure {
        assert!(aggregates_match(a, &recomputed.by_structure[k]));
    }
    for (k, a) in &reread.by_tag {
        assert!(aggregates_match(a, &recomputed.by_tag[k]));
    }
    assert!((termination_sum(&reread.overall) - 100.0).abs() < 0.01);

    // Keys are sorted at every level.
    let value: Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let first_key = text.lines().nth(1).unwrap().trim();
    assert!(first_key.starts_with("\"by_structure\""), "{first_key}");

    let csv = fs::read_to_string(dir.path().join("a/episodes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9);
    assert!(csv.starts_with("task_id,structure,platform_tags,termination,C,N,A,T,turns,SR,CR,EE,CE,error"));
}

#[test]
fn timestamps_are_recorded_unless_deterministic() {
    let run = run_suite(&golden_suite("{}"), Some(1_700_000_000)).unwrap();
    assert!(run.report.to_canonical_json().contains("\"generated_unix\": 1700000000"));
}

#[test]
fn transcripts_are_written_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_suite(&golden_suite(GOLDEN_FULL_SCRIPTS), None).unwrap();
    run.write(dir.path()).unwrap();
    for s in AgentStructure::ALL {
        for task in golden_tasks() {
            let path = dir.path().join("transcripts").join(s.as_str()).join(format!("{}.jsonl", task.id));
            let text = fs::read_to_string(&path).unwrap();
            for line in text.lines() {
                let v: Value = serde_json::from_str(line).unwrap();
                assert!(v.get("turn").is_some() && v.get("agent").is_some());
            }
            assert!(text.lines().last().unwrap().contains("\"termination\""));
        }
    }
}

#[test]
fn platform_tags_slice_the_report() {
    let run = run_suite(&golden_suite(GOLDEN_FULL_SCRIPTS), None).unwrap();
    let tags: Vec<&String> = run.report.by_tag.keys().collect();
    assert_eq!(tags, ["desktop", "phone"]);
    // G1 spans both platforms, G2 is desktop-only and G3 phone-only.
    assert_eq!(run.report.by_tag["desktop"].episodes, 6);
    assert_eq!(run.report.by_tag["phone"].episodes, 6);
}

#[test]
fn table_row_format_fixture_round_trips() {
    let fixture = json!({"SR": 14.00, "CR": 35.26, "FC": 7.00, "RSL": 59.00, "IA": 20.00});
    let row: TableRow = serde_json::from_value(fixture.clone()).unwrap();
    assert_eq!(serde_json::to_value(row).unwrap(), fixture);
    let cells = row.to_cells();
    assert_eq!(cells, ["14.00", "35.26", "", "", "7.00", "59.00", "20.00"]);
    let refs: Vec<&str> = cells.iter().map(String::as_str).collect();
    assert_eq!(TableRow::from_cells(&refs).unwrap(), row);
    assert!(serde_json::from_value::<TableRow>(json!({"SR": 1.0})).is_err());
}

#[test]
fn remote_workers_give_the_same_rows_as_mocks() {
    let worker = serve(MockPhone::new(Fixture::shipped().phone), "127.0.0.1:0").unwrap();
    let mut suite = golden_suite(GOLDEN_FULL_SCRIPTS);
    suite.jobs = 4;
    suite.envs.remotes = vec![("phone".into(), worker.endpoint())];
    assert_eq!(suite.effective_jobs(), 1);
    let remote = run_suite(&suite, None).unwrap();
    let local = run_suite(&golden_suite(GOLDEN_FULL_SCRIPTS), None).unwrap();
    assert_eq!(remote.report.rows, local.report.rows);
    for (r, l) in remote.outcomes.iter().zip(&local.outcomes) {
        assert_eq!(r.result.as_ref().unwrap().transcript, l.result.as_ref().unwrap().transcript);
    }

    suite.envs.remotes = vec![("desktop".into(), worker.endpoint())];
    assert!(matches!(run_suite(&suite, None), Err(SuiteError::Config(_))));
    let endpoint = worker.endpoint();
    worker.stop();
    suite.envs.remotes = vec![("phone".into(), endpoint)];
    let err = run_suite(&suite, None).unwrap_err();
    assert_eq!(err.exit_code(), exit::UNREACHABLE);
}

#[test]
fn failing_episodes_become_error_rows() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let backend = BackendSpec::Http {
        label: "http".into(),
        config: HttpBackendConfig {
            base_url,
            model: "m".into(),
            headers: BTreeMap::new(),
            timeout_secs: 2,
        },
    };
    let run = run_suite(&Suite::new(golden_tasks(), vec![AgentStructure::Single], backend), None).unwrap();
    assert_eq!(run.report.failures, 3);
    assert_eq!(run.report.overall.episodes, 0);
    assert!(run.report.rows.iter().all(|r| r.error.is_some() && r.termination.is_none()));
    assert_eq!(run.exit_code(), exit::PARTIAL);
}

#[test]
fn configuration_errors_are_reported_up_front() {
    let mut suite = golden_suite("{}");
    suite.max_turns = 0;
    assert_eq!(run_suite(&suite, None).unwrap_err().exit_code(), exit::CONFIG);
    let mut suite = golden_suite("{}");
    suite.structures.clear();
    assert_eq!(run_suite(&suite, None).unwrap_err().exit_code(), exit::CONFIG);
    assert!(EnvSetup::parse_remote("phone").is_err());
    assert!(BackendSpec::parse("carrier-pigeon:x").is_err());
}
