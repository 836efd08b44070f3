//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and fails if any criterion fails.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::time::{Duration, Instant};

use gdt_core::task::{documents_to_json, parse_documents};
use gdt_core::{
    generate, load_task, save_task, validate, ActionCall, ActionValue, EvalGraph, EvalNode, NodeId, NodeStatus,
    PredicateRef, Ratio, Shape,
};
use gdt_envs::conformance::random_calls;
use gdt_envs::data::{
    golden_documents, golden_tasks, mock_router, shipped_pool, GOLDEN_FULL_SCRIPTS, GOLDEN_PREFIX_SCRIPTS, G1_ID,
    G2_ID, G3_ID,
};
use gdt_envs::desktop::desktop_spec;
use gdt_envs::phone::phone_spec;
use gdt_envs::{serve, EnvHandle, Fixture, LocalEnv, MockDesktop, MockPhone, RemoteEnv};
use gdt_harness::{
    parse_script_book, run_episode, AgentConfig, AgentStructure, EpisodeResult, EventKind, Script, ScriptBook,
    ScriptedBackend, Termination,
};
use gdt_runner::{run_suite, BackendSpec, Suite, SuiteReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn book(text: &str) -> ScriptBook {
    parse_script_book(text).unwrap()
}

fn episode(task_id: &str, script: Script, config: &AgentConfig) -> (EpisodeResult, gdt_envs::SessionRouter) {
    let task = golden_tasks().into_iter().find(|t| t.id == task_id).unwrap();
    let router = mock_router(&Fixture::shipped());
    let e = run_episode(&task, &router, config, &mut ScriptedBackend::new(script)).unwrap();
    (e, router)
}

// --- evaluator oracle ----------------------------------------------------

struct Dag {
    n: usize,
    edges: Vec<(usize, usize)>,
    /// Step (1-based) at which each predicate turns true; past the horizon
    /// means never.
    onset: Vec<usize>,
    steps: usize,
}

fn random_dag(seed: u64) -> Dag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=10);
    let steps = rng.gen_range(1..=20);
    let edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|_| rng.gen_bool(0.3))
        .collect();
    let onset = (0..n).map(|_| rng.gen_range(1..=steps + 1)).collect();
    Dag { n, edges, onset, steps }
}

/// From-scratch closure: a node is completed after step `t` iff it was
/// before, or its predicate holds at `t` and all predecessors are completed.
fn closure(d: &Dag, t: usize, previous: &[bool]) -> Vec<bool> {
    let mut done = previous.to_vec();
    for i in 0..d.n {
        let preds = d.edges.iter().filter(|e| e.1 == i).all(|e| done[e.0]);
        done[i] = done[i] || (t >= d.onset[i] && preds);
    }
    done
}

fn evaluator_oracle() -> Outcome {
    let start = Instant::now();
    let mut checks = 0usize;
    for seed in 0..1000u64 {
        let d = random_dag(seed);
        let nodes = (0..d.n)
            .map(|i| EvalNode::new(i, PredicateRef::new("desktop", format!("p{i}"))))
            .collect();
        let edges = d.edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect();
        let mut g = EvalGraph::build(nodes, edges).map_err(|e| e.to_string())?;
        g.activate_initial().map_err(|e| e.to_string())?;
        let mut expected = vec![false; d.n];
        for t in 1..=d.steps {
            g.check_step(|node| Ok::<_, Infallible>(t >= d.onset[node.id.0]))
                .map_err(|e| e.to_string())?;
            expected = closure(&d, t, &expected);
            for (i, &done) in expected.iter().enumerate() {
                checks += 1;
                let status = g.status(NodeId(i)).unwrap();
                ensure(done == (status == NodeStatus::Completed), || {
                    format!("seed {seed} step {t} node {i}: {status:?}")
                })?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 DAGs, {checks} status checks agree, {elapsed:.2?}"))
}

// --- metric identities ---------------------------------------------------

fn random_book(seed: u64) -> ScriptBook {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    golden_tasks()
        .iter()
        .map(|t| {
            let desktop = random_calls(&desktop_spec(), rng.gen(), 12);
            let phone = random_calls(&phone_spec(), rng.gen(), 12);
            let script = (0..12)
                .map(|i| match rng.gen_range(0..5) {
                    0 => vec![],
                    1 => vec![phone[i].clone(), desktop[i].clone()],
                    2 => vec![phone[i].clone()],
                    _ => vec![desktop[i].clone()],
                })
                .collect();
            (t.id.clone(), script)
        })
        .collect()
}

fn corpus() -> Vec<EpisodeResult> {
    let mut books = vec![book(GOLDEN_FULL_SCRIPTS), book(GOLDEN_PREFIX_SCRIPTS), ScriptBook::new()];
    books.extend((0..6).map(random_book));
    books.extend(taxonomy_books().into_iter().map(|(_, b)| b));
    let mut out = Vec::new();
    for (i, b) in books.into_iter().enumerate() {
        let mut suite = Suite::new(
            golden_tasks(),
            AgentStructure::ALL.to_vec(),
            BackendSpec::Scripted {
                label: format!("book-{i}"),
                book: b,
            },
        );
        suite.invalid_retries = i % 3;
        suite.jobs = 4;
        let run = run_suite(&suite, None).unwrap();
        out.extend(run.outcomes.into_iter().map(|o| o.result.unwrap()));
    }
    out
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn metric_identities() -> Outcome {
    let episodes = corpus();
    for e in &episodes {
        let m = e.metrics();
        let x = e.exact_metrics();
        let id = || format!("{} {}", e.task_id, e.structure);
        ensure(x.completion_ratio == Ratio::new(e.completed as u64, e.total as u64), id)?;
        ensure(rel_close(m.completion_ratio, e.completed as f64 / e.total as f64), id)?;
        if let Some(ee) = m.execution_efficiency {
            ensure(rel_close(ee * e.actions_executed as f64, m.completion_ratio), id)?;
            ensure(x.execution_efficiency.unwrap() * Ratio::from_integer(e.actions_executed) == x.completion_ratio, id)?;
        } else {
            ensure(e.actions_executed == 0, id)?;
        }
        if let Some(ce) = m.cost_efficiency {
            ensure(rel_close(ce * e.tokens_total as f64, m.completion_ratio), id)?;
            ensure(x.cost_efficiency.unwrap() * Ratio::from_integer(e.tokens_total) == x.completion_ratio, id)?;
        } else {
            ensure(e.tokens_total == 0, id)?;
        }
        ensure(m.success == (m.completion_ratio == 1.0), id)?;
        ensure((e.termination == Termination::Success) == m.success, id)?;
    }
    let labels: std::collections::BTreeSet<_> = episodes.iter().map(|e| e.termination).collect();
    Ok(format!("{} episodes, terminations seen {:?}", episodes.len(), labels))
}

// --- golden scenarios ----------------------------------------------------

fn golden_g1() -> Outcome {
    let config = AgentConfig::default();
    let (full, _) = episode(G1_ID, book(GOLDEN_FULL_SCRIPTS)[G1_ID].clone(), &config);
    ensure(full.termination == Termination::Success, || format!("full: {}", full.termination))?;
    ensure(full.metrics().completion_ratio == 1.0, || "full CR".into())?;
    let (prefix, _) = episode(G1_ID, book(GOLDEN_PREFIX_SCRIPTS)[G1_ID].clone(), &config);
    let cr = prefix.metrics().completion_ratio;
    ensure(prefix.termination == Termination::StepLimit, || format!("prefix: {}", prefix.termination))?;
    ensure((cr - 0.666667).abs() <= 1e-6 && (cr - 2.0 / 3.0).abs() <= 1e-9, || format!("prefix CR {cr}"))?;
    Ok(format!("full Success CR=1.0; prefix RSL CR={cr:.6}"))
}

fn golden_g2() -> Outcome {
    let config = AgentConfig::default();
    let (full, router) = episode(G2_ID, book(GOLDEN_FULL_SCRIPTS)[G2_ID].clone(), &config);
    ensure(full.metrics().completion_ratio == 1.0, || "full CR".into())?;
    let check = ActionCall::new("desktop", "check_files_copied")
        .with("src_dir", "/home/user/assets")
        .with("dst_dir", "/home/user/assets_copy")
        .with("ext", "txt");
    let copied = router.route(&check).map_err(|e| e.to_string())?;
    ensure(copied.value == ActionValue::Bool(true), || "check_files_copied false".into())?;
    let (empty, _) = episode(G2_ID, Vec::new(), &config);
    ensure(empty.metrics().completion_ratio == 0.0, || "empty CR".into())?;
    Ok("full CR=1.0 and check_files_copied holds; empty CR=0.0".into())
}

fn golden_g3() -> Outcome {
    let config = AgentConfig::default();
    let (full, _) = episode(G3_ID, book(GOLDEN_FULL_SCRIPTS)[G3_ID].clone(), &config);
    ensure(full.termination == Termination::Success, || format!("full: {}", full.termination))?;
    let (partial, _) = episode(G3_ID, book(GOLDEN_PREFIX_SCRIPTS)[G3_ID].clone(), &config);
    let cr = partial.metrics().completion_ratio;
    ensure(cr > 0.0 && cr < 1.0, || format!("partial CR {cr}"))?;
    ensure(cr == partial.completed as f64 / partial.total as f64, || "CR != C/N".into())?;
    Ok(format!("full Success; partial CR={cr:.6} ({}/{})", partial.completed, partial.total))
}

// --- termination taxonomy -----------------------------------------------

fn taxonomy_books() -> Vec<(Termination, ScriptBook)> {
    let full = book(GOLDEN_FULL_SCRIPTS)[G1_ID].clone();
    let premature = vec![vec![ActionCall::new("root", "complete")]];
    let malformed = vec![vec![ActionCall::new("phone", "open_app").with("pkg", "x")]];
    [
        (Termination::Success, full),
        (Termination::FalseCompletion, premature),
        (Termination::StepLimit, vec![]),
        (Termination::InvalidAction, malformed),
    ]
    .into_iter()
    .map(|(t, s)| (t, BTreeMap::from([(G1_ID.to_owned(), s)])))
    .collect()
}

fn termination_taxonomy() -> Outcome {
    let g1: Vec<_> = golden_tasks().into_iter().filter(|t| t.id == G1_ID).collect();
    let mut rows = Vec::new();
    let mut settings = None;
    for (expected, b) in taxonomy_books() {
        let backend = BackendSpec::Scripted {
            label: expected.label().into(),
            book: b,
        };
        let run = run_suite(&Suite::new(g1.clone(), vec![AgentStructure::Single], backend), None).unwrap();
        let got = run.report.rows[0].termination;
        ensure(got == Some(expected), || format!("expected {expected}, got {got:?}"))?;
        settings.get_or_insert(run.report.settings.clone());
        rows.extend(run.report.rows);
    }
    let report = SuiteReport::from_rows(settings.unwrap(), rows, None);
    let sum: f64 = report.overall.termination_pct.values().sum();
    ensure((sum - 100.0).abs() <= 0.01, || format!("distribution sums to {sum}"))?;
    let labels: Vec<_> = report.rows.iter().filter_map(|r| r.termination).map(|t| t.label()).collect();
    Ok(format!("{labels:?}, distribution sums to {sum:.2}%"))
}

// --- composition ---------------------------------------------------------

fn composition() -> Outcome {
    let pool = shipped_pool();
    let mut generated = Vec::new();
    for i in 0..100u64 {
        let shape = Shape {
            subtask_count: 1 + (i as usize % 5),
            platforms: vec![],
        };
        let task = generate(&pool, i, &shape).map_err(|e| format!("generation {i}: {e}"))?;
        let diagnostics = validate(&task);
        ensure(diagnostics.is_empty(), || format!("generation {i}: {diagnostics:?}"))?;
        let node_sum: usize = task.subtasks.iter().map(|s| s.fragment.len()).sum();
        ensure(task.evaluator.len() == node_sum, || format!("generation {i}: node additivity"))?;
        let offs = task.fragment_offsets();
        let mut expected_edges = 0;
        for (k, s) in task.subtasks.iter().enumerate() {
            expected_edges += s.fragment.edges().len();
            for &(a, b) in s.fragment.edges() {
                let e = (NodeId(a.0 + offs[k]), NodeId(b.0 + offs[k]));
                ensure(task.evaluator.edges().contains(&e), || format!("generation {i}: internal edge"))?;
            }
        }
        for &(a, b) in &task.subtask_edges {
            for sink in task.subtasks[a].fragment.sinks() {
                for source in task.subtasks[b].fragment.sources() {
                    expected_edges += 1;
                    let e = (NodeId(sink.0 + offs[a]), NodeId(source.0 + offs[b]));
                    ensure(task.evaluator.edges().contains(&e), || format!("generation {i}: sink→source"))?;
                }
            }
        }
        ensure(task.evaluator.edges().len() == expected_edges, || format!("generation {i}: edge count"))?;
        generated.push(task);
    }

    let render = |seed: u64| {
        let docs: Vec<_> = (0..5)
            .map(|k| save_task(&generate(&pool, seed + k, &Shape { subtask_count: 3, platforms: vec![] }).unwrap()))
            .collect();
        documents_to_json(&docs)
    };
    ensure(render(42) == render(42), || "seed 42 runs differ".into())?;

    let golden = golden_documents();
    for task in golden.iter().map(|d| load_task(d, &pool).unwrap()).chain(generated.iter().cloned()) {
        let text = documents_to_json(&[save_task(&task)]);
        let back = load_task(&parse_documents(&text).map_err(|e| e.to_string())?[0], &pool)
            .map_err(|e| e.to_string())?;
        ensure(back == task, || format!("round trip changed {}", task.id))?;
    }
    Ok(format!(
        "100 generations valid; additivity and sink→source hold; seed 42 byte-identical; {} round trips",
        golden.len() + generated.len()
    ))
}

// --- history and turn budget ---------------------------------------------

fn history_truncation() -> Outcome {
    let config = AgentConfig::default();
    let mut prompts = 0;
    let mut deepest = 0;
    for structure in AgentStructure::ALL {
        let config = AgentConfig::new(structure);
        for id in [G1_ID, G2_ID, G3_ID] {
            for script in [book(GOLDEN_FULL_SCRIPTS)[id].clone(), Vec::new()] {
                let (e, _) = episode(id, script, &config);
                for ev in e.transcript.iter().filter(|ev| ev.kind == EventKind::Prompt) {
                    prompts += 1;
                    let prior = ev.payload["prior_turns"].as_u64().unwrap();
                    deepest = deepest.max(prior);
                    ensure(prior <= 2, || format!("{id} {structure}: {prior} prior turns"))?;
                    ensure(ev.turn < 15, || format!("{id} {structure}: prompt at turn {}", ev.turn))?;
                }
            }
        }
    }
    ensure(deepest == 2, || format!("history never reached its window ({deepest})"))?;
    let (e, _) = episode(G1_ID, Vec::new(), &config);
    ensure(e.turns == 15 && e.termination == Termination::StepLimit, || format!("{} turns", e.turns))?;
    let last = e.transcript.iter().filter(|ev| ev.kind == EventKind::Prompt).map(|ev| ev.turn).max();
    ensure(last == Some(14), || format!("last prompt turn {last:?}"))?;
    Ok(format!("{prompts} prompts, ≤2 prior turns each; empty script stops after exactly 15 turns"))
}

// --- protocol transparency -----------------------------------------------

fn protocol_transparency() -> Outcome {
    let mut total = 0;
    for (spec, seed) in [(desktop_spec(), 7u64), (phone_spec(), 11)] {
        let calls = random_calls(&spec, seed, 50);
        let (local, worker): (Box<dyn EnvHandle>, _) = if spec.name == "desktop" {
            (
                Box::new(LocalEnv::new(MockDesktop::default()).unwrap()),
                serve(MockDesktop::default(), "127.0.0.1:0").map_err(|e| e.to_string())?,
            )
        } else {
            (
                Box::new(LocalEnv::new(MockPhone::default()).unwrap()),
                serve(MockPhone::default(), "127.0.0.1:0").map_err(|e| e.to_string())?,
            )
        };
        let remote = RemoteEnv::connect(&worker.endpoint()).map_err(|e| e.to_string())?;
        let a: Vec<_> = calls.iter().map(|c| local.execute(c).unwrap()).collect();
        let b: Vec<_> = calls.iter().map(|c| remote.execute(c).unwrap()).collect();
        ensure(a == b, || format!("{}: sequences differ", spec.name))?;
        total += a.len();
        worker.stop();
    }
    Ok(format!("{total} results identical in-process vs served (desktop, phone)"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("evaluator-oracle equivalence", evaluator_oracle),
        ("metric identities", metric_identities),
        ("golden scenario G1", golden_g1),
        ("golden scenario G2", golden_g2),
        ("golden scenario G3", golden_g3),
        ("termination taxonomy", termination_taxonomy),
        ("composition", composition),
        ("history truncation", history_truncation),
        ("protocol transparency", protocol_transparency),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
