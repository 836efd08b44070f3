//! Shipped data: the template pool, golden tasks and their reference scripts.

use gdt_core::task::{load_task, parse_documents};
use gdt_core::{ComposedTask, TaskDocument, TemplatePool};

use crate::desktop::MockDesktop;
use crate::fixture::Fixture;
use crate::handle::LocalEnv;
use crate::phone::MockPhone;
use crate::router::SessionRouter;

pub const SHIPPED_POOL: &str = include_str!("../data/pool.json");
pub const GOLDEN_TASKS: &str = include_str!("../data/golden_tasks.json");
/// Per-task scripts (task id to turns of calls) that complete each golden task.
pub const GOLDEN_FULL_SCRIPTS: &str = include_str!("../data/scripts/golden_full.json");
/// Per-task scripts that stop part-way through each golden task.
pub const GOLDEN_PREFIX_SCRIPTS: &str = include_str!("../data/scripts/golden_prefix.json");

/// Phone task list to desktop color scheme (three-node path).
pub const G1_ID: &str = "6b1f3c2e-0a4d-4f59-9b0e-0c1d2e3f4a51";
/// Directory creation and file copy (two-node path).
pub const G2_ID: &str = "9d2e4b6a-1c3f-4e8d-a7b5-2f4e6a8c0d92";
/// Contact lookup to email (three nodes across two apps).
pub const G3_ID: &str = "c4a7e1d3-5b2f-4a6c-8e9d-3b5c7d9e1f03";

pub fn shipped_pool() -> TemplatePool {
    TemplatePool::from_json(SHIPPED_POOL).expect("shipped pool loads")
}

pub fn golden_documents() -> Vec<TaskDocument> {
    parse_documents(GOLDEN_TASKS).expect("golden tasks parse")
}

pub fn golden_tasks() -> Vec<ComposedTask> {
    let pool = shipped_pool();
    golden_documents()
        .iter()
        .map(|d| load_task(d, &pool).expect("golden tasks load"))
        .collect()
}

pub fn golden_task(id: &str) -> ComposedTask {
    golden_tasks()
        .into_iter()
        .find(|t| t.id == id)
        .unwrap_or_else(|| panic!("no golden task {id}"))
}

/// A router with in-process mock desktop and phone seeded from `fixture`.
pub fn mock_router(fixture: &Fixture) -> SessionRouter {
    SessionRouter::new()
        .with(LocalEnv::new(MockDesktop::new(fixture.desktop.clone())).expect("desktop spec is valid"))
        .and_then(|r| r.with(LocalEnv::new(MockPhone::new(fixture.phone.clone())).expect("phone spec is valid")))
        .expect("distinct environment names")
}
