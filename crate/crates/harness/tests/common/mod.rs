#![allow(dead_code)]

use gdt_core::ActionCall;
use gdt_envs::data::{golden_task, mock_router, GOLDEN_FULL_SCRIPTS, GOLDEN_PREFIX_SCRIPTS};
use gdt_envs::{Fixture, SessionRouter};
use gdt_harness::{
    parse_script_book, run_episode, AgentConfig, AgentStructure, EpisodeResult, Script, ScriptedBackend,
};

pub fn full_script(task_id: &str) -> Script {
    parse_script_book(GOLDEN_FULL_SCRIPTS).unwrap()[task_id].clone()
}

pub fn prefix_script(task_id: &str) -> Script {
    parse_script_book(GOLDEN_PREFIX_SCRIPTS).unwrap()[task_id].clone()
}

pub fn router() -> SessionRouter {
    mock_router(&Fixture::shipped())
}

pub fn run_on(router: &SessionRouter, task_id: &str, script: Script, config: &AgentConfig) -> EpisodeResult {
    let task = golden_task(task_id);
    run_episode(&task, router, config, &mut ScriptedBackend::new(script)).unwrap()
}

pub fn run(task_id: &str, script: Script, structure: AgentStructure) -> EpisodeResult {
    run_on(&router(), task_id, script, &AgentConfig::new(structure))
}

pub fn turn(calls: &[ActionCall]) -> Vec<ActionCall> {
    calls.to_vec()
}
