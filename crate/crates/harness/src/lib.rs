//! Agent harness: builds prompts for single- and multi-agent structures,
//! drives a model backend through episodes against routed environments,
//! runs the graph evaluator after every action, and classifies how each
//! episode ended.

pub mod backend;
pub mod config;
pub mod episode;
pub mod http;
pub mod probe;
pub mod prompt;

pub use backend::{parse_script_book, Backend, BackendError, BackendReply, Script, ScriptBook, ScriptedBackend};
pub use config::{AgentConfig, AgentStructure, ConfigError};
pub use episode::{
    classify_termination, compute_metrics, run_episode, EndState, EpisodeError, EpisodeResult, EventKind,
    Termination, TranscriptEvent,
};
pub use http::{HttpBackendConfig, HttpChatBackend};
pub use probe::{ProbeError, Prober};
pub use prompt::{build_messages, AgentRole, AgentSystem, BackendRequest, ChatMessage, History, PromptError};
