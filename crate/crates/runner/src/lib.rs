//! Benchmark runner: executes task suites across agent structures,
//! aggregates metrics and termination shares into reports, composes and
//! validates task files, hosts the human verification mode and serves mock
//! environments as workers.

pub mod cli;
pub mod human;
pub mod report;
pub mod suite;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    /// Validation errors, failed generations, or an incomplete human session.
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const UNREACHABLE: i32 = 3;
    /// Some episodes could not run; the report is still written.
    pub const PARTIAL: i32 = 4;
}

pub use human::{human_session, parse_call, HumanError, HumanOutcome};
pub use report::{Aggregate, EpisodeRow, RunSettings, SuiteReport, TableRow};
pub use suite::{run_suite, BackendSpec, EnvSetup, EpisodeOutcome, Suite, SuiteError, SuiteRun};
