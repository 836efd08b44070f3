//! Core data model for the cross-environment benchmark: the action
//! registry, the graph evaluator, the task model and episode metrics.

pub mod action;
pub mod graph;
pub mod metrics;
pub mod registry;
pub mod task;

pub use num_rational::Ratio;

pub use action::{
    ActionCall, ActionFailure, ActionKind, ActionResult, ActionSchema, ActionValue, ErrorKind, ParamSpec,
    ParamType, ParamValue,
};
pub use graph::{
    ArgValue, EvalGraph, EvalNode, EvalStepReport, GraphError, NodeId, NodeStatus, PredicateRef,
};
pub use metrics::{EpisodeCounts, MetricsOf, Scalar};
pub use registry::{ActionRegistry, RegistryError, ToolDescriptor, ValidationError};
pub use task::{
    compose, generate, instantiate, load_task, save_task, validate, ComposedTask, Diagnostic,
    DiagnosticKind, Severity, Shape, SubTaskInstance, SubTaskTemplate, TaskDocument, TaskError,
    TemplatePool, TypeTag,
};

/// Metrics in double precision, as reported.
pub type Metrics = MetricsOf<f64>;

/// Metrics in exact rational arithmetic, for identity checks.
pub type ExactMetrics = MetricsOf<Ratio<u64>>;
