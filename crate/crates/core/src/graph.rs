//! Graph evaluator: a DAG of boolean state predicates whose nodes move
//! `Pending -> Active -> Completed`.
//!
//! A node is active once it has no predecessors or all of its predecessors
//! are completed. After every agent action [`EvalGraph::check_step`] probes
//! the active nodes, completes the satisfied ones, activates their
//! successors and repeats until a round changes nothing. Completion is
//! latched: a node never leaves `Completed` even if the environment later
//! regresses.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionCall, ParamValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A predicate argument: a literal, or the output of an earlier sub-task
/// resolved at probe time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    OutputOf {
        #[serde(rename = "$output_of")]
        index: usize,
    },
    Literal(ParamValue),
}

impl ArgValue {
    pub fn output_of(index: usize) -> Self {
        ArgValue::OutputOf { index }
    }

    pub fn as_literal(&self) -> Option<&ParamValue> {
        match self {
            ArgValue::Literal(v) => Some(v),
            ArgValue::OutputOf { .. } => None,
        }
    }
}

impl<T: Into<ParamValue>> From<T> for ArgValue {
    fn from(v: T) -> Self {
        ArgValue::Literal(v.into())
    }
}

/// Reference to an evaluator action in a named environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateRef {
    pub predicate: String,
    #[serde(rename = "env")]
    pub env_name: String,
    #[serde(default)]
    pub args: BTreeMap<String, ArgValue>,
}

impl PredicateRef {
    pub fn new(env_name: impl Into<String>, predicate: impl Into<String>) -> Self {
        PredicateRef {
            predicate: predicate.into(),
            env_name: env_name.into(),
            args: BTreeMap::new(),
        }
    }

    pub fn arg(mut self, name: impl Into<String>, value: impl Into<ArgValue>) -> Self {
        self.args.insert(name.into(), value.into());
        self
    }

    /// The call that evaluates this predicate, if every argument is literal.
    pub fn to_call(&self) -> Option<ActionCall> {
        let mut call = ActionCall::new(&self.env_name, &self.predicate);
        for (k, v) in &self.args {
            call.params.insert(k.clone(), v.as_literal()?.clone());
        }
        Some(call)
    }
}

impl fmt::Display for PredicateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}(", self.env_name, self.predicate)?;
        for (i, (k, v)) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match v {
                ArgValue::Literal(p) => write!(f, "{k}={}", serde_json::to_string(p).unwrap_or_default())?,
                ArgValue::OutputOf { index } => write!(f, "{k}=<output of {index}>")?,
            }
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    Pending,
    Active,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalNode {
    pub id: NodeId,
    pub predicate: PredicateRef,
    pub status: NodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

impl EvalNode {
    pub fn new(id: usize, predicate: PredicateRef) -> Self {
        EvalNode {
            id: NodeId(id),
            predicate,
            status: NodeStatus::Pending,
            instruction: None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("edge {0} -> {1} references a missing node")]
    DanglingEdge(NodeId, NodeId),
    #[error("graph contains a cycle")]
    CycleDetected,
    #[error("evaluation already started")]
    AlreadyStarted,
    #[error("evaluation not started; call activate_initial first")]
    NotStarted,
    #[error("probing {node} failed: {cause}")]
    ProbeFailure { node: NodeId, cause: String },
}

/// Activations and completions produced by one evaluator call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalStepReport {
    pub newly_activated: Vec<NodeId>,
    pub newly_completed: Vec<NodeId>,
    /// Fixpoint rounds that changed at least one status.
    pub rounds: usize,
}

impl EvalStepReport {
    pub fn is_empty(&self) -> bool {
        self.newly_activated.is_empty() && self.newly_completed.is_empty()
    }
}

/// A validated evaluator DAG. Nodes are kept sorted by id.
#[derive(Debug, Clone)]
pub struct EvalGraph {
    nodes: Vec<EvalNode>,
    edges: Vec<(NodeId, NodeId)>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    started: bool,
}

impl PartialEq for EvalGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.started == other.started
    }
}

impl EvalGraph {
    /// Validates nodes and edges into a graph with every node pending.
    /// Duplicate edges are collapsed.
    pub fn build(mut nodes: Vec<EvalNode>, edges: Vec<(NodeId, NodeId)>) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(GraphError::DuplicateId(pair[0].id));
            }
        }
        for n in &mut nodes {
            n.status = NodeStatus::Pending;
        }
        let position = |id: NodeId| nodes.binary_search_by_key(&id, |n| n.id).ok();
        let mut edges = edges;
        edges.sort();
        edges.dedup();
        let mut preds = vec![Vec::new(); nodes.len()];
        let mut succs = vec![Vec::new(); nodes.len()];
        for &(from, to) in &edges {
            match (position(from), position(to)) {
                (Some(a), Some(b)) => {
                    succs[a].push(b);
                    preds[b].push(a);
                }
                _ => return Err(GraphError::DanglingEdge(from, to)),
            }
        }
        // Kahn's algorithm; any node left unvisited sits on a cycle.
        let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0;
        while let Some(i) = ready.pop() {
            visited += 1;
            for &s in &succs[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(s);
                }
            }
        }
        if visited != nodes.len() {
            return Err(GraphError::CycleDetected);
        }
        Ok(EvalGraph {
            nodes,
            edges,
            preds,
            succs,
            started: false,
        })
    }

    /// A chain with one edge between consecutive predicates, ids `n0..`.
    pub fn path_graph(predicates: Vec<PredicateRef>) -> Result<Self, GraphError> {
        let k = predicates.len();
        let nodes = predicates
            .into_iter()
            .enumerate()
            .map(|(i, p)| EvalNode::new(i, p))
            .collect();
        let edges = (1..k).map(|i| (NodeId(i - 1), NodeId(i))).collect();
        Self::build(nodes, edges)
    }

    pub fn nodes(&self) -> &[EvalNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    pub fn node(&self, id: NodeId) -> Option<&EvalNode> {
        self.position(id).map(|i| &self.nodes[i])
    }

    pub fn status(&self, id: NodeId) -> Option<NodeStatus> {
        self.node(id).map(|n| n.status)
    }

    fn position(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn predecessors(&self, id: NodeId) -> Vec<NodeId> {
        self.position(id)
            .map(|i| self.preds[i].iter().map(|&p| self.nodes[p].id).collect())
            .unwrap_or_default()
    }

    /// Nodes without incoming edges, in id order.
    pub fn sources(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.preds[i].is_empty())
            .map(|i| self.nodes[i].id)
            .collect()
    }

    /// Nodes without outgoing edges, in id order.
    pub fn sinks(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.succs[i].is_empty())
            .map(|i| self.nodes[i].id)
            .collect()
    }

    /// `(completed, total)`.
    pub fn counts(&self) -> (usize, usize) {
        let done = self
            .nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Completed)
            .count();
        (done, self.nodes.len())
    }

    pub fn is_complete(&self) -> bool {
        let (c, n) = self.counts();
        c == n
    }

    /// Full scan of the status-consistency invariant: a node is active or
    /// completed only if all of its predecessors are completed.
    pub fn is_consistent(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| {
            n.status == NodeStatus::Pending
                || self.preds[i]
                    .iter()
                    .all(|&p| self.nodes[p].status == NodeStatus::Completed)
        })
    }

    /// Returns every node to `Pending`.
    pub fn reset(&mut self) {
        for n in &mut self.nodes {
            n.status = NodeStatus::Pending;
        }
        self.started = false;
    }

    /// Activates exactly the nodes with no incoming edges.
    pub fn activate_initial(&mut self) -> Result<EvalStepReport, GraphError> {
        if self.started || self.nodes.iter().any(|n| n.status != NodeStatus::Pending) {
            return Err(GraphError::AlreadyStarted);
        }
        self.started = true;
        let mut report = EvalStepReport::default();
        for i in 0..self.nodes.len() {
            if self.preds[i].is_empty() {
                self.nodes[i].status = NodeStatus::Active;
                report.newly_activated.push(self.nodes[i].id);
            }
        }
        Ok(report)
    }

    /// Runs the activation/verification fixpoint.
    ///
    /// Each round probes every node that was active at the start of the
    /// round, once, in id order; satisfied nodes complete, then pending
    /// nodes whose predecessors are all completed activate. Stops at the
    /// first round that changes nothing. A probe error aborts the step;
    /// transitions already applied are kept.
    pub fn check_step<F, E>(&mut self, mut prober: F) -> Result<EvalStepReport, GraphError>
    where
        F: FnMut(&EvalNode) -> Result<bool, E>,
        E: fmt::Display,
    {
        if !self.started {
            return Err(GraphError::NotStarted);
        }
        let mut report = EvalStepReport::default();
        loop {
            let active: Vec<usize> = (0..self.nodes.len())
                .filter(|&i| self.nodes[i].status == NodeStatus::Active)
                .collect();
            let mut changed = false;
            for i in active {
                let satisfied = prober(&self.nodes[i]).map_err(|e| GraphError::ProbeFailure {
                    node: self.nodes[i].id,
                    cause: e.to_string(),
                })?;
                if satisfied {
                    self.nodes[i].status = NodeStatus::Completed;
                    report.newly_completed.push(self.nodes[i].id);
                    changed = true;
                }
            }
            for i in 0..self.nodes.len() {
                if self.nodes[i].status == NodeStatus::Pending
                    && self.preds[i]
                        .iter()
                        .all(|&p| self.nodes[p].status == NodeStatus::Completed)
                {
                    self.nodes[i].status = NodeStatus::Active;
                    report.newly_activated.push(self.nodes[i].id);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            report.rounds += 1;
        }
        Ok(report)
    }
}
