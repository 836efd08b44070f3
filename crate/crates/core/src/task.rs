//! Sub-task templates and their composition into cross-environment tasks.
//!
//! A template has typed attributes, an optional output type and an
//! evaluator generator. Attributes are bound to literals or to the output
//! of an earlier sub-task of matching type; such a binding is what makes a
//! sub-task edge legitimate. The task evaluator is built by wiring every
//! sink of a predecessor's fragment to every source of its successor's.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ParamValue;
use crate::graph::{ArgValue, EvalGraph, EvalNode, GraphError, NodeId, PredicateRef};

/// Attribute binding in a sub-task: a literal or `OutputOf(index)`.
pub type AttributeValue = ArgValue;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeTag(pub String);

impl TypeTag {
    pub fn new(s: impl Into<String>) -> Self {
        TypeTag(s.into())
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("template `{template}` is missing attribute `{attribute}`")]
    MissingAttribute { template: String, attribute: String },
    #[error("template `{template}` has no attribute `{attribute}`")]
    UnknownAttribute { template: String, attribute: String },
    #[error("template `{template}` uses undeclared placeholder `{{{placeholder}}}`")]
    UnknownPlaceholder { template: String, placeholder: String },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("sub-task graph contains a cycle")]
    CycleDetected,
    #[error("edge {from} -> {to} has no matching output binding")]
    UnjustifiedEdge { from: usize, to: usize },
    #[error("sub-task {subtask} references the output of {index}, which is not a linked earlier sub-task")]
    DanglingOutputRef { subtask: usize, index: usize },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("unsatisfiable shape: {0}")]
    Unsatisfiable(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A predicate argument in a template: a literal or an attribute reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateArg {
    Attr {
        #[serde(rename = "$attr")]
        name: String,
    },
    Literal(ParamValue),
}

impl TemplateArg {
    pub fn attr(name: impl Into<String>) -> Self {
        TemplateArg::Attr { name: name.into() }
    }

    fn bind(&self, bindings: &BTreeMap<String, AttributeValue>) -> Option<ArgValue> {
        match self {
            TemplateArg::Literal(v) => Some(ArgValue::Literal(v.clone())),
            TemplateArg::Attr { name } => bindings.get(name).cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateTemplate {
    pub env: String,
    pub predicate: String,
    #[serde(default)]
    pub args: BTreeMap<String, TemplateArg>,
}

impl PredicateTemplate {
    fn instantiate(&self, bindings: &BTreeMap<String, AttributeValue>) -> Option<PredicateRef> {
        let mut p = PredicateRef::new(&self.env, &self.predicate);
        for (k, a) in &self.args {
            p.args.insert(k.clone(), a.bind(bindings)?);
        }
        Some(p)
    }

    fn attribute_refs(&self) -> impl Iterator<Item = &str> {
        self.args.values().filter_map(|a| match a {
            TemplateArg::Attr { name } => Some(name.as_str()),
            TemplateArg::Literal(_) => None,
        })
    }
}

/// Produces a sub-task's evaluator fragment from its attribute bindings.
pub trait FragmentGenerator: Send + Sync + fmt::Debug {
    fn generate(&self, bindings: &BTreeMap<String, AttributeValue>) -> Result<EvalGraph, TaskError>;

    /// Attribute names the generator reads, for template checking.
    fn attribute_refs(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Declarative generator: a chain of predicate templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathGenerator(pub Vec<PredicateTemplate>);

impl FragmentGenerator for PathGenerator {
    fn generate(&self, bindings: &BTreeMap<String, AttributeValue>) -> Result<EvalGraph, TaskError> {
        let preds = self
            .0
            .iter()
            .map(|t| {
                t.instantiate(bindings).ok_or_else(|| {
                    TaskError::InvalidTemplate(format!("unbound attribute in `{}`", t.predicate))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EvalGraph::path_graph(preds)?)
    }

    fn attribute_refs(&self) -> Vec<String> {
        self.0
            .iter()
            .flat_map(|t| t.attribute_refs().map(str::to_owned))
            .collect()
    }
}

/// Where a sub-task's output value comes from at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "lowercase")]
pub enum OutputSource {
    /// The value bound to one of the template's own attributes.
    Attribute { attribute: String },
    /// The text returned by a read action in an environment.
    Query {
        env: String,
        action: String,
        #[serde(default)]
        args: BTreeMap<String, TemplateArg>,
    },
}

/// Serializable template definition with a path-shaped evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDef {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub attributes: IndexMap<String, TypeTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_type: Option<TypeTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSource>,
    pub platform: String,
    pub evaluator: PathGenerator,
}

#[derive(Debug)]
pub struct SubTaskTemplate {
    pub id: String,
    pub description_template: String,
    pub attributes: IndexMap<String, TypeTag>,
    pub output_type: Option<TypeTag>,
    pub output: Option<OutputSource>,
    pub platform: String,
    generator: Arc<dyn FragmentGenerator>,
}

impl SubTaskTemplate {
    pub fn new(
        id: impl Into<String>,
        description_template: impl Into<String>,
        attributes: IndexMap<String, TypeTag>,
        output: Option<(TypeTag, OutputSource)>,
        platform: impl Into<String>,
        generator: Arc<dyn FragmentGenerator>,
    ) -> Result<Self, TaskError> {
        let (output_type, output) = match output {
            Some((t, s)) => (Some(t), Some(s)),
            None => (None, None),
        };
        let template = SubTaskTemplate {
            id: id.into(),
            description_template: description_template.into(),
            attributes,
            output_type,
            output,
            platform: platform.into(),
            generator,
        };
        template.check()?;
        Ok(template)
    }

    pub fn from_def(def: TemplateDef) -> Result<Self, TaskError> {
        if def.output_type.is_some() != def.output.is_some() {
            return Err(TaskError::InvalidTemplate(format!(
                "`{}` must declare output_type and output together",
                def.id
            )));
        }
        let output = def.output_type.zip(def.output);
        Self::new(
            def.id,
            def.description,
            def.attributes,
            output,
            def.platform,
            Arc::new(def.evaluator),
        )
    }

    fn check(&self) -> Result<(), TaskError> {
        for p in placeholders(&self.description_template) {
            if !self.attributes.contains_key(p) {
                return Err(TaskError::UnknownPlaceholder {
                    template: self.id.clone(),
                    placeholder: p.to_owned(),
                });
            }
        }
        let mut refs = self.generator.attribute_refs();
        match &self.output {
            Some(OutputSource::Attribute { attribute }) => refs.push(attribute.clone()),
            Some(OutputSource::Query { args, .. }) => {
                refs.extend(args.values().filter_map(|a| match a {
                    TemplateArg::Attr { name } => Some(name.clone()),
                    TemplateArg::Literal(_) => None,
                }))
            }
            None => {}
        }
        if let Some(r) = refs.iter().find(|r| !self.attributes.contains_key(r.as_str())) {
            return Err(TaskError::InvalidTemplate(format!(
                "`{}` references undeclared attribute `{r}`",
                self.id
            )));
        }
        Ok(())
    }

    /// First attribute, in declaration order, of the given type.
    pub fn link_attribute(&self, ty: &TypeTag) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(_, t)| *t == ty)
            .map(|(name, _)| name.as_str())
    }
}

/// `{name}` placeholders in a description template.
fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let tail = &rest[start + 1..];
        match tail.find('}') {
            Some(end) => {
                out.push(&tail[..end]);
                rest = &tail[end + 1..];
            }
            None => break,
        }
    }
    out
}

/// Phrase used in descriptions for a value produced by sub-task `index`.
pub fn output_reference(index: usize) -> String {
    format!("the result of step {}", index + 1)
}

#[derive(Debug, Clone)]
pub struct SubTaskInstance {
    pub template: Arc<SubTaskTemplate>,
    pub bindings: BTreeMap<String, AttributeValue>,
    pub resolved_description: String,
    pub fragment: EvalGraph,
}

impl PartialEq for SubTaskInstance {
    fn eq(&self, other: &Self) -> bool {
        self.template.id == other.template.id
            && self.bindings == other.bindings
            && self.resolved_description == other.resolved_description
            && self.fragment == other.fragment
    }
}

/// Binds a template. `upstream` holds the sub-tasks declared before this one;
/// `OutputOf` bindings must point into it with a matching output type.
pub fn instantiate(
    template: &Arc<SubTaskTemplate>,
    bindings: BTreeMap<String, AttributeValue>,
    upstream: &[SubTaskInstance],
) -> Result<SubTaskInstance, TaskError> {
    for name in template.attributes.keys() {
        if !bindings.contains_key(name) {
            return Err(TaskError::MissingAttribute {
                template: template.id.clone(),
                attribute: name.clone(),
            });
        }
    }
    if let Some(extra) = bindings.keys().find(|k| !template.attributes.contains_key(*k)) {
        return Err(TaskError::UnknownAttribute {
            template: template.id.clone(),
            attribute: extra.clone(),
        });
    }
    for (name, value) in &bindings {
        if let ArgValue::OutputOf { index } = value {
            let source = upstream.get(*index).ok_or(TaskError::DanglingOutputRef {
                subtask: upstream.len(),
                index: *index,
            })?;
            let expected = &template.attributes[name];
            if source.template.output_type.as_ref() != Some(expected) {
                return Err(TaskError::TypeMismatch(format!(
                    "attribute `{name}` of `{}` expects {expected}, but `{}` outputs {}",
                    template.id,
                    source.template.id,
                    source
                        .template
                        .output_type
                        .as_ref()
                        .map_or("nothing".to_owned(), ToString::to_string)
                )));
            }
        }
    }
    let resolved_description = render_description(template, &bindings)?;
    let fragment = template.generator.generate(&bindings)?;
    Ok(SubTaskInstance {
        template: Arc::clone(template),
        bindings,
        resolved_description,
        fragment,
    })
}

fn render_description(
    template: &SubTaskTemplate,
    bindings: &BTreeMap<String, AttributeValue>,
) -> Result<String, TaskError> {
    let mut out = String::with_capacity(template.description_template.len());
    let mut rest = template.description_template.as_str();
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start + 1..];
        let Some(end) = tail.find('}') else {
            out.push_str(&rest[start..]);
            rest = "";
            break;
        };
        let name = &tail[..end];
        let value = bindings.get(name).ok_or_else(|| TaskError::UnknownPlaceholder {
            template: template.id.clone(),
            placeholder: name.to_owned(),
        })?;
        match value {
            ArgValue::Literal(v) => out.push_str(&v.to_string()),
            ArgValue::OutputOf { index } => out.push_str(&output_reference(*index)),
        }
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Assembles a task description from its sub-tasks.
pub trait Describer {
    fn describe(&self, subtasks: &[SubTaskInstance]) -> String;
}

/// Joins sub-task descriptions with "Then, ".
#[derive(Debug, Clone, Copy, Default)]
pub struct ConcatDescriber;

impl Describer for ConcatDescriber {
    fn describe(&self, subtasks: &[SubTaskInstance]) -> String {
        let mut out = String::new();
        for (i, s) in subtasks.iter().enumerate() {
            let text = s.resolved_description.trim();
            if i == 0 {
                out.push_str(text);
                continue;
            }
            out.push_str(" Then, ");
            let mut chars = text.chars();
            if let Some(first) = chars.next() {
                out.extend(first.to_lowercase());
                out.push_str(chars.as_str());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedTask {
    pub id: String,
    pub description: String,
    pub subtasks: Vec<SubTaskInstance>,
    pub subtask_edges: Vec<(usize, usize)>,
    pub evaluator: EvalGraph,
    pub platform_tags: BTreeSet<String>,
}

impl ComposedTask {
    /// First evaluator node id of each sub-task's fragment.
    pub fn fragment_offsets(&self) -> Vec<usize> {
        offsets(&self.subtasks)
    }

    /// The sub-task owning an evaluator node.
    pub fn subtask_of(&self, node: NodeId) -> Option<usize> {
        let offs = self.fragment_offsets();
        (0..self.subtasks.len())
            .rev()
            .find(|&i| node.0 >= offs[i])
            .filter(|&i| node.0 < offs[i] + self.subtasks[i].fragment.len())
    }

    /// Environments named by the evaluator predicates and output queries.
    pub fn environments(&self) -> BTreeSet<String> {
        let mut envs: BTreeSet<String> = self
            .evaluator
            .nodes()
            .iter()
            .map(|n| n.predicate.env_name.clone())
            .collect();
        for s in &self.subtasks {
            if let Some(OutputSource::Query { env, .. }) = &s.template.output {
                envs.insert(env.clone());
            }
        }
        envs
    }
}

fn offsets(subtasks: &[SubTaskInstance]) -> Vec<usize> {
    let mut acc = 0;
    subtasks
        .iter()
        .map(|s| {
            let here = acc;
            acc += s.fragment.len();
            here
        })
        .collect()
}

fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut indegree = vec![0usize; n];
    let mut succs = vec![Vec::new(); n];
    for &(a, b) in edges {
        succs[a].push(b);
        indegree[b] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = ready.pop() {
        seen += 1;
        for &s in &succs[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(s);
            }
        }
    }
    seen != n
}

/// The evaluator obtained by offsetting fragments and joining, for every
/// sub-task edge `a -> b`, each sink of `a` to each source of `b`.
pub fn interlink(subtasks: &[SubTaskInstance], edges: &[(usize, usize)]) -> Result<EvalGraph, GraphError> {
    let offs = offsets(subtasks);
    let mut nodes = Vec::new();
    let mut all_edges = Vec::new();
    for (i, s) in subtasks.iter().enumerate() {
        let shift = |id: NodeId| NodeId(id.0 + offs[i]);
        for n in s.fragment.nodes() {
            nodes.push(EvalNode {
                id: shift(n.id),
                predicate: n.predicate.clone(),
                status: n.status,
                instruction: n
                    .instruction
                    .clone()
                    .or_else(|| Some(s.resolved_description.clone())),
            });
        }
        all_edges.extend(s.fragment.edges().iter().map(|&(a, b)| (shift(a), shift(b))));
    }
    for &(a, b) in edges {
        for sink in subtasks[a].fragment.sinks() {
            for source in subtasks[b].fragment.sources() {
                all_edges.push((NodeId(sink.0 + offs[a]), NodeId(source.0 + offs[b])));
            }
        }
    }
    EvalGraph::build(nodes, all_edges)
}

fn output_refs(instance: &SubTaskInstance) -> impl Iterator<Item = (&str, usize)> {
    instance.bindings.iter().filter_map(|(k, v)| match v {
        ArgValue::OutputOf { index } => Some((k.as_str(), *index)),
        ArgValue::Literal(_) => None,
    })
}

/// Composes instances into a task. Every edge `a -> b` must be justified by
/// an `OutputOf(a)` binding in `b` of `a`'s output type, and every such
/// binding must have its edge.
pub fn compose(
    id: impl Into<String>,
    subtasks: Vec<SubTaskInstance>,
    edges: Vec<(usize, usize)>,
    describer: &dyn Describer,
) -> Result<ComposedTask, TaskError> {
    let n = subtasks.len();
    if n == 0 {
        return Err(TaskError::SchemaViolation("task has no sub-tasks".into()));
    }
    let mut edges = edges;
    edges.sort_unstable();
    edges.dedup();
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
        return Err(TaskError::SchemaViolation(format!("edge {a} -> {b} out of range")));
    }
    if has_cycle(n, &edges) {
        return Err(TaskError::CycleDetected);
    }
    for &(a, b) in &edges {
        let (attr, _) = output_refs(&subtasks[b])
            .find(|&(_, idx)| idx == a)
            .ok_or(TaskError::UnjustifiedEdge { from: a, to: b })?;
        let expected = &subtasks[b].template.attributes[attr];
        if subtasks[a].template.output_type.as_ref() != Some(expected) {
            return Err(TaskError::TypeMismatch(format!(
                "edge {a} -> {b}: attribute `{attr}` expects {expected}"
            )));
        }
    }
    for (b, s) in subtasks.iter().enumerate() {
        for (_, a) in output_refs(s) {
            if a >= b || edges.binary_search(&(a, b)).is_err() {
                return Err(TaskError::DanglingOutputRef { subtask: b, index: a });
            }
        }
    }
    let evaluator = interlink(&subtasks, &edges)?;
    Ok(ComposedTask {
        id: id.into(),
        description: describer.describe(&subtasks),
        platform_tags: subtasks.iter().map(|s| s.template.platform.clone()).collect(),
        subtasks,
        subtask_edges: edges,
        evaluator,
    })
}

/// A set of templates plus a per-type catalog of literal values.
#[derive(Debug, Clone, Default)]
pub struct TemplatePool {
    pub types: BTreeSet<TypeTag>,
    pub catalog: BTreeMap<TypeTag, Vec<ParamValue>>,
    templates: IndexMap<String, Arc<SubTaskTemplate>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolDef {
    #[serde(default)]
    pub types: BTreeSet<TypeTag>,
    #[serde(default)]
    pub catalog: BTreeMap<TypeTag, Vec<ParamValue>>,
    pub templates: Vec<TemplateDef>,
}

impl TemplatePool {
    pub fn new(types: BTreeSet<TypeTag>, catalog: BTreeMap<TypeTag, Vec<ParamValue>>) -> Self {
        TemplatePool {
            types,
            catalog,
            templates: IndexMap::new(),
        }
    }

    pub fn from_def(def: PoolDef) -> Result<Self, TaskError> {
        if let Some(t) = def.catalog.keys().find(|t| !def.types.contains(*t)) {
            return Err(TaskError::InvalidTemplate(format!("catalog type `{t}` is not declared")));
        }
        let mut pool = TemplatePool::new(def.types, def.catalog);
        for t in def.templates {
            pool.add(SubTaskTemplate::from_def(t)?)?;
        }
        Ok(pool)
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        let def: PoolDef =
            serde_json::from_str(text).map_err(|e| TaskError::SchemaViolation(e.to_string()))?;
        Self::from_def(def)
    }

    /// Adds a template; its types must come from the pool's declared set.
    pub fn add(&mut self, template: SubTaskTemplate) -> Result<(), TaskError> {
        let declared = |t: &TypeTag| self.types.contains(t);
        if let Some(t) = template
            .attributes
            .values()
            .chain(template.output_type.iter())
            .find(|t| !declared(t))
        {
            return Err(TaskError::InvalidTemplate(format!(
                "`{}` uses undeclared type `{t}`",
                template.id
            )));
        }
        if self.templates.contains_key(&template.id) {
            return Err(TaskError::InvalidTemplate(format!("duplicate template `{}`", template.id)));
        }
        self.templates.insert(template.id.clone(), Arc::new(template));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<SubTaskTemplate>> {
        self.templates.get(id)
    }

    pub fn templates(&self) -> impl Iterator<Item = &Arc<SubTaskTemplate>> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Requested task shape for [`generate`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Shape {
    pub subtask_count: usize,
    /// Allowed template platforms; empty means any.
    pub platforms: Vec<String>,
}

/// Generates a chain-shaped task by a seeded walk over type-compatible
/// templates. Deterministic in `(pool, seed, shape)`.
pub fn generate(pool: &TemplatePool, seed: u64, shape: &Shape) -> Result<ComposedTask, TaskError> {
    let count = shape.subtask_count;
    if count == 0 {
        return Err(TaskError::Unsatisfiable("subtask_count must be positive".into()));
    }
    let candidates: Vec<&Arc<SubTaskTemplate>> = pool
        .templates()
        .filter(|t| shape.platforms.is_empty() || shape.platforms.contains(&t.platform))
        .collect();
    if candidates.is_empty() {
        return Err(TaskError::Unsatisfiable(format!(
            "no templates for platforms {:?}",
            shape.platforms
        )));
    }
    let fillable = |t: &SubTaskTemplate, linked: Option<&str>| {
        t.attributes.iter().all(|(name, ty)| {
            Some(name.as_str()) == linked || pool.catalog.get(ty).is_some_and(|v| !v.is_empty())
        })
    };
    // successors[i]: candidates that can consume i's output, with the linked attribute.
    let successors: Vec<Vec<(usize, &str)>> = candidates
        .iter()
        .map(|t| match &t.output_type {
            None => Vec::new(),
            Some(ty) => candidates
                .iter()
                .enumerate()
                .filter_map(|(j, s)| {
                    let attr = s.link_attribute(ty)?;
                    fillable(s, Some(attr)).then_some((j, attr))
                })
                .collect(),
        })
        .collect();
    // chain_ok[l][i]: a chain of l templates can start at i.
    let mut chain_ok = vec![vec![false; candidates.len()]; count + 1];
    chain_ok[1].fill(true);
    for l in 2..=count {
        for i in 0..candidates.len() {
            chain_ok[l][i] = successors[i].iter().any(|&(j, _)| chain_ok[l - 1][j]);
        }
    }
    let starts: Vec<usize> = (0..candidates.len())
        .filter(|&i| chain_ok[count][i] && fillable(candidates[i], None))
        .collect();
    if starts.is_empty() {
        return Err(TaskError::Unsatisfiable(format!(
            "no type-compatible chain of {count} sub-tasks"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<(usize, Option<&str>)> = vec![(starts[rng.gen_range(0..starts.len())], None)];
    for remaining in (1..count).rev() {
        let prev = chosen.last().expect("non-empty").0;
        let options: Vec<(usize, &str)> = successors[prev]
            .iter()
            .copied()
            .filter(|&(j, _)| chain_ok[remaining][j])
            .collect();
        let (j, attr) = options[rng.gen_range(0..options.len())];
        chosen.push((j, Some(attr)));
    }

    let mut instances: Vec<SubTaskInstance> = Vec::with_capacity(count);
    for (pos, &(i, linked)) in chosen.iter().enumerate() {
        let template = candidates[i];
        let mut bindings = BTreeMap::new();
        for (name, ty) in &template.attributes {
            let value = if Some(name.as_str()) == linked {
                ArgValue::output_of(pos - 1)
            } else {
                let values = &pool.catalog[ty];
                ArgValue::Literal(values[rng.gen_range(0..values.len())].clone())
            };
            bindings.insert(name.clone(), value);
        }
        let instance = instantiate(template, bindings, &instances)?;
        instances.push(instance);
    }
    let id = uuid::Builder::from_random_bytes(rng.gen()).into_uuid().to_string();
    let edges = (1..count).map(|i| (i - 1, i)).collect();
    compose(id, instances, edges, &ConcatDescriber)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTaskDoc {
    pub template: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttributeValue>,
}

/// The on-disk task format: sub-tasks with attribute values and the
/// sub-task graph as an adjacency list keyed by zero-based index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDocument {
    pub id: String,
    pub description: String,
    pub subtasks: Vec<SubTaskDoc>,
    #[serde(default)]
    pub adjacency: BTreeMap<String, Vec<usize>>,
}

impl TaskDocument {
    /// Adjacency as index pairs, checking keys and targets are in range.
    pub fn edges(&self) -> Result<Vec<(usize, usize)>, TaskError> {
        let n = self.subtasks.len();
        let mut edges = Vec::new();
        for (key, targets) in &self.adjacency {
            let from: usize = key
                .parse()
                .map_err(|_| TaskError::SchemaViolation(format!("adjacency key `{key}` is not an index")))?;
            if from >= n {
                return Err(TaskError::SchemaViolation(format!(
                    "adjacency cites index {from} in a {n}-subtask document"
                )));
            }
            for &to in targets {
                if to >= n {
                    return Err(TaskError::SchemaViolation(format!(
                        "adjacency cites index {to} in a {n}-subtask document"
                    )));
                }
                edges.push((from, to));
            }
        }
        Ok(edges)
    }
}

pub fn save_task(task: &ComposedTask) -> TaskDocument {
    let mut adjacency: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &(a, b) in &task.subtask_edges {
        adjacency.entry(a.to_string()).or_default().push(b);
    }
    TaskDocument {
        id: task.id.clone(),
        description: task.description.clone(),
        subtasks: task
            .subtasks
            .iter()
            .map(|s| SubTaskDoc {
                template: s.template.id.clone(),
                attributes: s.bindings.clone(),
            })
            .collect(),
        adjacency,
    }
}

/// Rebuilds a task, regenerating evaluator fragments from the pool.
pub fn load_task(doc: &TaskDocument, pool: &TemplatePool) -> Result<ComposedTask, TaskError> {
    let edges = doc.edges()?;
    let mut instances: Vec<SubTaskInstance> = Vec::with_capacity(doc.subtasks.len());
    for (i, sub) in doc.subtasks.iter().enumerate() {
        let template = pool
            .get(&sub.template)
            .ok_or_else(|| TaskError::UnknownTemplate(sub.template.clone()))?;
        for value in sub.attributes.values() {
            if let ArgValue::OutputOf { index } = value {
                if *index >= i {
                    return Err(TaskError::DanglingOutputRef { subtask: i, index: *index });
                }
            }
        }
        let instance = instantiate(template, sub.attributes.clone(), &instances)?;
        instances.push(instance);
    }
    let mut task = compose(&doc.id, instances, edges, &ConcatDescriber)?;
    task.description = doc.description.clone();
    Ok(task)
}

/// Parses a file holding one task document or an array of them.
pub fn parse_documents(text: &str) -> Result<Vec<TaskDocument>, TaskError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<TaskDocument>),
        One(TaskDocument),
    }
    match serde_json::from_str::<OneOrMany>(text) {
        Ok(OneOrMany::Many(v)) => Ok(v),
        Ok(OneOrMany::One(d)) => Ok(vec![d]),
        Err(e) => Err(TaskError::SchemaViolation(e.to_string())),
    }
}

pub fn documents_to_json(docs: &[TaskDocument]) -> String {
    let mut text = serde_json::to_string_pretty(docs).expect("documents serialize");
    text.push('\n');
    text
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticKind {
    CycleDetected,
    UnjustifiedEdge,
    TypeMismatch,
    DanglingOutputRef,
    MissingAttribute,
    UnknownTemplate,
    SchemaViolation,
    InvariantBreach,
    EmptyDescription,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    fn error(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {:?}: {}", self.severity, self.kind, self.message)
    }
}

impl From<&TaskError> for Diagnostic {
    fn from(e: &TaskError) -> Self {
        let kind = match e {
            TaskError::MissingAttribute { .. } => DiagnosticKind::MissingAttribute,
            TaskError::TypeMismatch(_) => DiagnosticKind::TypeMismatch,
            TaskError::CycleDetected | TaskError::Graph(GraphError::CycleDetected) => {
                DiagnosticKind::CycleDetected
            }
            TaskError::UnjustifiedEdge { .. } => DiagnosticKind::UnjustifiedEdge,
            TaskError::DanglingOutputRef { .. } => DiagnosticKind::DanglingOutputRef,
            TaskError::UnknownTemplate(_) => DiagnosticKind::UnknownTemplate,
            TaskError::SchemaViolation(_)
            | TaskError::UnknownAttribute { .. }
            | TaskError::UnknownPlaceholder { .. } => DiagnosticKind::SchemaViolation,
            TaskError::Unsatisfiable(_) | TaskError::InvalidTemplate(_) | TaskError::Graph(_) => {
                DiagnosticKind::InvariantBreach
            }
        };
        Diagnostic::error(kind, e.to_string())
    }
}

/// Checks every composed-task invariant; an empty list means the task is
/// well formed.
pub fn validate(task: &ComposedTask) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut out = Vec::new();
    let n = task.subtasks.len();
    if task.description.trim().is_empty() {
        out.push(Diagnostic {
            severity: Severity::Warning,
            kind: EmptyDescription,
            message: "task description is empty".into(),
        });
    }
    let in_range: Vec<(usize, usize)> = task
        .subtask_edges
        .iter()
        .copied()
        .filter(|&(a, b)| a < n && b < n)
        .collect();
    if in_range.len() != task.subtask_edges.len() {
        out.push(Diagnostic::error(SchemaViolation, "sub-task edge index out of range"));
    }
    if has_cycle(n, &in_range) {
        out.push(Diagnostic::error(CycleDetected, "sub-task graph contains a cycle"));
    }
    for &(a, b) in &in_range {
        match output_refs(&task.subtasks[b]).find(|&(_, idx)| idx == a) {
            None => out.push(Diagnostic::error(
                UnjustifiedEdge,
                format!("edge {a} -> {b} has no output binding"),
            )),
            Some((attr, _)) => {
                let expected = task.subtasks[b].template.attributes.get(attr);
                if expected.is_none() || task.subtasks[a].template.output_type.as_ref() != expected {
                    out.push(Diagnostic::error(
                        TypeMismatch,
                        format!("edge {a} -> {b}: `{attr}` does not match the output type of {a}"),
                    ));
                }
            }
        }
    }
    for (b, s) in task.subtasks.iter().enumerate() {
        for name in s.template.attributes.keys() {
            if !s.bindings.contains_key(name) {
                out.push(Diagnostic::error(
                    MissingAttribute,
                    format!("sub-task {b} does not bind `{name}`"),
                ));
            }
        }
        for (_, a) in output_refs(s) {
            if a >= b || !in_range.contains(&(a, b)) {
                out.push(Diagnostic::error(
                    DanglingOutputRef,
                    format!("sub-task {b} references output of {a} without a preceding edge"),
                ));
            }
        }
    }
    let fragment_total: usize = task.subtasks.iter().map(|s| s.fragment.len()).sum();
    if task.evaluator.len() != fragment_total {
        out.push(Diagnostic::error(
            InvariantBreach,
            format!(
                "evaluator has {} nodes but fragments sum to {fragment_total}",
                task.evaluator.len()
            ),
        ));
    } else if in_range.len() == task.subtask_edges.len() {
        match interlink(&task.subtasks, &in_range) {
            Ok(expected) if expected.edges() == task.evaluator.edges() => {}
            Ok(_) => out.push(Diagnostic::error(
                InvariantBreach,
                "evaluator edges differ from sink-to-source interlinking",
            )),
            Err(GraphError::CycleDetected) => {}
            Err(e) => out.push(Diagnostic::error(InvariantBreach, e.to_string())),
        }
    }
    out
}

/// Validates a document against a pool: load failures become diagnostics.
pub fn validate_document(doc: &TaskDocument, pool: &TemplatePool) -> Vec<Diagnostic> {
    match load_task(doc, pool) {
        Ok(task) => validate(&task),
        Err(e) => vec![Diagnostic::from(&e)],
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}
