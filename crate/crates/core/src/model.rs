//! Domain types shared by every other module.
//!
//! A [`MatrixBundle`] is the unit of validation: the actors, the
//! artefact-based tasks of one lifecycle phase and the authored RACI
//! matrix that ties them together. Authored cells may hold alternatives
//! (`I/C`); validation always runs on a [`ResolvedMatrix`] where every
//! cell holds at most one [`Role`].

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bundle declares no {0}")]
    Empty(&'static str),
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("actor `{0}`: humans carry no provenance and LLM agents must declare one")]
    ProvenanceMismatch(String),
    #[error("actor `{actor}`: proficiency {value} for `{capability}` is outside [0, 1]")]
    ProficiencyOutOfRange {
        actor: String,
        capability: String,
        value: f64,
    },
    #[error("task `{task}` depends on undeclared task `{dependency}`")]
    UnknownDependency { task: String, dependency: String },
    #[error("task dependencies form a cycle: {}", .0.join(" -> "))]
    DependencyCycle(Vec<String>),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("unknown actor `{0}`")]
    UnknownActor(String),
    #[error("STEP1-ARTEFACT: task `{0}` is not artefact-based")]
    Step1Violation(String),
    #[error("cell ({task}, {actor}) holds `{cell}` and cannot be resolved under {policy} policy")]
    UnresolvedCell {
        task: String,
        actor: String,
        cell: RoleSet,
        policy: CellPolicy,
    },
}

/// One RACI responsibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    R,
    A,
    C,
    I,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::R, Role::A, Role::C, Role::I];

    fn bit(self) -> u8 {
        match self {
            Role::R => 1,
            Role::A => 2,
            Role::C => 4,
            Role::I => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::R => "R",
            Role::A => "A",
            Role::C => "C",
            Role::I => "I",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A set of roles as written in an authored cell.
///
/// Only `{}`, singletons and the `{I, C}` alternative appear in bundle
/// files, but the type itself can hold any subset so resolution can be
/// checked exhaustively.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RoleSet(u8);

impl RoleSet {
    pub const EMPTY: RoleSet = RoleSet(0);

    pub fn single(role: Role) -> Self {
        RoleSet(role.bit())
    }

    pub fn from_roles(roles: impl IntoIterator<Item = Role>) -> Self {
        RoleSet(roles.into_iter().fold(0, |acc, r| acc | r.bit()))
    }

    pub fn contains(self, role: Role) -> bool {
        self.0 & role.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Role> {
        Role::ALL.into_iter().filter(move |r| self.contains(*r))
    }

    /// Every non-empty subset of `{R, A, C, I}`.
    pub fn all_non_empty() -> impl Iterator<Item = RoleSet> {
        (1u8..16).map(RoleSet)
    }
}

impl fmt::Debug for RoleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RoleSet({self})")
    }
}

/// Canonical text: roles joined by `/`, with the `I/C` alternative
/// written informed-first as in the reference matrix.
impl fmt::Display for RoleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        if *self == RoleSet::from_roles([Role::I, Role::C]) {
            return f.write_str("I/C");
        }
        let parts: Vec<&str> = self.iter().map(Role::as_str).collect();
        f.write_str(&parts.join("/"))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid role string `{0}` (expected one of R, A, C, I, I/C, C/I)")]
pub struct RoleParseError(pub String);

impl FromStr for RoleSet {
    type Err = RoleParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R" => Ok(RoleSet::single(Role::R)),
            "A" => Ok(RoleSet::single(Role::A)),
            "C" => Ok(RoleSet::single(Role::C)),
            "I" => Ok(RoleSet::single(Role::I)),
            "I/C" | "C/I" => Ok(RoleSet::from_roles([Role::I, Role::C])),
            other => Err(RoleParseError(other.to_string())),
        }
    }
}

impl Serialize for RoleSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RoleSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How multi-role authored cells are resolved before validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellPolicy {
    #[default]
    Strict,
    PreferConsulted,
    PreferInformed,
}

impl fmt::Display for CellPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellPolicy::Strict => "strict",
            CellPolicy::PreferConsulted => "prefer-consulted",
            CellPolicy::PreferInformed => "prefer-informed",
        })
    }
}

impl FromStr for CellPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(CellPolicy::Strict),
            "prefer-consulted" | "prefer_consulted" => Ok(CellPolicy::PreferConsulted),
            "prefer-informed" | "prefer_informed" => Ok(CellPolicy::PreferInformed),
            other => Err(format!("unknown cell policy `{other}`")),
        }
    }
}

/// Error returned by [`resolve_cell`] when a cell cannot be reduced to one role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cell `{cell}` cannot be resolved under {policy} policy")]
pub struct UnresolvedCell {
    pub cell: RoleSet,
    pub policy: CellPolicy,
}

/// Reduces an authored cell to at most one role.
///
/// Singletons and empty cells pass through under every policy. The
/// preference policies only arbitrate the consulted/informed alternative.
pub fn resolve_cell(cell: RoleSet, policy: CellPolicy) -> Result<Option<Role>, UnresolvedCell> {
    match cell.len() {
        0 => return Ok(None),
        1 => return Ok(cell.iter().next()),
        _ => {}
    }
    let consult_or_inform = RoleSet::from_roles([Role::C, Role::I]);
    match policy {
        CellPolicy::PreferConsulted if cell == consult_or_inform => Ok(Some(Role::C)),
        CellPolicy::PreferInformed if cell == consult_or_inform => Ok(Some(Role::I)),
        _ => Err(UnresolvedCell { cell, policy }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Human,
    LlmAgent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    NotApplicable,
    InHouse,
    ThirdParty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub id: String,
    pub name: String,
    pub kind: ActorKind,
    pub provenance: Provenance,
    /// capability id -> proficiency in [0, 1]
    pub capabilities: IndexMap<String, f64>,
}

impl Actor {
    pub fn human(id: impl Into<String>, name: impl Into<String>) -> Self {
        Actor {
            id: id.into(),
            name: name.into(),
            kind: ActorKind::Human,
            provenance: Provenance::NotApplicable,
            capabilities: IndexMap::new(),
        }
    }

    pub fn agent(id: impl Into<String>, name: impl Into<String>, provenance: Provenance) -> Self {
        Actor {
            id: id.into(),
            name: name.into(),
            kind: ActorKind::LlmAgent,
            provenance,
            capabilities: IndexMap::new(),
        }
    }

    pub fn with_capability(mut self, capability: impl Into<String>, proficiency: f64) -> Self {
        self.capabilities.insert(capability.into(), proficiency);
        self
    }

    pub fn is_human(&self) -> bool {
        self.kind == ActorKind::Human
    }

    pub fn is_agent(&self) -> bool {
        self.kind == ActorKind::LlmAgent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub name: String,
    pub artefact_based: bool,
    pub stakeholder_facing: bool,
    pub required_capabilities: Vec<String>,
    pub depends_on: Vec<String>,
    pub output_artifact_type: String,
}

impl Task {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        let id = id.into();
        Task {
            output_artifact_type: id.clone(),
            id,
            name: name.into(),
            artefact_based: true,
            stakeholder_facing: false,
            required_capabilities: Vec::new(),
            depends_on: Vec::new(),
        }
    }

    pub fn requiring(mut self, capability: impl Into<String>) -> Self {
        self.required_capabilities.push(capability.into());
        self
    }

    pub fn after(mut self, dependency: impl Into<String>) -> Self {
        self.depends_on.push(dependency.into());
        self
    }

    pub fn stakeholder_facing(mut self) -> Self {
        self.stakeholder_facing = true;
        self
    }

    pub fn producing(mut self, artifact_type: impl Into<String>) -> Self {
        self.output_artifact_type = artifact_type.into();
        self
    }
}

/// Authored RACI matrix: task id -> actor id -> cell. Empty cells are absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RaciMatrix {
    cells: IndexMap<String, IndexMap<String, RoleSet>>,
}

impl RaciMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a cell; an empty set clears it.
    pub fn set(&mut self, task: impl Into<String>, actor: impl Into<String>, cell: RoleSet) {
        let task = task.into();
        let actor = actor.into();
        if cell.is_empty() {
            if let Some(row) = self.cells.get_mut(&task) {
                row.shift_remove(&actor);
                if row.is_empty() {
                    self.cells.shift_remove(&task);
                }
            }
        } else {
            self.cells.entry(task).or_default().insert(actor, cell);
        }
    }

    pub fn assign(mut self, task: &str, actor: &str, role: Role) -> Self {
        self.set(task, actor, RoleSet::single(role));
        self
    }

    pub fn get(&self, task: &str, actor: &str) -> RoleSet {
        self.cells
            .get(task)
            .and_then(|row| row.get(actor))
            .copied()
            .unwrap_or_default()
    }

    /// Non-empty cells in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, RoleSet)> {
        self.cells.iter().flat_map(|(task, row)| {
            row.iter()
                .map(move |(actor, cell)| (task.as_str(), actor.as_str(), *cell))
        })
    }
}

/// A matrix with every cell reduced to at most one role, laid out densely
/// in task and actor declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedMatrix {
    task_ids: Vec<String>,
    actor_ids: Vec<String>,
    cells: Vec<Option<Role>>,
}

impl ResolvedMatrix {
    /// Builds an all-empty matrix over the given axes.
    pub fn empty(task_ids: Vec<String>, actor_ids: Vec<String>) -> Self {
        let cells = vec![None; task_ids.len() * actor_ids.len()];
        ResolvedMatrix {
            task_ids,
            actor_ids,
            cells,
        }
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    pub fn actor_ids(&self) -> &[String] {
        &self.actor_ids
    }

    pub fn task_index(&self, task: &str) -> Option<usize> {
        self.task_ids.iter().position(|t| t == task)
    }

    pub fn actor_index(&self, actor: &str) -> Option<usize> {
        self.actor_ids.iter().position(|a| a == actor)
    }

    pub fn cell(&self, task_idx: usize, actor_idx: usize) -> Option<Role> {
        self.cells[task_idx * self.actor_ids.len() + actor_idx]
    }

    pub fn set_cell(&mut self, task_idx: usize, actor_idx: usize, role: Option<Role>) {
        let width = self.actor_ids.len();
        self.cells[task_idx * width + actor_idx] = role;
    }

    pub fn role_of(&self, task: &str, actor: &str) -> Option<Role> {
        let t = self.task_index(task)?;
        let a = self.actor_index(actor)?;
        self.cell(t, a)
    }

    /// Cells of one task row, in actor declaration order.
    pub fn row(&self, task_idx: usize) -> &[Option<Role>] {
        let width = self.actor_ids.len();
        &self.cells[task_idx * width..(task_idx + 1) * width]
    }
}

/// Actors whose resolved cell for `task` equals `role`, in declaration order.
pub fn actors_with_role<'m>(
    matrix: &'m ResolvedMatrix,
    task: &str,
    role: Role,
) -> Result<Vec<&'m str>, ModelError> {
    let t = matrix
        .task_index(task)
        .ok_or_else(|| ModelError::UnknownTask(task.to_string()))?;
    Ok(matrix
        .row(t)
        .iter()
        .zip(&matrix.actor_ids)
        .filter(|(cell, _)| **cell == Some(role))
        .map(|(_, id)| id.as_str())
        .collect())
}

/// The seven requirements for trustworthy AI used to tag rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustworthyRequirement {
    HumanAgencyOversight,
    TechnicalRobustnessSafety,
    PrivacyDataGovernance,
    Transparency,
    DiversityNonDiscriminationFairness,
    SocietalEnvironmentalWellbeing,
    Accountability,
}

impl TrustworthyRequirement {
    pub const ALL: [TrustworthyRequirement; 7] = [
        TrustworthyRequirement::HumanAgencyOversight,
        TrustworthyRequirement::TechnicalRobustnessSafety,
        TrustworthyRequirement::PrivacyDataGovernance,
        TrustworthyRequirement::Transparency,
        TrustworthyRequirement::DiversityNonDiscriminationFairness,
        TrustworthyRequirement::SocietalEnvironmentalWellbeing,
        TrustworthyRequirement::Accountability,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TrustworthyRequirement::HumanAgencyOversight => "HumanAgencyOversight",
            TrustworthyRequirement::TechnicalRobustnessSafety => "TechnicalRobustnessSafety",
            TrustworthyRequirement::PrivacyDataGovernance => "PrivacyDataGovernance",
            TrustworthyRequirement::Transparency => "Transparency",
            TrustworthyRequirement::DiversityNonDiscriminationFairness => {
                "DiversityNonDiscriminationFairness"
            }
            TrustworthyRequirement::SocietalEnvironmentalWellbeing => {
                "SocietalEnvironmentalWellbeing"
            }
            TrustworthyRequirement::Accountability => "Accountability",
        }
    }
}

pub type RequirementSet = BTreeSet<TrustworthyRequirement>;

/// Which reading of the second framework constraint to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Literal text: the no-accountable exception needs every LLM cell to be `I` or empty.
    Strict,
    /// Reference-matrix usage: a human `R` stands in as the implicit accountable.
    #[default]
    PaperCompat,
}

impl fmt::Display for ValidationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValidationMode::Strict => "strict",
            ValidationMode::PaperCompat => "paper-compat",
        })
    }
}

impl FromStr for ValidationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(ValidationMode::Strict),
            "paper-compat" | "paper_compat" => Ok(ValidationMode::PaperCompat),
            other => Err(format!("unknown validation mode `{other}`")),
        }
    }
}

/// Outcome of the automation analysis for one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Automation {
    Automatable,
    AssistOnly,
    HumanOnly,
}

/// How many accountable actors must approve before a task completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quorum {
    #[default]
    All,
    Any,
}

/// Validation and execution options carried inside a bundle. Every field
/// is optional; callers fall back to their own defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ValidationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_policy: Option<CellPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proficiency_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quorum: Option<Quorum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re_consult_on_reject: Option<bool>,
}

impl BundleConfig {
    pub fn is_empty(&self) -> bool {
        *self == BundleConfig::default()
    }
}

/// Actors, tasks and the authored matrix for one lifecycle phase.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBundle {
    pub phase_name: String,
    pub actors: Vec<Actor>,
    pub tasks: Vec<Task>,
    pub matrix: RaciMatrix,
    pub config: BundleConfig,
}

impl MatrixBundle {
    /// Assembles a bundle and checks every structural invariant.
    pub fn new(
        phase_name: impl Into<String>,
        actors: Vec<Actor>,
        tasks: Vec<Task>,
        matrix: RaciMatrix,
    ) -> Result<Self, ModelError> {
        let bundle = MatrixBundle {
            phase_name: phase_name.into(),
            actors,
            tasks,
            matrix,
            config: BundleConfig::default(),
        };
        bundle.check()?;
        Ok(bundle)
    }

    pub fn with_config(mut self, config: BundleConfig) -> Self {
        self.config = config;
        self
    }

    pub fn actor(&self, id: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn agents(&self) -> impl Iterator<Item = &Actor> {
        self.actors.iter().filter(|a| a.is_agent())
    }

    /// Structural admission: ids, provenance, proficiency ranges, artefact
    /// rule, matrix references and dependency acyclicity.
    pub fn check(&self) -> Result<(), ModelError> {
        if self.tasks.is_empty() {
            return Err(ModelError::Empty("tasks"));
        }
        if self.actors.is_empty() {
            return Err(ModelError::Empty("actors"));
        }

        let mut seen = HashSet::new();
        for actor in &self.actors {
            if !seen.insert(actor.id.as_str()) {
                return Err(ModelError::DuplicateId {
                    kind: "actor",
                    id: actor.id.clone(),
                });
            }
            let provenance_ok = match actor.kind {
                ActorKind::Human => actor.provenance == Provenance::NotApplicable,
                ActorKind::LlmAgent => actor.provenance != Provenance::NotApplicable,
            };
            if !provenance_ok {
                return Err(ModelError::ProvenanceMismatch(actor.id.clone()));
            }
            for (capability, &value) in &actor.capabilities {
                if !(0.0..=1.0).contains(&value) {
                    return Err(ModelError::ProficiencyOutOfRange {
                        actor: actor.id.clone(),
                        capability: capability.clone(),
                        value,
                    });
                }
            }
        }

        let mut seen = HashSet::new();
        for task in &self.tasks {
            if !seen.insert(task.id.as_str()) {
                return Err(ModelError::DuplicateId {
                    kind: "task",
                    id: task.id.clone(),
                });
            }
        }
        for task in &self.tasks {
            if !task.artefact_based {
                return Err(ModelError::Step1Violation(task.id.clone()));
            }
            for dep in &task.depends_on {
                if !seen.contains(dep.as_str()) {
                    return Err(ModelError::UnknownDependency {
                        task: task.id.clone(),
                        dependency: dep.clone(),
                    });
                }
            }
        }

        for (task, actor, _) in self.matrix.iter() {
            if self.task(task).is_none() {
                return Err(ModelError::UnknownTask(task.to_string()));
            }
            if self.actor(actor).is_none() {
                return Err(ModelError::UnknownActor(actor.to_string()));
            }
        }

        if let Some(cycle) = find_cycle(&self.tasks) {
            return Err(ModelError::DependencyCycle(cycle));
        }
        Ok(())
    }

    /// Resolves every authored cell under `policy`.
    pub fn resolve(&self, policy: CellPolicy) -> Result<ResolvedMatrix, ModelError> {
        let task_ids: Vec<String> = self.tasks.iter().map(|t| t.id.clone()).collect();
        let actor_ids: Vec<String> = self.actors.iter().map(|a| a.id.clone()).collect();
        let mut resolved = ResolvedMatrix::empty(task_ids, actor_ids);
        for (task, actor, cell) in self.matrix.iter() {
            let t = resolved
                .task_index(task)
                .ok_or_else(|| ModelError::UnknownTask(task.to_string()))?;
            let a = resolved
                .actor_index(actor)
                .ok_or_else(|| ModelError::UnknownActor(actor.to_string()))?;
            let role = resolve_cell(cell, policy).map_err(|e| ModelError::UnresolvedCell {
                task: task.to_string(),
                actor: actor.to_string(),
                cell: e.cell,
                policy,
            })?;
            resolved.set_cell(t, a, role);
        }
        Ok(resolved)
    }
}

/// Returns a dependency cycle (first node repeated at the end) if one exists.
pub(crate) fn find_cycle(tasks: &[Task]) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let index: HashMap<&str, usize> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.id.as_str(), i))
        .collect();
    let mut marks = vec![Mark::New; tasks.len()];
    let mut stack: Vec<usize> = Vec::new();

    fn visit(
        node: usize,
        tasks: &[Task],
        index: &HashMap<&str, usize>,
        marks: &mut [Mark],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<String>> {
        marks[node] = Mark::Active;
        stack.push(node);
        for dep in &tasks[node].depends_on {
            let Some(&next) = index.get(dep.as_str()) else {
                continue;
            };
            match marks[next] {
                Mark::Active => {
                    let start = stack.iter().position(|&n| n == next).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        stack[start..].iter().map(|&n| tasks[n].id.clone()).collect();
                    cycle.push(tasks[next].id.clone());
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(cycle) = visit(next, tasks, index, marks, stack) {
                        return Some(cycle);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        marks[node] = Mark::Done;
        None
    }

    for start in 0..tasks.len() {
        if marks[start] == Mark::New {
            if let Some(cycle) = visit(start, tasks, &index, &mut marks, &mut stack) {
                return Some(cycle);
            }
        }
    }
    None
}
