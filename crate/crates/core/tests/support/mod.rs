//! Independent oracles and generators shared by integration and acceptance tests.
//!
//! Nothing here calls into the constraint engine to decide an expected
//! value; the oracles work on raw cell codes and raw audit lines.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use matrixgate::engine::{
    replay, verify_audit_text, ChainStatus, Driver, DriveStatus, LogicalClock, MockAgent, Run,
    SimulatedDesk, WorkflowSpec,
};
use matrixgate::model::{BundleConfig, Quorum, Task};
use matrixgate::pipeline::PipelineConfig;
use matrixgate::{
    run_pipeline, validate_matrix, Actor, ActorKind, MatrixBundle, Provenance, RaciMatrix, Role,
    RoleSet, ValidationMode,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

// ------------------------------------------------- DevOps planning matrix

pub const DEVOPS_ACTORS: [&str; 6] = [
    "product_owner",
    "business_analyst",
    "scrum_master",
    "llm_agent_a",
    "llm_agent_b",
    "llm_agent_c",
];

pub const DEVOPS_HUMAN: [bool; 6] = [true, true, true, false, false, false];

/// Rows of the published matrix, cell text as printed.
pub const DEVOPS_MATRIX: [(&str, [&str; 6]); 6] = [
    ("requirements_elicitation", ["A", "R", "I", "I", "C", "C"]),
    ("create_product_roadmap", ["R", "I", "I", "C", "-", "C"]),
    ("create_features_user_stories", ["I", "A", "I", "C", "R", "-"]),
    ("create_product_backlog", ["A", "I/C", "I", "R", "-", "-"]),
    ("sprint_planning", ["I", "-", "A", "C", "-", "R"]),
    ("task_allocation", ["I", "-", "A", "C", "-", "R"]),
];

/// Expected Step-4 outcome: task -> paired agent, `None` for assist-only.
pub const DEVOPS_AUTOMATION: [(&str, Option<&str>); 6] = [
    ("requirements_elicitation", None),
    ("create_product_roadmap", None),
    ("create_features_user_stories", Some("llm_agent_b")),
    ("create_product_backlog", Some("llm_agent_a")),
    ("sprint_planning", Some("llm_agent_c")),
    ("task_allocation", Some("llm_agent_c")),
];

pub fn golden() -> MatrixBundle {
    matrixgate::io::parse_bundle(matrixgate::DEVOPS_PLANNING).expect("shipped bundle parses")
}

/// Gate list a DevOps matrix row should compile to, with "I/C" read as Consulted:
/// consultants, executor, validators, notified, each in column order.
pub fn devops_gates(row: &[&str; 6]) -> Vec<(&'static str, &'static str)> {
    let mut out = Vec::new();
    for (kind, codes) in [
        ("consult", &["C", "I/C"][..]),
        ("execute", &["R"][..]),
        ("validate", &["A"][..]),
        ("notify", &["I"][..]),
    ] {
        for (i, cell) in row.iter().enumerate() {
            if codes.contains(cell) {
                out.push((kind, DEVOPS_ACTORS[i]));
            }
        }
    }
    out
}

// ------------------------------------------------- exhaustive 2x3 oracle

/// Cell codes: 0 empty, 1 R, 2 A, 3 C, 4 I.
pub type Grid = [[u8; 3]; 2];

pub const GRID_TASKS: [&str; 2] = ["t1", "t2"];
pub const GRID_ACTORS: [&str; 3] = ["h", "g1", "g2"];
pub const GRID_HUMAN: [bool; 3] = [true, false, false];

pub fn all_grids() -> impl Iterator<Item = Grid> {
    (0..5u32.pow(6)).map(|mut n| {
        let mut g = [[0u8; 3]; 2];
        for row in g.iter_mut() {
            for c in row.iter_mut() {
                *c = (n % 5) as u8;
                n /= 5;
            }
        }
        g
    })
}

pub fn grid_bundle(grid: &Grid, human: &[bool; 3]) -> MatrixBundle {
    let actors = GRID_ACTORS
        .iter()
        .zip(human)
        .map(|(id, h)| {
            if *h {
                Actor::human(*id, *id)
            } else {
                Actor::agent(*id, *id, Provenance::ThirdParty)
            }
        })
        .collect();
    let tasks = GRID_TASKS.iter().map(|t| Task::new(*t, *t)).collect();
    let mut matrix = RaciMatrix::new();
    for (t, row) in grid.iter().enumerate() {
        for (a, code) in row.iter().enumerate() {
            let role = match code {
                0 => continue,
                1 => Role::R,
                2 => Role::A,
                3 => Role::C,
                _ => Role::I,
            };
            matrix.set(GRID_TASKS[t], GRID_ACTORS[a], RoleSet::single(role));
        }
    }
    MatrixBundle::new("grid", actors, tasks, matrix).expect("grid bundle is well formed")
}

/// Brute-force reading of the three constraints: `(rule, task index)`.
pub fn oracle(grid: &Grid, human: &[bool; 3], strict: bool) -> BTreeSet<(&'static str, usize)> {
    let mut out = BTreeSet::new();
    for (t, row) in grid.iter().enumerate() {
        let mut r_count = 0;
        let mut a_count = 0;
        let mut human_r = false;
        let mut human_a = false;
        let mut agent_r = false;
        let mut agent_beyond_informed = false;
        for a in 0..3 {
            let code = row[a];
            if code == 1 {
                r_count += 1;
            }
            if code == 2 {
                a_count += 1;
            }
            if human[a] {
                human_r |= code == 1;
                human_a |= code == 2;
            } else {
                agent_r |= code == 1;
                agent_beyond_informed |= code != 0 && code != 4;
            }
        }
        if r_count == 0 {
            out.insert(("C1", t));
        }
        if a_count == 0 {
            let exception = if strict {
                human_r && !agent_beyond_informed
            } else {
                human_r
            };
            if !exception {
                out.insert(("C2", t));
            }
        }
        if agent_r && !human_a {
            out.insert(("C3", t));
        }
    }
    out
}

pub fn engine_findings(bundle: &MatrixBundle, mode: ValidationMode) -> BTreeSet<(String, usize)> {
    let report = validate_matrix(bundle, mode, &[]).expect("grid validates");
    report
        .findings
        .iter()
        .map(|f| {
            let task = f.task_id.as_deref().expect("constraint findings name a task");
            let t = GRID_TASKS.iter().position(|x| *x == task).expect("known task");
            (f.rule_id.clone(), t)
        })
        .collect()
}

/// Runs the full 15,625-grid comparison for one roster; returns mismatches.
pub fn exhaustive_mismatches(human: &[bool; 3]) -> Vec<(Grid, ValidationMode)> {
    let mut bad = Vec::new();
    for grid in all_grids() {
        let bundle = grid_bundle(&grid, human);
        for (mode, strict) in [(ValidationMode::Strict, true), (ValidationMode::PaperCompat, false)] {
            let expected: BTreeSet<(String, usize)> = oracle(&grid, human, strict)
                .into_iter()
                .map(|(r, t)| (r.to_string(), t))
                .collect();
            if engine_findings(&bundle, mode) != expected {
                bad.push((grid, mode));
            }
        }
    }
    bad
}

// ------------------------------------------------- random valid bundles

/// Builds a random bundle whose matrix is legal by construction, then
/// confirms the engine agrees; loops until it does.
pub fn random_valid_bundle(rng: &mut ChaCha8Rng) -> MatrixBundle {
    loop {
        let bundle = random_bundle(rng);
        let report = validate_matrix(&bundle, ValidationMode::PaperCompat, &[]).expect("resolvable");
        if report.is_valid() {
            return bundle;
        }
    }
}

fn random_bundle(rng: &mut ChaCha8Rng) -> MatrixBundle {
    let humans = rng.random_range(1..=3);
    let agents = rng.random_range(1..=3);
    let mut actors = Vec::new();
    for i in 0..humans {
        actors.push(Actor::human(format!("human_{i}"), format!("Human {i}")));
    }
    for i in 0..agents {
        let provenance = if rng.random_bool(0.5) {
            Provenance::ThirdParty
        } else {
            Provenance::InHouse
        };
        actors.push(
            Actor::agent(format!("agent_{i}"), format!("Agent {i}"), provenance)
                .with_capability(format!("skill_{i}"), rng.random_range(0.5..=1.0)),
        );
    }
    let n_tasks = rng.random_range(1..=5);
    let mut tasks = Vec::new();
    let mut matrix = RaciMatrix::new();
    for t in 0..n_tasks {
        let id = format!("task_{t}");
        let mut task = Task::new(&id, format!("Task {t}"));
        for dep in 0..t {
            if rng.random_bool(0.4) {
                task = task.after(format!("task_{dep}"));
            }
        }
        if rng.random_bool(0.5) {
            task = task.requiring(format!("skill_{}", rng.random_range(0..agents)));
        }
        tasks.push(task);

        let mut row: Vec<Option<Role>> = vec![None; actors.len()];
        let r = rng.random_range(0..actors.len());
        row[r] = Some(Role::R);
        if rng.random_bool(0.2) {
            let extra = rng.random_range(0..actors.len());
            if row[extra].is_none() {
                row[extra] = Some(Role::R);
            }
        }
        let agent_r = row
            .iter()
            .enumerate()
            .any(|(i, c)| *c == Some(Role::R) && actors[i].is_agent());
        let human_slots: Vec<usize> = (0..humans).filter(|i| row[*i].is_none()).collect();
        if agent_r || rng.random_bool(0.6) {
            if let Some(&a) = human_slots.choose(rng) {
                row[a] = Some(Role::A);
            }
            if rng.random_bool(0.2) {
                if let Some(&a) = human_slots.choose(rng) {
                    if row[a].is_none() {
                        row[a] = Some(Role::A);
                    }
                }
            }
        }
        for cell in row.iter_mut().filter(|c| c.is_none()) {
            *cell = match rng.random_range(0..4) {
                0 => Some(Role::C),
                1 => Some(Role::I),
                _ => None,
            };
        }
        for (i, cell) in row.iter().enumerate() {
            if let Some(role) = cell {
                matrix.set(&id, &actors[i].id, RoleSet::single(*role));
            }
        }
    }
    let config = BundleConfig {
        quorum: Some(if rng.random_bool(0.5) { Quorum::All } else { Quorum::Any }),
        re_consult_on_reject: Some(rng.random_bool(0.5)),
        audit_enabled: Some(rng.random_bool(0.8)),
        ..BundleConfig::default()
    };
    MatrixBundle::new("simulated", actors, tasks, matrix)
        .expect("generated bundle is well formed")
        .with_config(config)
}

pub fn workflow_for(bundle: &MatrixBundle) -> WorkflowSpec {
    run_pipeline(bundle, &PipelineConfig::for_bundle(bundle))
        .expect("pipeline runs")
        .workflow
        .expect("valid bundle yields a workflow")
}

// ------------------------------------------------- simulated runs

pub struct SimOutcome {
    pub spec: WorkflowSpec,
    pub run: Run,
    pub jsonl: String,
}

pub fn simulate(seed: u64) -> SimOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bundle = random_valid_bundle(&mut rng);
    let spec = workflow_for(&bundle);
    let mut run = Run::start(spec.clone(), &format!("sim-{seed}"), Box::new(LogicalClock::default()))
        .expect("synthesized workflows are runnable");
    let agent = MockAgent::new().with_failures(0.15, seed);
    let mut desk = SimulatedDesk::new(seed, 0.3, 2);
    let report = Driver::new(&agent).retry_budget(1).drive(&mut run, &mut desk).expect("drive");
    assert_eq!(report.status, DriveStatus::Finished, "seed {seed} blocked");
    let jsonl = run.log().to_jsonl();
    SimOutcome { spec, run, jsonl }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn lines(jsonl: &str) -> Vec<Value> {
    jsonl
        .lines()
        .map(|l| serde_json::from_str(l).expect("log line parses"))
        .collect()
}

/// Tasks an LLM executed that completed without an approving verdict from
/// a human validator on the completed revision.
pub fn unsupervised_completions(spec: &WorkflowSpec, jsonl: &str) -> Vec<String> {
    let human: BTreeSet<&str> = spec
        .actors
        .iter()
        .filter(|a| a.kind == ActorKind::Human)
        .map(|a| a.id.as_str())
        .collect();
    let mut bad = Vec::new();
    let events = lines(jsonl);
    for (i, e) in events.iter().enumerate() {
        if e["type"] != "TaskCompleted" {
            continue;
        }
        let task = e["task_id"].as_str().expect("task id");
        let produced = events[..i]
            .iter()
            .rev()
            .find(|p| p["type"] == "ArtifactProduced" && p["task_id"] == task)
            .expect("completion follows an artifact");
        let producer = produced["actor_id"].as_str().expect("producer");
        let chain = spec.chain(task).expect("chain");
        let agent_involved = !human.contains(producer)
            || chain
                .gates
                .iter()
                .any(|g| g.kind == matrixgate::engine::GateKind::Execute && g.assistants.iter().any(|a| !human.contains(a.as_str())));
        if !agent_involved {
            continue;
        }
        let revision = &produced["payload"]["revision"];
        let approved = events[..i].iter().any(|v| {
            v["type"] == "VerdictRecorded"
                && v["task_id"] == task
                && v["payload"]["verdict"] == "approve"
                && &v["payload"]["revision"] == revision
                && v["actor_id"].as_str().is_some_and(|a| human.contains(a))
        });
        if !approved {
            bad.push(task.to_string());
        }
    }
    bad
}

/// Counts LLM-produced artifacts, and those whose consultation digests do
/// not match the latest recorded input of every consultant.
pub fn digest_coverage(spec: &WorkflowSpec, jsonl: &str) -> (usize, usize) {
    let events = lines(jsonl);
    let mut total = 0;
    let mut bad = 0;
    for (i, e) in events.iter().enumerate() {
        if e["type"] != "ArtifactProduced" {
            continue;
        }
        let actor = e["actor_id"].as_str().expect("producer");
        if spec.is_human(actor) {
            continue;
        }
        total += 1;
        let task = e["task_id"].as_str().expect("task");
        let mut latest: BTreeMap<&str, String> = BTreeMap::new();
        for c in &events[..i] {
            if c["type"] == "ConsultRecorded" && c["task_id"] == task {
                let content = c["payload"]["content"].as_str().expect("content");
                latest.insert(c["actor_id"].as_str().expect("consultant"), sha256_hex(content.as_bytes()));
            }
        }
        let consultants: BTreeSet<&str> = spec.chain(task).expect("chain").consultants().collect();
        let listed: Option<BTreeMap<&str, &str>> = e["payload"]["metadata"]["consultation_digests"]
            .as_array()
            .map(|a| {
                a.iter()
                    .map(|d| (d["actor_id"].as_str().unwrap_or(""), d["digest"].as_str().unwrap_or("")))
                    .collect()
            });
        let ok = listed.is_some_and(|listed| {
            listed.keys().copied().collect::<BTreeSet<_>>() == consultants
                && listed.iter().all(|(a, d)| latest.get(a).is_some_and(|l| l == d))
        });
        if !ok {
            bad += 1;
        }
    }
    (total, bad)
}

pub fn replay_matches(out: &SimOutcome) -> bool {
    replay(&out.spec, out.run.events()).is_ok_and(|state| &state == out.run.state())
}

/// Seq of the line that holds byte `pos` (newline included in its line).
pub fn line_seq_of(jsonl: &[u8], pos: usize) -> u64 {
    jsonl[..pos].iter().filter(|b| **b == b'\n').count() as u64 + 1
}

/// Flips one bit at `pos` and checks the verifier blames the right line.
pub fn tamper_detected(jsonl: &[u8], pos: usize) -> bool {
    let mut bytes = jsonl.to_vec();
    bytes[pos] ^= 0x01;
    verify_audit_text(&bytes) == ChainStatus::CorruptAt(line_seq_of(jsonl, pos))
}
