mod support;

use std::collections::BTreeSet;

use matrixgate::engine::{EventType, TaskStatus};
use matrixgate::{actors_with_role, Role};
use support::*;

const SEEDS: u64 = 200;

#[test]
fn llm_work_never_completes_without_human_approval() {
    for seed in 0..SEEDS {
        let out = simulate(seed);
        let bad = unsupervised_completions(&out.spec, &out.jsonl);
        assert!(bad.is_empty(), "seed {seed}: {bad:?}");
    }
}

#[test]
fn agent_artifacts_carry_current_consultation_digests() {
    let mut total = 0;
    for seed in 0..SEEDS {
        let out = simulate(seed);
        let (n, bad) = digest_coverage(&out.spec, &out.jsonl);
        assert_eq!(bad, 0, "seed {seed}");
        total += n;
    }
    assert!(total > SEEDS as usize, "too few agent artifacts exercised: {total}");
}

#[test]
fn replay_rebuilds_every_simulated_state() {
    for seed in 0..SEEDS {
        let out = simulate(seed);
        assert!(replay_matches(&out), "seed {seed}");
    }
}

#[test]
fn random_tamper_positions_are_located() {
    let mut rng_pos = 0x9e37_79b9_7f4a_7c15u64;
    for seed in 0..50 {
        let out = simulate(seed);
        let bytes = out.jsonl.as_bytes();
        for _ in 0..20 {
            rng_pos = rng_pos.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let pos = (rng_pos >> 33) as usize % bytes.len();
            assert!(tamper_detected(bytes, pos), "seed {seed} pos {pos}");
        }
    }
}

#[test]
fn revisions_rise_only_on_rejection_and_complete_is_final() {
    for seed in 0..SEEDS {
        let out = simulate(seed);
        for (task_id, task) in &out.run.state().tasks {
            let rejections = out
                .run
                .events()
                .iter()
                .filter(|e| e.kind == EventType::VerdictRecorded && e.task_id.as_deref() == Some(task_id))
                .filter(|e| e.payload["verdict"] == "reject")
                .count();
            assert_eq!(task.revision as usize, rejections, "seed {seed} {task_id}");
            let completed_at = out.run.events().iter().position(|e| {
                e.kind == EventType::TaskCompleted && e.task_id.as_deref() == Some(task_id)
            });
            if let Some(at) = completed_at {
                assert_eq!(task.status, TaskStatus::Complete);
                let later = out.run.events()[at + 1..].iter().any(|e| {
                    e.task_id.as_deref() == Some(task_id)
                        && !matches!(e.kind, EventType::Notified)
                });
                assert!(!later, "seed {seed}: {task_id} changed after completion");
            }
        }
    }
}

#[test]
fn completed_tasks_notify_exactly_the_informed() {
    for seed in 0..SEEDS {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let bundle = random_valid_bundle(&mut rng);
        let policy = bundle.config.cell_policy.unwrap_or_default();
        let matrix = bundle.resolve(policy).unwrap();
        let out = simulate(seed);
        for (task_id, task) in &out.run.state().tasks {
            if task.status != TaskStatus::Complete {
                continue;
            }
            let notified: BTreeSet<&str> = out
                .run
                .events()
                .iter()
                .filter(|e| e.kind == EventType::Notified && e.task_id.as_deref() == Some(task_id))
                .filter_map(|e| e.actor_id.as_deref())
                .collect();
            let informed: BTreeSet<&str> = actors_with_role(&matrix, task_id, Role::I).unwrap().into_iter().collect();
            assert_eq!(notified, informed, "seed {seed} {task_id}");
        }
    }
}

#[test]
fn simulations_are_deterministic() {
    for seed in [0, 7, 99] {
        assert_eq!(simulate(seed).jsonl, simulate(seed).jsonl);
    }
}
