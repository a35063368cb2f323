use matrixgate::io::{parse_bundle, parse_bundle_bytes, serialize_bundle, ParseError};
use matrixgate::model::{BundleConfig, Quorum, Task};
use matrixgate::{Actor, CellPolicy, MatrixBundle, Provenance, RaciMatrix, RoleSet, ValidationMode};
use proptest::prelude::*;

fn role_set() -> impl Strategy<Value = Option<RoleSet>> {
    prop_oneof![
        3 => Just(None),
        1 => proptest::sample::select(
            ["R", "A", "C", "I", "I/C"].map(|c| c.parse::<RoleSet>().unwrap()).to_vec()
        )
        .prop_map(Some),
    ]
}

prop_compose! {
    fn bundle()(
        kinds in proptest::collection::vec((any::<bool>(), 0u8..3, proptest::collection::vec(0.0f64..=1.0, 0..3)), 1..5),
        n_tasks in 1usize..5,
        facing in proptest::collection::vec(any::<bool>(), 5),
        deps in proptest::collection::vec(any::<bool>(), 10),
        cells in proptest::collection::vec(role_set(), 25),
        policy in proptest::option::of(prop_oneof![
            Just(CellPolicy::Strict), Just(CellPolicy::PreferConsulted), Just(CellPolicy::PreferInformed)
        ]),
        mode in proptest::option::of(prop_oneof![Just(ValidationMode::Strict), Just(ValidationMode::PaperCompat)]),
        quorum in proptest::option::of(prop_oneof![Just(Quorum::All), Just(Quorum::Any)]),
    ) -> MatrixBundle {
        let actors: Vec<Actor> = kinds
            .iter()
            .enumerate()
            .map(|(i, (human, prov, caps))| {
                if *human {
                    Actor::human(format!("h{i}"), format!("Human {i}"))
                } else {
                    let provenance = match prov {
                        0 => Provenance::InHouse,
                        _ => Provenance::ThirdParty,
                    };
                    caps.iter().enumerate().fold(
                        Actor::agent(format!("g{i}"), format!("Agent \"{i}\""), provenance),
                        |a, (c, p)| a.with_capability(format!("cap_{c}"), *p),
                    )
                }
            })
            .collect();
        let mut tasks = Vec::new();
        let mut k = 0;
        for t in 0..n_tasks {
            let mut task = Task::new(format!("t{t}"), format!("Task {t} ü")).producing("doc");
            if facing[t] {
                task = task.stakeholder_facing();
            }
            for d in 0..t {
                if deps[k % deps.len()] {
                    task = task.after(format!("t{d}"));
                }
                k += 1;
            }
            tasks.push(task);
        }
        let mut matrix = RaciMatrix::new();
        for (t, task) in tasks.iter().enumerate() {
            for (a, actor) in actors.iter().enumerate() {
                if let Some(cell) = cells[(t * 5 + a) % cells.len()] {
                    matrix.set(&task.id, &actor.id, cell);
                }
            }
        }
        let config = BundleConfig { cell_policy: policy, mode, quorum, ..BundleConfig::default() };
        MatrixBundle::new("phase", actors, tasks, matrix).unwrap().with_config(config)
    }
}

proptest! {
    #[test]
    fn parse_inverts_serialize(b in bundle()) {
        let text = serialize_bundle(&b);
        let back = parse_bundle(&text).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(serialize_bundle(&back), text);
    }

    #[test]
    fn parser_never_panics_on_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        if let Err(ParseError::Syntax { line, .. }) = parse_bundle_bytes(&bytes) {
            prop_assert!(line >= 1);
        }
    }

    #[test]
    fn parser_never_panics_on_mutated_documents(b in bundle(), pos in any::<prop::sample::Index>(), byte in any::<u8>()) {
        let mut bytes = serialize_bundle(&b).into_bytes();
        let i = pos.index(bytes.len());
        bytes[i] = byte;
        match parse_bundle_bytes(&bytes) {
            Ok(_) => {}
            Err(ParseError::Syntax { line, .. }) => prop_assert!(line >= 1),
            Err(_) => {}
        }
    }
}

#[test]
fn unknown_actor_in_matrix_is_a_reference_error() {
    let mut doc: serde_json::Value = serde_json::from_str(matrixgate::DEVOPS_PLANNING).unwrap();
    doc["matrix"]["sprint_planning"]["QA"] = "I".into();
    assert!(matches!(parse_bundle(&doc.to_string()), Err(ParseError::Reference(_))));
}

#[test]
fn non_artefact_task_is_rejected_at_parse_time() {
    let text = matrixgate::DEVOPS_PLANNING.replacen("\"artefact_based\": true", "\"artefact_based\": false", 1);
    let err = parse_bundle(&text).unwrap_err();
    assert!(matches!(err, ParseError::Step1Violation(_)), "{err:?}");
    assert!(err.to_string().contains("STEP1-ARTEFACT"), "{err}");
}

#[test]
fn syntax_errors_carry_location() {
    match parse_bundle("{\n  \"phase\": ,\n}") {
        Err(ParseError::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 12)),
        other => panic!("{other:?}"),
    }
}
