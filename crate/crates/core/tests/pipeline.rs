use proptest::prelude::*;
use serde_json::json;
use teachnet_core::harness::{evaluate_checkpoints, run_experiment, ExperimentConfig};
use teachnet_core::oracle::{fixed_point, read_domain_csv, write_domain_csv, DiscreteDomain};
use teachnet_core::training::{TrainedPair, TrainingMode};

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

#[test]
fn oracle_solves_a_domain_read_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("domain.csv");
    let domain = DiscreteDomain::uniform(
        vec!["A".into(), "B".into()],
        names("e", 3),
        vec![vec![true, true, false], vec![false, true, true]],
    )
    .unwrap();
    write_domain_csv(&domain, &path).unwrap();
    let loaded = read_domain_csv(&path).unwrap();
    assert_eq!(loaded, domain);

    let state = fixed_point(&loaded, 1.0, 1000, 1e-14).unwrap();
    assert!(state.converged);
    let want = [[2.0 / 3.0, 1.0 / 3.0, 0.0], [0.0, 1.0 / 3.0, 2.0 / 3.0]];
    for (row, w) in state.teacher.iter().zip(want) {
        for (p, q) in row.iter().zip(w) {
            assert!((p - q).abs() < 1e-12, "{row:?}");
        }
    }
}

#[test]
fn experiment_checkpoints_reload_and_reevaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = serde_json::from_value(json!({
        "regime": "joint",
        "train": {
            "task": {"kind": "bimodal"},
            "hidden": 8,
            "batch_size": 8,
            "student_iterations": 5,
            "teacher_iterations": 5,
            "joint_iterations": 5
        },
        "eval_episodes": 20,
        "output_dir": dir.path().join("run"),
        "seed": 9
    }))
    .unwrap();
    let trained = run_experiment(&cfg).unwrap();
    let checkpoints = dir.path().join("run/checkpoints");
    let pair = TrainedPair::load(&checkpoints, TrainingMode::Joint).unwrap();
    assert_eq!(pair.teacher.hidden(), 8);

    let mut again = cfg.clone();
    again.output_dir = dir.path().join("again");
    let reloaded = evaluate_checkpoints(&again, &checkpoints).unwrap();
    assert_eq!(
        serde_json::to_value(&trained.reports).unwrap(),
        serde_json::to_value(&reloaded.reports).unwrap()
    );
}

fn domain_strategy() -> impl Strategy<Value = DiscreteDomain> {
    (1usize..5, 1usize..6).prop_flat_map(|(c, e)| {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), e), c).prop_map(move |mut rows| {
            for (i, row) in rows.iter_mut().enumerate() {
                row[i % e] = true;
            }
            DiscreteDomain::uniform(names("c", c), names("e", e), rows).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn fixed_point_teacher_rows_are_distributions_on_consistent_examples(
        domain in domain_strategy(),
        alpha in 0.5f64..4.0,
    ) {
        let state = fixed_point(&domain, alpha, 500, 1e-12).unwrap();
        for (row, mask) in state.teacher.iter().zip(&domain.consistent) {
            let total: f64 = row.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (p, &ok) in row.iter().zip(mask) {
                prop_assert!(*p >= 0.0);
                if !ok {
                    prop_assert_eq!(*p, 0.0);
                }
            }
        }
        for (e, row) in state.student.probs.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if state.student.undefined[e] {
                prop_assert_eq!(total, 0.0);
            } else {
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }
}
