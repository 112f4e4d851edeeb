use std::collections::HashMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tasks::{
    BimodalConcept, BooleanConcept, Concept, Example, Hierarchy, Properties, RectangleConcept,
    TaskSpec,
};

fn rect(a: f64, b: f64, c: f64, d: f64) -> RectangleConcept {
    RectangleConcept::new(a, b, c, d).unwrap()
}

fn props(size: usize, color: usize, shape: usize, border: usize) -> Properties {
    Properties::from_values([size, color, shape, border]).unwrap()
}

// size: small 0, medium 1, large 2; color: red 0; shape: square 0, circle 1;
// border: solid 0, none 1
fn red() -> BooleanConcept {
    BooleanConcept::new([None, Some(0), None, None]).unwrap()
}

#[test]
fn corner_distance_examples() {
    let c = rect(0.0, 0.0, 10.0, 10.0);
    assert_eq!(corner_distance([[0.0, 0.0], [10.0, 10.0]], &c), 0.0);
    assert_eq!(corner_distance([[10.0, 0.0], [0.0, 10.0]], &c), 0.0);
    let d = corner_distance([[1.0, 1.0], [9.0, 9.0]], &c);
    assert!((d - 2.0 * 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn mode_distance_examples() {
    let c = BimodalConcept::new(4.0, 8.0).unwrap();
    assert_eq!(mode_distance([8.0, 4.0], &c), 0.0);
    assert!((mode_distance([3.5, 8.5], &c) - 0.5f64.sqrt()).abs() < 1e-12);
    let c = BimodalConcept::new(4.0, 20.0).unwrap();
    assert_eq!(mode_distance([4.0, 4.0], &c), 16.0);
}

#[test]
fn intuitive_match_examples() {
    let c = red();
    let large_red_square_plain = props(2, 0, 0, 1);
    let small_red_circle_border = props(0, 0, 1, 0);
    assert!(boolean_intuitive_match(&large_red_square_plain, &small_red_circle_border, &c).unwrap());
    assert!(!boolean_intuitive_match(&props(2, 0, 0, 0), &props(0, 0, 0, 0), &c).unwrap());
    let red_circle = BooleanConcept::new([None, Some(0), Some(1), None]).unwrap();
    let e = props(0, 0, 1, 0);
    assert!(!boolean_intuitive_match(&e, &e, &red_circle).unwrap());
    // a blue example is not consistent with "red"
    assert!(boolean_intuitive_match(&props(0, 1, 0, 0), &e, &c).is_err());
}

fn ape_tree() -> Hierarchy {
    let names = [
        ("ape", None),
        ("great ape", Some(0)),
        ("lesser ape", Some(0)),
        ("orangutan", Some(1)),
        ("gorilla", Some(1)),
        ("siamang", Some(2)),
        ("gibbon", Some(2)),
    ];
    let nodes: Vec<(String, Option<usize>)> =
        names.iter().map(|(n, p)| (n.to_string(), *p)).collect();
    let emb: HashMap<usize, Vec<Vec<f64>>> = (3..7).map(|i| (i, vec![vec![i as f64, 1.0]; 10])).collect();
    Hierarchy::new(nodes, &emb).unwrap()
}

#[test]
fn lca_match_examples() {
    let h = ape_tree();
    let id = |n| h.find(n).unwrap();
    assert!(lca_match(id("orangutan"), id("siamang"), id("ape"), &h).unwrap());
    assert!(!lca_match(id("siamang"), id("gibbon"), id("ape"), &h).unwrap());
    assert!(lca_match(id("gibbon"), id("gibbon"), id("gibbon"), &h).unwrap());
    assert!(lca_match(id("ape"), id("gibbon"), id("ape"), &h).is_err());
}

#[test]
fn corner_distance_zero_exactly_at_opposite_corners() {
    for (x0, y0, x1, y1) in [(0, 0, 2, 2), (-1, 0, 1, 3), (0, 0, 0, 2), (1, 1, 1, 1)] {
        let c = rect(x0 as f64, y0 as f64, x1 as f64, y1 as f64);
        let corners: Vec<[f64; 2]> = c.diagonals().iter().flat_map(|&(p, q)| [p, q]).collect();
        for xa in x0 - 1..=x1 + 1 {
            for ya in y0 - 1..=y1 + 1 {
                for xb in x0 - 1..=x1 + 1 {
                    for yb in y0 - 1..=y1 + 1 {
                        let (a, b) = ([xa as f64, ya as f64], [xb as f64, yb as f64]);
                        let opposite = c
                            .diagonals()
                            .iter()
                            .any(|&(p, q)| (a == p && b == q) || (a == q && b == p));
                        let zero = corner_distance([a, b], &c) == 0.0;
                        assert_eq!(zero, opposite, "{a:?} {b:?} in {c:?} ({corners:?})");
                    }
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn distances_ignore_example_order(
        xs in prop::array::uniform4(-10.0f64..10.0),
        p in prop::array::uniform2(-12.0f64..12.0),
        q in prop::array::uniform2(-12.0f64..12.0),
        m in prop::array::uniform2(0.0f64..20.0),
    ) {
        let c = rect(xs[0].min(xs[1]), xs[2].min(xs[3]), xs[0].max(xs[1]), xs[2].max(xs[3]));
        prop_assert_eq!(corner_distance([p, q], &c), corner_distance([q, p], &c));
        prop_assert!(corner_distance([p, q], &c) >= 0.0);
        let b = BimodalConcept::new(m[0].min(m[1]), m[0].max(m[1]) + 1e-9).unwrap();
        prop_assert_eq!(mode_distance([p[0], q[0]], &b), mode_distance([q[0], p[0]], &b));
    }

    #[test]
    fn match_flags_are_symmetric(ci in 0usize..107, i in 0usize..36, j in 0usize..36) {
        let c = BooleanConcept::all_valid(None)[ci];
        let (a, b) = (Properties::from_index(i), Properties::from_index(j));
        let ab = boolean_intuitive_match(&a, &b, &c).ok();
        let ba = boolean_intuitive_match(&b, &a, &c).ok();
        prop_assert_eq!(ab, ba);
        let h = ape_tree();
        let leaves = h.leaves();
        let (x, y) = (leaves[i % 4], leaves[j % 4]);
        let n = ci % h.node_count();
        prop_assert_eq!(lca_match(x, y, n, &h).unwrap(), lca_match(y, x, n, &h).unwrap());
    }
}

#[test]
fn exact_boolean_baseline_near_36_percent() {
    let p = boolean_random_match_exact(&[1, 2, 3]).unwrap();
    assert!((p - 0.36).abs() < 0.05, "{p}");
}

#[test]
fn random_boolean_policy_matches_enumeration() {
    let task = TaskSpec::boolean();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = evaluate_policy(Policy::Random, &task, PolicyNets::default(), 20_000, &mut rng).unwrap();
    let exact = boolean_random_match_exact(&[1, 2, 3]).unwrap();
    assert!((r.match_rate().unwrap() - exact).abs() < 0.015);
    assert_eq!(r.summary.consistent_rate, 1.0);
}

#[test]
fn random_bimodal_policy_distance() {
    let task = TaskSpec::bimodal();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let r = evaluate_policy(Policy::Random, &task, PolicyNets::default(), 200_000, &mut rng).unwrap();
    assert!((r.mean() - 3.69).abs() < 0.15, "{} {}", r.mean(), r.summary.std);
    assert!(r.match_rate().is_none());
}

#[test]
fn exact_corner_teacher_scores_zero() {
    let task = TaskSpec::rectangle();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut eps = Vec::new();
    for _ in 0..50 {
        let c = crate::tasks::sample_concept(&task, &mut rng);
        let Concept::Rectangle(r) = c else { unreachable!() };
        let (p, q) = r.diagonals()[0];
        let ex = vec![Example::Point(p.to_vec()), Example::Point(q.to_vec())];
        let (metric, _) = score_examples(&task, &c, &ex).unwrap();
        eps.push(EpisodeRecord {
            concept: c,
            examples: ex,
            metric,
            matched: None,
            consistent: 2,
            loss: None,
        });
    }
    let rep = StrategyReport::from_episodes(Policy::Teacher, task.kind, eps);
    assert_eq!(rep.mean(), 0.0);
    assert_eq!(rep.summary.n, 50);
}

#[test]
fn teacher_policy_requires_networks() {
    let task = TaskSpec::rectangle();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    assert!(evaluate_policy(Policy::Teacher, &task, PolicyNets::default(), 10, &mut rng).is_err());
}

#[test]
fn reports_write_csv_and_summary() {
    let task = TaskSpec::boolean();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r = evaluate_policy(Policy::Random, &task, PolicyNets::default(), 20, &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.write_csv(&dir.path().join("e.csv")).unwrap();
    r.write_summary(&dir.path().join("s.json")).unwrap();
    write_plot_data(&[&r], &dir.path().join("p.csv")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert_eq!(text.lines().count(), 21);
    let s: ReportSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(s, r.summary);
}
