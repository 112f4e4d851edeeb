//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a harness-less test target. Every criterion is evaluated and
//! reported; the process exits non-zero on a failure only when
//! `ACCEPTANCE_STRICT=1` is set.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use teachnet_core::harness::{
    bimodal_study_concepts, run_experiment, ExperimentConfig, ExperimentOutcome, Regime, StudyTask,
};
use teachnet_core::metrics::{
    boolean_intuitive_match, boolean_random_match_exact, corner_distance, lca_match, mode_distance,
    Policy,
};
use teachnet_core::nets::gumbel_softmax;
use teachnet_core::numkernel::{Bindings, ComputeGraph, NodeId, ParamStore, Tensor};
use teachnet_core::oracle::{fixed_point, DiscreteDomain};
use teachnet_core::tasks::{
    build_synthetic_hierarchy_levels, BimodalConcept, BooleanConcept, Properties, RectangleConcept,
    TaskKind, ALL_PROPERTY_COUNTS, RECT_BOUND,
};
use teachnet_core::training::TrainConfig;
use teachnet_service::{serve, AppState, Checkpoints, TeacherPair};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

// ---------------------------------------------------------------- gradients

const GRAPH_OPS: [&str; 13] = [
    "matmul", "add", "sub", "mul", "add_bias", "scale", "tanh", "sigmoid", "relu", "softmax",
    "concat", "slice", "const",
];

struct RandomGraph {
    graph: ComputeGraph,
    params: ParamStore,
    loss: NodeId,
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 2]) -> Tensor {
    let data = (0..shape[0] * shape[1]).map(|_| rng.random_range(-1.5..1.5)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn build_random_graph(rng: &mut ChaCha8Rng, forced_op: &str, forced_loss: usize) -> RandomGraph {
    let rows = rng.random_range(1..=3);
    let mut g = ComputeGraph::new();
    let mut params = ParamStore::new();
    let mut fresh = |g: &mut ComputeGraph, rng: &mut ChaCha8Rng, shape: [usize; 2]| -> NodeId {
        let name = format!("p{}", params.iter().count());
        params.insert(name.clone(), random_tensor(rng, shape));
        g.param(&name, shape).unwrap()
    };
    let width = rng.random_range(2..=4);
    let mut pool = vec![fresh(&mut g, rng, [rows, width])];
    let steps = rng.random_range(3..=7);
    for step in 0..steps {
        let x = *pool.choose(rng).unwrap();
        let [_, n] = g.shape(x);
        let op = if step == 0 {
            forced_op
        } else {
            GRAPH_OPS[rng.random_range(0..GRAPH_OPS.len())]
        };
        let y = match op {
            "matmul" => {
                let k = rng.random_range(1..=4);
                let w = fresh(&mut g, rng, [n, k]);
                g.matmul(x, w).unwrap()
            }
            "add" | "sub" | "mul" => {
                let other = pool
                    .iter()
                    .copied()
                    .find(|&o| o != x && g.shape(o) == g.shape(x))
                    .unwrap_or_else(|| fresh(&mut g, rng, [rows, n]));
                match op {
                    "add" => g.add(x, other),
                    "sub" => g.sub(x, other),
                    _ => g.mul(x, other),
                }
                .unwrap()
            }
            "add_bias" => {
                let b = fresh(&mut g, rng, [1, n]);
                g.add_bias(x, b).unwrap()
            }
            "scale" => g.scale(x, rng.random_range(-2.0..2.0)).unwrap(),
            "tanh" => g.tanh(x),
            "sigmoid" => g.sigmoid(x),
            "relu" => g.relu(x),
            "softmax" => g.softmax(x),
            "concat" => {
                let other = *pool.choose(rng).unwrap();
                g.concat(x, other).unwrap()
            }
            "slice" if n >= 2 => {
                let start = rng.random_range(0..n - 1);
                let end = rng.random_range(start + 1..=n);
                g.slice(x, start, end).unwrap()
            }
            "slice" => g.tanh(x),
            "const" => {
                let c = g.constant(random_tensor(rng, [rows, n])).unwrap();
                g.mul(x, c).unwrap()
            }
            other => unreachable!("unknown op {other}"),
        };
        pool.push(y);
    }
    let x = *pool.last().unwrap();
    let shape = g.shape(x);
    let loss = match forced_loss % 3 {
        0 => g.reduce_sum(x),
        1 => {
            let t = fresh(&mut g, rng, shape);
            g.squared_error(x, t).unwrap()
        }
        _ => {
            let t = fresh(&mut g, rng, shape);
            let t = g.softmax(t);
            g.softmax_cross_entropy(x, t).unwrap()
        }
    };
    // mix in an earlier node so interior branches carry gradient too
    let first = g.reduce_sum(pool[1]);
    let loss = g.add(loss, first).unwrap();
    RandomGraph {
        graph: g,
        params,
        loss,
    }
}

fn loss_at(rg: &RandomGraph, params: &ParamStore) -> f64 {
    let mut b = Bindings::new();
    b.bind_all(params.iter());
    rg.graph.forward(&b).unwrap().get(rg.loss).item()
}

fn gradient_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let graphs = 150;
    let h = 1e-5;
    let mut kinds = BTreeSet::new();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for i in 0..graphs {
        let rg = build_random_graph(&mut rng, GRAPH_OPS[i % GRAPH_OPS.len()], i);
        for id in rg.graph.node_ids() {
            kinds.insert(rg.graph.op(id).kind());
        }
        let mut b = Bindings::new();
        b.bind_all(rg.params.iter());
        let ev = rg.graph.forward(&b).unwrap();
        let grads = rg.graph.backward(&ev, rg.loss).unwrap();
        for (name, value) in rg.params.iter() {
            for k in 0..value.len() {
                let at = |d: f64| {
                    let mut p = rg.params.clone();
                    p.get_mut(name).unwrap().data_mut()[k] += d;
                    loss_at(&rg, &p)
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                worst = worst.max(rel_err(grads[name].data()[k], fd));
                checked += 1;
            }
        }
    }

    // the straight-through op is piecewise constant; its backward pass is
    // the identity by definition
    let mut g = ComputeGraph::new();
    let x = g.param("x", [2, 5]).unwrap();
    let w = g.param("w", [2, 5]).unwrap();
    let st = g.straight_through_one_hot(x);
    let prod = g.mul(st, w).unwrap();
    let loss = g.reduce_sum(prod);
    let mut params = ParamStore::new();
    params.insert("x", random_tensor(&mut rng, [2, 5]));
    params.insert("w", random_tensor(&mut rng, [2, 5]));
    let mut b = Bindings::new();
    b.bind_all(params.iter());
    let ev = g.forward(&b).unwrap();
    let grads = g.backward(&ev, loss).unwrap();
    let st_ok = grads["x"].data() == params.get("w").unwrap().data();
    kinds.insert(g.op(st).kind());

    let expected = [
        "leaf", "const", "matmul", "add", "sub", "mul", "add_bias", "scale", "tanh", "sigmoid",
        "relu", "softmax", "concat", "slice", "reduce_sum", "squared_error",
        "softmax_cross_entropy", "straight_through_one_hot",
    ];
    let missing: Vec<&str> = expected.iter().copied().filter(|k| !kinds.contains(k)).collect();
    verdict(
        worst <= 1e-4 && st_ok && missing.is_empty(),
        format!(
            "{graphs} random graphs, {checked} partials, max rel err {worst:.2e} (<= 1e-4), \
             {} op kinds covered{}, straight-through identity {}",
            kinds.len(),
            if missing.is_empty() { String::new() } else { format!(" (missing {missing:?})") },
            if st_ok { "ok" } else { "wrong" }
        ),
    )
}

// ------------------------------------------------------------------ gumbel

fn gumbel_law() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let logits: Vec<f64> = (0..36).map(|_| rng.random_range(-2.0..2.0)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let probs: Vec<f64> = logits.iter().map(|l| (l - max).exp() / z).collect();
    let n = 10_000;
    let mut counts = vec![0usize; 36];
    for _ in 0..n {
        let s = gumbel_softmax(&logits, 0.5, &mut rng, true).unwrap();
        counts[s.iter().position(|&v| v == 1.0).unwrap()] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new(35.0).unwrap().cdf(stat);
    verdict(
        p > 0.01,
        format!("chi-square {stat:.2} on 35 dof, p = {p:.4} (> 0.01), {n} hard samples"),
    )
}

// --------------------------------------------------------- trained regimes

fn experiment(kind: TaskKind, regime: Regime, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        regime,
        train: TrainConfig::for_task(kind),
        eval_episodes: 1000,
        output_dir: out.to_path_buf(),
        seed: 0,
        ..ExperimentConfig::default()
    }
}

fn summary(o: &ExperimentOutcome, p: Policy) -> &teachnet_core::metrics::ReportSummary {
    &o.report(p).expect("policy evaluated").summary
}

fn rectangle(work: &Path) -> Verdict {
    let t = Instant::now();
    let o = run_experiment(&experiment(TaskKind::Rectangle, Regime::Br, &work.join("rectangle"))).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let (teacher, random) = (summary(&o, Policy::Teacher), summary(&o, Policy::Random));
    let ratio = teacher.mean / random.mean;
    let inside = teacher.consistent_rate;
    verdict(
        ratio < 0.5 && inside >= 0.9 && secs <= 600.0,
        format!(
            "corner distance teacher {:.3} vs random {:.3} (ratio {ratio:.3}, need < 0.5); \
             teacher examples inside {:.1}% (need >= 90%); {secs:.0}s",
            teacher.mean,
            random.mean,
            inside * 100.0
        ),
    )
}

/// Standard normal by the Box-Muller transform.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Expected distance between two prior examples and the modes, by direct
/// simulation of the generative process.
fn bimodal_random_mc(samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut total = 0.0;
    for _ in 0..samples {
        let (a, b): (f64, f64) = (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
        let modes = [a.min(b), a.max(b)];
        let mut e = [0.0f64; 2];
        for x in &mut e {
            *x = modes[rng.random_range(0..2)] + normal(rng);
        }
        let direct = ((e[0] - modes[0]).powi(2) + (e[1] - modes[1]).powi(2)).sqrt();
        let swapped = ((e[1] - modes[0]).powi(2) + (e[0] - modes[1]).powi(2)).sqrt();
        total += direct.min(swapped);
    }
    total / samples as f64
}

fn bimodal(work: &Path) -> (Verdict, Option<TeacherPair>) {
    let t = Instant::now();
    let mut cfg = experiment(TaskKind::Bimodal, Regime::Br, &work.join("bimodal"));
    cfg.train.teacher_iterations = 15_000;
    let o = run_experiment(&cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let (teacher, random) = (summary(&o, Policy::Teacher).clone(), summary(&o, Policy::Random).clone());
    let mc = bimodal_random_mc(1_000_000, &mut ChaCha8Rng::seed_from_u64(77));
    let mc_err = (random.mean - mc).abs() / mc;
    let ratio = teacher.mean / random.mean;
    let pair = o.pair.map(|p| TeacherPair {
        teacher: p.teacher,
        student: p.student,
    });
    let v = verdict(
        ratio < 0.5 && mc_err <= 0.05 && secs <= 600.0,
        format!(
            "mode distance teacher {:.3} vs random {:.3} (ratio {ratio:.3}, need < 0.5); \
             random vs Monte Carlo {mc:.3}: {:.2}% (need <= 5%); {secs:.0}s",
            teacher.mean,
            random.mean,
            mc_err * 100.0
        ),
    );
    (v, pair)
}

/// Group sizes of the boolean properties: size, color, shape, border.
const GROUPS: [usize; 4] = [3, 3, 2, 2];

fn all_images() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..2 {
                for d in 0..2 {
                    out.push([a, b, c, d]);
                }
            }
        }
    }
    out
}

fn concepts_with(k: usize) -> Vec<[Option<usize>; 4]> {
    let mut out = Vec::new();
    let total: usize = GROUPS.iter().map(|s| s + 1).product();
    for mut code in 0..total {
        let mut c = [None; 4];
        for (g, slot) in c.iter_mut().enumerate() {
            let v = code % (GROUPS[g] + 1);
            code /= GROUPS[g] + 1;
            *slot = v.checked_sub(1);
        }
        if c.iter().filter(|x| x.is_some()).count() == k {
            out.push(c);
        }
    }
    out
}

fn fits(img: &[usize; 4], c: &[Option<usize>; 4]) -> bool {
    (0..4).all(|g| c[g].is_none_or(|v| v == img[g]))
}

/// Two consistent images match when they agree on exactly the constrained
/// groups.
fn intuitive(a: &[usize; 4], b: &[usize; 4], c: &[Option<usize>; 4]) -> bool {
    (0..4).all(|g| (a[g] == b[g]) == c[g].is_some())
}

fn boolean_random_enumerated() -> f64 {
    let images = all_images();
    let per_k: Vec<f64> = ALL_PROPERTY_COUNTS
        .iter()
        .map(|&k| {
            let concepts = concepts_with(k);
            concepts
                .iter()
                .map(|c| {
                    let pool: Vec<&[usize; 4]> = images.iter().filter(|i| fits(i, c)).collect();
                    let hits = pool
                        .iter()
                        .flat_map(|a| pool.iter().map(move |b| (a, b)))
                        .filter(|(a, b)| intuitive(a, b, c))
                        .count();
                    hits as f64 / (pool.len() * pool.len()) as f64
                })
                .sum::<f64>()
                / concepts.len() as f64
        })
        .collect();
    per_k.iter().sum::<f64>() / per_k.len() as f64
}

fn boolean(work: &Path) -> Verdict {
    let t = Instant::now();
    let br = run_experiment(&experiment(TaskKind::Boolean, Regime::Br, &work.join("boolean-br"))).unwrap();
    let joint = run_experiment(&experiment(TaskKind::Boolean, Regime::Joint, &work.join("boolean-joint"))).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let teacher = summary(&br, Policy::Teacher).mean;
    let random = summary(&br, Policy::Random).mean;
    let joint_rate = summary(&joint, Policy::Joint).mean;
    let exact = boolean_random_match_exact(&ALL_PROPERTY_COUNTS).unwrap();
    let enumerated = boolean_random_enumerated();
    let in_band = |x: f64| (x - 0.36).abs() <= 0.05;
    verdict(
        teacher >= 0.60
            && in_band(random)
            && in_band(exact)
            && (exact - enumerated).abs() < 1e-12
            && joint_rate <= 0.15
            && secs <= 900.0,
        format!(
            "BR teacher match {teacher:.3} (need >= 0.60); random {random:.3}, exact {exact:.4}, \
             independent enumeration {enumerated:.4} (need 0.36 +/- 0.05); joint {joint_rate:.3} \
             (need <= 0.15); {secs:.0}s"
        ),
    )
}

fn hierarchy(work: &Path) -> Verdict {
    let t = Instant::now();
    let br = run_experiment(&experiment(TaskKind::Hierarchy, Regime::Br, &work.join("hierarchy-br"))).unwrap();
    let joint =
        run_experiment(&experiment(TaskKind::Hierarchy, Regime::Joint, &work.join("hierarchy-joint"))).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let task = br.pair.as_ref().map(|p| p.teacher.arch.task);
    let h = TrainConfig::for_task(TaskKind::Hierarchy).task.build().unwrap();
    let h = h.hierarchy_ref().unwrap();
    let interior: HashSet<usize> = h.interior_nodes().into_iter().collect();
    let evaluated: HashSet<usize> = br
        .report(Policy::Teacher)
        .unwrap()
        .episodes
        .iter()
        .filter_map(|e| match e.concept {
            teachnet_core::tasks::Concept::Node(n) => Some(n),
            _ => None,
        })
        .collect();
    let teacher = summary(&br, Policy::Teacher).mean;
    let joint_rate = summary(&joint, Policy::Joint).mean;
    verdict(
        task == Some(TaskKind::Hierarchy)
            && h.node_count() == 16
            && evaluated == interior
            && teacher >= 0.90
            && joint_rate <= 0.30
            && secs <= 900.0,
        format!(
            "{} concepts, {} interior nodes all evaluated: {}; BR LCA match {teacher:.3} \
             (need >= 0.90); joint {joint_rate:.3} (need <= 0.30); {secs:.0}s",
            h.node_count(),
            interior.len(),
            evaluated == interior
        ),
    )
}

// ------------------------------------------------------------------ oracle

fn oracle() -> Verdict {
    let ab = DiscreteDomain::uniform(
        vec!["A".into(), "B".into()],
        vec!["e1".into(), "e2".into(), "e3".into()],
        vec![vec![true, true, false], vec![false, true, true]],
    )
    .unwrap();
    let st = fixed_point(&ab, 1.0, 100_000, 1e-14).unwrap();
    let want = [[2.0 / 3.0, 1.0 / 3.0, 0.0], [0.0, 1.0 / 3.0, 2.0 / 3.0]];
    let ab_err = st
        .teacher
        .iter()
        .zip(&want)
        .flat_map(|(r, w)| r.iter().zip(w).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut violations = 0usize;
    for d in 0..1000 {
        let nc = rng.random_range(1..=6);
        let ne = rng.random_range(1..=8);
        let consistent: Vec<Vec<bool>> = (0..nc)
            .map(|_| {
                let mut row: Vec<bool> = (0..ne).map(|_| rng.random_bool(0.5)).collect();
                let forced = rng.random_range(0..ne);
                row[forced] = true;
                row
            })
            .collect();
        let w: Vec<f64> = (0..nc).map(|_| rng.random_range(0.05..1.0)).collect();
        let z: f64 = w.iter().sum();
        let prior = w.iter().map(|x| x / z).collect();
        let domain = DiscreteDomain::new(
            (0..nc).map(|c| format!("c{c}")).collect(),
            (0..ne).map(|e| format!("e{e}")).collect(),
            consistent.clone(),
            prior,
        )
        .unwrap();
        let alpha = [0.5, 1.0, 2.0, 5.0][d % 4];
        let st = fixed_point(&domain, alpha, 2000, 1e-12).unwrap();
        for (c, row) in st.teacher.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            let outside = row.iter().zip(&consistent[c]).any(|(&p, &m)| !m && p != 0.0);
            let negative = row.iter().any(|&p| !(p >= 0.0));
            if (sum - 1.0).abs() > 1e-9 || outside || negative {
                violations += 1;
            }
        }
        for (e, row) in st.student.probs.iter().enumerate() {
            let produced = (0..nc).any(|c| consistent[c][e]);
            let sum: f64 = row.iter().sum();
            let outside = (0..nc).any(|c| !consistent[c][e] && row[c] != 0.0);
            let normalized = if st.student.undefined[e] { sum == 0.0 } else { (sum - 1.0).abs() <= 1e-9 };
            if outside || !normalized || (produced && st.student.undefined[e]) {
                violations += 1;
            }
        }
    }
    verdict(
        ab_err <= 1e-8 && violations == 0,
        format!(
            "A/B fixed point max error {ab_err:.1e} (<= 1e-8) after {} iterations; \
             1000 random domains, {violations} support/normalization violations",
            st.iterations
        ),
    )
}

// ----------------------------------------------------------------- metrics

fn metric_oracles() -> Verdict {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();

    let mut corner_err: f64 = 0.0;
    for _ in 0..n {
        let c = RectangleConcept::sample(&mut rng);
        let [x0, y0, x1, y1] = c.to_array();
        let corners = [[x0, y0], [x0, y1], [x1, y0], [x1, y1]];
        let mut pt = || [rng.random_range(-RECT_BOUND..RECT_BOUND), rng.random_range(-RECT_BOUND..RECT_BOUND)];
        let e = [pt(), pt()];
        let mut best = f64::INFINITY;
        for p in &corners {
            for q in &corners {
                if p[0] != q[0] && p[1] != q[1] {
                    best = best.min(d(e[0], *p) + d(e[1], *q));
                }
            }
        }
        corner_err = corner_err.max((corner_distance(e, &c) - best).abs());
    }

    let mut mode_err: f64 = 0.0;
    for _ in 0..n {
        let c = BimodalConcept::sample(&mut rng);
        let e = [rng.random_range(-5.0..25.0), rng.random_range(-5.0..25.0)];
        let [m1, m2] = c.to_array();
        let best = d(e, [m1, m2]).min(d(e, [m2, m1]));
        mode_err = mode_err.max((mode_distance(e, &c) - best).abs());
    }

    let concepts = BooleanConcept::all_valid(None);
    let mut bool_mismatch = 0usize;
    for _ in 0..n {
        let c = concepts.choose(&mut rng).unwrap();
        let pool = c.consistent_candidates();
        let (a, b) = (Properties::from_index(*pool.choose(&mut rng).unwrap()), Properties::from_index(*pool.choose(&mut rng).unwrap()));
        let mine = intuitive(&a.values(), &b.values(), &c.constraints());
        if boolean_intuitive_match(&a, &b, c).unwrap() != mine {
            bool_mismatch += 1;
        }
    }

    let mut lca_mismatch = 0usize;
    let mut lca_instances = 0usize;
    while lca_instances < n {
        let levels = rng.random_range(1..=3);
        let branching: Vec<usize> = (0..levels).map(|_| rng.random_range(2..=4)).collect();
        let h = build_synthetic_hierarchy_levels(&branching, 4, &mut rng).unwrap();
        let parent = |i: usize| h.node(i).parent;
        let leaves = h.leaves();
        for _ in 0..500 {
            let (a, b) = (*leaves.choose(&mut rng).unwrap(), *leaves.choose(&mut rng).unwrap());
            let c = rng.random_range(0..h.node_count());
            let mut up = HashSet::new();
            let mut cur = Some(a);
            while let Some(x) = cur {
                up.insert(x);
                cur = parent(x);
            }
            let mut meet = b;
            while !up.contains(&meet) {
                meet = parent(meet).unwrap();
            }
            if lca_match(a, b, c, &h).unwrap() != (meet == c) {
                lca_mismatch += 1;
            }
            lca_instances += 1;
        }
    }

    verdict(
        corner_err <= 1e-9 && mode_err <= 1e-9 && bool_mismatch == 0 && lca_mismatch == 0,
        format!(
            "{n} instances each: corner max err {corner_err:.1e}, mode max err {mode_err:.1e}, \
             boolean flag mismatches {bool_mismatch}, lca flag mismatches {lca_mismatch} \
             over {lca_instances}"
        ),
    )
}

// --------------------------------------------------------- reproducibility

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn reproducibility(work: &Path) -> Verdict {
    let configs = [
        ("rectangle", "br"),
        ("bimodal", "joint"),
        ("boolean", "br"),
        ("hierarchy", "joint"),
    ];
    let mut notes = Vec::new();
    let mut all_same = true;
    for (kind, regime) in configs {
        let dir = work.join(format!("repro-{kind}-{regime}"));
        fs::create_dir_all(&dir).unwrap();
        let cfg = json!({
            "regime": regime,
            "train": {
                "task": {"kind": kind},
                "student_iterations": 60,
                "teacher_iterations": 60,
                "joint_iterations": 60,
                "batch_size": 16,
                "hidden": 16
            },
            "eval_episodes": 50,
        });
        let cfg_path = dir.join("config.json");
        fs::write(&cfg_path, cfg.to_string()).unwrap();
        let mut runs = Vec::new();
        for run in ["a", "b"] {
            let out = dir.join(run);
            let status = Command::new(env!("CARGO_BIN_EXE_teachnet"))
                .args(["train", "--config", cfg_path.to_str().unwrap(), "--seed", "31"])
                .args(["--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            runs.push(out);
        }
        let (fa, fb) = (files_under(&runs[0]), files_under(&runs[1]));
        let same = fa == fb
            && fa.iter().any(|f| f.starts_with("checkpoints"))
            && fa.iter().all(|f| fs::read(runs[0].join(f)).unwrap() == fs::read(runs[1].join(f)).unwrap());
        all_same &= same;
        notes.push(format!("{kind}/{regime} {} files {}", fa.len(), if same { "identical" } else { "DIFFER" }));
    }
    verdict(all_same, format!("`teachnet train` run twice per config: {}", notes.join(", ")))
}

// ----------------------------------------------------------------- service

async fn service_contract(pair: TeacherPair, storage: &Path) -> Verdict {
    let state = AppState::open(storage, Checkpoints::default().with(StudyTask::Bimodal, pair)).unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<SocketAddr>();
    tokio::spawn(async move { serve("127.0.0.1:0", state, Some(tx)).await.unwrap() });
    let base = format!("http://{}", rx.await.unwrap());
    let http = reqwest::Client::new();
    let get = |p: String| {
        let http = http.clone();
        let base = base.clone();
        async move {
            let r = http.get(format!("{base}{p}")).send().await.unwrap();
            (r.status().as_u16(), r.json::<Value>().await.unwrap_or(Value::Null))
        }
    };
    let post = |p: String, body: Value| {
        let http = http.clone();
        let base = base.clone();
        async move {
            let r = http.post(format!("{base}{p}")).json(&body).send().await.unwrap();
            (r.status().as_u16(), r.json::<Value>().await.unwrap_or(Value::Null))
        }
    };
    let mut problems = Vec::new();

    // passive lifecycle on the trained teacher: rate the modes 5 and the
    // other lines 1, except on the first item where one mode gets a 3
    let (status, created) = post("/sessions".into(), json!({"task": "bimodal", "condition": "teacher", "seed": 3})).await;
    if status != 201 || created["status"] != "active" {
        problems.push(format!("create returned {status} {created}"));
    }
    let id = created["session_id"].as_str().unwrap_or_default().to_string();
    let (status, early) = get(format!("/sessions/{id}/result")).await;
    if status != 409 || early["code"].as_str().is_none() {
        problems.push(format!("result before completion returned {status}"));
    }
    let concepts = bimodal_study_concepts();
    for (i, c) in concepts.iter().enumerate() {
        let (status, item) = get(format!("/sessions/{id}/item")).await;
        if status != 200 || item["index"] != i || item.get("concept").is_some() {
            problems.push(format!("item {i}: {status} {item}"));
        }
        if item.to_string().contains("positive") {
            problems.push(format!("item {i} leaks test labels"));
        }
        let lengths: Vec<f64> = item["tests"]
            .as_array()
            .map(|t| t.iter().filter_map(|s| s["length"].as_f64()).collect())
            .unwrap_or_default();
        let mut ratings: Vec<u8> = lengths
            .iter()
            .map(|&l| if l == c.mu1 || l == c.mu2 { 5 } else { 1 })
            .collect();
        if i == 0 {
            // (5, 3, 1, 1, 1): a mode rated 3 makes the item incorrect
            let second_mode = lengths.iter().rposition(|&l| l == c.mu2).unwrap_or(0);
            ratings[second_mode] = 3;
        }
        let (status, ack) = post(format!("/sessions/{id}/response"), json!({ "ratings": ratings })).await;
        if status != 200 || ack["answered"] != i + 1 {
            problems.push(format!("response {i}: {status} {ack}"));
        }
    }
    let (status, result) = get(format!("/sessions/{id}/result")).await;
    let flags: Vec<Value> = result["items"]
        .as_array()
        .map(|items| items.iter().map(|it| it["score"]["correct"].clone()).collect())
        .unwrap_or_default();
    let expected_flags: Vec<Value> = (0..10).map(|i| json!(i != 0)).collect();
    if status != 200 || flags != expected_flags || (result["accuracy"].as_f64().unwrap_or(0.0) - 0.9).abs() > 1e-12 {
        problems.push(format!("result: {status} flags {flags:?} accuracy {}", result["accuracy"]));
    }
    let (status, _) = post(format!("/sessions/{id}/response"), json!({"ratings": [1, 1, 1, 1, 1]})).await;
    if status != 409 {
        problems.push(format!("response after completion returned {status}"));
    }

    // interactive: two sessions in the same state, different posted guesses
    let body = json!({"task": "bimodal", "condition": "teacher", "mode": "interactive", "seed": 5});
    let (_, a) = post("/sessions".into(), body.clone()).await;
    let (_, b) = post("/sessions".into(), body).await;
    let (a, b) = (a["session_id"].as_str().unwrap_or_default(), b["session_id"].as_str().unwrap_or_default());
    let (_, first_a) = get(format!("/sessions/{a}/next-example")).await;
    let (_, first_b) = get(format!("/sessions/{b}/next-example")).await;
    if first_a != first_b {
        problems.push("identical interactive sessions diverged before any guess".into());
    }
    post(format!("/sessions/{a}/guess"), json!({"guess": [2.0, 6.0]})).await;
    post(format!("/sessions/{b}/guess"), json!({"guess": [14.0, 19.0]})).await;
    let (sa, next_a) = get(format!("/sessions/{a}/next-example")).await;
    let (sb, next_b) = get(format!("/sessions/{b}/next-example")).await;
    let distinct = sa == 200 && sb == 200 && next_a["example"] != next_b["example"];
    if !distinct {
        problems.push(format!("guess-independent emission: {next_a} vs {next_b}"));
    }

    verdict(
        problems.is_empty(),
        format!(
            "create -> 10 items -> responses -> result: flags {:?} accuracy {}; interactive \
             emissions after guesses (2,6) / (14,19): {} / {}{}",
            flags.iter().map(|f| f.as_bool().unwrap_or(false)).collect::<Vec<_>>(),
            result["accuracy"],
            next_a["example"]["length"],
            next_b["example"]["length"],
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join("; ")) }
        ),
    )
}

// -------------------------------------------------------------------- main

fn main() {
    // ACCEPTANCE_ONLY=gradient,gumbel runs a subset
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let wanted = |name: &str| only.as_ref().is_none_or(|o| o.iter().any(|n| n == name));
    let work = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    let mut report = |name: &'static str, check: &mut dyn FnMut() -> Verdict| {
        if !wanted(name) {
            return;
        }
        let v = check();
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((name, v));
    };
    let w = work.path();
    println!("acceptance suite (work dir {})", w.display());
    report("gradient", &mut gradient_check);
    report("gumbel", &mut gumbel_law);
    report("oracle", &mut oracle);
    report("metric-oracles", &mut metric_oracles);
    report("reproducibility", &mut || reproducibility(w));
    report("rectangle", &mut || rectangle(w));
    let mut pair = None;
    if wanted("bimodal") || wanted("service") {
        let (v, p) = bimodal(w);
        pair = p;
        report("bimodal", &mut || verdict(v.pass, v.detail.clone()));
    }
    report("boolean", &mut || boolean(w));
    report("hierarchy", &mut || hierarchy(w));
    report("service", &mut || match pair.take() {
        Some(pair) => {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(service_contract(pair, &w.join("sessions")))
        }
        None => verdict(false, "no trained bimodal checkpoint"),
    });

    let failed: Vec<&str> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
    );
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
