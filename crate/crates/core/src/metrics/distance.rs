use crate::error::{Error, Result};
use crate::tasks::{boolean_consistent, BimodalConcept, BooleanConcept, Hierarchy, Properties, RectangleConcept};

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Smallest summed distance from the two examples to a pair of opposite
/// corners, over both diagonals and both orderings.
pub fn corner_distance(e: [[f64; 2]; 2], c: &RectangleConcept) -> f64 {
    c.diagonals()
        .iter()
        .flat_map(|&(p, q)| [dist(e[0], p) + dist(e[1], q), dist(e[0], q) + dist(e[1], p)])
        .fold(f64::INFINITY, f64::min)
}

/// L2 distance between the sorted examples and the sorted modes.
pub fn mode_distance(e: [f64; 2], c: &BimodalConcept) -> f64 {
    let (lo, hi) = if e[0] <= e[1] { (e[0], e[1]) } else { (e[1], e[0]) };
    let [m1, m2] = c.to_array();
    let (m1, m2) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
    (lo - m1).hypot(hi - m2)
}

/// True when the property values the two examples share are exactly the
/// concept's constrained values.
pub fn boolean_intuitive_match(e1: &Properties, e2: &Properties, c: &BooleanConcept) -> Result<bool> {
    for (which, e) in [("first", e1), ("second", e2)] {
        if !boolean_consistent(e, c) {
            return Err(Error::invalid(format!("{which} example ({e}) is not consistent with {c}")));
        }
    }
    let (a, b) = (e1.slots(), e2.slots());
    let mut shared: Vec<usize> = (0..4).filter(|&g| a[g] == b[g]).map(|g| a[g]).collect();
    shared.sort_unstable();
    let mut required = c.slots();
    required.sort_unstable();
    Ok(shared == required)
}

/// True when the lowest common ancestor of two leaves is the concept node.
pub fn lca_match(e1: usize, e2: usize, c: usize, h: &Hierarchy) -> Result<bool> {
    for e in [e1, e2] {
        if e >= h.node_count() || !h.is_leaf(e) {
            return Err(Error::invalid(format!("node {e} is not a leaf")));
        }
    }
    if c >= h.node_count() {
        return Err(Error::invalid(format!("unknown node {c}")));
    }
    Ok(h.lca(e1, e2)? == c)
}

/// Probability that two prior-sampled examples form an intuitive pair, by
/// enumeration. Concepts are drawn by picking a constrained-property count
/// uniformly from `counts`, then a concept uniformly among those with that
/// count; examples are drawn independently and uniformly from the
/// consistent candidates.
pub fn boolean_random_match_exact(counts: &[usize]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::invalid("no property counts"));
    }
    let all = Properties::all();
    let mut total = 0.0;
    for &k in counts {
        let concepts = BooleanConcept::all_valid(Some(&[k]));
        if concepts.is_empty() {
            return Err(Error::invalid(format!("no concepts with {k} properties")));
        }
        let mut acc = 0.0;
        for c in &concepts {
            let pool = c.consistent_candidates();
            let mut hits = 0usize;
            for &i in &pool {
                for &j in &pool {
                    if boolean_intuitive_match(&all[i], &all[j], c)? {
                        hits += 1;
                    }
                }
            }
            acc += hits as f64 / (pool.len() * pool.len()) as f64;
        }
        total += acc / concepts.len() as f64;
    }
    Ok(total / counts.len() as f64)
}
