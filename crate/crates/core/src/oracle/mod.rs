//! Exact recursive teacher/student pedagogy on small discrete domains.
//!
//! The teacher picks example `e` for concept `c` with probability
//! proportional to `P_S(c|e)^alpha`; the student inverts the teacher with
//! Bayes' rule, `P_S(c|e) ∝ P_T(e|c) P(c)`.

mod io;

use serde::{Deserialize, Serialize};

pub use io::{read_domain_csv, write_domain_csv, write_state_csv};

use crate::error::{Error, Result};
use crate::tasks::{BooleanConcept, Properties};

/// Concepts x examples consistency relation with a concept prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDomain {
    pub concepts: Vec<String>,
    pub examples: Vec<String>,
    /// `consistent[c][e]`.
    pub consistent: Vec<Vec<bool>>,
    pub prior: Vec<f64>,
}

impl DiscreteDomain {
    pub fn new(
        concepts: Vec<String>,
        examples: Vec<String>,
        consistent: Vec<Vec<bool>>,
        prior: Vec<f64>,
    ) -> Result<Self> {
        if concepts.is_empty() || examples.is_empty() {
            return Err(Error::invalid("domain needs at least one concept and one example"));
        }
        if consistent.len() != concepts.len() || prior.len() != concepts.len() {
            return Err(Error::Dimension {
                what: "domain rows",
                expected: concepts.len(),
                actual: consistent.len().max(prior.len()),
            });
        }
        for (c, row) in consistent.iter().enumerate() {
            if row.len() != examples.len() {
                return Err(Error::Dimension {
                    what: "domain columns",
                    expected: examples.len(),
                    actual: row.len(),
                });
            }
            if !row.iter().any(|&m| m) {
                return Err(Error::invalid(format!(
                    "concept `{}` has no consistent example",
                    concepts[c]
                )));
            }
        }
        if prior.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("prior weights must be finite and non-negative"));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("prior sums to {total}, not 1")));
        }
        Ok(DiscreteDomain {
            concepts,
            examples,
            consistent,
            prior,
        })
    }

    /// Domain with a uniform concept prior.
    pub fn uniform(concepts: Vec<String>, examples: Vec<String>, consistent: Vec<Vec<bool>>) -> Result<Self> {
        let n = concepts.len().max(1);
        let prior = vec![1.0 / n as f64; concepts.len()];
        DiscreteDomain::new(concepts, examples, consistent, prior)
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn example_count(&self) -> usize {
        self.examples.len()
    }
}

/// Boolean concepts with the given constrained-property counts over the 36
/// candidate images, uniform prior.
pub fn boolean_domain(counts: &[usize]) -> Result<DiscreteDomain> {
    let concepts = BooleanConcept::all_valid(Some(counts));
    let examples = Properties::all();
    let consistent = concepts
        .iter()
        .map(|c| examples.iter().map(|e| crate::tasks::boolean_consistent(e, c)).collect())
        .collect();
    DiscreteDomain::uniform(
        concepts.iter().map(|c| c.to_string()).collect(),
        examples.iter().map(|e| e.to_string()).collect(),
        consistent,
    )
}

/// Student posterior `P_S(c|e)`, one row per example. Rows of examples that
/// no concept would produce are all zero and flagged undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentMatrix {
    pub probs: Vec<Vec<f64>>,
    pub undefined: Vec<bool>,
}

/// Teacher `P_T(e|c)`, one row per concept.
pub type TeacherMatrix = Vec<Vec<f64>>;

/// Uniform over each concept's consistent examples.
pub fn init_teacher(domain: &DiscreteDomain) -> Result<TeacherMatrix> {
    domain
        .consistent
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n = row.iter().filter(|&&m| m).count();
            if n == 0 {
                return Err(Error::invalid(format!("concept {c} has no consistent example")));
            }
            Ok(row.iter().map(|&m| if m { 1.0 / n as f64 } else { 0.0 }).collect())
        })
        .collect()
}

/// Bayes' rule per example.
pub fn student_update(teacher: &TeacherMatrix, prior: &[f64]) -> StudentMatrix {
    let n_examples = teacher.first().map_or(0, Vec::len);
    let mut probs = vec![vec![0.0; teacher.len()]; n_examples];
    let mut undefined = vec![false; n_examples];
    for e in 0..n_examples {
        let row = &mut probs[e];
        for (c, t) in teacher.iter().enumerate() {
            row[c] = t[e] * prior[c];
        }
        let z: f64 = row.iter().sum();
        if z > 0.0 {
            row.iter_mut().for_each(|p| *p /= z);
        } else {
            row.iter_mut().for_each(|p| *p = 0.0);
            undefined[e] = true;
        }
    }
    StudentMatrix { probs, undefined }
}

/// `P_T(e|c) ∝ P_S(c|e)^alpha` over the consistent examples of `c`.
pub fn teacher_update(
    student: &StudentMatrix,
    domain: &DiscreteDomain,
    alpha: f64,
) -> Result<TeacherMatrix> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let mut out = Vec::with_capacity(domain.concept_count());
    for (c, row) in domain.consistent.iter().enumerate() {
        // work in log space so large alpha does not underflow
        let logs: Vec<Option<f64>> = row
            .iter()
            .enumerate()
            .map(|(e, &m)| {
                let p = student.probs[e][c];
                match (m, alpha == 0.0) {
                    (false, _) => None,
                    (true, true) => Some(0.0),
                    (true, false) if p > 0.0 => Some(alpha * p.ln()),
                    (true, false) => None,
                }
            })
            .collect();
        let max = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::invalid(format!(
                "teacher normalizer for concept `{}` is zero",
                domain.concepts[c]
            )));
        }
        let w: Vec<f64> = logs.iter().map(|l| l.map_or(0.0, |l| (l - max).exp())).collect();
        let z: f64 = w.iter().sum();
        out.push(w.into_iter().map(|v| v / z).collect());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Start from the uniform teacher; each iteration updates the student,
    /// then the teacher.
    #[default]
    StudentFirst,
    /// Start from the literal student (`P_S ∝ consistency x prior`); each
    /// iteration updates the teacher, then the student.
    TeacherFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedagogyState {
    pub teacher: TeacherMatrix,
    pub student: StudentMatrix,
    pub alpha: f64,
    pub iterations: usize,
    /// Largest absolute change of either matrix in the last iteration.
    pub residual: f64,
    pub converged: bool,
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

fn literal_student(domain: &DiscreteDomain) -> StudentMatrix {
    let indicator: TeacherMatrix = domain
        .consistent
        .iter()
        .map(|r| r.iter().map(|&m| f64::from(u8::from(m))).collect())
        .collect();
    student_update(&indicator, &domain.prior)
}

/// Alternates the two updates until neither matrix moves by more than
/// `tol`, or `max_iters` is reached (the state is then flagged).
pub fn fixed_point(
    domain: &DiscreteDomain,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> Result<PedagogyState> {
    fixed_point_ordered(domain, alpha, max_iters, tol, UpdateOrder::StudentFirst)
}

pub fn fixed_point_ordered(
    domain: &DiscreteDomain,
    alpha: f64,
    max_iters: usize,
    tol: f64,
    order: UpdateOrder,
) -> Result<PedagogyState> {
    let mut teacher = init_teacher(domain)?;
    let mut student = match order {
        UpdateOrder::StudentFirst => student_update(&teacher, &domain.prior),
        UpdateOrder::TeacherFirst => literal_student(domain),
    };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let (t, s) = match order {
            UpdateOrder::StudentFirst => {
                let s = student_update(&teacher, &domain.prior);
                let t = teacher_update(&s, domain, alpha)?;
                (t, s)
            }
            UpdateOrder::TeacherFirst => {
                let t = teacher_update(&student, domain, alpha)?;
                let s = student_update(&t, &domain.prior);
                (t, s)
            }
        };
        residual = max_abs_diff(&t, &teacher).max(max_abs_diff(&s.probs, &student.probs));
        teacher = t;
        student = s;
        if residual < tol {
            break;
        }
    }
    Ok(PedagogyState {
        teacher,
        student,
        alpha,
        iterations,
        residual,
        converged: residual < tol,
    })
}

/// One student update followed by one teacher update from the uniform
/// teacher: the exact counterpart of a single best-response round.
pub fn single_step(domain: &DiscreteDomain, alpha: f64) -> Result<PedagogyState> {
    let init = init_teacher(domain)?;
    let student = student_update(&init, &domain.prior);
    let teacher = teacher_update(&student, domain, alpha)?;
    let residual = max_abs_diff(&teacher, &init);
    Ok(PedagogyState {
        teacher,
        student,
        alpha,
        iterations: 1,
        residual,
        converged: false,
    })
}
