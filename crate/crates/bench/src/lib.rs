//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teachnet_core::nets::{build_teach_rollout, RolloutMode, Rollout, StudentNet, TeachOptions, TeacherNet};
use teachnet_core::numkernel::{ComputeGraph, NodeId, ParamStore, Tensor};
use teachnet_core::tasks::{sample_concept, TaskSpec};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 2]) -> Tensor {
    let data = (0..shape[0] * shape[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// `tanh(x W + b)` summed to a scalar, with `x` of shape `batch x input`
/// and `W` of shape `input x output`: one dense recurrent-gate layer.
pub fn dense_layer(batch: usize, input: usize, output: usize) -> (ComputeGraph, ParamStore, NodeId) {
    let mut rng = seeded(1);
    let mut params = ParamStore::new();
    params.insert("x", random_tensor(&mut rng, [batch, input]));
    params.insert("w", random_tensor(&mut rng, [input, output]));
    params.insert("b", random_tensor(&mut rng, [1, output]));
    let mut g = ComputeGraph::new();
    let x = g.param("x", [batch, input]).expect("fresh leaf");
    let w = g.param("w", [input, output]).expect("fresh leaf");
    let b = g.param("b", [1, output]).expect("fresh leaf");
    let h = g.matmul(x, w).expect("inner dims agree");
    let h = g.add_bias(h, b).expect("bias width agrees");
    let h = g.tanh(h);
    let loss = g.reduce_sum(h);
    (g, params, loss)
}

/// Freshly initialised teacher and student for `task`.
pub fn networks(task: &TaskSpec, hidden: usize) -> (TeacherNet, StudentNet) {
    let mut rng = seeded(2);
    let student = StudentNet::new(task, hidden, &mut rng);
    let teacher = TeacherNet::new(task, hidden, &mut rng);
    (teacher, student)
}

/// A training-mode teaching rollout over `batch` prior concepts.
pub fn teach_rollout(task: &TaskSpec, teacher: &TeacherNet, student: &StudentNet, batch: usize) -> Rollout {
    let mut rng = seeded(3);
    let concepts: Vec<_> = (0..batch).map(|_| sample_concept(task, &mut rng)).collect();
    let opts = TeachOptions {
        mode: RolloutMode::Train,
        temperature: 1.0,
        train_teacher: true,
        train_student: false,
    };
    build_teach_rollout(task, teacher, student, &concepts, task.k_teach, opts, &mut rng)
        .expect("networks match the task")
}
