//! Randomised small networks and losses shared by the gradient checks.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use vmfkd::activation_model::ClassRelationMatrix;
use vmfkd::distill::{composite_gradients, composite_loss, DistillMode, DistillSpec};
use vmfkd::nn::{Activation, Network};
use vmfkd::SeededRng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const SEEDS: u64 = 20;

pub struct Case {
    pub student: Network,
    pub teacher: Network,
    pub relations: ClassRelationMatrix,
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = SeededRng::seed_from_u64(seed);
    let input = rng.random_range(2..=4);
    let hidden = rng.random_range(2..=4);
    let d = rng.random_range(2..=3);
    let c = rng.random_range(2..=4);
    let act = [Activation::Tanh, Activation::Identity][rng.random_range(0..2)];
    let bias = rng.random::<bool>();
    let student = Network::random(&[input, hidden, d, c], act, bias, seed).unwrap();
    assert!(student.num_parameters() <= 64, "{} parameters", student.num_parameters());
    let teacher = Network::random(&[input, 5, 3, c], Activation::Tanh, false, seed + 1000).unwrap();
    let mut entries = Array2::from_shape_fn((c, c), |_| rng.random_range(0.05..1.0));
    for mut row in entries.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    let relations = ClassRelationMatrix { entries, sample_count: 1, kappa_used: 1.0, temperature_used: 1.0 };
    let n = rng.random_range(1..=5);
    let inputs = Array2::from_shape_fn((n, input), |_| rng.random_range(-2.0..2.0));
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    Case { student, teacher, relations, inputs, labels }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference gradients.
pub fn max_rel_err(case: &Case, spec: &DistillSpec) -> f64 {
    let (_, grads) = composite_gradients(spec, &case.student, case.inputs.view(), &case.labels).unwrap();
    let analytic = grads.flatten();
    assert_eq!(analytic.len(), case.student.num_parameters());
    let loss = |net: &Network| composite_loss(spec, net, case.inputs.view(), &case.labels).unwrap().total;
    let mut worst = 0.0f64;
    for (i, &p) in case.student.parameters().iter().enumerate() {
        let mut net = case.student.clone();
        net.set_parameter(i, p + H);
        let up = loss(&net);
        net.set_parameter(i, p - H);
        let down = loss(&net);
        worst = worst.max(rel_err((up - down) / (2.0 * H), analytic[i]));
    }
    worst
}

pub fn spec_for(case: &Case, mode: DistillMode, seed: u64) -> DistillSpec {
    let mut rng = SeededRng::seed_from_u64(seed ^ 0xabcd);
    let mut spec = DistillSpec::new(mode).with_teacher(case.teacher.clone()).with_relations(case.relations.clone());
    spec.temperature = rng.random_range(0.5..5.0);
    spec.alpha = rng.random_range(0.0..=1.0);
    spec.scale_by_t2 = rng.random::<bool>();
    spec
}
