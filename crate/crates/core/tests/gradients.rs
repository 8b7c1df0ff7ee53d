mod common;

use common::{gradient_suite, numeric_grads, relative_error};
use qdr::train::{relaxed_hash, Trainables};

#[test]
fn analytic_gradients_match_central_differences() {
    for s in gradient_suite(30, 11) {
        assert!(s.worst < 1e-4, "{}: worst relative error {:e}", s.name, s.worst);
    }
}

#[test]
fn relaxed_hash_derivative() {
    let x = [0.3f64, -1.2, 0.0, 2.5];
    let g = qdr::train::losses::relaxed_hash_grad(&x, 1.0);
    let h = 1e-6;
    let numeric: Vec<f64> = x
        .iter()
        .map(|&v| (relaxed_hash(&[v + h], 1.0)[0] - relaxed_hash(&[v - h], 1.0)[0]) / (2.0 * h))
        .collect();
    assert!(relative_error(&g, &numeric) < 1e-5);
}

#[test]
fn numeric_grads_of_linear_function() {
    let head = qdr::train::QueryHead::new(1, 2, vec![0.5, -1.0]).unwrap();
    let t = Trainables::head_only(head);
    let g = numeric_grads(&t, &|p| 3.0 * p.head.weight()[0] - p.head.weight()[1]);
    assert!(relative_error(&g.head, &[3.0, -1.0]) < 1e-8);
}
