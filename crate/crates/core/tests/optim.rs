mod common;

use common::adamax_recurrence;
use food::optim::{Adamax, AdamaxConfig};
use food::tensor::{Gradients, ParamStore, Tensor};

/// Runs the optimizer on a single scalar parameter.
fn trajectory(theta0: f64, grads: &[f64], config: AdamaxConfig) -> (Vec<f64>, Adamax) {
    let mut store = ParamStore::new();
    let id = store.insert("theta", Tensor::scalar(theta0));
    let mut opt = Adamax::new(config, &store).unwrap();
    let mut out = Vec::new();
    for &g in grads {
        let mut grad = Gradients::empty(1);
        grad.set_param(id, Tensor::scalar(g));
        opt.step(&mut store, &grad).unwrap();
        out.push(store.get(id).item());
    }
    (out, opt)
}

fn no_eps() -> AdamaxConfig {
    AdamaxConfig {
        eps: 0.0,
        ..Default::default()
    }
}

#[test]
fn worked_example_without_eps() {
    let (theta, _) = trajectory(1.0, &[0.5; 3], no_eps());
    assert!((theta[0] - 0.998).abs() < 1e-12, "{}", theta[0]);
    assert!((theta[1] - 0.996).abs() < 1e-12, "{}", theta[1]);
    assert!((theta[2] - 0.994).abs() < 1e-12, "{}", theta[2]);
}

#[test]
fn default_eps_matches_the_hand_recurrence() {
    let c = AdamaxConfig::default();
    for grads in [[0.5, 0.5, 0.5], [0.5, -1.5, 0.25], [3.0, 0.0, -0.1]] {
        let (theta, _) = trajectory(1.0, &grads, c);
        let want = adamax_recurrence(1.0, &grads, c.lr, c.beta1, c.beta2, c.eps);
        for (a, b) in theta.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn constant_gradient_moves_by_lr_each_step() {
    for g in [1e-3, 0.5, -2.0, 40.0] {
        let (theta, _) = trajectory(0.0, &[g; 50], no_eps());
        let mut prev = 0.0;
        for t in theta {
            assert!(((prev - t).abs() - 0.002).abs() < 1e-12);
            assert_eq!((prev - t).signum(), g.signum());
            prev = t;
        }
    }
}

#[test]
fn zero_gradient_only_decays_the_norm() {
    let (theta, opt) = trajectory(1.0, &[0.0], AdamaxConfig::default());
    assert_eq!(theta, [1.0]);
    assert_eq!(opt.u[0], [0.0]);

    let (theta, opt) = trajectory(1.0, &[0.5, 0.0, 0.0], no_eps());
    assert!(theta[2] < theta[1] && theta[1] < theta[0]);
    assert!((opt.u[0][0] - 0.5 * 0.999 * 0.999).abs() < 1e-15);
}

#[test]
fn norm_accumulator_invariants() {
    let grads = [0.3, -2.0, 0.1, 0.0, 1.5, -0.2];
    let mut store = ParamStore::new();
    let id = store.insert("theta", Tensor::scalar(0.0f64));
    let mut opt = Adamax::new(AdamaxConfig::default(), &store).unwrap();
    for (t, &g) in grads.iter().enumerate() {
        let before = opt.u[0][0];
        let mut grad = Gradients::empty(1);
        grad.set_param(id, Tensor::scalar(g));
        opt.step(&mut store, &grad).unwrap();
        assert!(opt.u[0][0] >= 0.999 * before && opt.u[0][0] >= g.abs());
        assert_eq!(opt.step, t as u64 + 1);
    }
}
