//! Finite-difference oracle shared by the integration tests.

#![allow(dead_code)]

use food::tensor::{Graph, ParamId, ParamStore, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval_loss<F>(store: &ParamStore<f64>, build: &F) -> f64
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let mut g = Graph::inference(store);
    let loss = build(&mut g).expect("forward");
    g.value(loss).item()
}

/// Largest relative error between reverse-mode gradients and central
/// differences over every entry of every parameter in `store`.
pub fn gradcheck<F>(store: &ParamStore<f64>, eps: f64, build: F) -> f64
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let grads = {
        let mut g = Graph::new(store);
        let loss = build(&mut g).expect("forward");
        g.backward(loss).expect("backward")
    };
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        let n = store.get(id).len();
        let analytic: Vec<f64> = match grads.param(id) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; n],
        };
        for i in 0..n {
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let up = eval_loss(&probe, &build);
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let down = eval_loss(&probe, &build);
            probe.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    worst
}

/// Store holding `tensors` under the names `t0, t1, ...`.
pub fn store_of(tensors: Vec<Tensor<f64>>) -> (ParamStore<f64>, Vec<ParamId>) {
    let mut store = ParamStore::new();
    let ids = tensors
        .into_iter()
        .enumerate()
        .map(|(i, t)| store.insert(format!("t{i}"), t))
        .collect();
    (store, ids)
}

/// Reduced architecture used by the whole-model checks: channels
/// `[3, 4, 8]` on an 8x16 crop.
pub fn toy_config(seed: u64) -> food::model::FoodConfig {
    food::model::FoodConfig {
        encoder_channels: vec![3, 4, 8],
        cl_latent: 6,
        pl_latent: 5,
        pl_pool_factor: 2,
        input_height: 8,
        input_width: 16,
        seed,
        ..Default::default()
    }
}

/// One random `[batch, 3, 8, 16]` input per class.
pub fn toy_batches(batch: usize, seed: u64) -> [Tensor<f64>; 3] {
    let mut r = rng(seed);
    [0, 1, 2].map(|_| random_tensor(&[batch, 3, 8, 16], &mut r))
}

/// Pairwise `P(ood > id) + P(ood == id) / 2`.
pub fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &o in ood {
        for &i in id {
            if o > i {
                wins += 1.0;
            } else if o == i {
                wins += 0.5;
            }
        }
    }
    wins / (id.len() * ood.len()) as f64
}

/// Mean over positives of the precision among everything scoring at least
/// as high as that positive.
pub fn brute_average_precision(pos: &[f64], neg: &[f64]) -> f64 {
    let mut total = 0.0;
    for &p in pos {
        let tp = pos.iter().filter(|&&s| s >= p).count();
        let fp = neg.iter().filter(|&&s| s >= p).count();
        total += tp as f64 / (tp + fp) as f64;
    }
    total / pos.len() as f64
}

/// Smallest ID score accepting at least 95% of ID, found by scanning, and
/// the fraction of OOD scores it accepts.
pub fn brute_fpr95(id: &[f64], ood: &[f64]) -> f64 {
    let mut candidates = id.to_vec();
    candidates.sort_by(f64::total_cmp);
    let tau = candidates
        .iter()
        .copied()
        .find(|&t| 100 * id.iter().filter(|&&s| s <= t).count() >= 95 * id.len())
        .expect("the maximum accepts everything");
    ood.iter().filter(|&&s| s <= tau).count() as f64 / ood.len() as f64
}

/// Scalar Adamax trajectory written out directly from the update rule.
pub fn adamax_recurrence(
    theta0: f64,
    grads: &[f64],
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
) -> Vec<f64> {
    let (mut theta, mut m, mut u) = (theta0, 0.0f64, 0.0f64);
    let mut out = Vec::new();
    for (t, &g) in grads.iter().enumerate() {
        m = b1 * m + (1.0 - b1) * g;
        u = (b2 * u).max(g.abs());
        let bias = 1.0 - b1.powi(t as i32 + 1);
        theta -= lr / bias * m / (u + eps);
        out.push(theta);
    }
    out
}

/// Random score population with deliberate ties (values on a coarse grid).
pub fn tied_scores(n: usize, levels: u32, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| r.random_range(0..levels) as f64 / 4.0)
        .collect()
}
