//! Finite-difference gradient oracle for the labeler network.

use chseg::labeling::Task;
use chseg::nn::{loss, loss_and_grad, Tcn, TcnConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny(task: Task) -> TcnConfig {
    TcnConfig {
        bottleneck_dim: 8,
        hidden_dim: 8,
        num_blocks: 2,
        layers_per_block: 3,
        ..TcnConfig::for_task(4, task)
    }
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_targets(task: Task, frames: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..frames)
        .map(|_| match task {
            Task::Scd => rng.random_range(0.0..1.0),
            _ => f32::from(rng.random_bool(0.5)),
        })
        .collect()
}

pub fn objective(net: &Tcn<f64>, x: &Array2<f64>, y: &[f32]) -> f64 {
    loss(net.logits(x.view()).unwrap().view(), y, net.config().head).unwrap()
}

/// Compares every analytic gradient entry with a central difference.
/// Returns (checked, failures).
pub fn gradient_check(cfg: &TcnConfig, task: Task, frames: usize, seed: u64) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Tcn::<f64>::init(cfg, &mut rng).unwrap();
    // Non-trivial normalization parameters.
    for layer in net.blocks.iter_mut().flatten() {
        layer.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
        layer.beta.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    let x = random_matrix(cfg.input_dim, frames, &mut rng);
    let y = random_targets(task, frames, &mut rng);

    let (logits, cache) = net.forward_train(x.view()).unwrap();
    let (_, dlogits) = loss_and_grad(logits.view(), &y, cfg.head).unwrap();
    let mut grad = Tcn::<f64>::zeros(cfg).unwrap();
    net.backward(&cache, dlogits.view(), &mut grad);

    let names: Vec<String> = net.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grad
        .tensors()
        .into_iter()
        .map(|(_, t)| t.iter().copied().collect())
        .collect();
    let h = 1e-6;
    let mut checked = 0;
    let mut failures = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        for (ei, &g) in analytic[ti].iter().enumerate() {
            let original = net.tensors()[ti].1.iter().nth(ei).copied().unwrap();
            let set = |net: &mut Tcn<f64>, v: f64| {
                let mut views = net.tensors_mut();
                *views[ti].iter_mut().nth(ei).unwrap() = v;
            };
            set(&mut net, original + h);
            let plus = objective(&net, &x, &y);
            set(&mut net, original - h);
            let minus = objective(&net, &x, &y);
            set(&mut net, original);
            let fd = (plus - minus) / (2.0 * h);
            let scale = fd.abs().max(g.abs());
            // Entries below 1e-7 are compared absolutely: relative error
            // of a difference quotient is meaningless at that size.
            let ok = if scale < 1e-7 {
                (fd - g).abs() < 1e-9
            } else {
                (fd - g).abs() / scale <= 1e-3
            };
            if !ok {
                failures.push(format!("{name}[{ei}]: analytic {g:e}, numeric {fd:e}"));
            }
            checked += 1;
        }
    }
    (checked, failures)
}
