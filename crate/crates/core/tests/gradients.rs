//! Central finite differences against the analytic CTC and network gradients.

use hwr::ctc::{ctc_grad, ctc_loss};
use hwr::imageproc::{normalize, GrayImage, NormalizedImage};
use hwr::network::{
    backward, forward, forward_cached, init_params, CellKind, FrameMatrix, NetworkConfig,
    Parameters, FRAMES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

/// Relative error with a floor so that gradients that are zero up to
/// rounding do not divide by ~0. Central differences at this step carry
/// about 1e-10 of absolute rounding noise on losses of order 10.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

fn tiny(cell: CellKind) -> NetworkConfig {
    NetworkConfig {
        conv_channels: vec![2, 2, 2],
        kernel: 3,
        cell,
        hidden: 4,
        rnn_layers: 2,
        num_classes: 4,
    }
}

fn textured_image(seed: u64) -> NormalizedImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = GrayImage::from_fn(50, 200, |_, _| rng.random_range(0..=255) as f64);
    normalize(&img).unwrap()
}

fn loss_of(params: &Parameters, image: &NormalizedImage, target: &[usize]) -> f64 {
    ctc_loss(&forward(params, image).unwrap(), target).unwrap()
}

fn check_network(cell: CellKind, seed: u64) -> f64 {
    let cfg = tiny(cell);
    let params = init_params(&cfg, seed).unwrap();
    let image = textured_image(seed + 100);
    let target = [0, 1, 1, 2];
    let (frames, cache) = forward_cached(&params, &image).unwrap();
    let ctc = ctc_grad(&frames, &target).unwrap();
    let grads = hwr::network::backward_from_cache(&params, &cache, &ctc.grad_logits).unwrap();

    let mut worst: f64 = 0.0;
    let names: Vec<String> = params.arrays().into_iter().map(|(n, _)| n).collect();
    for (ai, name) in names.iter().enumerate() {
        let len = params.arrays()[ai].1.len();
        for j in 0..len {
            let mut plus = params.clone();
            plus.arrays_mut()[ai].1.data_mut()[j] += STEP;
            let mut minus = params.clone();
            minus.arrays_mut()[ai].1.data_mut()[j] -= STEP;
            let numeric =
                (loss_of(&plus, &image, &target) - loss_of(&minus, &image, &target)) / (2.0 * STEP);
            let analytic = grads.arrays()[ai].1.data()[j];
            let e = rel_err(analytic, numeric);
            assert!(e < 1e-4, "{cell} {name}[{j}]: analytic {analytic} numeric {numeric}");
            worst = worst.max(e);
        }
    }
    worst
}

#[test]
fn lstm_network_gradients_match_finite_differences() {
    let worst = check_network(CellKind::Lstm, 1);
    eprintln!("lstm worst relative error {worst:e}");
}

#[test]
fn gru_network_gradients_match_finite_differences() {
    let worst = check_network(CellKind::Gru, 2);
    eprintln!("gru worst relative error {worst:e}");
}

#[test]
fn backward_is_the_vjp_of_logits() {
    // Linear functional of the logits: L = Σ g ⊙ logits.
    let cfg = tiny(CellKind::Gru);
    let params = init_params(&cfg, 7).unwrap();
    let image = textured_image(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g: Vec<f64> = (0..FRAMES * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lin = |p: &Parameters| -> f64 {
        let (_, cache) = forward_cached(p, &image).unwrap();
        cache.logits().iter().zip(&g).map(|(a, b)| a * b).sum()
    };
    let grads = backward(&params, &image, &g).unwrap();
    for (ai, (name, t)) in params.arrays().into_iter().enumerate() {
        for j in (0..t.len()).step_by(3) {
            let mut plus = params.clone();
            plus.arrays_mut()[ai].1.data_mut()[j] += STEP;
            let mut minus = params.clone();
            minus.arrays_mut()[ai].1.data_mut()[j] -= STEP;
            let numeric = (lin(&plus) - lin(&minus)) / (2.0 * STEP);
            let analytic = grads.arrays()[ai].1.data()[j];
            assert!(rel_err(analytic, numeric) < 1e-4, "{name}[{j}] {analytic} vs {numeric}");
        }
    }
    assert_eq!(grads, backward(&params, &image, &g).unwrap());
}

#[test]
fn ctc_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (t, c) = (5, 3);
        let logits: Vec<f64> = (0..t * (c + 1)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let len = rng.random_range(0..=2);
        let target: Vec<usize> = (0..len).map(|_| rng.random_range(0..c)).collect();
        let loss = |l: &[f64]| ctc_loss(&FrameMatrix::from_logits(t, c + 1, l), &target).unwrap();
        let r = ctc_grad(&FrameMatrix::from_logits(t, c + 1, &logits), &target).unwrap();
        for j in 0..logits.len() {
            let mut p = logits.clone();
            p[j] += STEP;
            let mut m = logits.clone();
            m[j] -= STEP;
            let numeric = (loss(&p) - loss(&m)) / (2.0 * STEP);
            let e = (r.grad_logits[j] - numeric).abs() / r.grad_logits[j].abs().max(numeric.abs()).max(1e-6);
            assert!(e < 1e-6, "target {target:?} logit {j}: {} vs {numeric}", r.grad_logits[j]);
        }
    }
}
