//! Adam against a scalar reference, plus determinism and convergence on a tape loss.

use isac_gradtape::{Adam, AdamConfig, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook bias-corrected Adam on f(x) = Σ (x − c)², one coordinate at a time.
fn reference(x0: &[f64], c: &[f64], cfg: AdamConfig, steps: usize) -> Vec<f64> {
    x0.iter()
        .zip(c)
        .map(|(&x0, &c)| {
            let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
            for t in 1..=steps {
                let g = 2.0 * (x - c);
                m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
                v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
                let mh = m / (1.0 - cfg.beta1.powi(t as i32));
                let vh = v / (1.0 - cfg.beta2.powi(t as i32));
                x -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
            x
        })
        .collect()
}

fn quadratic_on_tape(x: &Tensor, c: &Tensor) -> Tensor {
    let tape = Tape::new();
    let xv = tape.param(x.clone());
    let loss = xv.sub(tape.constant(c.clone())).unwrap().square().sum();
    tape.backward(loss).unwrap().wrt(xv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_scalar_reference(
        x0 in prop::collection::vec(-5.0f64..5.0, 1..6),
        shift in -3.0f64..3.0,
        lr in 1e-4f64..0.5,
        steps in 1usize..25,
    ) {
        let c: Vec<f64> = x0.iter().enumerate().map(|(i, v)| v + shift * (i as f64 + 1.0)).collect();
        let cfg = AdamConfig { lr, ..AdamConfig::default() };
        let n = x0.len();
        let ct = Tensor::from_vec(n, 1, c.clone()).unwrap();
        let mut params = vec![Tensor::from_vec(n, 1, x0.clone()).unwrap()];
        let mut adam = Adam::new(cfg, &params);
        for _ in 0..steps {
            let g = quadratic_on_tape(&params[0], &ct);
            adam.step(&mut params, &[g]).unwrap();
        }
        let want = reference(&x0, &c, cfg, steps);
        for (got, want) in params[0].data().iter().zip(&want) {
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{} vs {}", got, want);
        }
        prop_assert_eq!(adam.step_count(), steps as u64);
    }
}

/// Fits `W` in `‖X W − Y‖²` for a fixed random problem; returns final params and loss.
fn fit(iterations: usize) -> (Tensor, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::from_fn(32, 4, |_, _| rng.random_range(-1.0..1.0));
    let w_true = Tensor::from_fn(4, 2, |_, _| rng.random_range(-2.0..2.0));
    let y = {
        let tape = Tape::new();
        tape.constant(x.clone()).matmul(tape.constant(w_true)).unwrap().value()
    };
    let mut params = vec![Tensor::zeros(4, 2)];
    let mut adam = Adam::new(AdamConfig { lr: 0.05, ..AdamConfig::default() }, &params);
    let mut last = f64::INFINITY;
    for _ in 0..iterations {
        let tape = Tape::new();
        let w = tape.param(params[0].clone());
        let r = tape.constant(x.clone()).matmul(w).unwrap().sub(tape.constant(y.clone())).unwrap();
        let loss = r.square().mean();
        last = loss.item();
        let g = tape.backward(loss).unwrap().wrt(w);
        adam.step(&mut params, &[g]).unwrap();
    }
    (params.pop().unwrap(), last)
}

#[test]
fn training_is_bit_reproducible() {
    let (a, la) = fit(300);
    let (b, lb) = fit(300);
    assert_eq!(a.data(), b.data());
    assert_eq!(la.to_bits(), lb.to_bits());
}

#[test]
fn converges_on_least_squares() {
    let (_, loss) = fit(3000);
    assert!(loss < 1e-8, "final loss {loss:.3e}");
}
