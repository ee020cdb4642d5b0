//! Randomized gradient checks of every primitive against central differences.
//!
//! Each check builds a small expression from random inputs, reduces it to a
//! scalar through a fixed random weighting, and compares backward with
//! [`central_gradient`](crate::finite_diff::central_gradient).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::finite_diff::{central_gradient, max_relative_error};
use crate::{CVar, Tape, Tensor, Var};

/// Finite-difference step.
pub const H: f64 = 1e-5;
/// Largest acceptable relative error.
pub const TOL: f64 = 1e-4;
/// Magnitude below which errors are measured absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub instances: usize,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOL
    }
}

pub type Build = dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>;
pub type Gen = dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor>;

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn weighted_sum<'t>(tape: &'t Tape, out: Var<'t>, seed: u64) -> Var<'t> {
    let [r, c] = out.shape();
    let w = tape.constant(randn(&mut ChaCha8Rng::seed_from_u64(seed), r, c));
    out.mul(w).expect("same shape").sum()
}

fn eval(build: &Build, inputs: &[Tensor], seed: u64) -> f64 {
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&tape, &vars);
    weighted_sum(&tape, out, seed).item()
}

/// Worst relative error of `build` over `instances` random inputs from `gen`.
pub fn check(name: &str, build: &Build, gen: &Gen, instances: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ name.len() as u64);
    let mut worst: f64 = 0.0;
    for instance in 0..instances {
        let inputs = gen(&mut rng);
        let seed = instance as u64;
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = build(&tape, &vars);
        let loss = weighted_sum(&tape, out, seed);
        let grads = tape.backward(loss).expect("backward on a fresh tape");
        let analytic: Vec<_> = vars.iter().map(|&v| grads.wrt(v)).collect();
        let numeric = central_gradient(|x| eval(build, x, seed), &inputs, H);
        worst = worst.max(max_relative_error(&analytic, &numeric, FLOOR));
    }
    GradCheck { name: name.to_string(), instances, max_rel_error: worst }
}

fn shapes(dims: &'static [(usize, usize)]) -> Box<Gen> {
    Box::new(move |rng| dims.iter().map(|&(r, c)| randn(rng, r, c)).collect())
}

fn positive(dims: &'static [(usize, usize)]) -> Box<Gen> {
    Box::new(move |rng| dims.iter().map(|&(r, c)| randn(rng, r, c).map(|v| v.abs() + 0.5)).collect())
}

fn diagonally_dominant(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let mut s = randn(rng, n, n);
    for i in 0..n {
        s.set(i, i, s.get(i, i) + 4.0);
    }
    s
}

fn pair<'t>(v: &[Var<'t>], i: usize) -> CVar<'t> {
    CVar::new(v[i], v[i + 1]).expect("matching parts")
}

/// Every differentiable primitive, `instances` random inputs each.
pub fn primitive_suite(instances: usize) -> Vec<GradCheck> {
    let mask = Tensor::row(vec![1.0, 0.0, 1.0, 1.0, 0.0]);
    let cases: Vec<(&str, Box<Build>, Box<Gen>)> = vec![
        ("add", Box::new(|_, v| v[0].add(v[1]).unwrap()), shapes(&[(3, 4), (3, 4)])),
        ("add_broadcast", Box::new(|_, v| v[0].add(v[1]).unwrap()), shapes(&[(3, 4), (1, 4)])),
        ("sub", Box::new(|_, v| v[0].sub(v[1]).unwrap()), shapes(&[(3, 4), (3, 1)])),
        ("mul", Box::new(|_, v| v[0].mul(v[1]).unwrap()), shapes(&[(3, 4), (3, 4)])),
        ("mul_broadcast", Box::new(|_, v| v[0].mul(v[1]).unwrap()), shapes(&[(3, 1), (1, 4)])),
        (
            "div",
            Box::new(|_, v| v[0].div(v[1]).unwrap()),
            Box::new(|rng| vec![randn(rng, 2, 5), randn(rng, 1, 5).map(|x| x.abs() + 0.5)]),
        ),
        ("neg", Box::new(|_, v| v[0].neg()), shapes(&[(2, 3)])),
        ("scale", Box::new(|_, v| v[0].scale(-2.5)), shapes(&[(2, 3)])),
        ("offset", Box::new(|_, v| v[0].offset(1.25).square()), shapes(&[(2, 3)])),
        ("square", Box::new(|_, v| v[0].square()), shapes(&[(2, 3)])),
        ("sqrt", Box::new(|_, v| v[0].sqrt()), positive(&[(2, 3)])),
        ("exp", Box::new(|_, v| v[0].exp()), shapes(&[(2, 3)])),
        ("log", Box::new(|_, v| v[0].ln().unwrap()), positive(&[(2, 3)])),
        ("sigmoid", Box::new(|_, v| v[0].sigmoid()), shapes(&[(2, 3)])),
        ("tanh", Box::new(|_, v| v[0].tanh()), shapes(&[(2, 3)])),
        ("relu", Box::new(|_, v| v[0].relu()), shapes(&[(4, 5)])),
        (
            "clamp",
            Box::new(|_, v| v[0].clamp(-0.7, 0.9)),
            // stay clear of the kinks at the clamp bounds
            Box::new(|rng| {
                let nudge = |x: f64| if (x + 0.7).abs() < 1e-3 || (x - 0.9).abs() < 1e-3 { x + 0.01 } else { x };
                vec![randn(rng, 4, 5).map(nudge)]
            }),
        ),
        ("sum", Box::new(|_, v| v[0].sum()), shapes(&[(3, 4)])),
        ("mean", Box::new(|_, v| v[0].mean()), shapes(&[(3, 4)])),
        ("sum_rows", Box::new(|_, v| v[0].sum_rows()), shapes(&[(3, 4)])),
        ("sum_cols", Box::new(|_, v| v[0].sum_cols()), shapes(&[(3, 4)])),
        ("softmax", Box::new(|_, v| v[0].softmax_rows().unwrap()), shapes(&[(3, 6)])),
        ("matmul", Box::new(|_, v| v[0].matmul(v[1]).unwrap()), shapes(&[(3, 4), (4, 2)])),
        ("transpose", Box::new(|_, v| v[0].t()), shapes(&[(3, 4)])),
        ("concat_rows", Box::new(|t, v| t.concat_rows(&[v[0], v[1]]).unwrap()), shapes(&[(2, 3), (1, 3)])),
        ("concat_cols", Box::new(|t, v| t.concat_cols(&[v[0], v[1]]).unwrap()), shapes(&[(3, 2), (3, 4)])),
        ("slice_rows", Box::new(|_, v| v[0].slice_rows(1, 3).unwrap()), shapes(&[(4, 3)])),
        ("slice_cols", Box::new(|_, v| v[0].slice_cols(0, 2).unwrap()), shapes(&[(4, 3)])),
        ("mask", Box::new(move |_, v| v[0].mask(&mask).unwrap()), shapes(&[(3, 5)])),
        (
            "solve",
            Box::new(|_, v| v[0].solve(v[1]).unwrap()),
            Box::new(|rng| vec![diagonally_dominant(rng, 4), randn(rng, 4, 2)]),
        ),
        (
            "complex_matmul",
            Box::new(|t, v| {
                let p = pair(v, 0).matmul(pair(v, 2)).unwrap();
                t.concat_cols(&[p.re, p.im]).unwrap()
            }),
            shapes(&[(4, 6), (4, 6), (6, 3), (6, 3)]),
        ),
        (
            "conj_mul",
            Box::new(|t, v| {
                let p = pair(v, 0).conj().mul(pair(v, 2)).unwrap();
                t.concat_cols(&[p.re, p.im]).unwrap()
            }),
            shapes(&[(3, 2), (3, 2), (3, 2), (3, 2)]),
        ),
        (
            "complex_abs",
            Box::new(|_, v| pair(v, 0).abs().unwrap()),
            // keep magnitudes away from the origin
            Box::new(|rng| {
                let re = randn(rng, 3, 4).map(|x| x + x.signum() * 0.3);
                vec![re, randn(rng, 3, 4)]
            }),
        ),
        (
            "complex_solve",
            Box::new(|t, v| {
                let x = pair(v, 0).solve(pair(v, 2)).unwrap();
                t.concat_cols(&[x.re, x.im]).unwrap()
            }),
            Box::new(|rng| vec![diagonally_dominant(rng, 3), randn(rng, 3, 3), randn(rng, 3, 1), randn(rng, 3, 1)]),
        ),
        (
            "chain",
            // a two-layer network with a softmax head and log loss
            Box::new(|t, v| {
                let h = v[0].matmul(v[1]).unwrap().add(v[2]).unwrap().tanh();
                let p = h.matmul(v[3]).unwrap().softmax_rows().unwrap();
                let target = t.constant(Tensor::from_fn(5, 3, |r, c| if r % 3 == c { 1.0 } else { 0.0 }));
                p.ln().unwrap().mul(target).unwrap().sum().neg()
            }),
            shapes(&[(5, 4), (4, 6), (1, 6), (6, 3)]),
        ),
    ];
    cases.iter().map(|(name, build, gen)| check(name, build.as_ref(), gen.as_ref(), instances)).collect()
}
