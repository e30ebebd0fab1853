#![allow(dead_code)]

use hcl_core::gradcore::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Central finite-difference check of every (or a sampled subset of)
/// coordinate of every input. Returns the worst relative error.
pub fn check_gradients<F>(
    inputs: &[Tensor<f64>],
    build: F,
    max_coords: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let params: Vec<Tensor<f64>> = inputs.iter().map(|t| t.clone().with_grad()).collect();
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.param(t)).collect();
    let out = build(&mut g, &vars);
    let grads = g.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| grads.wrt(&g, v)).collect();

    let eval = |ps: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|t| g.constant(t)).collect();
        let out = build(&mut g, &vars);
        g.value(out)[0]
    };

    let mut worst: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        let n = p.numel();
        let coords: Vec<usize> = match max_coords {
            Some(m) if m < n => (0..m).map(|_| rng.gen_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let mut plus = params.clone();
            plus[pi].data_mut()[c] += FD_STEP;
            let mut minus = params.clone();
            minus[pi].data_mut()[c] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[pi][c], numeric));
        }
    }
    worst
}

/// Reduces any node to a scalar through fixed random weights.
pub fn weighted_sum(g: &mut Graph<f64>, x: Var, seed: u64) -> Var {
    let mut r = rng(seed);
    let shape = g.shape(x).to_vec();
    let w = uniform(&mut r, &shape, -1.0, 1.0);
    let wv = g.constant(&w);
    let prod = g.mul(x, wv).unwrap();
    g.sum(prod)
}
