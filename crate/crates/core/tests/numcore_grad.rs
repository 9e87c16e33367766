//! Finite-difference checks of every differentiable op, plus algebraic
//! invariants of the forward pass.

use pidtc_core::numcore::gradcheck::check;
use pidtc_core::numcore::{softmax_in_place, Graph, Tensor, Var};
use pidtc_core::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;
const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let data = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::matrix(r, c, data).unwrap()
}

/// Reduces `y` to a scalar with fixed random weights so every output
/// element gets a distinct upstream gradient.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.shape(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let w = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = g.constant(r, c, w)?;
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn run<F>(name: &str, shapes: &[(usize, usize)], f: F)
where
    F: Fn(&mut Graph, &[Var], u64) -> Result<Var>,
{
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|&(r, c)| rand_tensor(&mut rng, r, c)).collect();
        let errs = check(&inputs, H, |g, v| {
            let y = f(g, v, seed)?;
            project(g, y, seed)
        })
        .unwrap();
        for (k, e) in errs.iter().enumerate() {
            assert!(*e <= TOL, "{name}: seed {seed} input {k} relative error {e}");
        }
    }
}

#[test]
fn grad_matmul_family() {
    run("matmul", &[(3, 4), (4, 2)], |g, v, _| g.matmul(v[0], v[1]));
    run("matmul_nt", &[(3, 4), (5, 4)], |g, v, _| g.matmul_nt(v[0], v[1]));
    run("block_matmul", &[(6, 3), (6, 2)], |g, v, _| g.block_matmul(v[0], v[1], 2));
    run("block_matmul_nt", &[(6, 3), (4, 3)], |g, v, _| g.block_matmul_nt(v[0], v[1], 2));
}

#[test]
fn grad_elementwise() {
    run("add", &[(2, 3), (2, 3)], |g, v, _| g.add(v[0], v[1]));
    run("add_row", &[(4, 3), (1, 3)], |g, v, _| g.add_row(v[0], v[1]));
    run("sub", &[(2, 3), (2, 3)], |g, v, _| g.sub(v[0], v[1]));
    run("mul", &[(2, 3), (2, 3)], |g, v, _| g.mul(v[0], v[1]));
    run("scale", &[(2, 3)], |g, v, _| Ok(g.scale(v[0], -2.5)));
    run("relu", &[(3, 5)], |g, v, _| Ok(g.relu(v[0])));
    run("sigmoid", &[(3, 5)], |g, v, _| Ok(g.sigmoid(v[0])));
    run("tanh", &[(3, 5)], |g, v, _| Ok(g.tanh(v[0])));
    run("square", &[(3, 5)], |g, v, _| Ok(g.square(v[0])));
}

#[test]
fn grad_normalisation() {
    run("softmax_rows", &[(3, 4)], |g, v, _| Ok(g.softmax_rows(v[0])));
    run("layer_norm", &[(3, 5), (1, 5), (1, 5)], |g, v, _| g.layer_norm(v[0], v[1], v[2], 1e-5));
}

#[test]
fn grad_dropout_with_fixed_mask() {
    run("dropout", &[(4, 6)], |g, v, seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        g.dropout(v[0], 0.3, &mut rng, true)
    });
}

#[test]
fn grad_shape_ops() {
    run("slice_cols", &[(3, 6)], |g, v, _| g.slice_cols(v[0], 2, 3));
    run("concat_cols", &[(3, 2), (3, 4)], |g, v, _| g.concat_cols(&[v[0], v[1], v[0]]));
    run("gather_rows", &[(4, 3)], |g, v, _| g.gather_rows(v[0], &[3, 0, 0, 2]));
    run("reshape", &[(2, 6)], |g, v, _| g.reshape(v[0], 4, 3));
    run("block_mean_rows", &[(6, 3)], |g, v, _| g.block_mean_rows(v[0], 3));
}

#[test]
fn grad_reductions_and_bce() {
    run("sum", &[(3, 4)], |g, v, _| Ok(g.sum(v[0])));
    run("mean", &[(3, 4)], |g, v, _| Ok(g.mean(v[0])));
    run("bce", &[(1, 6)], |g, v, _| {
        let p = g.sigmoid(v[0]);
        g.bce(p, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    });
}

#[test]
fn two_layer_relu_network_matches_finite_differences() {
    run("mlp", &[(5, 3), (3, 4), (1, 4), (4, 2)], |g, v, _| {
        let h = g.matmul(v[0], v[1])?;
        let h = g.add_row(h, v[2])?;
        let h = g.relu(h);
        let y = g.matmul(h, v[3])?;
        let t = g.constant(5, 2, vec![0.5; 10])?;
        let d = g.sub(y, t)?;
        let s = g.square(d);
        Ok(g.mean(s))
    });
}

fn naive_matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            for p in 0..k {
                out[i * m + j] += a[i * k + p] * b[p * m + j];
            }
        }
    }
    out
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_tensor(&mut rng, 7, 5);
    let b = rand_tensor(&mut rng, 5, 3);
    let mut g = Graph::new();
    let va = g.leaf(&a).unwrap();
    let vb = g.leaf(&b).unwrap();
    let c = g.matmul(va, vb).unwrap();
    let want = naive_matmul(a.data(), b.data(), 7, 5, 3);
    for (x, y) in g.value(c).iter().zip(want) {
        assert!((x - y).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(row in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let mut r = row.clone();
        softmax_in_place(&mut r);
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(r.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn softmax_is_shift_invariant(row in prop::collection::vec(-20.0f64..20.0, 1..10), c in -100.0f64..100.0) {
        let mut a = row.clone();
        let mut b: Vec<f64> = row.iter().map(|v| v + c).collect();
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_is_associative(seed in 0u64..10_000, n in 1usize..5, k in 1usize..5, m in 1usize..5, p in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, n, k);
        let b = rand_tensor(&mut rng, k, m);
        let c = rand_tensor(&mut rng, m, p);
        let mut g = Graph::new();
        let (va, vb, vc) = (g.leaf(&a).unwrap(), g.leaf(&b).unwrap(), g.leaf(&c).unwrap());
        let ab = g.matmul(va, vb).unwrap();
        let left = g.matmul(ab, vc).unwrap();
        let bc = g.matmul(vb, vc).unwrap();
        let right = g.matmul(va, bc).unwrap();
        for (x, y) in g.value(left).iter().zip(g.value(right)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_is_deterministic_per_seed(seed in 0u64..10_000, rate in 0.0f64..0.9) {
        let x = Tensor::matrix(3, 7, (0..21).map(|i| i as f64).collect()).unwrap();
        let out = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut g = Graph::new();
            let v = g.leaf(&x).unwrap();
            let d = g.dropout(v, rate, &mut rng, true).unwrap();
            g.value(d).to_vec()
        };
        prop_assert_eq!(out(seed), out(seed));
    }
}
