mod common;

use common::*;
use hcl_core::gradcore::{Graph, Padding, Tensor};

/// Direct nested-loop convolution with zero padding.
fn conv_oracle(
    x: &[f64],
    (c_in, h, w): (usize, usize, usize),
    k: &[f64],
    (c_out, kh, kw): (usize, usize, usize),
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; c_out * oh * ow];
    for co in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..c_in {
                    for i in 0..kh {
                        for j in 0..kw {
                            let iy = (oy * stride + i) as isize - pad as isize;
                            let ix = (ox * stride + j) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += x[(ci * h + iy as usize) * w + ix as usize]
                                * k[((co * c_in + ci) * kh + i) * kw + j];
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut r = rng(11);
    let x = uniform(&mut r, &[1, 5, 5], -1.0, 1.0);
    let k = uniform(&mut r, &[2, 1, 3, 3], -1.0, 1.0);
    let mut g = Graph::new();
    let (xv, kv) = (g.constant(&x), g.constant(&k));
    let y = g.conv2d(xv, kv, None, 2, 1, Padding::Zeros).unwrap();
    assert_eq!(g.shape(y), &[2, 3, 3]);
    let want = conv_oracle(x.data(), (1, 5, 5), k.data(), (2, 3, 3), 2, 1);
    for (a, b) in g.value(y).iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn conv_shapes_follow_closed_form() {
    let mut r = rng(12);
    for h in 3..9 {
        for kh in 1..=3 {
            for stride in 1..=3 {
                for pad in 0..=1 {
                    let x = uniform(&mut r, &[2, h, h + 1], -1.0, 1.0);
                    let k = uniform(&mut r, &[3, 2, kh, kh], -1.0, 1.0);
                    let mut g = Graph::new();
                    let (xv, kv) = (g.constant(&x), g.constant(&k));
                    let y = g.conv2d(xv, kv, None, stride, pad, Padding::Zeros).unwrap();
                    let oh = (h + 2 * pad - kh) / stride + 1;
                    let ow = (h + 1 + 2 * pad - kh) / stride + 1;
                    assert_eq!(g.shape(y), &[3, oh, ow]);
                    let want = conv_oracle(x.data(), (2, h, h + 1), k.data(), (3, kh, kh), stride, pad);
                    for (a, b) in g.value(y).iter().zip(&want) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn avg_pool_matches_direct_mean() {
    let mut r = rng(13);
    let x = uniform(&mut r, &[1, 6, 6], -2.0, 2.0);
    let mut g = Graph::new();
    let xv = g.constant(&x);
    let y = g.avg_pool2d(xv, 2, 2).unwrap();
    assert_eq!(g.shape(y), &[1, 3, 3]);
    for oy in 0..3 {
        for ox in 0..3 {
            let d = x.data();
            let mean = (d[(2 * oy) * 6 + 2 * ox]
                + d[(2 * oy) * 6 + 2 * ox + 1]
                + d[(2 * oy + 1) * 6 + 2 * ox]
                + d[(2 * oy + 1) * 6 + 2 * ox + 1])
                / 4.0;
            assert!((g.value(y)[oy * 3 + ox] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn upsample_matches_index_map() {
    let mut r = rng(14);
    let x = uniform(&mut r, &[1, 3, 3], -1.0, 1.0);
    let mut g = Graph::new();
    let xv = g.constant(&x);
    let y = g.upsample_nearest2x(xv).unwrap();
    assert_eq!(g.shape(y), &[1, 6, 6]);
    for i in 0..6 {
        for j in 0..6 {
            assert_eq!(g.value(y)[i * 6 + j], x.data()[(i / 2) * 3 + j / 2]);
        }
    }
}

#[test]
fn linear_matches_dot_products() {
    let mut r = rng(15);
    let x = uniform(&mut r, &[3], -1.0, 1.0);
    let w = uniform(&mut r, &[4, 3], -1.0, 1.0);
    let b = uniform(&mut r, &[4], -1.0, 1.0);
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.constant(&x), g.constant(&w), g.constant(&b));
    let y = g.linear(xv, wv, bv).unwrap();
    for i in 0..4 {
        let dot: f64 = (0..3).map(|j| w.data()[i * 3 + j] * x.data()[j]).sum::<f64>() + b.data()[i];
        assert!((g.value(y)[i] - dot).abs() < 1e-12);
    }
}

#[test]
fn group_norm_moments() {
    let mut r = rng(16);
    for _ in 0..20 {
        let x = uniform(&mut r, &[8, 5, 5], -3.0, 3.0);
        let mut g = Graph::new();
        let xv = g.constant(&x);
        let ones = g.constant(&Tensor::from_fn([8], |_| 1.0));
        let zeros = g.constant(&Tensor::zeros([8]));
        let y = g.group_norm(xv, 4, ones, zeros, 1e-5).unwrap();
        for grp in g.value(y).chunks(2 * 25) {
            let m = grp.len() as f64;
            let mean = grp.iter().sum::<f64>() / m;
            let var = grp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            assert!(mean.abs() < 1e-7);
            assert!((var - 1.0).abs() < 1e-5, "variance {var}");
        }
    }
}

#[test]
fn finite_differences_per_op() {
    let mut r = rng(17);
    for inst in 0..20u64 {
        let x = uniform(&mut r, &[2, 5, 5], -1.0, 1.0);
        let k = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
        let b = uniform(&mut r, &[3], -1.0, 1.0);
        for padding in [Padding::Zeros, Padding::Replicate] {
            let e = check_gradients(
                &[x.clone(), k.clone(), b.clone()],
                |g, v| {
                    let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1, padding).unwrap();
                    weighted_sum(g, y, inst)
                },
                None,
                &mut r,
            );
            assert!(e < FD_REL_TOL, "conv {padding:?}: {e}");
        }

        let xp = uniform(&mut r, &[2, 6, 6], -1.0, 1.0);
        let e = check_gradients(
            std::slice::from_ref(&xp),
            |g, v| {
                let y = g.avg_pool2d(v[0], 2, 2).unwrap();
                weighted_sum(g, y, inst)
            },
            None,
            &mut r,
        );
        assert!(e < FD_REL_TOL, "pool: {e}");

        let e = check_gradients(
            std::slice::from_ref(&xp),
            |g, v| {
                let y = g.upsample_nearest2x(v[0]).unwrap();
                weighted_sum(g, y, inst)
            },
            None,
            &mut r,
        );
        assert!(e < FD_REL_TOL, "upsample: {e}");

        let xv = uniform(&mut r, &[5], -1.0, 1.0);
        let w = uniform(&mut r, &[4, 5], -1.0, 1.0);
        let bb = uniform(&mut r, &[4], -1.0, 1.0);
        let e = check_gradients(
            &[xv.clone(), w, bb],
            |g, v| {
                let y = g.linear(v[0], v[1], v[2]).unwrap();
                let y = g.relu(y);
                weighted_sum(g, y, inst)
            },
            None,
            &mut r,
        );
        assert!(e < FD_REL_TOL, "linear: {e}");

        let gamma = uniform(&mut r, &[4], 0.5, 1.5);
        let beta = uniform(&mut r, &[4], -0.5, 0.5);
        let xg = uniform(&mut r, &[4, 3, 3], -1.0, 1.0);
        let e = check_gradients(
            &[xg, gamma, beta],
            |g, v| {
                let y = g.group_norm(v[0], 2, v[1], v[2], 1e-5).unwrap();
                weighted_sum(g, y, inst)
            },
            None,
            &mut r,
        );
        assert!(e < FD_REL_TOL, "group norm: {e}");

        let e = check_gradients(
            std::slice::from_ref(&xv),
            |g, v| {
                let y = g.l2_normalize(v[0], 1e-12).unwrap();
                weighted_sum(g, y, inst)
            },
            None,
            &mut r,
        );
        assert!(e < FD_REL_TOL, "l2 normalize: {e}");
    }
}

#[test]
fn forward_is_bitwise_deterministic() {
    let mut r = rng(18);
    let x = uniform(&mut r, &[3, 8, 8], 0.0, 1.0);
    let k = uniform(&mut r, &[4, 3, 3, 3], -1.0, 1.0);
    let run = || {
        let mut g = Graph::new();
        let (xv, kv) = (g.constant(&x), g.constant(&k));
        let y = g.conv2d(xv, kv, None, 1, 1, Padding::Replicate).unwrap();
        let p = g.avg_pool2d(y, 2, 2).unwrap();
        g.value(p).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
