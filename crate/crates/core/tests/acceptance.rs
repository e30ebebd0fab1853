//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `HCL_ACCEPTANCE_ONLY=3,4` restricts the run to the listed criteria.

mod common;

use std::collections::VecDeque;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use common::*;
use hcl_core::augment::{sample_view, view_iou, AugConfig, ViewRect};
use hcl_core::contrast::{info_nce_graph, info_nce_loss, momentum_update, MemoryQueue, Temperature};
use hcl_core::data::{generate_synthetic, Dataset, Image, ImageRecord};
use hcl_core::evalbench::{
    contrastive_test, dim_sweep_bank, encode_views, fit_pca, iou_binned_accuracy, Features,
    SweepMode, ViewEncoder, ViewInput, ViewRole,
};
use hcl_core::gradcore::{Graph, Padding, Tensor};
use hcl_core::models::{BranchEmbeddings, Encoder, ModelConfig};
use hcl_core::pipeline::{
    export_embeddings, init_stage2, train_stage1, train_stage2, Branch, Checkpoint, EmbeddingTable,
    MetricsRow, TrainConfig,
};
use hcl_core::rng::{stream_rng, Stream};
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn unit(r: &mut impl Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------- 1

fn op_suite() -> Result<f64, String> {
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    let mut fd = |name: &str, e: f64| -> Result<(), String> {
        worst = worst.max(e);
        check!(e < FD_REL_TOL, "{name}: relative error {e:.3e}");
        Ok(())
    };
    for inst in 0..20u64 {
        let x = uniform(&mut r, &[2, 6, 6], -1.0, 1.0);
        let k = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
        let b = uniform(&mut r, &[3], -1.0, 1.0);
        for (stride, padding) in [(1, Padding::Zeros), (2, Padding::Replicate), (1, Padding::Replicate)] {
            let e = check_gradients(
                &[x.clone(), k.clone(), b.clone()],
                |g, v| {
                    let y = g.conv2d(v[0], v[1], Some(v[2]), stride, 1, padding).unwrap();
                    weighted_sum(g, y, inst)
                },
                None,
                &mut r,
            );
            fd("conv2d", e)?;
        }
        let e = check_gradients(std::slice::from_ref(&x), |g, v| {
            let y = g.avg_pool2d(v[0], 2, 2).unwrap();
            weighted_sum(g, y, inst)
        }, None, &mut r);
        fd("avg_pool2d", e)?;
        let e = check_gradients(std::slice::from_ref(&x), |g, v| {
            let y = g.global_avg_pool(v[0]).unwrap();
            weighted_sum(g, y, inst)
        }, None, &mut r);
        fd("global_avg_pool", e)?;
        let e = check_gradients(std::slice::from_ref(&x), |g, v| {
            let y = g.upsample_nearest2x(v[0]).unwrap();
            weighted_sum(g, y, inst)
        }, None, &mut r);
        fd("upsample_nearest2x", e)?;
        let e = check_gradients(std::slice::from_ref(&x), |g, v| {
            let y = g.relu(v[0]);
            weighted_sum(g, y, inst)
        }, None, &mut r);
        fd("relu", e)?;
        let e = check_gradients(std::slice::from_ref(&x), |g, v| {
            let y = g.reshape(v[0], vec![72]).unwrap();
            let y = g.scale(y, 0.7);
            weighted_sum(g, y, inst)
        }, None, &mut r);
        fd("reshape/scale", e)?;

        let gamma = uniform(&mut r, &[4], 0.5, 1.5);
        let beta = uniform(&mut r, &[4], -0.5, 0.5);
        let xg = uniform(&mut r, &[4, 3, 3], -1.0, 1.0);
        let e = check_gradients(&[xg, gamma, beta], |g, v| {
            let y = g.group_norm(v[0], 2, v[1], v[2], 1e-5).unwrap();
            weighted_sum(g, y, inst)
        }, None, &mut r);
        fd("group_norm", e)?;

        let a = uniform(&mut r, &[5], -1.0, 1.0);
        let c = uniform(&mut r, &[5], -1.0, 1.0);
        let w = uniform(&mut r, &[4, 5], -1.0, 1.0);
        let bias = uniform(&mut r, &[4], -1.0, 1.0);
        let e = check_gradients(&[a.clone(), w, bias], |g, v| {
            let y = g.linear(v[0], v[1], v[2]).unwrap();
            weighted_sum(g, y, inst)
        }, None, &mut r);
        fd("linear", e)?;
        let e = check_gradients(&[a.clone(), c.clone()], |g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            let p = g.mul(s, v[1]).unwrap();
            let cat = g.concat(&[p, v[0]]).unwrap();
            weighted_sum(g, cat, inst)
        }, None, &mut r);
        fd("add/mul/concat", e)?;
        let e = check_gradients(&[a.clone(), c.clone()], |g, v| g.dot(v[0], v[1]).unwrap(), None, &mut r);
        fd("dot", e)?;
        let e = check_gradients(std::slice::from_ref(&a), |g, v| {
            let y = g.l2_normalize(v[0], 1e-12).unwrap();
            weighted_sum(g, y, inst)
        }, None, &mut r);
        fd("l2_normalize", e)?;
        let mat: Arc<[f64]> = uniform(&mut r, &[3, 5], -1.0, 1.0).into_data().into();
        let target = (inst % 3) as usize;
        let e = check_gradients(std::slice::from_ref(&a), |g, v| {
            let y = g.matvec_const(v[0], mat.clone(), 3, 5).unwrap();
            g.softmax_xent(y, target).unwrap()
        }, None, &mut r);
        fd("matvec_const/softmax_xent", e)?;

        let d = 6;
        let gal: Arc<[f64]> = (0..5).flat_map(|_| unit(&mut r, d)).collect::<Vec<_>>().into();
        let t = Temperature::new([0.07, 0.2, 1.0][inst as usize % 3]).unwrap();
        let q = uniform(&mut r, &[d], -1.0, 1.0);
        let kp = uniform(&mut r, &[d], -1.0, 1.0);
        let e = check_gradients(&[q, kp], |g, v| info_nce_graph(g, v[0], v[1], &gal, t).unwrap(), None, &mut r);
        fd("info_nce", e)?;
    }
    Ok(worst)
}

fn tiny_model() -> ModelConfig {
    let mut c = ModelConfig::default();
    c.backbone.input_size = 32;
    c.backbone.stage_channels = [4, 4, 8, 8];
    c.head.d_sem = 8;
    c.head.hidden_sem = 8;
    c.head.fpn_channels = 4;
    c.head.spatial_res = 4;
    c
}

fn composite_loss(enc: &Encoder<f64>, img: &Tensor<f64>, key: &[f64], gal: &Arc<[f64]>) -> f64 {
    let mut g = Graph::inference();
    let x = g.constant(img);
    let e = enc.embed_vars(&mut g, x).unwrap();
    let k = g.constant_vec(vec![key.len()], key.to_vec()).unwrap();
    let l = info_nce_graph(&mut g, e.contrastive, k, gal, Temperature::default()).unwrap();
    g.value(l)[0]
}

/// Backbone, both heads and the loss, checked against central differences
/// on sampled parameter and pixel coordinates.
fn composite_suite() -> Result<(f64, usize), String> {
    let cfg = tiny_model();
    let d = cfg.head.concat_dim();
    let mut r = rng(102);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for inst in 0..20u64 {
        let mut enc = Encoder::<f64>::heterogeneous(&cfg, inst).unwrap();
        let img = uniform(&mut r, &[3, 32, 32], 0.0, 1.0).with_grad();
        let key: Vec<f64> = unit(&mut r, d).iter().map(|v| v * 2f64.sqrt()).collect();
        let gal: Arc<[f64]> = (0..6)
            .flat_map(|_| unit(&mut r, d).into_iter().map(|v| v * 2f64.sqrt()))
            .collect::<Vec<_>>()
            .into();

        let mut g = Graph::new();
        let x = g.param(&img);
        let e = enc.embed_vars(&mut g, x).unwrap();
        let k = g.constant_vec(vec![d], key.clone()).unwrap();
        let l = info_nce_graph(&mut g, e.contrastive, k, &gal, Temperature::default()).unwrap();
        let grads = g.backward(l).unwrap();
        let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
        enc.visit_params(&mut |name, t| analytic.push((name, grads.wrt(&g, g.bound_var(t).unwrap()))));
        let pixel_grad = grads.wrt(&g, x);
        drop(g);

        for _ in 0..12 {
            let (pi, name_grad) = {
                let i = r.gen_range(0..analytic.len());
                (i, &analytic[i])
            };
            let c = r.gen_range(0..name_grad.1.len());
            let name = name_grad.0.clone();
            let mut eval_at = |delta: f64| {
                enc.visit_params_mut(&mut |n, t| {
                    if n == name {
                        t.data_mut()[c] += delta;
                    }
                });
                composite_loss(&enc, &img, &key, &gal)
            };
            let plus = eval_at(FD_STEP);
            let minus = eval_at(-2.0 * FD_STEP);
            eval_at(FD_STEP);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let e = rel_err(analytic[pi].1[c], numeric);
            check!(e < FD_REL_TOL, "instance {inst}, {name}[{c}]: relative error {e:.3e}");
            worst = worst.max(e);
            checked += 1;
        }
        for _ in 0..4 {
            let c = r.gen_range(0..img.numel());
            let mut p = img.clone();
            p.data_mut()[c] += FD_STEP;
            let plus = composite_loss(&enc, &p, &key, &gal);
            p.data_mut()[c] -= 2.0 * FD_STEP;
            let minus = composite_loss(&enc, &p, &key, &gal);
            let e = rel_err(pixel_grad[c], (plus - minus) / (2.0 * FD_STEP));
            check!(e < FD_REL_TOL, "instance {inst}, pixel {c}: relative error {e:.3e}");
            worst = worst.max(e);
            checked += 1;
        }
    }
    Ok((worst, checked))
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let ops = op_suite()?;
    let (comp, n) = composite_suite()?;
    let secs = t.elapsed().as_secs_f64();
    check!(secs < 120.0, "took {secs:.1}s");
    Ok(format!(
        "per-op worst rel err {ops:.2e} (20 instances), composite worst {comp:.2e} over {n} coords, {secs:.1}s"
    ))
}

// ---------------------------------------------------------------- 2

fn brute_force(q: &[f64], k: &[f64], gallery: &[Vec<f64>], t: f64) -> f64 {
    let sim = |a: &[f64], b: &[f64]| (dot(a, b) / t).exp();
    let pos = sim(q, k);
    let denom = pos + gallery.iter().map(|x| sim(q, x)).sum::<f64>();
    -(pos / denom).ln()
}

fn criterion_2() -> Outcome {
    let mut r = rng(201);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let t = [0.07, 0.2, 1.0][i % 3];
        let d = r.gen_range(2..=16);
        let n = r.gen_range(0..=16);
        let q = unit(&mut r, d);
        let k = unit(&mut r, d);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| unit(&mut r, d)).collect();
        let mut queue = MemoryQueue::new(16, d).unwrap();
        queue.push(&rows).unwrap();
        let got = info_nce_loss(&q, &k, &queue, Temperature::new(t).unwrap()).unwrap();
        let diff = (got - brute_force(&q, &k, &rows, t)).abs();
        check!(diff < 1e-10, "instance {i}: |diff| {diff:.3e}");
        worst = worst.max(diff);
    }
    let empty = MemoryQueue::<f64>::new(4, 3).unwrap();
    let q = unit(&mut r, 3);
    let k = unit(&mut r, 3);
    let l0 = info_nce_loss(&q, &k, &empty, Temperature::default()).unwrap();
    check!(l0 == 0.0, "empty-gallery loss {l0}");
    for n in 1..=16usize {
        let v = unit(&mut r, 5);
        let mut queue = MemoryQueue::new(16, 5).unwrap();
        queue.push(&vec![v.clone(); n]).unwrap();
        let l = info_nce_loss(&v, &v, &queue, Temperature::new(0.07).unwrap()).unwrap();
        let want = ((n + 1) as f64).ln();
        check!((l - want).abs() < 1e-12, "N={n}: {l} vs ln(N+1) {want}");
    }
    Ok(format!("1000 instances, worst |diff| {worst:.2e}; empty gallery 0; equal similarity ln(N+1)"))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let cfg = ModelConfig::default();
    let ds = generate_synthetic(301, 6, cfg.backbone.input_size).unwrap();
    let enc32 = Encoder::<f32>::heterogeneous(&cfg, 3).unwrap();
    let enc64 = Encoder::<f64>::heterogeneous(&cfg, 3).unwrap();
    let mut worst: f64 = 0.0;
    for rec in ds.records() {
        let a = enc32.embed(&rec.image.to_tensor::<f32>()).unwrap();
        let b = enc64.embed(&rec.image.to_tensor::<f64>()).unwrap();
        let n2 = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>();
        let widen = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        for (sem, spa, cat) in [
            (widen(&a.semantic), widen(a.spatial.as_ref().unwrap()), widen(&a.contrastive())),
            (b.semantic.clone(), b.spatial.clone().unwrap(), b.contrastive()),
        ] {
            let dev = [(n2(sem).sqrt() - 1.0).abs(), (n2(spa).sqrt() - 1.0).abs(), (n2(cat) - 2.0).abs()];
            let m = dev.iter().cloned().fold(0.0, f64::max);
            check!(m < 1e-6, "norm deviation {dev:?}");
            worst = worst.max(m);
        }
    }

    let mut r = rng(302);
    let (cap, d) = (13, 4);
    let mut q = MemoryQueue::<f64>::new(cap, d).unwrap();
    let mut reference: VecDeque<Vec<f64>> = VecDeque::new();
    let mut next = 0.0;
    for op in 0..100_000 {
        if r.gen_bool(0.002) {
            q.clear();
            reference.clear();
        } else {
            let n = r.gen_range(1..=cap);
            let batch: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    next += 1.0;
                    (0..d).map(|j| next + j as f64 * 0.25).collect()
                })
                .collect();
            q.push(&batch).unwrap();
            for b in batch {
                if reference.len() == cap {
                    reference.pop_front();
                }
                reference.push_back(b);
            }
        }
        check!(q.len() == reference.len(), "op {op}: len {} vs {}", q.len(), reference.len());
        check!(
            q.iter_oldest_first().zip(&reference).all(|(a, b)| a == b.as_slice()),
            "op {op}: contents diverge from ring-buffer oracle"
        );
    }
    check!(q.push(&[vec![0.0; d + 1]]).is_err(), "wrong-width key accepted");
    check!(q.push(&vec![vec![0.0; d]; cap + 1]).is_err(), "over-capacity batch accepted");

    let small = tiny_model();
    let qe = Encoder::<f64>::heterogeneous(&small, 1).unwrap();
    let k0 = Encoder::<f64>::heterogeneous(&small, 2).unwrap();
    let mut k = k0.clone();
    momentum_update(&qe, &mut k, 1.0).unwrap();
    check!(k.checksum() == k0.checksum(), "m = 1 changed the key");
    momentum_update(&qe, &mut k, 0.0).unwrap();
    check!(k.checksum() == qe.checksum(), "m = 0 did not copy the query");
    Ok(format!("worst norm deviation {worst:.2e}; 1e5 queue ops match; m in {{0,1}} exact"))
}

// ---------------------------------------------------------------- 4

fn pixel_iou(a: &ViewRect, b: &ViewRect, size: usize) -> f64 {
    let inside = |r: &ViewRect, x: usize, y: usize| x >= r.x0 && x < r.x0 + r.w && y >= r.y0 && y < r.y0 + r.h;
    let (mut inter, mut union) = (0usize, 0usize);
    for y in 0..size {
        for x in 0..size {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    inter as f64 / union as f64
}

fn random_rect(r: &mut impl Rng, size: usize) -> ViewRect {
    let w = r.gen_range(1..=size);
    let h = r.gen_range(1..=size);
    ViewRect { x0: r.gen_range(0..=size - w), y0: r.gen_range(0..=size - h), w, h, flipped: r.gen_bool(0.5) }
}

fn criterion_4() -> Outcome {
    let mut r = rng(401);
    let size = 64;
    let tol = 1.0 / (size * size) as f64;
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let a = random_rect(&mut r, size);
        let b = random_rect(&mut r, size);
        let diff = (view_iou(&a, &b) - pixel_iou(&a, &b, size)).abs();
        check!(diff <= tol, "pair {i}: {a:?} {b:?} differ by {diff:.3e}");
        worst = worst.max(diff);
    }
    let cfg = AugConfig::default();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..100_000 {
        let v = sample_view(&mut r, size, size, &cfg);
        let frac = (v.w * v.h) as f64 / (size * size) as f64;
        check!((0.2..=1.0).contains(&frac), "area fraction {frac} for {v:?}");
        lo = lo.min(frac);
        hi = hi.max(frac);
    }
    for _ in 0..10_000 {
        let (h, w) = (r.gen_range(5..=96), r.gen_range(5..=96));
        let v = sample_view(&mut r, h, w, &cfg);
        let frac = (v.w * v.h) as f64 / (h * w) as f64;
        check!((0.2..=1.0).contains(&frac), "area fraction {frac} for {v:?} in {h}x{w}");
    }
    Ok(format!("worst IoU diff {worst:.2e} (bound {tol:.2e}); area fractions in [{lo:.3}, {hi:.3}]"))
}

// ---------------------------------------------------------------- 5

fn explicit_covariance(rows: &[f64], d: usize) -> Vec<f64> {
    let n = rows.len() / d;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().skip(j).step_by(d).sum::<f64>() / n as f64).collect();
    let mut c = vec![0.0; d * d];
    for row in rows.chunks_exact(d) {
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] += (row[i] - mean[i]) * (row[j] - mean[j]) / n as f64;
            }
        }
    }
    c
}

fn criterion_5() -> Outcome {
    let (mut ortho, mut eig): (f64, f64) = (0.0, 0.0);
    for (seed, n, d) in (0..10).map(|s| (s, 50, 8)).chain([(10, 300, 32), (11, 20, 24)]) {
        let mut r = rng(500 + seed);
        let rows: Vec<f64> = (0..n * d).map(|i| r.gen_range(-1.0..1.0) * (1.0 + (i % d) as f64)).collect();
        let k = d.min(n);
        let p = fit_pca(&rows, d, k).map_err(|e| e.to_string())?;
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((dot(&p.components[i], &p.components[j]) - want).abs());
            }
        }
        check!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]), "variances not sorted");
        let c = explicit_covariance(&rows, d);
        for (lambda, v) in p.explained_variance.iter().zip(&p.components) {
            for i in 0..d {
                let cv: f64 = (0..d).map(|j| c[i * d + j] * v[j]).sum();
                eig = eig.max((cv - lambda * v[i]).abs());
            }
        }
        let errs: Vec<f64> = (1..=k)
            .map(|m| fit_pca(&rows, d, m).unwrap().reconstruction_error(&rows).unwrap())
            .collect();
        check!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12 * errs[0]), "reconstruction error increases: {errs:?}");
    }
    check!(ortho < 1e-8, "orthonormality residual {ortho:.3e}");
    check!(eig < 1e-8, "eigen residual {eig:.3e}");
    Ok(format!("orthonormality {ortho:.2e}, eigen residual {eig:.2e}, reconstruction monotone"))
}

// ---------------------------------------------------------------- 6

fn flat_dataset(n: usize, size: usize) -> Dataset {
    let records = (0..n as u64)
        .map(|id| ImageRecord { id, image: Image::filled(size, size, [0.5, 0.5, 0.5]) })
        .collect();
    Dataset::new(size, records).unwrap()
}

struct OneHot(usize);

impl ViewEncoder for OneHot {
    fn encode(&self, view: &ViewInput<'_>) -> hcl_core::Result<BranchEmbeddings<f64>> {
        let mut v = vec![0.0; self.0];
        v[view.id as usize] = 1.0;
        Ok(BranchEmbeddings { semantic: v, spatial: None })
    }
}

struct RandomUnit;

impl ViewEncoder for RandomUnit {
    fn encode(&self, view: &ViewInput<'_>) -> hcl_core::Result<BranchEmbeddings<f64>> {
        let role = matches!(view.role, ViewRole::Key) as u64;
        let mut r = stream_rng(601, Stream::Eval, &[view.id, role]);
        Ok(BranchEmbeddings { semantic: unit(&mut r, 16), spatial: None })
    }
}

fn criterion_6() -> Outcome {
    let aug = AugConfig::identity(8);
    let mut cases = 0;
    for n in 1..=32 {
        let ds = flat_dataset(n, 8);
        for cap in 1..=n + 1 {
            let out = contrastive_test(&OneHot(n), &ds, cap, &aug, Features::Contrastive, false, n as u64)
                .map_err(|e| e.to_string())?;
            check!(out.accuracy() == 1.0, "one-hot n={n} gallery={cap}: {}", out.accuracy());
            cases += 1;
        }
    }
    let gallery = 50;
    let queries = 10_000;
    let out = contrastive_test(
        &RandomUnit,
        &flat_dataset(gallery + queries, 4),
        gallery,
        &AugConfig::identity(4),
        Features::Contrastive,
        false,
        602,
    )
    .map_err(|e| e.to_string())?;
    check!(out.hits.len() == queries, "{} queries", out.hits.len());
    let p = 1.0 / (gallery as f64 + 1.0);
    let sigma = (p * (1.0 - p) / queries as f64).sqrt();
    let acc = out.accuracy();
    check!((acc - p).abs() <= 3.0 * sigma, "random encoder {acc:.4}, expected {p:.4} ± {:.4}", 3.0 * sigma);
    Ok(format!("one-hot 1.0 on {cases} cases; random {acc:.4} vs {p:.4} ± {:.4}", 3.0 * sigma))
}

// ---------------------------------------------------------------- 7, 8

const TREND_SEEDS: [u64; 3] = [0, 1, 2];

fn pinned_config(seed: u64) -> TrainConfig {
    TrainConfig { seed, stage1_epochs: 32, stage2_epochs: 32, ..TrainConfig::default() }
}

fn pinned_run(seed: u64) -> Result<(TrainConfig, Dataset, Encoder<f32>, f64), String> {
    let cfg = pinned_config(seed);
    let ds = cfg.dataset_spec().and_then(|s| s.load()).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let s1 = train_stage1(&cfg, &ds, &mut |_| Ok(())).map_err(|e| e.to_string())?;
    let s2 = train_stage2(&cfg, &s1.checkpoint(), &ds, &mut |_| Ok(())).map_err(|e| e.to_string())?;
    Ok((cfg, ds, s2.state.pair.query, t.elapsed().as_secs_f64()))
}

fn trend_criteria() -> (Outcome, Outcome) {
    let mut c7: Outcome = Err("not run".into());
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in TREND_SEEDS {
        let (cfg, ds, enc, secs) = match pinned_run(seed) {
            Ok(v) => v,
            Err(e) => return (Err(e.clone()), Err(e)),
        };
        if seed == TREND_SEEDS[0] {
            c7 = (|| {
                let steps = (cfg.stage1_epochs + cfg.stage2_epochs) * ds.len().div_ceil(cfg.batch_size);
                let rep = iou_binned_accuracy(&enc, &ds, cfg.eval.gallery, 10, cfg.model.backbone.input_size, seed)
                    .map_err(|e| e.to_string())?;
                let rho = rep.spearman.ok_or("fewer than two populated bins")?;
                check!(secs < 1800.0, "desk run took {secs:.0}s");
                check!(rho > 0.0, "spearman {rho:.3} (bin accuracy {:?})", rep.accuracy);
                Ok(format!("seed {seed}, {steps} steps in {secs:.0}s, spearman {rho:.3} over {} queries", rep.total_queries))
            })();
        }
        let sweep = (|| {
            let bank = encode_views(&enc, &ds, cfg.eval.gallery, &cfg.aug_config(), seed)?;
            let dims = &cfg.eval.dims[..2];
            let so = dim_sweep_bank(&bank, dims, SweepMode::SemanticOnly, cfg.eval.renormalize)?;
            let hh = dim_sweep_bank(&bank, dims, SweepMode::HalfHalf, cfg.eval.renormalize)?;
            Ok::<_, hcl_core::HclError>((so, hh))
        })();
        match sweep {
            Ok((so, hh)) => {
                let ok = so.rows.iter().zip(&hh.rows).all(|(s, h)| h.accuracy >= s.accuracy);
                wins += ok as usize;
                let pairs: Vec<String> = so
                    .rows
                    .iter()
                    .zip(&hh.rows)
                    .map(|(s, h)| format!("d{} {:.3}/{:.3}", s.total_dim, h.accuracy, s.accuracy))
                    .collect();
                lines.push(format!("seed {seed} [{}]{}", pairs.join(" "), if ok { "" } else { " x" }));
            }
            Err(e) => lines.push(format!("seed {seed} error {e}")),
        }
    }
    let summary = format!("half-half/semantic-only: {}", lines.join("; "));
    let c8 = if wins >= 2 { Ok(format!("{wins}/3 seeds; {summary}")) } else { Err(format!("{wins}/3 seeds; {summary}")) };
    (c7, c8)
}

// ---------------------------------------------------------------- 9

fn tiny_train_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.data.n = 24;
    cfg.batch_size = 8;
    cfg.stage1_epochs = 2;
    cfg.stage2_epochs = 1;
    cfg.queue_capacity = 16;
    cfg.seed = 3;
    cfg
}

fn criterion_9() -> Outcome {
    let cfg = tiny_train_config();
    let ds = cfg.dataset_spec().unwrap().load().unwrap();
    let run = || {
        let a = train_stage1(&cfg, &ds, &mut |_| Ok(())).unwrap();
        let b = train_stage2(&cfg, &a.checkpoint(), &ds, &mut |_| Ok(())).unwrap();
        let rows: Vec<MetricsRow> = a.rows.iter().chain(&b.rows).map(|r| r.without_timing()).collect();
        (rows, a.checkpoint().to_bytes().unwrap(), b.checkpoint().to_bytes().unwrap(), b.state.pair.query)
    };
    let (r1, a1, b1, enc) = run();
    let (r2, a2, b2, _) = run();
    check!(r1 == r2, "metrics differ between identical runs");
    check!(a1 == a2 && b1 == b2, "checkpoints differ between identical runs");

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = dir.path().join("s2.ckpt");
    std::fs::write(&p, &b1).unwrap();
    let loaded = Checkpoint::load(&p).map_err(|e| e.to_string())?;
    check!(loaded.to_bytes().unwrap() == b1, "checkpoint does not round-trip");
    let mut bad = b1.clone();
    bad[0] ^= 0xff;
    check!(Checkpoint::from_bytes(&bad).is_err(), "corrupted checkpoint magic accepted");
    for cut in [0, 3, 4, 16, b1.len() / 2, b1.len() - 1] {
        check!(Checkpoint::from_bytes(&b1[..cut]).is_err(), "checkpoint truncated to {cut} bytes accepted");
    }

    let e = dir.path().join("e.hemb");
    let table = export_embeddings(&enc, &ds, &e, Branch::Concat).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&e).unwrap();
    check!(table.to_bytes().unwrap() == bytes, "embedding table bytes differ from file");
    check!(EmbeddingTable::from_bytes(&bytes).unwrap().to_bytes().unwrap() == bytes, "embeddings do not round-trip");
    let mut bad = bytes.clone();
    bad[2] ^= 0xff;
    check!(EmbeddingTable::from_bytes(&bad).is_err(), "corrupted embedding magic accepted");
    for cut in [0, 5, bytes.len() / 2, bytes.len() - 1] {
        check!(EmbeddingTable::from_bytes(&bytes[..cut]).is_err(), "embeddings truncated to {cut} bytes accepted");
    }
    Ok(format!(
        "{} metrics rows and both checkpoints bitwise equal; {} + {} byte files round-trip; corruption rejected",
        r1.len(),
        b1.len(),
        bytes.len()
    ))
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let mut cfg = TrainConfig::default();
    cfg.data.n = 256;
    cfg.stage1_epochs = 25;
    cfg.stage2_epochs = 25;
    cfg.queue_capacity = 128;
    cfg.seed = 7;
    let ds = cfg.dataset_spec().unwrap().load().unwrap();
    let s1 = train_stage1(&cfg, &ds, &mut |_| Ok(())).map_err(|e| e.to_string())?;
    let ck = s1.checkpoint();
    let st = init_stage2(&cfg, &ck, &ds).map_err(|e| e.to_string())?;
    let want = cfg.model.head.d_sem + cfg.model.head.spatial_res.pow(2);
    check!(st.queue.dim() == want, "stage-2 queue dim {} (want {want})", st.queue.dim());
    let s2 = train_stage2(&cfg, &ck, &ds, &mut |_| Ok(())).map_err(|e| e.to_string())?;
    let w = 20;
    let mean = |r: &[MetricsRow]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
    let mut parts = Vec::new();
    for (stage, rows) in [(1, &s1.rows), (2, &s2.rows)] {
        let (first, last) = (mean(&rows[..w]), mean(&rows[rows.len() - w..]));
        check!(last < first, "stage {stage}: final window {last:.3} not below initial {first:.3}");
        parts.push(format!("stage {stage} {first:.3} -> {last:.3}"));
    }
    Ok(format!("queue dim {want} at transition; {}", parts.join(", ")))
}

// ----------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("HCL_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |i: usize| only.as_ref().map_or(true, |o| o.contains(&i));
    let names = [
        "gradient suite",
        "loss oracle",
        "structural invariants",
        "geometry oracle",
        "PCA suite",
        "protocol correctness",
        "IoU trend",
        "compression trend",
        "determinism and persistence",
        "stage schedule",
    ];
    let simple: [(usize, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    for (i, f) in simple {
        if wanted(i) {
            results.push((i, guarded(f)));
        }
    }
    if wanted(7) || wanted(8) {
        let mut pair = None;
        let r = guarded(|| {
            pair = Some(trend_criteria());
            Ok(String::new())
        });
        let (c7, c8) = match (pair, r) {
            (Some(p), _) => p,
            (None, Err(e)) => (Err(e.clone()), Err(e)),
            (None, Ok(_)) => unreachable!(),
        };
        if wanted(7) {
            results.push((7, c7));
        }
        if wanted(8) {
            results.push((8, c8));
        }
    }
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    println!();
    for (i, r) in &results {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {i:>2} {tag}  {}: {detail}", names[i - 1]);
    }
    println!();
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
