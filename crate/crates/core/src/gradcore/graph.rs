use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{invalid, shape_err, Result};
use crate::real::Real;

use super::kernels::{self, ConvGeom, GroupNormSaved};
use super::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a convolution reads taps that fall outside the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Zeros,
    /// Clamp to the nearest edge pixel. Keeps spatially constant inputs constant.
    Replicate,
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        k: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        c_out: usize,
        cols: Vec<T>,
    },
    AvgPool {
        x: Var,
        c: usize,
        h: usize,
        w: usize,
        window: usize,
        stride: usize,
        oh: usize,
        ow: usize,
    },
    Upsample {
        x: Var,
        c: usize,
        h: usize,
        w: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
        m: usize,
        n: usize,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        c: usize,
        hw: usize,
        groups: usize,
        saved: GroupNormSaved<T>,
    },
    L2Normalize {
        x: Var,
        denom: T,
        guarded: bool,
    },
    Relu {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
    Sum {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Dot {
        a: Var,
        b: Var,
    },
    MatVecConst {
        v: Var,
        mat: Arc<[T]>,
        rows: usize,
        cols: usize,
    },
    SoftmaxXent {
        logits: Var,
        target: usize,
        probs: Vec<T>,
    },
}

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Per-forward-pass tape.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    bound: HashMap<usize, Var>,
    track: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims3(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => shape_err(format!("expected a [C, H, W] feature map, got {shape:?}")),
    }
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, delta: &[T]) {
    match slot {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += *d;
            }
        }
        None => *slot = Some(delta.to_vec()),
    }
}

/// Numerically stable `log Σ exp(l)`.
pub(crate) fn log_sum_exp<T: Real>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = logits.iter().map(|&l| (l - max).exp()).sum();
    max + s.ln()
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            bound: HashMap::new(),
            track: true,
        }
    }

    /// A graph whose parameter bindings never require gradients.
    pub fn inference() -> Self {
        Graph {
            track: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool, op: Op<T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Detached copy of a node as a standalone tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), false, Op::Leaf)
    }

    pub fn constant_vec(&mut self, shape: Vec<usize>, data: Vec<T>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return shape_err(format!("shape {shape:?} does not hold {} values", data.len()));
        }
        Ok(self.push(shape, data, false, Op::Leaf))
    }

    /// Records a leaf for `t`, honouring `t.requires_grad`.
    ///
    /// Binding the same tensor twice returns the same node, so shared
    /// parameters accumulate a single gradient.
    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        let key = t.data().as_ptr() as usize;
        if let Some(&v) = self.bound.get(&key) {
            return v;
        }
        let rg = t.requires_grad && self.track;
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), rg, Op::Leaf);
        self.bound.insert(key, v);
        v
    }

    /// Node previously bound from `t` by [`Graph::param`], if any.
    pub fn bound_var(&self, t: &Tensor<T>) -> Option<Var> {
        self.bound.get(&(t.data().as_ptr() as usize)).copied()
    }

    /// 2-D convolution of `x: [C_in, H, W]` with `k: [C_out, C_in, kH, kW]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        k: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (c_in, h, w) = dims3(self.shape(x))?;
        let (c_out, kc, kh, kw) = match *self.shape(k) {
            [a, b, c, d] => (a, b, c, d),
            ref s => return shape_err(format!("conv kernel must be 4-D, got {s:?}")),
        };
        if kc != c_in {
            return shape_err(format!(
                "conv kernel expects {kc} input channels, feature map has {c_in}"
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [c_out] {
                return shape_err(format!(
                    "conv bias must be [{c_out}], got {:?}",
                    self.shape(b)
                ));
            }
        }
        let (Some(oh), Some(ow)) = (
            kernels::conv_out_extent(h, kh, stride, pad),
            kernels::conv_out_extent(w, kw, stride, pad),
        ) else {
            return shape_err(format!(
                "conv {kh}x{kw} stride {stride} pad {pad} does not fit {h}x{w}"
            ));
        };
        let geom = ConvGeom {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            padding,
            oh,
            ow,
        };
        let cols = kernels::im2col(self.value(x), &geom);
        let p = geom.out_pixels();
        let mut out = vec![T::zero(); c_out * p];
        if let Some(b) = bias {
            for (co, &bv) in self.value(b).iter().enumerate() {
                out[co * p..(co + 1) * p].fill(bv);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(
            c_out,
            geom.patch_len(),
            p,
            T::one(),
            self.value(k),
            false,
            &cols,
            false,
            beta,
            &mut out,
        );
        let rg = self.rg(x) || self.rg(k) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(
            vec![c_out, oh, ow],
            out,
            rg,
            Op::Conv2d {
                x,
                k,
                bias,
                geom,
                c_out,
                cols,
            },
        ))
    }

    pub fn avg_pool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let (c, h, w) = dims3(self.shape(x))?;
        let (Some(oh), Some(ow)) = (
            kernels::pool_out_extent(h, window, stride),
            kernels::pool_out_extent(w, window, stride),
        ) else {
            return shape_err(format!(
                "pool window {window} stride {stride} does not fit {h}x{w}"
            ));
        };
        let out = kernels::avg_pool_forward(self.value(x), c, h, w, window, stride, oh, ow);
        let rg = self.rg(x);
        Ok(self.push(
            vec![c, oh, ow],
            out,
            rg,
            Op::AvgPool {
                x,
                c,
                h,
                w,
                window,
                stride,
                oh,
                ow,
            },
        ))
    }

    /// Global average pool of a square map to a `[C]` vector.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = dims3(self.shape(x))?;
        if h != w {
            return shape_err(format!("global pool expects a square map, got {h}x{w}"));
        }
        let pooled = self.avg_pool2d(x, h, h)?;
        self.reshape(pooled, vec![c])
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = dims3(self.shape(x))?;
        let out = kernels::upsample2x_forward(self.value(x), c, h, w);
        let rg = self.rg(x);
        Ok(self.push(vec![c, 2 * h, 2 * w], out, rg, Op::Upsample { x, c, h, w }))
    }

    /// `W·x + b` for `x: [n]`, `W: [m, n]`, `b: [m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let n = match *self.shape(x) {
            [n] => n,
            ref s => return shape_err(format!("linear input must be a vector, got {s:?}")),
        };
        let m = match *self.shape(w) {
            [m, wn] if wn == n => m,
            ref s => return shape_err(format!("linear weight {s:?} does not accept input [{n}]")),
        };
        if self.shape(b) != [m] {
            return shape_err(format!(
                "linear bias must be [{m}], got {:?}",
                self.shape(b)
            ));
        }
        let mut out = self.value(b).to_vec();
        T::gemm(m, n, 1, T::one(), self.value(w), false, self.value(x), false, T::one(), &mut out);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(vec![m], out, rg, Op::Linear { x, w, b, m, n }))
    }

    pub fn group_norm(&mut self, x: Var, groups: usize, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (c, h, w) = dims3(self.shape(x))?;
        if groups == 0 || c % groups != 0 {
            return shape_err(format!("{c} channels cannot be split into {groups} groups"));
        }
        if eps <= T::zero() {
            return invalid("group norm eps must be positive");
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return shape_err(format!("group norm affine parameters must be [{c}]"));
        }
        let (out, saved) = kernels::group_norm_forward(
            self.value(x),
            c,
            h * w,
            groups,
            self.value(gamma),
            self.value(beta),
            eps,
        );
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            vec![c, h, w],
            out,
            rg,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                c,
                hw: h * w,
                groups,
                saved,
            },
        ))
    }

    /// `v / max(‖v‖₂, eps)`.
    pub fn l2_normalize(&mut self, x: Var, eps: T) -> Result<Var> {
        if eps <= T::zero() {
            return invalid("l2_normalize eps must be positive");
        }
        let norm = self.value(x).iter().map(|&v| v * v).sum::<T>().sqrt();
        let guarded = norm < eps;
        let denom = if guarded { eps } else { norm };
        let out = self.value(x).iter().map(|&v| v / denom).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, rg, Op::L2Normalize { x, denom, guarded }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, rg, Op::Relu { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!(
                "add of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, rg, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!(
                "mul of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, rg, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).iter().map(|&v| v * factor).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, rg, Op::Scale { x, factor })
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let rg = self.rg(x);
        self.push(Vec::new(), vec![s], rg, Op::Sum { x })
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return shape_err(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape(x)
            ));
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape, out, rg, Op::Reshape { x }))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return shape_err(format!("concat expects vectors, got {:?}", self.shape(p)));
            }
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let n = out.len();
        Ok(self.push(vec![n], out, rg, Op::Concat { parts: parts.to_vec() }))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return shape_err(format!(
                "dot of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        let s = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Vec::new(), vec![s], rg, Op::Dot { a, b }))
    }

    /// `mat · v` against a constant row-major `[rows, cols]` matrix.
    pub fn matvec_const(&mut self, v: Var, mat: Arc<[T]>, rows: usize, cols: usize) -> Result<Var> {
        if self.value(v).len() != cols || mat.len() != rows * cols {
            return shape_err(format!(
                "matvec of [{rows}, {cols}] matrix ({} values) with {:?}",
                mat.len(),
                self.shape(v)
            ));
        }
        let mut out = vec![T::zero(); rows];
        if rows > 0 {
            T::gemm(rows, cols, 1, T::one(), &mat, false, self.value(v), false, T::zero(), &mut out);
        }
        let rg = self.rg(v);
        Ok(self.push(vec![rows], out, rg, Op::MatVecConst { v, mat, rows, cols }))
    }

    /// `logsumexp(logits) − logits[target]`, i.e. softmax cross-entropy.
    pub fn softmax_xent(&mut self, logits: Var, target: usize) -> Result<Var> {
        let l = self.value(logits);
        if target >= l.len() {
            return invalid(format!("target {target} out of range for {} logits", l.len()));
        }
        let lse = log_sum_exp(l);
        let probs: Vec<T> = l.iter().map(|&v| (v - lse).exp()).collect();
        let loss = lse - l[target];
        let rg = self.rg(logits);
        Ok(self.push(Vec::new(), vec![loss], rg, Op::SoftmaxXent { logits, target, probs }))
    }

    /// Reverse pass from a scalar output.
    ///
    /// Visits each recorded operation once, in reverse recording order.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>> {
        if self.nodes[out.0].value.len() != 1 {
            return shape_err(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(out)
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(vec![T::one()]);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                k,
                bias,
                geom,
                c_out,
                cols,
            } => {
                let p = geom.out_pixels();
                let patch = geom.patch_len();
                if self.rg(*k) {
                    let mut dk = vec![T::zero(); c_out * patch];
                    T::gemm(*c_out, p, patch, T::one(), g, false, cols, true, T::zero(), &mut dk);
                    accumulate(&mut grads[k.0], &dk);
                }
                if let Some(b) = bias {
                    if self.rg(*b) {
                        let db: Vec<T> = g.chunks(p).map(|row| row.iter().copied().sum()).collect();
                        accumulate(&mut grads[b.0], &db);
                    }
                }
                if self.rg(*x) {
                    let mut dcols = vec![T::zero(); patch * p];
                    T::gemm(
                        patch,
                        *c_out,
                        p,
                        T::one(),
                        self.value(*k),
                        true,
                        g,
                        false,
                        T::zero(),
                        &mut dcols,
                    );
                    let mut dx = vec![T::zero(); geom.c_in * geom.h * geom.w];
                    kernels::col2im(&dcols, geom, &mut dx);
                    accumulate(&mut grads[x.0], &dx);
                }
            }
            Op::AvgPool {
                x,
                c,
                h,
                w,
                window,
                stride,
                oh,
                ow,
            } => {
                let mut dx = vec![T::zero(); c * h * w];
                kernels::avg_pool_backward(g, *c, *h, *w, *window, *stride, *oh, *ow, &mut dx);
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Upsample { x, c, h, w } => {
                let mut dx = vec![T::zero(); c * h * w];
                kernels::upsample2x_backward(g, *c, *h, *w, &mut dx);
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Linear { x, w, b, m, n } => {
                if self.rg(*w) {
                    let xv = self.value(*x);
                    let mut dw = Vec::with_capacity(m * n);
                    for &gi in g {
                        dw.extend(xv.iter().map(|&xj| gi * xj));
                    }
                    accumulate(&mut grads[w.0], &dw);
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g);
                }
                if self.rg(*x) {
                    let mut dx = vec![T::zero(); *n];
                    T::gemm(*n, *m, 1, T::one(), self.value(*w), true, g, false, T::zero(), &mut dx);
                    accumulate(&mut grads[x.0], &dx);
                }
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                c,
                hw,
                groups,
                saved,
            } => {
                let (dx, dgamma, dbeta) =
                    kernels::group_norm_backward(g, saved, *c, *hw, *groups, self.value(*gamma));
                if self.rg(*x) {
                    accumulate(&mut grads[x.0], &dx);
                }
                if self.rg(*gamma) {
                    accumulate(&mut grads[gamma.0], &dgamma);
                }
                if self.rg(*beta) {
                    accumulate(&mut grads[beta.0], &dbeta);
                }
            }
            Op::L2Normalize { x, denom, guarded } => {
                let dx: Vec<T> = if *guarded {
                    g.iter().map(|&v| v / *denom).collect()
                } else {
                    let y = &node.value;
                    let yg: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                    y.iter()
                        .zip(g)
                        .map(|(&yi, &gi)| (gi - yi * yg) / *denom)
                        .collect()
                };
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Relu { x } => {
                let dx: Vec<T> = self
                    .value(*x)
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > T::zero() { gi } else { T::zero() })
                    .collect();
                accumulate(&mut grads[x.0], &dx);
            }
            Op::Add { a, b } => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g);
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g);
                }
            }
            Op::Mul { a, b } => {
                if self.rg(*a) {
                    let d: Vec<T> = self.value(*b).iter().zip(g).map(|(&v, &gi)| v * gi).collect();
                    accumulate(&mut grads[a.0], &d);
                }
                if self.rg(*b) {
                    let d: Vec<T> = self.value(*a).iter().zip(g).map(|(&v, &gi)| v * gi).collect();
                    accumulate(&mut grads[b.0], &d);
                }
            }
            Op::Scale { x, factor } => {
                let d: Vec<T> = g.iter().map(|&gi| gi * *factor).collect();
                accumulate(&mut grads[x.0], &d);
            }
            Op::Sum { x } => {
                let d = vec![g[0]; self.value(*x).len()];
                accumulate(&mut grads[x.0], &d);
            }
            Op::Reshape { x } => accumulate(&mut grads[x.0], g),
            Op::Concat { parts } => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if self.rg(*p) {
                        accumulate(&mut grads[p.0], &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::Dot { a, b } => {
                if self.rg(*a) {
                    let d: Vec<T> = self.value(*b).iter().map(|&v| v * g[0]).collect();
                    accumulate(&mut grads[a.0], &d);
                }
                if self.rg(*b) {
                    let d: Vec<T> = self.value(*a).iter().map(|&v| v * g[0]).collect();
                    accumulate(&mut grads[b.0], &d);
                }
            }
            Op::MatVecConst { v, mat, rows, cols } => {
                let mut dv = vec![T::zero(); *cols];
                if *rows > 0 {
                    T::gemm(*cols, *rows, 1, T::one(), mat, true, g, false, T::zero(), &mut dv);
                }
                accumulate(&mut grads[v.0], &dv);
            }
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            } => {
                let mut d: Vec<T> = probs.iter().map(|&p| p * g[0]).collect();
                d[*target] -= g[0];
                accumulate(&mut grads[logits.0], &d);
            }
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient reaching `v`, or `None` if no path from the output exists.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, zero-filled when `v` is off the output's path.
    pub fn wrt(&self, graph: &Graph<T>, v: Var) -> Vec<T> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); graph.value(v).len()],
        }
    }
}
