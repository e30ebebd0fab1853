//! Raw numeric kernels over channel-planar `[C, H, W]` slices.

use crate::real::Real;

use super::graph::Padding;

/// Output extent of a convolution along one axis.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > input + 2 * pad {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

/// Output extent of a pooling window along one axis.
pub fn pool_out_extent(input: usize, window: usize, stride: usize) -> Option<usize> {
    if stride == 0 || window == 0 || window > input {
        return None;
    }
    Some((input - window) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub padding: Padding,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    /// Source index for a tap, or `None` when it lands in zero padding.
    #[inline]
    fn source(&self, oy: usize, ki: usize, ox: usize, kj: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
        let ix = (ox * self.stride + kj) as isize - self.pad as isize;
        let (h, w) = (self.h as isize, self.w as isize);
        match self.padding {
            Padding::Zeros => {
                if iy < 0 || ix < 0 || iy >= h || ix >= w {
                    None
                } else {
                    Some((iy as usize, ix as usize))
                }
            }
            Padding::Replicate => Some((iy.clamp(0, h - 1) as usize, ix.clamp(0, w - 1) as usize)),
        }
    }
}

/// Unfolds `x` into a `[C·kh·kw, oh·ow]` patch matrix.
pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let p = g.out_pixels();
    let mut cols = vec![T::zero(); g.patch_len() * p];
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((iy, ix)) = g.source(oy, ki, ox, kj) {
                            dst[oy * g.ow + ox] = plane[iy * g.w + ix];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.out_pixels();
    for c in 0..g.c_in {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((iy, ix)) = g.source(oy, ki, ox, kj) {
                            plane[iy * g.w + ix] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn avg_pool_forward<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    window: usize,
    stride: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let inv = T::one() / T::from_usize(window * window).unwrap();
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for dy in 0..window {
                    let row = (oy * stride + dy) * w + ox * stride;
                    for v in &plane[row..row + window] {
                        acc += *v;
                    }
                }
                out[(ch * oh + oy) * ow + ox] = acc * inv;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn avg_pool_backward<T: Real>(
    gout: &[T],
    c: usize,
    h: usize,
    w: usize,
    window: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    dx: &mut [T],
) {
    let inv = T::one() / T::from_usize(window * window).unwrap();
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gout[(ch * oh + oy) * ow + ox] * inv;
                for dy in 0..window {
                    let row = (oy * stride + dy) * w + ox * stride;
                    for v in &mut plane[row..row + window] {
                        *v += g;
                    }
                }
            }
        }
    }
}

pub(crate) fn upsample2x_forward<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            let src = &x[(ch * h + oy / 2) * w..(ch * h + oy / 2 + 1) * w];
            let dst = &mut out[(ch * oh + oy) * ow..(ch * oh + oy + 1) * ow];
            for (ox, d) in dst.iter_mut().enumerate() {
                *d = src[ox / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward<T: Real>(gout: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let (oh, ow) = (2 * h, 2 * w);
    for ch in 0..c {
        for oy in 0..oh {
            let g = &gout[(ch * oh + oy) * ow..(ch * oh + oy + 1) * ow];
            let d = &mut dx[(ch * h + oy / 2) * w..(ch * h + oy / 2 + 1) * w];
            for (ox, v) in g.iter().enumerate() {
                d[ox / 2] += *v;
            }
        }
    }
}

/// Normalized activations plus per-group statistics.
pub(crate) struct GroupNormSaved<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_forward<T: Real>(
    x: &[T],
    c: usize,
    hw: usize,
    groups: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<T>, GroupNormSaved<T>) {
    let per = c / groups;
    let m = T::from_usize(per * hw).unwrap();
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); groups];
    let mut out = vec![T::zero(); x.len()];
    for (g, rs) in rstd.iter_mut().enumerate() {
        let span = g * per * hw..(g + 1) * per * hw;
        let xs = &x[span.clone()];
        let mean = xs.iter().copied().sum::<T>() / m;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
        let r = T::one() / (var + eps).sqrt();
        *rs = r;
        for (dst, &v) in xhat[span.clone()].iter_mut().zip(xs) {
            *dst = (v - mean) * r;
        }
        for ch in g * per..(g + 1) * per {
            let plane = ch * hw..(ch + 1) * hw;
            for (o, &xh) in out[plane.clone()].iter_mut().zip(&xhat[plane]) {
                *o = gamma[ch] * xh + beta[ch];
            }
        }
    }
    (out, GroupNormSaved { xhat, rstd })
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn group_norm_backward<T: Real>(
    gout: &[T],
    saved: &GroupNormSaved<T>,
    c: usize,
    hw: usize,
    groups: usize,
    gamma: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let per = c / groups;
    let m = T::from_usize(per * hw).unwrap();
    let mut dx = vec![T::zero(); gout.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut dxhat = vec![T::zero(); per * hw];
    for g in 0..groups {
        let base = g * per * hw;
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for ch in g * per..(g + 1) * per {
            for i in 0..hw {
                let idx = ch * hw + i;
                let go = gout[idx];
                let xh = saved.xhat[idx];
                dgamma[ch] += go * xh;
                dbeta[ch] += go;
                let d = go * gamma[ch];
                dxhat[idx - base] = d;
                sum_d += d;
                sum_dx += d * xh;
            }
        }
        let mean_d = sum_d / m;
        let mean_dx = sum_dx / m;
        let r = saved.rstd[g];
        for i in 0..per * hw {
            let xh = saved.xhat[base + i];
            dx[base + i] = r * (dxhat[i] - mean_d - xh * mean_dx);
        }
    }
    (dx, dgamma, dbeta)
}
