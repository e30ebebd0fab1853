//! Floating-point element type shared by tensors, models and the queue.
//!
//! Training runs in `f32`; gradient checks run in `f64`.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Width in bytes, for checksums and serialization diagnostics.
    const BYTES: usize;

    /// `c = alpha * a(m×k) * b(k×n) + beta * c`, all row-major and contiguous.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64_lossy(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Bit pattern widened to `u64`, used for bitwise comparisons.
    fn bits(self) -> u64;
}

macro_rules! gemm_impl {
    ($fn:path, $m:expr, $k:expr, $n:expr, $alpha:expr, $a:expr, $ta:expr, $b:expr, $tb:expr, $beta:expr, $c:expr) => {{
        let (m, k, n) = ($m, $k, $n);
        assert!($a.len() >= m * k && $b.len() >= k * n && $c.len() >= m * n);
        // Strides for the logical (m×k) and (k×n) operands.
        let (rsa, csa) = if $ta { (1, m as isize) } else { (k as isize, 1) };
        let (rsb, csb) = if $tb { (1, k as isize) } else { (n as isize, 1) };
        // SAFETY: bounds asserted above; strides describe in-bounds views.
        unsafe {
            $fn(
                m,
                k,
                n,
                $alpha,
                $a.as_ptr(),
                rsa,
                csa,
                $b.as_ptr(),
                rsb,
                csb,
                $beta,
                $c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }};
}

impl Real for f32 {
    const BYTES: usize = 4;

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        trans_a: bool,
        b: &[f32],
        trans_b: bool,
        beta: f32,
        c: &mut [f32],
    ) {
        gemm_impl!(matrixmultiply::sgemm, m, k, n, alpha, a, trans_a, b, trans_b, beta, c)
    }

    fn from_f64_lossy(v: f64) -> f32 {
        v as f32
    }

    fn to_f64_lossy(self) -> f64 {
        self as f64
    }

    fn bits(self) -> u64 {
        self.to_bits() as u64
    }
}

impl Real for f64 {
    const BYTES: usize = 8;

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        trans_a: bool,
        b: &[f64],
        trans_b: bool,
        beta: f64,
        c: &mut [f64],
    ) {
        gemm_impl!(matrixmultiply::dgemm, m, k, n, alpha, a, trans_a, b, trans_b, beta, c)
    }

    fn from_f64_lossy(v: f64) -> f64 {
        v
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }

    fn bits(self) -> u64 {
        self.to_bits()
    }
}

#[inline]
pub(crate) fn lit<T: Real>(v: f64) -> T {
    T::from_f64_lossy(v)
}
