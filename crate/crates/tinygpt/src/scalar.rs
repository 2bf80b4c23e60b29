//! Floating-point element type shared by every tensor in the model.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Row-major / column-major agnostic view of a dense matrix stored in a slice.
///
/// `rs` and `cs` are the element strides between consecutive rows and
/// columns, as in BLAS-like interfaces.
#[derive(Clone, Copy, Debug)]
pub struct Strided {
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl Strided {
    /// Contiguous row-major `rows x cols` matrix.
    pub fn rm(rows: usize, cols: usize) -> Self {
        Strided { rows, cols, rs: cols, cs: 1 }
    }

    /// Row-major matrix whose rows are `stride` elements apart.
    pub fn rm_stride(rows: usize, cols: usize, stride: usize) -> Self {
        Strided { rows, cols, rs: stride, cs: 1 }
    }

    /// The transpose of this view (no data movement).
    pub fn t(self) -> Self {
        Strided { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// Real scalar usable for model parameters, activations and gradients.
///
/// Implemented for `f32` (training) and `f64` (gradient checks).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` on raw strided storage.
    ///
    /// # Safety
    /// All three views must lie within their allocations and `c` must not
    /// alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Little-endian encoding as a 32-bit float (checkpoint storage format).
    fn to_f32_bits(self) -> u32 {
        self.to_f32().unwrap_or(f32::NAN).to_bits()
    }

    fn from_f32_bits(bits: u32) -> Self {
        Self::from_f32(f32::from_bits(bits)).unwrap_or_else(Self::nan)
    }

    /// `exp(self)`; may trade the last ulp or two for throughput.
    #[inline(always)]
    fn exp_fast(self) -> Self {
        self.exp()
    }

    /// `tanh(self)` computed through [`Scalar::exp_fast`].
    #[inline(always)]
    fn tanh_fast(self) -> Self {
        let two = Self::one() + Self::one();
        Self::one() - two / ((two * self).exp_fast() + Self::one())
    }

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    /// Range reduction to `2^n * e^r` with `|r| <= ln2/2` and a degree-6
    /// polynomial; branch-free so loops over slices vectorize.
    #[inline(always)]
    fn exp_fast(self) -> f32 {
        const LOG2E: f32 = std::f32::consts::LOG2_E;
        const LN2_HI: f32 = 0.693_359_4;
        const LN2_LO: f32 = -2.121_944_4e-4;
        let x = self.clamp(-87.3, 88.7);
        // round-to-nearest via the 1.5 * 2^23 trick (no libm call)
        const SHIFT: f32 = 12_582_912.0;
        let n = (x * LOG2E + SHIFT) - SHIFT;
        let r = x - n * LN2_HI - n * LN2_LO;
        let p = 1.0
            + r * (1.0
                + r * (0.5
                    + r * (1.666_666_7e-1 + r * (4.166_666_8e-2 + r * (8.333_452e-3 + r * 1.388_889_2e-3)))));
        let bits = ((n as i32 + 127) as u32) << 23;
        p * f32::from_bits(bits)
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `c = alpha * a * b + beta * c` with bounds-checked strided views.
///
/// When `beta` is zero the previous contents of `c` are ignored (NaNs
/// included).
pub fn gemm<F: Scalar>(
    alpha: F,
    a: &[F],
    av: Strided,
    b: &[F],
    bv: Strided,
    beta: F,
    c: &mut [F],
    cv: Strided,
) {
    assert_eq!(av.cols, bv.rows, "inner dimensions differ");
    assert_eq!(av.rows, cv.rows, "output rows differ");
    assert_eq!(bv.cols, cv.cols, "output cols differ");
    assert!(av.span() <= a.len(), "lhs view out of bounds");
    assert!(bv.span() <= b.len(), "rhs view out of bounds");
    assert!(cv.span() <= c.len(), "output view out of bounds");
    if cv.rows == 0 || cv.cols == 0 {
        return;
    }
    if av.cols == 0 {
        for r in 0..cv.rows {
            for col in 0..cv.cols {
                let x = &mut c[r * cv.rs + col * cv.cs];
                *x = if beta == F::zero() { F::zero() } else { *x * beta };
            }
        }
        return;
    }
    // SAFETY: spans were checked above; `c` is a unique borrow so it cannot
    // alias the shared borrows `a` and `b`.
    unsafe {
        F::gemm_raw(
            av.rows,
            av.cols,
            bv.cols,
            alpha,
            a.as_ptr(),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr(),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr(),
            cv.rs as isize,
            cv.cs as isize,
        )
    }
}
