use core::fmt::Debug;
use core::ops::{AddAssign, MulAssign, SubAssign};

/// Floating point element type of a graph (`f32` for training, `f64` for
/// gradient checks).
pub trait Scalar:
    num_traits::Float + Default + Debug + Send + Sync + 'static + AddAssign + SubAssign + MulAssign
{
    /// `c = a * b (+ c if accumulate)` for row/column strided matrices.
    ///
    /// # Safety
    /// The pointers and strides must address valid `m x k`, `k x n` and
    /// `m x n` matrices, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        c: *mut Self,
        rsc: isize,
        csc: isize,
        accumulate: bool,
    );

    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("f64 converts to every scalar")
    }

    fn f64(self) -> f64 {
        <Self as num_traits::ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            unsafe fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                c: *mut Self,
                rsc: isize,
                csc: isize,
                accumulate: bool,
            ) {
                let beta = if accumulate { 1.0 } else { 0.0 };
                $gemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);
