//! Floating-point element types supported by the engine.

use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Element type of a [`Tensor`](crate::Tensor).
///
/// Implemented for `f32` (training) and `f64` (gradient verification).
pub trait Real:
    Float + Default + Debug + Display + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    const NAME: &'static str;

    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = a·b` (or `c += a·b` when `accumulate`), with `a` m×k and `b` k×n given by
    /// row/column strides. Strides must be non-negative and every addressed element
    /// must lie inside the slices.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
        accumulate: bool,
    );
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * rs + (cols - 1) * cs;
    assert!(last < len, "gemm operand out of bounds: {last} >= {len}");
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $gemm:path) => {
        impl Real for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
                accumulate: bool,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                check_extent(c.len(), m, n, rsc, csc);
                if k == 0 {
                    if !accumulate {
                        for i in 0..m {
                            for j in 0..n {
                                c[i * rsc + j * csc] = 0.0;
                            }
                        }
                    }
                    return;
                }
                check_extent(a.len(), m, k, rsa, csa);
                check_extent(b.len(), k, n, rsb, csb);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: extents checked above; the output does not alias the inputs
                // because it is borrowed mutably.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    );
                }
            }
        }
    };
}

impl_real!(f32, "f32", matrixmultiply::sgemm);
impl_real!(f64, "f64", matrixmultiply::dgemm);
