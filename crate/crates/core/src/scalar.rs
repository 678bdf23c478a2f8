//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// A real floating-point scalar usable by the factorization, the learners and the
/// evaluation code. Implemented for `f32` and `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Thin SVD `(u, sigma, v)` with `sigma` non-increasing, or `None` if the
    /// iteration fails to converge.
    fn thin_svd(m: &DMatrix<Self>) -> Option<(DMatrix<Self>, DVector<Self>, DMatrix<Self>)>;

    /// Singular values only, non-increasing.
    fn singular_values(m: &DMatrix<Self>) -> Option<DVector<Self>>;
}

// nalgebra's bidiagonal SVD loses accuracy on rank-deficient input, which is
// exactly what the factorization core produces, so dense SVDs go through faer.
macro_rules! faer_backed {
    ($t:ty) => {
        impl Real for $t {
            fn thin_svd(m: &DMatrix<Self>) -> Option<(DMatrix<Self>, DVector<Self>, DMatrix<Self>)> {
                let (rows, cols) = m.shape();
                let k = rows.min(cols);
                let fm = faer::Mat::<$t>::from_fn(rows, cols, |i, j| m[(i, j)]);
                let svd = fm.thin_svd().ok()?;
                let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
                Some((
                    DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
                    DVector::from_fn(k, |i, _| s[i]),
                    DMatrix::from_fn(cols, k, |i, j| v[(i, j)]),
                ))
            }

            fn singular_values(m: &DMatrix<Self>) -> Option<DVector<Self>> {
                let (rows, cols) = m.shape();
                let fm = faer::Mat::<$t>::from_fn(rows, cols, |i, j| m[(i, j)]);
                let s = fm.singular_values().ok()?;
                Some(DVector::from_vec(s))
            }
        }
    };
}

faer_backed!(f32);
faer_backed!(f64);
