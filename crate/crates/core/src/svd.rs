//! Incrementally updated, truncated singular value decomposition.
//!
//! The factorization represents a `d x d` matrix as `U L diag(sigma) R^T V^T`,
//! where `U`, `V` are tall orthonormal bases and `L`, `R` are small orthonormal
//! rotations that are folded into the bases only when the width reaches `2r`
//! (or when [`TruncatedSvd::compact`] is called explicitly). Keeping the
//! rotations separate means a rank-one update only touches the `d x c` bases
//! through matrix-vector products.

use std::fmt;
use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::sorted_svd;
use crate::scalar::Real;

/// Residual norm at or below which a new direction is considered to lie in the
/// current subspace.
pub const SUBSPACE_EPS: f64 = 1e-5;

/// Default relative cutoff used by [`TruncatedSvd::solve`].
pub const DEFAULT_REL_CUTOFF: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvdError {
    #[error("invalid configuration: rank {rank} must satisfy 1 <= rank <= dim ({dim})")]
    InvalidRank { dim: usize, rank: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mini-batch update requires folded rotations; call compact() first")]
    PendingRotations,
    #[error("malformed dump: {0}")]
    MalformedDump(String),
}

/// Truncated SVD of a streaming sum of outer products.
#[derive(Clone)]
pub struct TruncatedSvd<T: Real> {
    dim: usize,
    rank: usize,
    width: usize,
    // d x capacity, only the first `width` columns are live
    u: DMatrix<T>,
    v: DMatrix<T>,
    l: DMatrix<T>,
    r: DMatrix<T>,
    sigma: DVector<T>,
    pending: bool,
}

impl<T: Real> fmt::Debug for TruncatedSvd<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncatedSvd")
            .field("dim", &self.dim)
            .field("rank", &self.rank)
            .field("width", &self.width)
            .field("sigma", &self.sigma.as_slice())
            .field("pending", &self.pending)
            .finish()
    }
}

impl<T: Real> TruncatedSvd<T> {
    /// Empty factorization of the `dim x dim` zero matrix with target rank `rank`.
    pub fn new(dim: usize, rank: usize) -> Result<Self, SvdError> {
        if rank < 1 || rank > dim {
            return Err(SvdError::InvalidRank { dim, rank });
        }
        let capacity = (2 * rank).min(dim);
        Ok(Self {
            dim,
            rank,
            width: 0,
            u: DMatrix::zeros(dim, capacity),
            v: DMatrix::zeros(dim, capacity),
            l: DMatrix::zeros(0, 0),
            r: DMatrix::zeros(0, 0),
            sigma: DVector::zeros(0),
            pending: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Current number of live columns `c` (at most `2r`).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn singular_values(&self) -> &DVector<T> {
        &self.sigma
    }

    /// True when `L`/`R` hold rotations not yet folded into the bases.
    pub fn has_pending_rotations(&self) -> bool {
        self.pending
    }

    /// Live left basis `U` (`d x c`).
    pub fn left_basis(&self) -> DMatrix<T> {
        self.u.columns(0, self.width).into_owned()
    }

    /// Live right basis `V` (`d x c`).
    pub fn right_basis(&self) -> DMatrix<T> {
        self.v.columns(0, self.width).into_owned()
    }

    pub fn left_rotation(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn right_rotation(&self) -> &DMatrix<T> {
        &self.r
    }

    /// Multiplies every singular value by `factor`. Costs `O(c)`.
    pub fn scale(&mut self, factor: T) -> Result<(), SvdError> {
        if !(factor > T::zero()) {
            return Err(SvdError::InvalidArgument(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        if factor != T::one() {
            self.sigma.scale_mut(factor);
        }
        Ok(())
    }

    /// Adds `z * dvec^T` to the represented matrix.
    ///
    /// Components of `z` (resp. `dvec`) orthogonal to the current left (right)
    /// subspace extend the bases by one column unless their norm is at most
    /// [`SUBSPACE_EPS`]. When the width reaches `2r` the factorization is
    /// compacted back to its top `r` singular triples.
    pub fn rank_one_update(&mut self, z: &DVector<T>, dvec: &DVector<T>) -> Result<(), SvdError> {
        self.check_len(z.len())?;
        self.check_len(dvec.len())?;
        let c = self.width;
        let eps = T::lit(SUBSPACE_EPS);

        let (uz, p, p_norm) = project_out(&self.u, c, z);
        let (vd, q, q_norm) = project_out(&self.v, c, dvec);
        // A full basis leaves nothing but round-off outside it.
        let grow_p = c < self.dim && p_norm > eps;
        let grow_q = c < self.dim && q_norm > eps;
        let grow = grow_p || grow_q;
        let n = if grow { c + 1 } else { c };
        if n == 0 {
            return Ok(());
        }

        let m = if c > 0 { self.l.tr_mul(&uz) } else { DVector::zeros(0) };
        let nn = if c > 0 { self.r.tr_mul(&vd) } else { DVector::zeros(0) };

        let mut left = DVector::zeros(n);
        let mut right = DVector::zeros(n);
        left.rows_mut(0, c).copy_from(&m);
        right.rows_mut(0, c).copy_from(&nn);
        if grow {
            left[c] = if grow_p { p_norm } else { T::zero() };
            right[c] = if grow_q { q_norm } else { T::zero() };
        }
        let mut core = &left * right.transpose();
        for i in 0..c {
            core[(i, i)] += self.sigma[i];
        }
        let small = sorted_svd(core);

        if grow {
            let new_u = if grow_p {
                p / p_norm
            } else {
                complement_direction(&self.u, c)
            };
            let new_v = if grow_q {
                q / q_norm
            } else {
                complement_direction(&self.v, c)
            };
            self.u.set_column(c, &new_u);
            self.v.set_column(c, &new_v);
            self.l = extend_rotation(&self.l, &small.u);
            self.r = extend_rotation(&self.r, &small.v);
        } else {
            self.l = &self.l * &small.u;
            self.r = &self.r * &small.v;
        }
        self.sigma = small.sigma;
        self.width = n;
        self.pending = true;

        if self.width >= 2 * self.rank {
            self.compact();
        }
        Ok(())
    }

    /// Adds `zs * ds^T` (`d x k` each) to the represented matrix and truncates the
    /// result to rank `r`. Requires folded rotations.
    pub fn minibatch_update(&mut self, zs: &DMatrix<T>, ds: &DMatrix<T>) -> Result<(), SvdError> {
        if self.pending {
            return Err(SvdError::PendingRotations);
        }
        self.check_len(zs.nrows())?;
        self.check_len(ds.nrows())?;
        if zs.ncols() != ds.ncols() {
            return Err(SvdError::DimensionMismatch {
                expected: zs.ncols(),
                got: ds.ncols(),
            });
        }
        let c = self.width;
        let eps = T::lit(SUBSPACE_EPS);
        let (uz, qz, rz) = block_project_out(&self.u, c, zs, eps);
        let (vd, qd, rd) = block_project_out(&self.v, c, ds, eps);
        let kz = qz.ncols();
        let kd = qd.ncols();
        if c + kz == 0 || c + kd == 0 {
            return Ok(());
        }

        let mut left = DMatrix::zeros(c + kz, zs.ncols());
        left.rows_mut(0, c).copy_from(&uz);
        left.rows_mut(c, kz).copy_from(&rz);
        let mut right = DMatrix::zeros(c + kd, ds.ncols());
        right.rows_mut(0, c).copy_from(&vd);
        right.rows_mut(c, kd).copy_from(&rd);
        let mut core = &left * right.transpose();
        for i in 0..c {
            core[(i, i)] += self.sigma[i];
        }
        let small = sorted_svd(core);
        let keep = self.rank.min(small.sigma.len());

        let new_u = stacked_times(&self.u, c, &qz, &small.u.columns(0, keep).into_owned());
        let new_v = stacked_times(&self.v, c, &qd, &small.v.columns(0, keep).into_owned());
        self.u.columns_mut(0, keep).copy_from(&new_u);
        self.v.columns_mut(0, keep).copy_from(&new_v);
        self.sigma = small.sigma.rows(0, keep).into_owned();
        self.l = DMatrix::identity(keep, keep);
        self.r = DMatrix::identity(keep, keep);
        self.width = keep;
        self.pending = false;
        Ok(())
    }

    /// Folds `L`, `R` into the bases and truncates to the top `min(c, r)` triples.
    pub fn compact(&mut self) {
        let c = self.width;
        let keep = c.min(self.rank);
        if !self.pending && c <= self.rank {
            return;
        }
        if self.pending {
            let ul = self.u.columns(0, c) * self.l.columns(0, keep);
            let vr = self.v.columns(0, c) * self.r.columns(0, keep);
            self.u.columns_mut(0, keep).copy_from(&ul);
            self.v.columns_mut(0, keep).copy_from(&vr);
        }
        self.sigma = self.sigma.rows(0, keep).into_owned();
        self.l = DMatrix::identity(keep, keep);
        self.r = DMatrix::identity(keep, keep);
        self.width = keep;
        self.pending = false;
    }

    /// Weights `V R sigma^+ L^T U^T b`.
    ///
    /// Singular values are inverted in sorted order, at most `r` of them, and
    /// inversion stops at the first value not exceeding `rel_cutoff * sigma_1`.
    /// Values at round-off level (`c * machine epsilon * sigma_1`) count as zero
    /// even with `rel_cutoff = 0`.
    pub fn solve(&self, b: &DVector<T>, rel_cutoff: T) -> Result<DVector<T>, SvdError> {
        self.check_len(b.len())?;
        let c = self.width;
        if c == 0 {
            return Ok(DVector::zeros(self.dim));
        }
        let ub = self.u.columns(0, c).tr_mul(b);
        let mut coef = self.l.tr_mul(&ub);
        let floor = T::default_epsilon() * T::lit(c as f64);
        let threshold = rel_cutoff.max(floor) * self.sigma[0];
        let mut inverted = 0;
        for i in 0..c {
            if inverted < self.rank && self.sigma[i] > threshold {
                coef[i] /= self.sigma[i];
                inverted += 1;
            } else {
                coef.rows_mut(i, c - i).fill(T::zero());
                break;
            }
        }
        let rc = &self.r * coef;
        Ok(self.v.columns(0, c) * rc)
    }

    /// Dense `U L diag(sigma) R^T V^T`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let c = self.width;
        if c == 0 {
            return DMatrix::zeros(self.dim, self.dim);
        }
        let mut left = self.u.columns(0, c) * &self.l;
        for j in 0..c {
            left.column_mut(j).scale_mut(self.sigma[j]);
        }
        let right = self.v.columns(0, c) * &self.r;
        left * right.transpose()
    }

    /// Writes the plain-text debug dump: a `d r c` header followed by `U`
    /// (row-major, `d` lines), `sigma` (one line), `V`, `L` and `R`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        let c = self.width;
        writeln!(out, "{} {} {}", self.dim, self.rank, c)?;
        write_rows(&mut out, &self.u.columns(0, c).into_owned())?;
        write_line(&mut out, self.sigma.iter())?;
        write_rows(&mut out, &self.v.columns(0, c).into_owned())?;
        write_rows(&mut out, &self.l)?;
        write_rows(&mut out, &self.r)?;
        Ok(())
    }

    /// Parses a dump produced by [`TruncatedSvd::write_dump`].
    pub fn read_dump<B: BufRead>(input: B) -> Result<Self, SvdError> {
        let mut lines = input.lines();
        let mut next_line = || -> Result<Vec<T>, SvdError> {
            let line = lines
                .next()
                .ok_or_else(|| SvdError::MalformedDump("unexpected end of input".into()))?
                .map_err(|e| SvdError::MalformedDump(e.to_string()))?;
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| SvdError::MalformedDump(format!("{tok}: {e}")))
                })
                .collect()
        };
        let header = next_line()?;
        if header.len() != 3 {
            return Err(SvdError::MalformedDump("header must be `d r c`".into()));
        }
        let dim = header[0].as_f64() as usize;
        let rank = header[1].as_f64() as usize;
        let c = header[2].as_f64() as usize;
        let mut svd = Self::new(dim, rank)?;
        if c > svd.u.ncols() {
            return Err(SvdError::MalformedDump(format!("width {c} exceeds capacity")));
        }
        let mut read_matrix = |rows: usize, cols: usize| -> Result<DMatrix<T>, SvdError> {
            let mut m = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                let row = next_line()?;
                if row.len() != cols {
                    return Err(SvdError::MalformedDump(format!(
                        "expected {cols} values, found {}",
                        row.len()
                    )));
                }
                for (j, x) in row.into_iter().enumerate() {
                    m[(i, j)] = x;
                }
            }
            Ok(m)
        };
        let u = read_matrix(dim, c)?;
        let sigma = read_matrix(1, c)?;
        let v = read_matrix(dim, c)?;
        let l = read_matrix(c, c)?;
        let r = read_matrix(c, c)?;
        svd.u.columns_mut(0, c).copy_from(&u);
        svd.v.columns_mut(0, c).copy_from(&v);
        svd.sigma = sigma.row(0).transpose();
        svd.pending = l != DMatrix::identity(c, c) || r != DMatrix::identity(c, c);
        svd.l = l;
        svd.r = r;
        svd.width = c;
        Ok(svd)
    }

    fn check_len(&self, len: usize) -> Result<(), SvdError> {
        if len != self.dim {
            return Err(SvdError::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }
}

fn write_line<'a, W: Write, T: Real>(out: &mut W, vals: impl Iterator<Item = &'a T>) -> io::Result<()> {
    let mut first = true;
    for v in vals {
        if !first {
            write!(out, " ")?;
        }
        write!(out, "{}", v.as_f64())?;
        first = false;
    }
    writeln!(out)
}

fn write_rows<W: Write, T: Real>(out: &mut W, m: &DMatrix<T>) -> io::Result<()> {
    for i in 0..m.nrows() {
        write_line(out, m.row(i).iter())?;
    }
    Ok(())
}

/// Splits `x` into its coordinates in the first `c` columns of `basis` and the
/// orthogonal residual, reorthogonalizing once when cancellation is severe.
fn project_out<T: Real>(basis: &DMatrix<T>, c: usize, x: &DVector<T>) -> (DVector<T>, DVector<T>, T) {
    let x_norm = x.norm();
    if c == 0 {
        return (DVector::zeros(0), x.clone(), x_norm);
    }
    let b = basis.columns(0, c);
    let mut coef = b.tr_mul(x);
    let mut resid = x - b * &coef;
    let mut norm = resid.norm();
    if norm < T::lit(0.5) * x_norm {
        let extra = b.tr_mul(&resid);
        resid -= b * &extra;
        coef += extra;
        norm = resid.norm();
    }
    (coef, resid, norm)
}

/// Orthonormalizes the part of `xs` outside span(basis[:, :c]).
///
/// Returns `(C, Q, R)` with `xs = basis[:, :c] C + Q R`, `Q` orthonormal and
/// orthogonal to the basis. Columns whose residual norm is at most `eps` add no
/// new direction.
fn block_project_out<T: Real>(
    basis: &DMatrix<T>,
    c: usize,
    xs: &DMatrix<T>,
    eps: T,
) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>) {
    let d = xs.nrows();
    let k = xs.ncols();
    let room = d - c;
    let b = basis.columns(0, c);
    let mut coef = b.tr_mul(xs);
    let mut resid = xs - b * &coef;

    let mut q: DMatrix<T> = DMatrix::zeros(d, k.min(room));
    let mut rq: DMatrix<T> = DMatrix::zeros(k.min(room), k);
    let mut kq = 0;
    for j in 0..k {
        let mut x = resid.column(j).into_owned();
        for _ in 0..2 {
            if c > 0 {
                let cu = b.tr_mul(&x);
                x -= b * &cu;
                let mut col = coef.column_mut(j);
                col += cu;
            }
            if kq > 0 {
                let qs = q.columns(0, kq);
                let cq = qs.tr_mul(&x);
                x -= qs * &cq;
                let mut col = rq.view_mut((0, j), (kq, 1));
                col += cq;
            }
        }
        let norm = x.norm();
        if norm > eps && kq < room {
            q.set_column(kq, &(x / norm));
            rq[(kq, j)] = norm;
            kq += 1;
        }
        resid.set_column(j, &DVector::zeros(d));
    }
    (coef, q.columns(0, kq).into_owned(), rq.rows(0, kq).into_owned())
}

/// A unit vector orthogonal to the first `c` columns of `basis` (`c < d`).
fn complement_direction<T: Real>(basis: &DMatrix<T>, c: usize) -> DVector<T> {
    let d = basis.nrows();
    let b = basis.columns(0, c);
    // The coordinate axis least covered by the basis has residual norm^2 >= 1 - c/d.
    let mut best = 0;
    let mut best_cover = T::max_value().unwrap_or_else(T::one);
    for i in 0..d {
        let cover = b.row(i).norm_squared();
        if cover < best_cover {
            best_cover = cover;
            best = i;
        }
    }
    let mut x = DVector::zeros(d);
    x[best] = T::one();
    for _ in 0..2 {
        let cu = b.tr_mul(&x);
        x -= b * cu;
    }
    let n = x.norm();
    x / n
}

/// `blockdiag(old, 1) * small`.
fn extend_rotation<T: Real>(old: &DMatrix<T>, small: &DMatrix<T>) -> DMatrix<T> {
    let c = old.nrows();
    let n = c + 1;
    let mut out = DMatrix::zeros(n, n);
    if c > 0 {
        let top = old * small.rows(0, c);
        out.rows_mut(0, c).copy_from(&top);
    }
    out.row_mut(c).copy_from(&small.row(c));
    out
}

/// `[basis[:, :c]  extra] * coef`.
fn stacked_times<T: Real>(basis: &DMatrix<T>, c: usize, extra: &DMatrix<T>, coef: &DMatrix<T>) -> DMatrix<T> {
    let mut out = basis.columns(0, c) * coef.rows(0, c);
    let k = extra.ncols();
    if k > 0 {
        out += extra * coef.rows(c, k);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{best_rank_approx, orthonormality_error, relative_frobenius_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
    }

    fn dense_outer(z: &DVector<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        z * d.transpose()
    }

    #[test]
    fn init_rejects_bad_rank() {
        assert_eq!(
            TruncatedSvd::<f64>::new(4, 0).unwrap_err(),
            SvdError::InvalidRank { dim: 4, rank: 0 }
        );
        assert!(TruncatedSvd::<f64>::new(4, 5).is_err());
        let s = TruncatedSvd::<f64>::new(4, 2).unwrap();
        assert_eq!(s.width(), 0);
        assert_eq!(s.reconstruct(), DMatrix::zeros(4, 4));
        assert!(TruncatedSvd::<f64>::new(1024, 50).is_ok());
        assert!(TruncatedSvd::<f64>::new(1000, 300).is_ok());
    }

    #[test]
    fn single_outer_product() {
        let mut s = TruncatedSvd::<f64>::new(2, 2).unwrap();
        s.rank_one_update(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 2.0]))
            .unwrap();
        assert_eq!(s.width(), 1);
        assert!((s.singular_values()[0] - 2.0).abs() < 1e-14);
        s.compact();
        let u = s.left_basis();
        let v = s.right_basis();
        assert!((u[(0, 0)].abs() - 1.0).abs() < 1e-14 && u[(1, 0)].abs() < 1e-14);
        assert!((v[(1, 0)].abs() - 1.0).abs() < 1e-14 && v[(0, 0)].abs() < 1e-14);
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        assert!((s.reconstruct() - expect).norm() < 1e-12);
    }

    #[test]
    fn scale_examples() {
        let mut s = TruncatedSvd::<f64>::new(3, 3).unwrap();
        s.rank_one_update(&DVector::from_vec(vec![2.0, 0.0, 0.0]), &DVector::from_vec(vec![1.0, 0.0, 0.0]))
            .unwrap();
        s.rank_one_update(&DVector::from_vec(vec![0.0, 1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0, 0.0]))
            .unwrap();
        assert_eq!(s.singular_values().as_slice(), &[2.0, 1.0]);
        s.scale(0.5).unwrap();
        assert_eq!(s.singular_values().as_slice(), &[1.0, 0.5]);

        let before = s.clone();
        s.scale(1.0).unwrap();
        assert_eq!(before.singular_values(), s.singular_values());
        assert_eq!(before.left_basis(), s.left_basis());
        assert!(s.scale(0.0).is_err());
        assert!(s.scale(-1.0).is_err());
    }

    #[test]
    fn scale_commutes_with_reconstruct() {
        let mut s = TruncatedSvd::<f64>::new(3, 3).unwrap();
        for (i, sv) in [3.0, 2.0, 1.0].iter().enumerate() {
            let mut e = DVector::zeros(3);
            e[i] = 1.0;
            s.rank_one_update(&(&e * *sv), &e).unwrap();
        }
        assert_eq!(s.singular_values().as_slice(), &[3.0, 2.0, 1.0]);
        let prior = s.reconstruct();
        s.scale(0.9).unwrap();
        let got = s.singular_values();
        for (g, e) in got.iter().zip([2.7, 1.8, 0.9]) {
            assert!((g - e).abs() < 1e-15);
        }
        assert!((s.reconstruct() - prior * 0.9).norm() < 1e-14);
    }

    #[test]
    fn in_subspace_update_keeps_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = TruncatedSvd::<f64>::new(6, 3).unwrap();
        let a = random_vec(&mut rng, 6);
        let b = random_vec(&mut rng, 6);
        s.rank_one_update(&a, &b).unwrap();
        assert_eq!(s.width(), 1);
        s.rank_one_update(&(&a * 2.0), &(&b * -0.5)).unwrap();
        assert_eq!(s.width(), 1);
        assert!((s.reconstruct() - dense_outer(&a, &b) * 0.0).norm() < 1e-12);
    }

    #[test]
    fn one_sided_growth_keeps_bases_orthonormal() {
        let mut s = TruncatedSvd::<f64>::new(4, 2).unwrap();
        let e0 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let e1 = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        s.rank_one_update(&e0, &e0).unwrap();
        // z inside span(U), dvec outside span(V)
        s.rank_one_update(&e0, &e1).unwrap();
        assert_eq!(s.width(), 2);
        let mut expect = dense_outer(&e0, &e0);
        expect += dense_outer(&e0, &e1);
        assert!((s.reconstruct() - &expect).norm() < 1e-12);
        assert!(orthonormality_error(&s.left_basis()) < 1e-12);
        assert!(orthonormality_error(&s.right_basis()) < 1e-12);
        assert!(s.singular_values()[1].abs() < 1e-12);
    }

    #[test]
    fn random_stream_below_rank_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = TruncatedSvd::<f64>::new(10, 10).unwrap();
        let mut dense = DMatrix::zeros(10, 10);
        for _ in 0..20 {
            let z = random_vec(&mut rng, 10);
            let d = random_vec(&mut rng, 10);
            dense += dense_outer(&z, &d);
            s.rank_one_update(&z, &d).unwrap();
        }
        assert!(relative_frobenius_error(&s.reconstruct(), &dense) <= 1e-8);
    }

    #[test]
    fn reconstruct_after_one_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = TruncatedSvd::<f64>::new(7, 2).unwrap();
        let z = random_vec(&mut rng, 7);
        let d = random_vec(&mut rng, 7);
        s.rank_one_update(&z, &d).unwrap();
        assert!((s.reconstruct() - dense_outer(&z, &d)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut s = TruncatedSvd::<f64>::new(3, 1).unwrap();
        let err = s.rank_one_update(&DVector::zeros(2), &DVector::zeros(3)).unwrap_err();
        assert_eq!(err, SvdError::DimensionMismatch { expected: 3, got: 2 });
        assert!(s.solve(&DVector::zeros(4), 0.01).is_err());
        assert!(s.minibatch_update(&DMatrix::zeros(3, 2), &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn compact_truncates_sorted() {
        let mut s = TruncatedSvd::<f64>::new(6, 2).unwrap();
        for (i, sv) in [4.0, 3.0, 2.0].iter().enumerate() {
            let mut e = DVector::zeros(6);
            e[i] = 1.0;
            s.rank_one_update(&(&e * *sv), &e).unwrap();
        }
        assert_eq!(s.width(), 3);
        let mut e = DVector::zeros(6);
        e[3] = 1.0;
        // fourth update reaches width 2r = 4 and compacts
        s.rank_one_update(&e, &e).unwrap();
        assert_eq!(s.width(), 2);
        assert!(!s.has_pending_rotations());
        let sv = s.singular_values();
        assert!((sv[0] - 4.0).abs() < 1e-14 && (sv[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn compact_is_noop_when_folded_and_narrow() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = TruncatedSvd::<f64>::new(5, 3).unwrap();
        s.rank_one_update(&random_vec(&mut rng, 5), &random_vec(&mut rng, 5)).unwrap();
        s.compact();
        let before = s.clone();
        s.compact();
        assert_eq!(before.left_basis(), s.left_basis());
        assert_eq!(before.singular_values(), s.singular_values());
    }

    #[test]
    fn explicit_compact_is_eckart_young() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = TruncatedSvd::<f64>::new(10, 3).unwrap();
        for _ in 0..5 {
            s.rank_one_update(&random_vec(&mut rng, 10), &random_vec(&mut rng, 10)).unwrap();
        }
        assert_eq!(s.width(), 5);
        let pre = s.reconstruct();
        s.compact();
        assert_eq!(s.width(), 3);
        let expect = best_rank_approx(&pre, 3);
        assert!(relative_frobenius_error(&s.reconstruct(), &expect) < 1e-8);
    }

    #[test]
    fn solve_examples() {
        let mut s = TruncatedSvd::<f64>::new(2, 2).unwrap();
        s.rank_one_update(&DVector::from_vec(vec![4.0, 0.0]), &DVector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        s.rank_one_update(&DVector::from_vec(vec![0.0, 2.0]), &DVector::from_vec(vec![0.0, 1.0]))
            .unwrap();
        s.compact();
        let w = s.solve(&DVector::from_vec(vec![4.0, 2.0]), 0.01).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 1.0).abs() < 1e-14);

        let mut t = TruncatedSvd::<f64>::new(2, 2).unwrap();
        t.rank_one_update(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        t.rank_one_update(&DVector::from_vec(vec![0.0, 0.005]), &DVector::from_vec(vec![0.0, 1.0]))
            .unwrap();
        let w = t.solve(&DVector::from_vec(vec![1.0, 1.0]), 0.01).unwrap();
        // only the first triple is inverted
        assert!((w[0] - 1.0).abs() < 1e-14 && w[1].abs() < 1e-14);

        let empty = TruncatedSvd::<f64>::new(3, 1).unwrap();
        assert_eq!(empty.solve(&DVector::from_element(3, 1.0), 0.01).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn zero_cutoff_ignores_round_off_directions() {
        // rank-2 matrix in R^4; the right side stops growing after two updates so
        // later updates append complement directions with zero singular values
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let basis = [random_vec(&mut rng, 4), random_vec(&mut rng, 4)];
        let mut s = TruncatedSvd::<f64>::new(4, 4).unwrap();
        let mut dense = DMatrix::zeros(4, 4);
        for i in 0..6 {
            let z = random_vec(&mut rng, 4);
            let d = &basis[i % 2] * rng.random_range(0.5..1.5);
            s.rank_one_update(&z, &d).unwrap();
            dense += &z * d.transpose();
        }
        assert!(s.width() > 2);
        let b = random_vec(&mut rng, 4);
        let w = s.solve(&b, 0.0).unwrap();
        let oracle = crate::linalg::pinv_solve(&dense, &b, 1e-12);
        assert!((&w - &oracle).norm() <= 1e-8 * oracle.norm(), "{w} vs {oracle}");
    }

    #[test]
    fn minibatch_requires_folded_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = TruncatedSvd::<f64>::new(5, 2).unwrap();
        s.rank_one_update(&random_vec(&mut rng, 5), &random_vec(&mut rng, 5)).unwrap();
        let zs = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(s.minibatch_update(&zs, &zs).unwrap_err(), SvdError::PendingRotations);
        s.compact();
        assert!(s.minibatch_update(&zs, &zs).is_ok());
    }

    #[test]
    fn minibatch_from_empty_matches_dense_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (d, k, r) = (12, 6, 4);
        let zs = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
        let ds = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
        let mut s = TruncatedSvd::<f64>::new(d, r).unwrap();
        s.minibatch_update(&zs, &ds).unwrap();
        let expect = best_rank_approx(&(&zs * ds.transpose()), r);
        assert!(relative_frobenius_error(&s.reconstruct(), &expect) < 1e-8);
        assert!(orthonormality_error(&s.left_basis()) < 1e-12);
    }

    #[test]
    fn minibatch_in_subspace_keeps_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let d = 8;
        let mut s = TruncatedSvd::<f64>::new(d, 4).unwrap();
        let zs = DMatrix::from_fn(d, 3, |_, _| rng.random_range(-1.0..1.0));
        let ds = DMatrix::from_fn(d, 3, |_, _| rng.random_range(-1.0..1.0));
        s.minibatch_update(&zs, &ds).unwrap();
        assert_eq!(s.width(), 3);
        let pre = s.reconstruct();
        let mix = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let z2 = &zs * &mix;
        let d2 = &ds * &mix;
        s.minibatch_update(&z2, &d2).unwrap();
        assert_eq!(s.width(), 3);
        assert!(relative_frobenius_error(&s.reconstruct(), &(pre + &z2 * d2.transpose())) < 1e-10);
    }

    #[test]
    fn minibatch_agrees_with_sequential_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (d, r) = (15, 6);
        let mut seq = TruncatedSvd::<f64>::new(d, r).unwrap();
        let mut batch = TruncatedSvd::<f64>::new(d, r).unwrap();
        // 5 columns never reach width 2r, so no truncation in either path
        let zs = DMatrix::from_fn(d, 5, |_, _| rng.random_range(-1.0..1.0));
        let ds = DMatrix::from_fn(d, 5, |_, _| rng.random_range(-1.0..1.0));
        for j in 0..5 {
            seq.rank_one_update(&zs.column(j).into_owned(), &ds.column(j).into_owned()).unwrap();
        }
        batch.minibatch_update(&zs, &ds).unwrap();
        assert!(relative_frobenius_error(&batch.reconstruct(), &seq.reconstruct()) < 1e-8);
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut s = TruncatedSvd::<f64>::new(6, 2).unwrap();
        for _ in 0..3 {
            s.rank_one_update(&random_vec(&mut rng, 6), &random_vec(&mut rng, 6)).unwrap();
        }
        let mut buf = Vec::new();
        s.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("6 2 {}\n", s.width())));
        let back = TruncatedSvd::<f64>::read_dump(io::Cursor::new(buf)).unwrap();
        assert_eq!(back.width(), s.width());
        assert!((back.reconstruct() - s.reconstruct()).norm() < 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = TruncatedSvd::<f32>::new(6, 6).unwrap();
        let mut dense = DMatrix::<f32>::zeros(6, 6);
        for _ in 0..8 {
            let z = DVector::from_fn(6, |_, _| rng.random_range(-1.0f32..1.0));
            let d = DVector::from_fn(6, |_, _| rng.random_range(-1.0f32..1.0));
            dense += &z * d.transpose();
            s.rank_one_update(&z, &d).unwrap();
        }
        assert!(relative_frobenius_error(&s.reconstruct(), &dense) < 1e-4);
    }
}
