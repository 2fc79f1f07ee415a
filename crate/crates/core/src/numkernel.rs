//! Dense linear-algebra primitives and seeded randomness.
//!
//! Everything in the crate speaks [`DenseMat`], a finite real matrix stored
//! column-major. Vectorization follows the same column-major order, so
//! `vec(A)[i + j * rows] == A[(i, j)]` everywhere.

use std::ops::Deref;
use std::sync::Once;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::subspaces::{BasisLabel, SubspaceBasis};

/// Default relative tolerance for rank decisions, measured against `σ₁`.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

const SVD_CHECK_TOL: f64 = 1e-11;

/// A real matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMat(DMatrix<f64>);

impl DenseMat {
    /// Wraps an nalgebra matrix, rejecting empty shapes and non-finite entries.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::Empty);
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(m))
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, data))
    }

    /// Builds a matrix from a list of rows (the JSON layout).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(n, m, &flat)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Internal constructor for results of arithmetic on already-valid inputs.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.iter().all(|x| x.is_finite()), "non-finite entry produced");
        Self(m)
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &DenseMat) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn fro_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(&self.0)
    }

    pub fn nuclear_norm(&self) -> f64 {
        nuclear_norm(&self.0)
    }

    pub fn transpose(&self) -> DenseMat {
        Self(self.0.transpose())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

impl Deref for DenseMat {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Full singular value decomposition `A = U · diag(σ) · Vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `n1 × n1` orthogonal.
    pub u: DMatrix<f64>,
    /// Nonincreasing, length `min(n1, n2)`.
    pub sigma: Vec<f64>,
    /// `n2 × n2` orthogonal.
    pub v: DMatrix<f64>,
}

impl SvdResult {
    /// `U · Diag σ · Vᵀ` with `Diag σ` padded to `n1 × n2`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.u.nrows(), self.v.nrows());
        let mut d = DMatrix::zeros(n1, n2);
        for (i, s) in self.sigma.iter().enumerate() {
            d[(i, i)] = *s;
        }
        &self.u * d * self.v.transpose()
    }
}

/// Thin SVD with singular values sorted nonincreasingly: `(U_k, σ, V_k)`.
pub(crate) fn svd_thin(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (n1, n2) = a.shape();
    let k = n1.min(n2);
    if k == 0 {
        return Ok((DMatrix::zeros(n1, 0), Vec::new(), DMatrix::zeros(n2, 0)));
    }
    let (u, s, v) = svd_checked(a)
        .ok_or_else(|| Error::Numerical(format!("SVD of a {n1}x{n2} matrix did not converge")))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u = DMatrix::from_fn(n1, k, |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(n2, k, |r, c| v[(r, order[c])]);
    let sigma = order.iter().map(|&i| s[i].max(0.0)).collect();
    Ok((u, sigma, v))
}

/// Thin SVD through faer, whose bidiagonal solver stays accurate on
/// rank-deficient input; the factors are checked against `a` before use.
fn svd_checked(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    static SEQUENTIAL: Once = Once::new();
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
    let (n1, n2) = a.shape();
    let fm = faer::Mat::<f64>::from_fn(n1, n2, |i, j| a[(i, j)]);
    let svd = fm.thin_svd().ok()?;
    let k = n1.min(n2);
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let u = DMatrix::from_fn(n1, k, |i, j| fu[(i, j)]);
    let v = DMatrix::from_fn(n2, k, |i, j| fv[(i, j)]);
    let s: Vec<f64> = (0..k).map(|j| fs[j]).collect();
    let mut us = u.clone();
    for (j, sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(*sj);
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    ((us * v.transpose() - a).amax() <= SVD_CHECK_TOL * scale).then_some((u, s, v))
}

/// Extends a matrix with orthonormal columns to a square orthogonal matrix.
///
/// The leading columns are kept verbatim; the complement comes from a
/// Householder QR of `[Q | I]`.
pub(crate) fn complete_orthonormal(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = q.shape();
    if k >= n {
        return q.columns(0, n).into_owned();
    }
    let mut aug = DMatrix::zeros(n, k + n);
    aug.columns_mut(0, k).copy_from(q);
    aug.columns_mut(k, n).fill_with_identity();
    let full = aug.qr().q();
    let mut out = DMatrix::zeros(n, n);
    out.columns_mut(0, k).copy_from(q);
    out.columns_mut(k, n - k).copy_from(&full.columns(k, n - k));
    out
}

/// Full SVD with orthogonal `U` (`n1 × n1`) and `V` (`n2 × n2`).
pub fn svd_full(a: &DenseMat) -> Result<SvdResult> {
    svd_full_raw(a.as_matrix())
}

pub(crate) fn svd_full_raw(a: &DMatrix<f64>) -> Result<SvdResult> {
    let (u, sigma, v) = svd_thin(a)?;
    Ok(SvdResult {
        u: complete_orthonormal(&u),
        sigma,
        v: complete_orthonormal(&v),
    })
}

pub(crate) fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    svd_thin(a).map(|(_, s, _)| s).expect("SVD of a finite matrix")
}

pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub(crate) fn nuclear_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).iter().sum()
}

pub(crate) fn count_above(sigma: &[f64], tol_rel: f64) -> usize {
    match sigma.first() {
        Some(&s1) if s1 > 0.0 => sigma.iter().filter(|&&s| s > tol_rel * s1).count(),
        _ => 0,
    }
}

/// Numerical rank: number of singular values above `tol_rel · σ₁`.
pub fn rank_tol(a: &DenseMat, tol_rel: f64) -> usize {
    rank_raw(a.as_matrix(), tol_rel)
}

pub(crate) fn rank_raw(a: &DMatrix<f64>, tol_rel: f64) -> usize {
    count_above(&singular_values(a), tol_rel)
}

/// Moore–Penrose pseudo-inverse, discarding singular values at or below `tol_rel · σ₁`.
pub fn pinv(a: &DenseMat, tol_rel: f64) -> Result<DenseMat> {
    Ok(DenseMat::wrap(pinv_raw(a.as_matrix(), tol_rel)?))
}

pub(crate) fn pinv_raw(a: &DMatrix<f64>, tol_rel: f64) -> Result<DMatrix<f64>> {
    let (u, s, v) = svd_thin(a)?;
    let k = count_above(&s, tol_rel);
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for i in 0..k {
        out += (v.column(i) / s[i]) * u.column(i).transpose();
    }
    Ok(out)
}

/// Orthonormal basis of the column space, `(Q, rank)`.
pub(crate) fn range_basis(a: &DMatrix<f64>, tol_rel: f64) -> Result<DMatrix<f64>> {
    let (u, s, _) = svd_thin(a)?;
    let k = count_above(&s, tol_rel);
    Ok(u.columns(0, k).into_owned())
}

/// Orthonormal basis of the null space of `a` (as columns).
pub(crate) fn null_basis(a: &DMatrix<f64>, tol_rel: f64) -> Result<DMatrix<f64>> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let row_space = range_basis(&a.transpose(), tol_rel)?;
    let k = row_space.ncols();
    let full = complete_orthonormal(&row_space);
    Ok(full.columns(k, n - k).into_owned())
}

/// Smallest eigenvalue of the symmetric part of a square matrix (`+∞` when empty).
pub(crate) fn min_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Column-major vectorization.
pub fn vec(a: &DenseMat) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// Inverse of [`vec`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<DenseMat> {
    if v.len() != rows * cols {
        return Err(Error::Shape(format!(
            "cannot reshape {} entries to {rows}x{cols}",
            v.len()
        )));
    }
    DenseMat::from_matrix(DMatrix::from_column_slice(rows, cols, v))
}

/// Order-preserving Gram–Schmidt on matrices of a common shape.
///
/// An input whose residual after projection falls below
/// [`DEFAULT_RANK_TOL`] times its own norm is dropped.
pub fn orthonormalize(mats: &[DenseMat]) -> Result<SubspaceBasis> {
    let Some(first) = mats.first() else {
        return Err(Error::Empty);
    };
    let shape = first.shape();
    if let Some(bad) = mats.iter().find(|m| m.shape() != shape) {
        return Err(Error::Shape(format!(
            "expected {:?}, found {:?}",
            shape,
            bad.shape()
        )));
    }
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for m in mats {
        let orig = DVector::from_column_slice(m.as_slice());
        let n0 = orig.norm();
        if n0 == 0.0 {
            continue;
        }
        let mut v = orig;
        for _ in 0..2 {
            for q in &kept {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > DEFAULT_RANK_TOL * n0 {
            kept.push(v / nv);
        }
    }
    let elems = kept
        .into_iter()
        .map(|v| DenseMat::wrap(DMatrix::from_column_slice(shape.0, shape.1, v.as_slice())))
        .collect();
    Ok(SubspaceBasis::new(shape, elems, BasisLabel::Span))
}

/// Seeded counter-based generator: the stream is a function of `(seed, stream)` only.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    /// Independent generator for sub-task `index`, e.g. one Monte-Carlo trial.
    pub fn substream(&self, index: u64) -> Self {
        Self::with_stream(self.seed, index.wrapping_add(1))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.inner)
    }

    /// `amount` distinct indices from `0..len`, uniformly without replacement.
    pub fn sample_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, len, amount).into_vec()
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.normal())
    }
}

/// Matrix with i.i.d. standard normal entries, filled column by column.
pub fn gaussian_mat(rng: &mut Rng, rows: usize, cols: usize) -> DenseMat {
    DenseMat::wrap(gaussian_raw(rng, rows, cols))
}

pub(crate) fn gaussian_raw(rng: &mut Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.normal()).collect();
    DMatrix::from_column_slice(rows, cols, &data)
}

/// `vec(U · D · Vᵀ) = (V ⊗ U) · vec(D)`.
pub(crate) fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_singular_values() {
        let s = svd_full(&DenseMat::identity(3)).unwrap();
        assert!(s.sigma.iter().all(|&x| approx_eq(x, 1.0, 1e-14)));
    }

    #[test]
    fn diagonal_svd_keeps_order() {
        let a = DenseMat::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]).unwrap();
        let s = svd_full(&a).unwrap();
        assert!(approx_eq(s.sigma[0], 4.0, 1e-14) && approx_eq(s.sigma[1], 0.0, 1e-14));
        assert!(approx_eq(s.u[(0, 0)].abs(), 1.0, 1e-14));
        assert!(approx_eq(s.v[(0, 0)].abs(), 1.0, 1e-14));
    }

    #[test]
    fn rank_one_completion_fixture_svd() {
        let x0 = DenseMat::from_row_slice(3, 3, &[4., 2., 4., 2., 1., 2., 4., 2., 4.]).unwrap();
        let s = svd_full(&x0).unwrap();
        assert!(approx_eq(s.sigma[0], 9.0, 1e-12));
        assert!(s.sigma[1] < 1e-12 && s.sigma[2] < 1e-12);
        assert_eq!(rank_tol(&x0, DEFAULT_RANK_TOL), 1);
    }

    #[test]
    fn rank_edge_cases() {
        assert_eq!(rank_tol(&DenseMat::zeros(4, 4), DEFAULT_RANK_TOL), 0);
        let a = DenseMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-15]).unwrap();
        assert_eq!(rank_tol(&a, DEFAULT_RANK_TOL), 1);
    }

    #[test]
    fn pinv_of_row_vector() {
        let l = DenseMat::from_row_slice(1, 2, &[1.0, 1.0]).unwrap();
        let p = pinv(&l, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.shape(), (2, 1));
        assert!(approx_eq(p[(0, 0)], 0.5, 1e-15) && approx_eq(p[(1, 0)], 0.5, 1e-15));
        let i = pinv(&DenseMat::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert!((i.as_matrix() - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn pinv_left_inverse_of_tall_full_rank() {
        let mut rng = Rng::new(7);
        let a = gaussian_mat(&mut rng, 5, 3);
        let p = pinv(&a, DEFAULT_RANK_TOL).unwrap();
        let eye = p.as_matrix() * a.as_matrix();
        assert!((eye - DMatrix::identity(3, 3)).norm() < 1e-8);
    }

    #[test]
    fn vec_is_column_major() {
        let a = DenseMat::from_row_slice(2, 2, &[1., 2., 3., 4.]).unwrap();
        assert_eq!(vec(&a), vec![1., 3., 2., 4.]);
        assert_eq!(unvec(&[1., 3., 2., 4.], 2, 2).unwrap(), a);
        let c = DenseMat::from_row_slice(3, 1, &[5., 6., 7.]).unwrap();
        assert_eq!(vec(&c), vec![5., 6., 7.]);
        assert!(matches!(unvec(&[1.0, 2.0, 3.0], 2, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn orthonormalize_drops_dependent_inputs() {
        let e11 = DenseMat::from_row_slice(2, 2, &[1., 0., 0., 0.]).unwrap();
        let e12 = DenseMat::from_row_slice(2, 2, &[0., 1., 0., 0.]).unwrap();
        let sum = DenseMat::from_row_slice(2, 2, &[1., 1., 0., 0.]).unwrap();

        let b = orthonormalize(&[DenseMat::identity(2)]).unwrap();
        assert_eq!(b.dim(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b.elems()[0].as_matrix() - DMatrix::identity(2, 2) * h).norm() < 1e-15);

        assert_eq!(orthonormalize(&[e11.clone(), e11.clone()]).unwrap().dim(), 1);
        assert_eq!(orthonormalize(&[e11, e12, sum]).unwrap().dim(), 2);
    }

    #[test]
    fn gaussian_is_deterministic_with_unit_moments() {
        let a = gaussian_mat(&mut Rng::new(1), 4, 5);
        let b = gaussian_mat(&mut Rng::new(1), 4, 5);
        assert_eq!(a, b);

        let big = gaussian_mat(&mut Rng::new(2), 100, 100);
        let n = 10_000.0;
        let mean = big.iter().sum::<f64>() / n;
        let var = big.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn substreams_differ_but_repeat() {
        let root = Rng::new(99);
        let a = gaussian_mat(&mut root.substream(3), 3, 3);
        let b = gaussian_mat(&mut root.substream(3), 3, 3);
        let c = gaussian_mat(&mut root.substream(4), 3, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(matches!(
            DenseMat::from_row_slice(1, 2, &[1.0, f64::NAN]),
            Err(Error::NonFinite)
        ));
        assert!(matches!(DenseMat::from_matrix(DMatrix::zeros(0, 3)), Err(Error::Empty)));
        assert!(matches!(DenseMat::from_rows(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::Shape(_))));
    }

    #[test]
    fn null_basis_of_wide_matrix() {
        let mut rng = Rng::new(5);
        let a = gaussian_raw(&mut rng, 3, 7);
        let k = null_basis(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.ncols(), 4);
        assert!((&a * &k).norm() < 1e-12);
        assert!((k.transpose() * &k - DMatrix::identity(4, 4)).norm() < 1e-12);
    }
}
