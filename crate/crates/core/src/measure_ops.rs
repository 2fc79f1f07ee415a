//! Measurement operators `Φ: ℝ^{n1×n2} → ℝ^m` and the operators derived from them.
//!
//! Vectorization is column-major everywhere: `vec(X)[i + j·n1] = X[i, j]`.
//! Entry indices are 0-based.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::numkernel::{
    null_basis, rank_raw, svd_full_raw, DenseMat, Rng, DEFAULT_RANK_TOL,
};
use crate::subspaces::{basis_usrv, BasisLabel, CompactSvd, SubspaceBasis};

/// How a [`LinOp`] acts on `X`.
#[derive(Clone, Debug)]
pub enum LinOpKind {
    /// `m × (n1·n2)` matrix acting on `vec(X)`, one row per measurement.
    Dense(DMatrix<f64>),
    /// Observed entries `(i, j)`; measurement `k` is `X[Ω_k]`.
    EntryMask(Vec<(usize, usize)>),
    /// `X ↦ vec(L X)` for a `q × n1` matrix `L`.
    LeftMult(DMatrix<f64>),
    /// `X ↦ (⟨A_k, X⟩)_k`.
    InnerFamily(Vec<DMatrix<f64>>),
}

/// A linear map from `n1 × n2` matrices to `ℝ^m`.
#[derive(Clone, Debug)]
pub struct LinOp {
    n1: usize,
    n2: usize,
    kind: LinOpKind,
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

impl LinOp {
    pub fn dense(n1: usize, n2: usize, a: DMatrix<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Empty);
        }
        if a.ncols() != n1 * n2 {
            return Err(Error::Shape(format!(
                "dense operator has {} columns, expected {}",
                a.ncols(),
                n1 * n2
            )));
        }
        check_finite(&a)?;
        Ok(Self { n1, n2, kind: LinOpKind::Dense(a) })
    }

    pub fn entry_mask(n1: usize, n2: usize, omega: Vec<(usize, usize)>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Empty);
        }
        let mut seen = HashSet::new();
        for &(i, j) in &omega {
            if i >= n1 || j >= n2 {
                return Err(Error::Shape(format!("entry ({i}, {j}) outside {n1}x{n2}")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Config(format!("entry ({i}, {j}) listed twice")));
            }
        }
        Ok(Self { n1, n2, kind: LinOpKind::EntryMask(omega) })
    }

    pub fn left_mult(l: DMatrix<f64>, n2: usize) -> Result<Self> {
        if l.is_empty() || n2 == 0 {
            return Err(Error::Empty);
        }
        check_finite(&l)?;
        Ok(Self { n1: l.ncols(), n2, kind: LinOpKind::LeftMult(l) })
    }

    pub fn inner_family(n1: usize, n2: usize, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Empty);
        }
        for a in &mats {
            if a.shape() != (n1, n2) {
                return Err(Error::Shape(format!(
                    "family member is {:?}, expected ({n1}, {n2})",
                    a.shape()
                )));
            }
            check_finite(a)?;
        }
        Ok(Self { n1, n2, kind: LinOpKind::InnerFamily(mats) })
    }

    /// Observes every entry.
    pub fn full_observation(n1: usize, n2: usize) -> Result<Self> {
        let omega = (0..n2).flat_map(|j| (0..n1).map(move |i| (i, j))).collect();
        Self::entry_mask(n1, n2, omega)
    }

    pub fn kind(&self) -> &LinOpKind {
        &self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Codomain dimension.
    pub fn m(&self) -> usize {
        match &self.kind {
            LinOpKind::Dense(a) => a.nrows(),
            LinOpKind::EntryMask(o) => o.len(),
            LinOpKind::LeftMult(l) => l.nrows() * self.n2,
            LinOpKind::InnerFamily(a) => a.len(),
        }
    }

    fn check_shape(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.shape() != (self.n1, self.n2) {
            return Err(Error::Shape(format!(
                "operator domain is {}x{}, got {:?}",
                self.n1,
                self.n2,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &DenseMat) -> Result<DVector<f64>> {
        self.check_shape(x.as_matrix())?;
        Ok(self.apply_raw(x.as_matrix()))
    }

    pub(crate) fn apply_raw(&self, x: &DMatrix<f64>) -> DVector<f64> {
        match &self.kind {
            LinOpKind::Dense(a) => a * DVector::from_column_slice(x.as_slice()),
            LinOpKind::EntryMask(o) => DVector::from_iterator(o.len(), o.iter().map(|&e| x[e])),
            LinOpKind::LeftMult(l) => {
                let lx = l * x;
                DVector::from_column_slice(lx.as_slice())
            }
            LinOpKind::InnerFamily(a) => {
                DVector::from_iterator(a.len(), a.iter().map(|ak| ak.dot(x)))
            }
        }
    }

    pub fn adjoint_apply(&self, y: &[f64]) -> Result<DenseMat> {
        if y.len() != self.m() {
            return Err(Error::Shape(format!(
                "adjoint expects {} values, got {}",
                self.m(),
                y.len()
            )));
        }
        DenseMat::from_matrix(self.adjoint_raw(y))
    }

    pub(crate) fn adjoint_raw(&self, y: &[f64]) -> DMatrix<f64> {
        let (n1, n2) = (self.n1, self.n2);
        match &self.kind {
            LinOpKind::Dense(a) => {
                let v = a.transpose() * DVector::from_column_slice(y);
                DMatrix::from_column_slice(n1, n2, v.as_slice())
            }
            LinOpKind::EntryMask(o) => {
                let mut out = DMatrix::zeros(n1, n2);
                for (&e, &v) in o.iter().zip(y) {
                    out[e] = v;
                }
                out
            }
            LinOpKind::LeftMult(l) => {
                l.transpose() * DMatrix::from_column_slice(l.nrows(), n2, y)
            }
            LinOpKind::InnerFamily(a) => {
                let mut out = DMatrix::zeros(n1, n2);
                for (ak, &v) in a.iter().zip(y) {
                    out += ak * v;
                }
                out
            }
        }
    }

    /// The `m × (n1·n2)` matrix of the operator on `vec`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.n1, self.n2);
        match &self.kind {
            LinOpKind::Dense(a) => a.clone(),
            LinOpKind::EntryMask(o) => {
                let mut out = DMatrix::zeros(o.len(), n1 * n2);
                for (k, &(i, j)) in o.iter().enumerate() {
                    out[(k, i + j * n1)] = 1.0;
                }
                out
            }
            LinOpKind::LeftMult(l) => {
                // vec(LX) = (I_{n2} ⊗ L) vec(X)
                let q = l.nrows();
                let mut out = DMatrix::zeros(q * n2, n1 * n2);
                for j in 0..n2 {
                    out.view_mut((j * q, j * n1), (q, n1)).copy_from(l);
                }
                out
            }
            LinOpKind::InnerFamily(a) => {
                let mut out = DMatrix::zeros(a.len(), n1 * n2);
                for (k, ak) in a.iter().enumerate() {
                    out.row_mut(k).copy_from_slice(ak.as_slice());
                }
                out
            }
        }
    }

    pub fn rank(&self) -> usize {
        rank_raw(&self.to_dense(), DEFAULT_RANK_TOL)
    }

    pub fn to_json(&self) -> Value {
        let rows = |m: &DMatrix<f64>| DenseMat::wrap(m.clone()).to_rows();
        let payload = match &self.kind {
            LinOpKind::Dense(a) => serde_json::to_value(rows(a)),
            LinOpKind::EntryMask(o) => {
                serde_json::to_value(o.iter().map(|&(i, j)| [i, j]).collect::<Vec<_>>())
            }
            LinOpKind::LeftMult(l) => serde_json::to_value(rows(l)),
            LinOpKind::InnerFamily(a) => {
                serde_json::to_value(a.iter().map(rows).collect::<Vec<_>>())
            }
        }
        .expect("plain numeric payload serializes");
        serde_json::to_value(OpJson {
            kind: self.kind_name().to_string(),
            n1: self.n1,
            n2: self.n2,
            m: self.m(),
            payload,
        })
        .expect("operator JSON serializes")
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let j: OpJson = serde_json::from_value(v.clone())?;
        let op = match j.kind.as_str() {
            "dense" => {
                let rows: Vec<Vec<f64>> = serde_json::from_value(j.payload)?;
                if rows.is_empty() {
                    Self::dense(j.n1, j.n2, DMatrix::zeros(0, j.n1 * j.n2))?
                } else {
                    Self::dense(j.n1, j.n2, DenseMat::from_rows(&rows)?.into_matrix())?
                }
            }
            "entry_mask" => {
                let idx: Vec<[usize; 2]> = serde_json::from_value(j.payload)?;
                Self::entry_mask(j.n1, j.n2, idx.into_iter().map(|[i, k]| (i, k)).collect())?
            }
            "left_mult" => {
                let rows: Vec<Vec<f64>> = serde_json::from_value(j.payload)?;
                let l = DenseMat::from_rows(&rows)?.into_matrix();
                if l.ncols() != j.n1 {
                    return Err(Error::Shape(format!(
                        "L has {} columns but n1 = {}",
                        l.ncols(),
                        j.n1
                    )));
                }
                Self::left_mult(l, j.n2)?
            }
            "inner_family" => {
                let mats: Vec<Vec<Vec<f64>>> = serde_json::from_value(j.payload)?;
                let mats = mats
                    .iter()
                    .map(|r| DenseMat::from_rows(r).map(DenseMat::into_matrix))
                    .collect::<Result<Vec<_>>>()?;
                Self::inner_family(j.n1, j.n2, mats)?
            }
            other => return Err(Error::Config(format!("unknown operator kind {other:?}"))),
        };
        if op.m() != j.m {
            return Err(Error::Shape(format!(
                "operator declares m = {} but payload gives {}",
                j.m,
                op.m()
            )));
        }
        Ok(op)
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            LinOpKind::Dense(_) => "dense",
            LinOpKind::EntryMask(_) => "entry_mask",
            LinOpKind::LeftMult(_) => "left_mult",
            LinOpKind::InnerFamily(_) => "inner_family",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct OpJson {
    kind: String,
    n1: usize,
    n2: usize,
    m: usize,
    payload: Value,
}

/// Orthonormal basis of `Ker Φ`.
pub fn kernel_basis(op: &LinOp) -> Result<SubspaceBasis> {
    let (n1, n2) = op.shape();
    let cols = kernel_columns(op)?;
    let elems = cols
        .column_iter()
        .map(|c| DenseMat::wrap(DMatrix::from_column_slice(n1, n2, c.as_slice())))
        .collect();
    Ok(SubspaceBasis::new((n1, n2), elems, BasisLabel::KerPhi))
}

/// `Ker Φ` as orthonormal columns on `vec` coordinates.
pub(crate) fn kernel_columns(op: &LinOp) -> Result<DMatrix<f64>> {
    let (n1, n2) = op.shape();
    if let LinOpKind::EntryMask(o) = op.kind() {
        let observed: HashSet<usize> = o.iter().map(|&(i, j)| i + j * n1).collect();
        let free: Vec<usize> = (0..n1 * n2).filter(|k| !observed.contains(k)).collect();
        let mut out = DMatrix::zeros(n1 * n2, free.len());
        for (c, &k) in free.iter().enumerate() {
            out[(k, c)] = 1.0;
        }
        return Ok(out);
    }
    null_basis(&op.to_dense(), DEFAULT_RANK_TOL)
}

/// An operator `N` with `Ker N = Im Φ*`: its rows are an orthonormal basis of `Ker Φ`.
#[derive(Clone, Debug)]
pub struct AnnihilatorN {
    pub rows: DMatrix<f64>,
}

impl AnnihilatorN {
    pub fn dim(&self) -> usize {
        self.rows.nrows()
    }

    pub fn apply(&self, w: &DenseMat) -> DVector<f64> {
        &self.rows * DVector::from_column_slice(w.as_slice())
    }
}

pub fn annihilator(op: &LinOp) -> Result<AnnihilatorN> {
    Ok(AnnihilatorN { rows: kernel_columns(op)?.transpose() })
}

/// `Ψ = (Φ(W_1) … Φ(W_q))` for an ordered `E` basis.
pub fn build_psi(op: &LinOp, e_basis: &SubspaceBasis) -> Result<DMatrix<f64>> {
    if e_basis.label() != BasisLabel::E || e_basis.nesting().is_none() {
        return Err(Error::Contract(
            "Ψ needs the nested E basis from subspaces::basis_e".into(),
        ));
    }
    if e_basis.shape() != op.shape() {
        return Err(Error::Shape(format!(
            "basis shape {:?} vs operator domain {:?}",
            e_basis.shape(),
            op.shape()
        )));
    }
    let mut psi = DMatrix::zeros(op.m(), e_basis.dim());
    for (k, w) in e_basis.elems().iter().enumerate() {
        psi.set_column(k, &op.apply_raw(w.as_matrix()));
    }
    Ok(psi)
}

/// `M X = V_Gᵀ (⟨W_1, X⟩, …, ⟨W_q, X⟩)` where the columns of `V_G` span `Ker Ψ`,
/// so that `Im M* = Ker Φ ∩ ℰ`.
#[derive(Clone, Debug)]
pub struct OperatorM {
    pub v_g: DMatrix<f64>,
    pub basis_e: SubspaceBasis,
}

impl OperatorM {
    /// Codomain dimension `q - rank Ψ`.
    pub fn dim(&self) -> usize {
        self.v_g.ncols()
    }

    pub fn apply(&self, x: &DenseMat) -> DVector<f64> {
        let coords = DVector::from_iterator(
            self.basis_e.dim(),
            self.basis_e.elems().iter().map(|w| w.inner(x)),
        );
        self.v_g.transpose() * coords
    }

    pub fn adjoint(&self, y: &[f64]) -> DenseMat {
        let coeffs = &self.v_g * DVector::from_column_slice(y);
        let (n1, n2) = self.basis_e.shape();
        let mut out = DMatrix::zeros(n1, n2);
        for (w, c) in self.basis_e.elems().iter().zip(coeffs.iter()) {
            out += w.as_matrix() * *c;
        }
        DenseMat::wrap(out)
    }

    /// `(n1·n2) × dim` matrix of `M*`; its columns are an orthonormal basis of `Ker Φ ∩ ℰ`.
    pub fn adjoint_columns(&self) -> DMatrix<f64> {
        self.basis_e.as_columns() * &self.v_g
    }
}

pub fn build_m(op: &LinOp, e_basis: &SubspaceBasis) -> Result<OperatorM> {
    let psi = build_psi(op, e_basis)?;
    let q = psi.ncols();
    let v_g = if psi.nrows() == 0 || q == 0 {
        DMatrix::identity(q, q)
    } else {
        let svd = svd_full_raw(&psi)?;
        let k = crate::numkernel::count_above(&svd.sigma, DEFAULT_RANK_TOL);
        svd.v.columns(k, q - k).into_owned()
    };
    Ok(OperatorM { v_g, basis_e: e_basis.clone() })
}

/// Φ_s with `m = r(r+1)/2` measurements spanning `U₀ 𝕊ʳ V₀ᵀ`.
pub fn minimal_phi(csvd: &CompactSvd, rng: &mut Rng) -> LinOp {
    let s = csvd.r * (csvd.r + 1) / 2;
    minimal_phi_truncated(csvd, rng, s)
}

/// The first `m` members of the randomly mixed `U₀ 𝕊ʳ V₀ᵀ` family behind [`minimal_phi`].
pub fn minimal_phi_truncated(csvd: &CompactSvd, rng: &mut Rng, m: usize) -> LinOp {
    let basis = basis_usrv(csvd);
    let s = basis.dim();
    let (n1, n2) = csvd.shape();
    let mix = crate::numkernel::gaussian_raw(rng, s, s);
    let mats = (0..m.min(s))
        .map(|k| {
            let mut a = DMatrix::zeros(n1, n2);
            for (j, b) in basis.elems().iter().enumerate() {
                a += b.as_matrix() * mix[(k, j)];
            }
            a
        })
        .collect();
    LinOp::inner_family(n1, n2, mats).expect("family built from a valid basis")
}
