//! Geometry of the nuclear norm at a point `X₀`.
//!
//! Given a compact SVD `X₀ = U_I Σ V_Iᵀ` and a subgradient `Y₀`, this module
//! builds the simultaneous ordered SVD `(Ū, V̄)` and, in that frame, the
//! subspaces the certificates are stated in:
//!
//! | label     | block pattern in `Ūᵀ · W · V̄`                         | dimension                         |
//! |-----------|--------------------------------------------------------|-----------------------------------|
//! | `T0`      | anything outside the trailing `(n1-r)×(n2-r)` block    | `r(n1+n2-r)`                      |
//! | `T0Perp`  | only the trailing block                                | `(n1-r)(n2-r)`                    |
//! | `ECapT`   | `[A B 0; Bᵀ 0 0; 0 0 0]`, `A` symmetric                 | `r(r+1)/2 + r(p-r)`               |
//! | `SuffSp`  | symmetric leading `p×p` block                          | `p(p+1)/2`                        |
//! | `E`       | `ECapT` plus the whole trailing block                  | `ECapT + (n1-r)(n2-r)`            |
//! | `EPerp`   | `[A B C; -Bᵀ 0 0; D 0 0]`, `A` skew                     | `r(r-1)/2 + r(n1+n2-p-r)`         |
//!
//! The `E` basis is ordered so that its first `s` elements span `ECapT` and
//! its first `l` elements span `SuffSp`; rank tests on prefixes of `Ψ` rely
//! on this nesting.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numkernel::{
    complete_orthonormal, min_sym_eigenvalue, singular_values, svd_full_raw, svd_thin, DenseMat,
    DEFAULT_RANK_TOL,
};

/// Tolerance for counting a singular value of a subgradient as equal to one.
pub const DEFAULT_P_TOL: f64 = 1e-6;

/// Tolerance for the subgradient test used when building a simultaneous SVD.
pub const DEFAULT_SUBGRAD_TOL: f64 = 1e-6;

/// Which subspace a [`SubspaceBasis`] spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisLabel {
    T0,
    T0Perp,
    E,
    ECapT,
    EPerp,
    UsrV,
    SuffSp,
    /// Kernel of a measurement operator.
    KerPhi,
    /// Generic span from [`crate::numkernel::orthonormalize`].
    Span,
}

/// Prefix lengths of an ordered `E` basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ENesting {
    /// Elements `[0, s)` span `E ∩ T`.
    pub s: usize,
    /// Elements `[0, l)` span the symmetric leading `p×p` block.
    pub l: usize,
}

/// An ordered orthonormal list of `n1 × n2` matrices.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    shape: (usize, usize),
    elems: Vec<DenseMat>,
    label: BasisLabel,
    nesting: Option<ENesting>,
}

impl SubspaceBasis {
    pub fn new(shape: (usize, usize), elems: Vec<DenseMat>, label: BasisLabel) -> Self {
        Self {
            shape,
            elems,
            label,
            nesting: None,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.elems.len()
    }

    pub fn elems(&self) -> &[DenseMat] {
        &self.elems
    }

    pub fn label(&self) -> BasisLabel {
        self.label
    }

    pub fn nesting(&self) -> Option<ENesting> {
        self.nesting
    }

    /// `(n1·n2) × dim` matrix whose columns are the vectorized elements.
    pub fn as_columns(&self) -> DMatrix<f64> {
        let n = self.shape.0 * self.shape.1;
        let mut out = DMatrix::zeros(n, self.elems.len());
        for (k, e) in self.elems.iter().enumerate() {
            out.column_mut(k).copy_from_slice(e.as_slice());
        }
        out
    }

    /// Orthogonal projection onto the span.
    pub fn project(&self, w: &DenseMat) -> DenseMat {
        let mut out = DMatrix::zeros(self.shape.0, self.shape.1);
        for e in &self.elems {
            out += e.as_matrix() * e.inner(w);
        }
        DenseMat::wrap(out)
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let c = self.as_columns();
        let g = c.transpose() * &c;
        (g - DMatrix::identity(self.dim(), self.dim())).amax()
    }

    /// Sub-basis made of the first `k` elements.
    pub fn prefix(&self, k: usize, label: BasisLabel) -> SubspaceBasis {
        SubspaceBasis::new(self.shape, self.elems[..k].to_vec(), label)
    }
}

/// Compact SVD `X = U_I · diag(σ) · V_Iᵀ`, with orthonormal complements kept
/// for the block formulas.
#[derive(Clone, Debug)]
pub struct CompactSvd {
    pub u_i: DMatrix<f64>,
    pub sigma_r: Vec<f64>,
    pub v_i: DMatrix<f64>,
    pub r: usize,
    u_j: DMatrix<f64>,
    v_k: DMatrix<f64>,
}

impl CompactSvd {
    pub fn shape(&self) -> (usize, usize) {
        (self.u_i.nrows(), self.v_i.nrows())
    }

    /// Orthonormal complement of `U_I`, `n1 × (n1 - r)`.
    pub fn u_j(&self) -> &DMatrix<f64> {
        &self.u_j
    }

    /// Orthonormal complement of `V_I`, `n2 × (n2 - r)`.
    pub fn v_k(&self) -> &DMatrix<f64> {
        &self.v_k
    }

    /// `E₀ = U_I V_Iᵀ`.
    pub fn e0(&self) -> DenseMat {
        DenseMat::wrap(&self.u_i * self.v_i.transpose())
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.sigma_r));
        &self.u_i * s * self.v_i.transpose()
    }

    fn u_full(&self) -> DMatrix<f64> {
        hcat(&self.u_i, &self.u_j)
    }

    fn v_full(&self) -> DMatrix<f64> {
        hcat(&self.v_i, &self.v_k)
    }
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Compact SVD with the default rank tolerance.
pub fn compact_svd(x: &DenseMat) -> Result<CompactSvd> {
    compact_svd_tol(x, DEFAULT_RANK_TOL)
}

pub fn compact_svd_tol(x: &DenseMat, tol_rel: f64) -> Result<CompactSvd> {
    let full = svd_full_raw(x.as_matrix())?;
    let r = crate::numkernel::count_above(&full.sigma, tol_rel);
    if r == 0 {
        return Err(Error::Degenerate("zero matrix has no compact SVD".into()));
    }
    let (n1, n2) = x.shape();
    Ok(CompactSvd {
        u_i: full.u.columns(0, r).into_owned(),
        sigma_r: full.sigma[..r].to_vec(),
        v_i: full.v.columns(0, r).into_owned(),
        r,
        u_j: full.u.columns(r, n1 - r).into_owned(),
        v_k: full.v.columns(r, n2 - r).into_owned(),
    })
}

/// `Y ∈ ∂‖X‖_*` up to `tol`: `‖Y‖ ≤ 1 + tol` and `⟨Y, X⟩ = ‖X‖_*`.
pub fn in_subdifferential(x: &DenseMat, y: &DenseMat, tol: f64) -> bool {
    if x.shape() != y.shape() {
        return false;
    }
    let nuc = x.nuclear_norm();
    y.spectral_norm() <= 1.0 + tol && (y.inner(x) - nuc).abs() <= tol * (1.0 + nuc)
}

/// Number of singular values of `y` that equal one up to `tol_p`.
pub fn p_count(y: &DenseMat, tol_p: f64) -> usize {
    singular_values(y.as_matrix())
        .iter()
        .filter(|&&s| s >= 1.0 - tol_p)
        .count()
}

/// A pair `(Ū, V̄)` diagonalizing `X₀` and a subgradient `Y₀` at once.
#[derive(Clone, Debug)]
pub struct SimulSvd {
    pub u_bar: DMatrix<f64>,
    pub v_bar: DMatrix<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub r: usize,
    pub p: usize,
}

impl SimulSvd {
    pub fn shape(&self) -> (usize, usize) {
        (self.u_bar.nrows(), self.v_bar.nrows())
    }

    fn diag(&self, sigma: &[f64]) -> DMatrix<f64> {
        let (n1, n2) = self.shape();
        let mut d = DMatrix::zeros(n1, n2);
        for (i, s) in sigma.iter().enumerate() {
            d[(i, i)] = *s;
        }
        &self.u_bar * d * self.v_bar.transpose()
    }

    pub fn reconstruct_x(&self) -> DMatrix<f64> {
        self.diag(&self.sigma_x)
    }

    pub fn reconstruct_y(&self) -> DMatrix<f64> {
        self.diag(&self.sigma_y)
    }

    /// `E₀ = Ū_I V̄_Iᵀ`.
    pub fn e0(&self) -> DenseMat {
        let r = self.r;
        DenseMat::wrap(self.u_bar.columns(0, r) * self.v_bar.columns(0, r).transpose())
    }
}

/// Tolerances used when building a [`SimulSvd`].
#[derive(Clone, Copy, Debug)]
pub struct SsvdOptions {
    pub subgrad_tol: f64,
    pub p_tol: f64,
    pub rank_tol: f64,
}

impl Default for SsvdOptions {
    fn default() -> Self {
        Self {
            subgrad_tol: DEFAULT_SUBGRAD_TOL,
            p_tol: DEFAULT_P_TOL,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// Simultaneous ordered SVD of `(X₀, Y₀)` with default tolerances.
pub fn simultaneous_svd(x0: &DenseMat, y0: &DenseMat) -> Result<SimulSvd> {
    simultaneous_svd_with(x0, y0, &SsvdOptions::default())
}

/// Takes `(U, V)` from an SVD of `X₀`, diagonalizes the trailing block
/// `W̄ = U_Jᵀ Y₀ V_K = Û Σ V̂ᵀ`, and returns `Ū = (U_I, U_J Û)`,
/// `V̄ = (V_I, V_K V̂)`.
pub fn simultaneous_svd_with(x0: &DenseMat, y0: &DenseMat, opts: &SsvdOptions) -> Result<SimulSvd> {
    if x0.shape() != y0.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x0.shape(), y0.shape())));
    }
    if !in_subdifferential(x0, y0, opts.subgrad_tol) {
        return Err(Error::Contract(
            "Y0 is not a subgradient of the nuclear norm at X0".into(),
        ));
    }
    let csvd = compact_svd_tol(x0, opts.rank_tol)?;
    Ok(simultaneous_from_compact(&csvd, y0, opts.p_tol))
}

pub(crate) fn simultaneous_from_compact(csvd: &CompactSvd, y0: &DenseMat, p_tol: f64) -> SimulSvd {
    let (n1, n2) = csvd.shape();
    let r = csvd.r;
    let k = n1.min(n2);
    let wbar = csvd.u_j.transpose() * y0.as_matrix() * &csvd.v_k;
    let (u_hat, v_hat, sig_w) = if wbar.is_empty() {
        (
            DMatrix::zeros(n1 - r, n1 - r),
            DMatrix::zeros(n2 - r, n2 - r),
            Vec::new(),
        )
    } else {
        // svd_full_raw cannot fail on a finite matrix of this size except by
        // iteration cap, in which case fall back to the thin route.
        match svd_full_raw(&wbar) {
            Ok(s) => (s.u, s.v, s.sigma),
            Err(_) => {
                let (u, s, v) = svd_thin(&wbar).expect("SVD of trailing block");
                (complete_orthonormal(&u), complete_orthonormal(&v), s)
            }
        }
    };
    let u_bar = hcat(&csvd.u_i, &(&csvd.u_j * u_hat));
    let v_bar = hcat(&csvd.v_i, &(&csvd.v_k * v_hat));

    let mut sigma_x = csvd.sigma_r.clone();
    sigma_x.resize(k, 0.0);
    let mut sigma_y = vec![1.0; r];
    sigma_y.extend_from_slice(&sig_w);
    sigma_y.resize(k, 0.0);
    let p = r + sig_w.iter().filter(|&&s| s >= 1.0 - p_tol).count();
    SimulSvd {
        u_bar,
        v_bar,
        sigma_x,
        sigma_y,
        r,
        p,
    }
}

/// Projection onto the model tangent space `𝕋₀`.
pub fn proj_t(w: &DenseMat, csvd: &CompactSvd) -> DenseMat {
    DenseMat::wrap(w.as_matrix() - proj_tperp_raw(w.as_matrix(), csvd))
}

/// Projection onto `𝕋₀⊥`: `U_J U_Jᵀ W V_K V_Kᵀ`.
pub fn proj_tperp(w: &DenseMat, csvd: &CompactSvd) -> DenseMat {
    DenseMat::wrap(proj_tperp_raw(w.as_matrix(), csvd))
}

pub(crate) fn proj_tperp_raw(w: &DMatrix<f64>, csvd: &CompactSvd) -> DMatrix<f64> {
    let core = csvd.u_j.transpose() * w * &csvd.v_k;
    &csvd.u_j * core * csvd.v_k.transpose()
}

/// `Σ c · u_i v_jᵀ` over the listed `(i, j, c)`.
fn frame_elem(u: &DMatrix<f64>, v: &DMatrix<f64>, entries: &[(usize, usize, f64)]) -> DenseMat {
    let mut out = DMatrix::zeros(u.nrows(), v.nrows());
    for &(i, j, c) in entries {
        out += (u.column(i) * c) * v.column(j).transpose();
    }
    DenseMat::wrap(out)
}

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn sym(u: &DMatrix<f64>, v: &DMatrix<f64>, i: usize, j: usize) -> DenseMat {
    if i == j {
        frame_elem(u, v, &[(i, i, 1.0)])
    } else {
        frame_elem(u, v, &[(i, j, H), (j, i, H)])
    }
}

fn skew(u: &DMatrix<f64>, v: &DMatrix<f64>, i: usize, j: usize) -> DenseMat {
    frame_elem(u, v, &[(i, j, H), (j, i, -H)])
}

/// Basis `{u_i v_jᵀ : i < r or j < r}` of `𝕋₀`.
pub fn basis_t0(csvd: &CompactSvd) -> SubspaceBasis {
    let (n1, n2) = csvd.shape();
    let (u, v) = (csvd.u_full(), csvd.v_full());
    let r = csvd.r;
    let mut elems = Vec::with_capacity(r * (n1 + n2 - r));
    for j in 0..n2 {
        for i in 0..n1 {
            if i < r || j < r {
                elems.push(frame_elem(&u, &v, &[(i, j, 1.0)]));
            }
        }
    }
    SubspaceBasis::new((n1, n2), elems, BasisLabel::T0)
}

/// Basis `{u_i v_jᵀ : i ≥ r and j ≥ r}` of `𝕋₀⊥`.
pub fn basis_t0perp(csvd: &CompactSvd) -> SubspaceBasis {
    let (n1, n2) = csvd.shape();
    let (u, v) = (csvd.u_full(), csvd.v_full());
    let r = csvd.r;
    let mut elems = Vec::with_capacity((n1 - r) * (n2 - r));
    for j in r..n2 {
        for i in r..n1 {
            elems.push(frame_elem(&u, &v, &[(i, j, 1.0)]));
        }
    }
    SubspaceBasis::new((n1, n2), elems, BasisLabel::T0Perp)
}

/// Ordered basis of `ℰ`; see the module docs for the nesting.
pub fn basis_e(ssvd: &SimulSvd) -> SubspaceBasis {
    let (n1, n2) = ssvd.shape();
    let (u, v) = (&ssvd.u_bar, &ssvd.v_bar);
    let (r, p) = (ssvd.r, ssvd.p);
    let mut elems = Vec::new();
    for i in 0..r {
        for j in i..r {
            elems.push(sym(u, v, i, j));
        }
    }
    for i in 0..r {
        for j in r..p {
            elems.push(sym(u, v, i, j));
        }
    }
    let s = elems.len();
    for i in r..p {
        for j in i..p {
            elems.push(sym(u, v, i, j));
        }
    }
    let l = elems.len();
    for i in r..p {
        for j in i + 1..p {
            elems.push(skew(u, v, i, j));
        }
    }
    for j in r..n2 {
        for i in r..n1 {
            if !(i < p && j < p) {
                elems.push(frame_elem(u, v, &[(i, j, 1.0)]));
            }
        }
    }
    let mut b = SubspaceBasis::new((n1, n2), elems, BasisLabel::E);
    b.nesting = Some(ENesting { s, l });
    b
}

/// Basis of `ℰ ∩ 𝕋`: `Ū [A B 0; Bᵀ 0 0; 0 0 0] V̄ᵀ` with `A` symmetric.
pub fn basis_ecapt(ssvd: &SimulSvd) -> SubspaceBasis {
    let e = basis_e(ssvd);
    let s = e.nesting.expect("E basis carries nesting").s;
    e.prefix(s, BasisLabel::ECapT)
}

/// Basis of the symmetric leading `p×p` block `Ū (𝕊ᵖ 0; 0 0) V̄ᵀ`.
pub fn basis_suffsp(ssvd: &SimulSvd) -> SubspaceBasis {
    let e = basis_e(ssvd);
    let l = e.nesting.expect("E basis carries nesting").l;
    e.prefix(l, BasisLabel::SuffSp)
}

/// Basis of `ℰ⊥ = Ū [A B C; -Bᵀ 0 0; D 0 0] V̄ᵀ` with `A` skew-symmetric.
pub fn basis_eperp(ssvd: &SimulSvd) -> SubspaceBasis {
    let (n1, n2) = ssvd.shape();
    let (u, v) = (&ssvd.u_bar, &ssvd.v_bar);
    let (r, p) = (ssvd.r, ssvd.p);
    let mut elems = Vec::new();
    for i in 0..r {
        for j in i + 1..r {
            elems.push(skew(u, v, i, j));
        }
    }
    for i in 0..r {
        for j in r..p {
            elems.push(skew(u, v, i, j));
        }
    }
    for i in 0..r {
        for j in p..n2 {
            elems.push(frame_elem(u, v, &[(i, j, 1.0)]));
        }
    }
    for j in 0..r {
        for i in p..n1 {
            elems.push(frame_elem(u, v, &[(i, j, 1.0)]));
        }
    }
    SubspaceBasis::new((n1, n2), elems, BasisLabel::EPerp)
}

/// Basis of `U₀ 𝕊ʳ V₀ᵀ`.
pub fn basis_usrv(csvd: &CompactSvd) -> SubspaceBasis {
    let r = csvd.r;
    let mut elems = Vec::with_capacity(r * (r + 1) / 2);
    for i in 0..r {
        for j in i..r {
            elems.push(sym(&csvd.u_i, &csvd.v_i, i, j));
        }
    }
    SubspaceBasis::new(csvd.shape(), elems, BasisLabel::UsrV)
}

/// Default tolerance for cone membership tests: `1e-8 · (1 + ‖W‖_F)`.
pub fn cone_tol(w: &DenseMat) -> f64 {
    1e-8 * (1.0 + w.fro_norm())
}

/// Membership in the tangent cone `T_{N_B(Y₀)}(X₀)`: in the `(Ū, V̄)` frame,
/// `W` must vanish outside the leading `p×p` block, which must be symmetric
/// with a positive semidefinite trailing `(p-r)×(p-r)` corner.
pub fn tangent_cone_member(w: &DenseMat, ssvd: &SimulSvd, tol: f64) -> bool {
    if w.shape() != ssvd.shape() {
        return false;
    }
    let m = ssvd.u_bar.transpose() * w.as_matrix() * &ssvd.v_bar;
    let (r, p) = (ssvd.r, ssvd.p);
    let mut outside = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i >= p || j >= p {
                outside = outside.max(m[(i, j)].abs());
            }
        }
    }
    if outside > tol {
        return false;
    }
    let lead = m.view((0, 0), (p, p)).into_owned();
    if (&lead - lead.transpose()).amax() > tol {
        return false;
    }
    let corner = lead.view((r, r), (p - r, p - r)).into_owned();
    min_sym_eigenvalue(&corner) >= -tol
}

/// Membership in the critical cone: `P_{𝕋⊥} W ∈ Ū_H 𝕊₊ V̄_Hᵀ` with `H = r..p`.
pub fn critical_cone_member(w: &DenseMat, ssvd: &SimulSvd, csvd: &CompactSvd, tol: f64) -> bool {
    if w.shape() != ssvd.shape() {
        return false;
    }
    let pt = proj_tperp_raw(w.as_matrix(), csvd);
    let (r, p) = (ssvd.r, ssvd.p);
    let uh = ssvd.u_bar.columns(r, p - r);
    let vh = ssvd.v_bar.columns(r, p - r);
    let c = uh.transpose() * &pt * vh;
    let resid = &pt - uh * &c * vh.transpose();
    if resid.norm() > tol {
        return false;
    }
    (&c - c.transpose()).amax() <= tol && min_sym_eigenvalue(&c) >= -tol
}
