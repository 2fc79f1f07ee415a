//! Certificates and coefficients for a problem instance, the sharp / strong
//! classification, and sampling oracles for tiny instances.
//!
//! All source-type problems are posed on the trailing block: a matrix in
//! `𝕋₀⊥` is `Z = U_J D V_Kᵀ` with `vec Z = (V_K ⊗ U_J) vec D`, so the
//! constraint `N vec Z = -N vec E₀` becomes `C vec D = d` with
//! `C = N (V_K ⊗ U_J)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cvxsolvers::{
    solve_nuclear_affine, solve_spectral_affine, AffineConstraint, SolveResult, SolverConfig,
};
use crate::error::{Error, Result};
use crate::measure_ops::{build_m, build_psi, kernel_columns, LinOp};
use crate::numkernel::{
    count_above, kron, min_sym_eigenvalue, pinv_raw, rank_raw, singular_values, spectral_norm,
    svd_thin, DenseMat, Rng, DEFAULT_RANK_TOL,
};
use crate::subspaces::{
    basis_e, basis_eperp, basis_t0, basis_usrv, compact_svd_tol, in_subdifferential,
    proj_tperp_raw, simultaneous_from_compact, CompactSvd, SimulSvd,
};

/// `(Φ, M₀, X₀)`, optionally with a regularization weight.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub op: LinOp,
    pub x0: DenseMat,
    pub m0: Vec<f64>,
    pub mu: Option<f64>,
}

impl ProblemInstance {
    /// Instance with `M₀ = Φ(X₀)`.
    pub fn new(op: LinOp, x0: DenseMat) -> Result<Self> {
        let m0 = op.apply(&x0)?.as_slice().to_vec();
        Ok(Self { op, x0, m0, mu: None })
    }

    /// Instance with explicit data, checked against `Φ(X₀)`.
    pub fn with_data(op: LinOp, x0: DenseMat, m0: Vec<f64>, mu: Option<f64>) -> Result<Self> {
        let image = op.apply(&x0)?;
        if m0.len() != image.len() {
            return Err(Error::Shape(format!("M0 has {} entries, expected {}", m0.len(), image.len())));
        }
        let m = DVector::from_column_slice(&m0);
        if (&image - &m).norm() > 1e-10 * (1.0 + m.norm()) {
            return Err(Error::Contract("M0 differs from Φ(X0)".into()));
        }
        Ok(Self { op, x0, m0, mu })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::Config("instance must be an object".into()))?;
        let field = |k: &str| obj.get(k).ok_or_else(|| Error::Config(format!("missing field {k:?}")));
        let op = LinOp::from_json(field("operator")?)?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(field("x0")?.clone())?;
        let x0 = DenseMat::from_rows(&rows)?;
        let mu: Option<f64> = match obj.get("mu") {
            Some(Value::Null) | None => None,
            Some(m) => Some(serde_json::from_value(m.clone())?),
        };
        match obj.get("m0") {
            Some(m) => {
                let m0: Vec<f64> = serde_json::from_value(m.clone())?;
                Self::with_data(op, x0, m0, mu)
            }
            None => Ok(Self { mu, ..Self::new(op, x0)? }),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "operator": self.op.to_json(),
            "x0": self.x0.to_rows(),
            "m0": self.m0,
            "mu": self.mu,
        })
    }
}

/// Decision thresholds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Thresholds {
    /// `‖X_opt - X₀‖_F / ‖X₀‖_F` below this counts as recovered.
    pub recovery: f64,
    pub sharp_tau: f64,
    pub sharp_rho: f64,
    pub strong_zeta: f64,
    /// Experiment rule: strong cases are only considered with `τ` above this ...
    pub band_tau: f64,
    /// ... and `ρ` strictly inside `(band_rho_lo, band_rho_hi)`.
    pub band_rho_lo: f64,
    pub band_rho_hi: f64,
    /// Singular values of `Y₀` within this of one count towards `p`.
    pub p_tol: f64,
    /// Tolerance of the subgradient test applied to `Y₀`.
    pub subgrad_tol: f64,
    /// Relative rank tolerance for the injectivity tests.
    pub rank_tol: f64,
    /// `geometric_check` requires `ζ < 1 - margin`.
    pub margin: f64,
    /// `γ` is absent when the restricted Gram matrix has an eigenvalue below this.
    pub gamma_band: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            recovery: 1e-3,
            sharp_tau: 0.99,
            sharp_rho: 0.95,
            strong_zeta: 0.95,
            band_tau: 0.99,
            band_rho_lo: 0.95,
            band_rho_hi: 1.05,
            p_tol: 1e-6,
            subgrad_tol: 1e-6,
            rank_tol: 1e-8,
            margin: 1e-3,
            gamma_band: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Sharp,
    StrongNotSharp,
    UniqueUnknown,
    NotRecovered,
    Inconclusive,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Sharp => "sharp",
            Label::StrongNotSharp => "strong_not_sharp",
            Label::UniqueUnknown => "unique_unknown",
            Label::NotRecovered => "not_recovered",
            Label::Inconclusive => "inconclusive",
        }
    }

    /// Sharp minima are strong.
    pub fn is_strong(self) -> bool {
        matches!(self, Label::Sharp | Label::StrongNotSharp)
    }
}

/// Which strong-minimum rule decides [`CertifyReport::label`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyMode {
    /// `strong_ri ∧ ζ < 0.95`.
    #[default]
    Certify,
    /// Additionally `τ > 0.99` (absent `τ` counts as `+∞`) and `0.95 < ρ < 1.05`.
    Experiment,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub thresholds: Thresholds,
    pub mode: ClassifyMode,
    #[serde(skip)]
    pub solver: SolverConfig,
    /// Solver settings for the `ρ` and `ζ` problems.
    #[serde(skip)]
    pub coeff_solver: SolverConfig,
    /// Retry the strong test with the blended certificates `Y₀ + θ(E₀ - Y₀)`.
    pub retry: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            mode: ClassifyMode::Certify,
            solver: SolverConfig::default(),
            coeff_solver: SolverConfig::default(),
            retry: false,
        }
    }
}

/// Outcome of the blended-certificate retry. Experimental: never changes the label.
#[derive(Clone, Debug, Serialize)]
pub struct RetryOutcome {
    pub theta: f64,
    pub p: usize,
    pub strong_ri: bool,
    pub zeta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverDiagnostics {
    pub objective: f64,
    pub relative_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub duality_gap: f64,
    /// Iterations spent in the `ρ` and `ζ` problems.
    pub coeff_iterations: usize,
    pub coeff_converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifyReport {
    pub recovered: bool,
    pub ri: bool,
    pub strict_ri: bool,
    pub strong_ri: bool,
    pub ssc: bool,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub zeta: Option<f64>,
    pub gamma: Option<f64>,
    pub ic: Option<f64>,
    pub p_of_y0: Option<usize>,
    pub rank: usize,
    pub sharp: bool,
    /// `strong_ri ∧ ζ < 0.95` on a recovered instance.
    pub strong_certified: bool,
    /// The certified rule restricted to the experiment band.
    pub strong_experiment: bool,
    pub geometric_check: bool,
    pub label: Label,
    pub label_certify: Label,
    pub label_experiment: Label,
    pub mode: ClassifyMode,
    #[serde(serialize_with = "ser_opt_mat")]
    pub dual_certificate: Option<DenseMat>,
    pub solver: SolverDiagnostics,
    pub thresholds: Thresholds,
    pub retry: Option<RetryOutcome>,
    pub notes: Vec<String>,
}

fn ser_opt_mat<S: serde::Serializer>(m: &Option<DenseMat>, s: S) -> std::result::Result<S::Ok, S::Error> {
    m.as_ref().map(DenseMat::to_rows).serialize(s)
}

impl CertifyReport {
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Geometry of one instance, computed once and shared by every coefficient.
pub(crate) struct Prepared<'a> {
    inst: &'a ProblemInstance,
    pub(crate) csvd: CompactSvd,
    e0: DenseMat,
    phi: DMatrix<f64>,
    ann: DMatrix<f64>,
    /// `V_K ⊗ U_J`: trailing-block coordinates to `vec`.
    tperp_embed: DMatrix<f64>,
    rank_tol: f64,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(inst: &'a ProblemInstance, th: &Thresholds) -> Result<Self> {
        let csvd = compact_svd_tol(&inst.x0, DEFAULT_RANK_TOL)?;
        let e0 = csvd.e0();
        let phi = inst.op.to_dense();
        let ann = kernel_columns(&inst.op)?.transpose();
        let tperp_embed = kron(csvd.v_k(), csvd.u_j());
        Ok(Self { inst, csvd, e0, phi, ann, tperp_embed, rank_tol: th.rank_tol })
    }

    fn shape(&self) -> (usize, usize) {
        self.inst.x0.shape()
    }

    fn block_shape(&self) -> (usize, usize) {
        let (n1, n2) = self.shape();
        (n1 - self.csvd.r, n2 - self.csvd.r)
    }

    fn full_rank(&self, a: &DMatrix<f64>) -> bool {
        a.ncols() == 0 || (a.nrows() >= a.ncols() && rank_raw(a, self.rank_tol) == a.ncols())
    }

    fn image_of(&self, cols: &DMatrix<f64>) -> DMatrix<f64> {
        &self.phi * cols
    }

    pub(crate) fn ri(&self) -> bool {
        self.full_rank(&self.image_of(&basis_t0(&self.csvd).as_columns()))
    }

    pub(crate) fn strict_ri(&self) -> bool {
        self.full_rank(&self.image_of(&basis_usrv(&self.csvd).as_columns()))
    }

    fn rho_constraint(&self) -> AffineConstraint {
        let c = &self.ann * &self.tperp_embed;
        let d = -(&self.ann * DVector::from_column_slice(self.e0.as_slice()));
        AffineConstraint { c, d }
    }

    fn block_of(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        self.csvd.u_j().transpose() * z * self.csvd.v_k()
    }

    fn embed(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        self.csvd.u_j() * d * self.csvd.v_k().transpose()
    }

    /// Minimum-Frobenius feasible block; `None` when the system is inconsistent.
    fn tau_point(&self) -> Result<Option<DMatrix<f64>>> {
        let con = self.rho_constraint();
        let (a, b) = self.block_shape();
        if con.c.nrows() == 0 || a * b == 0 {
            return Ok(Some(DMatrix::zeros(a, b)));
        }
        let sol = pinv_raw(&con.c, DEFAULT_RANK_TOL)? * &con.d;
        let resid = (&con.c * &sol - &con.d).norm();
        if resid > crate::cvxsolvers::CONSISTENCY_TOL * (1.0 + con.d.norm()) {
            return Ok(None);
        }
        Ok(Some(DMatrix::from_column_slice(a, b, sol.as_slice())))
    }

    pub(crate) fn tau(&self) -> Result<Option<f64>> {
        if !self.ri() {
            return Ok(None);
        }
        Ok(self.tau_point()?.map(|d| spectral_norm(&d)))
    }

    /// `Y = Φ* Φ_T (Φ_T* Φ_T)⁻¹ E₀`; `None` without restricted injectivity.
    fn ic_certificate(&self) -> Result<Option<DMatrix<f64>>> {
        if !self.ri() {
            return Ok(None);
        }
        let bt = basis_t0(&self.csvd).as_columns();
        let a = self.image_of(&bt);
        let rhs = bt.transpose() * DVector::from_column_slice(self.e0.as_slice());
        let gram = a.transpose() * &a;
        let coef = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => pinv_raw(&gram, DEFAULT_RANK_TOL)? * rhs,
        };
        let y = self.phi.transpose() * (&a * coef);
        let (n1, n2) = self.shape();
        Ok(Some(DMatrix::from_column_slice(n1, n2, y.as_slice())))
    }

    pub(crate) fn ic(&self) -> Result<Option<f64>> {
        Ok(self
            .ic_certificate()?
            .map(|y| spectral_norm(&proj_tperp_raw(&y, &self.csvd))))
    }

    /// `ρ` with its minimizing block `D₀`, or `None` when no `Z ∈ 𝕋₀⊥` makes
    /// `E₀ + Z` orthogonal to `Ker Φ`.
    pub(crate) fn rho(&self, cfg: &SolverConfig) -> Result<Option<(f64, DMatrix<f64>, SolveResult)>> {
        let Some(tau_pt) = self.tau_point()? else {
            return Ok(None);
        };
        let mut cands = vec![tau_pt];
        if let Some(y) = self.ic_certificate()? {
            cands.push(self.block_of(&y));
        }
        let con = self.rho_constraint();
        let res = match solve_spectral_affine(self.block_shape(), &con, None, cfg, &cands) {
            Ok(r) => r,
            Err(Error::Infeasible { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        Ok(Some((res.objective, res.x_opt.as_matrix().clone(), res)))
    }

    pub(crate) fn simul(&self, y0: &DenseMat, th: &Thresholds) -> Option<SimulSvd> {
        if !in_subdifferential(&self.inst.x0, y0, th.subgrad_tol) {
            return None;
        }
        Some(simultaneous_from_compact(&self.csvd, y0, th.p_tol))
    }

    fn psi(&self, ssvd: &SimulSvd) -> Result<(DMatrix<f64>, usize, usize)> {
        let e = basis_e(ssvd);
        let nest = e.nesting().expect("nested basis");
        Ok((build_psi(&self.inst.op, &e)?, nest.s, nest.l))
    }

    pub(crate) fn strong_ri(&self, ssvd: &SimulSvd) -> Result<bool> {
        let (psi, s, _) = self.psi(ssvd)?;
        Ok(self.full_rank(&psi.columns(0, s).into_owned()))
    }

    pub(crate) fn ssc(&self, ssvd: &SimulSvd) -> Result<bool> {
        let (psi, _, l) = self.psi(ssvd)?;
        Ok(self.full_rank(&psi.columns(0, l).into_owned()))
    }

    /// `γ` and its minimizing block; `None` when the restricted Gram matrix is
    /// singular or within `gamma_band` of singular.
    pub(crate) fn gamma(&self, ssvd: &SimulSvd, th: &Thresholds) -> Result<Option<(f64, DMatrix<f64>)>> {
        let m = build_m(&self.inst.op, &basis_e(ssvd))?;
        let (a, b) = self.block_shape();
        if m.dim() == 0 {
            return Ok(Some((0.0, DMatrix::zeros(a, b))));
        }
        let k = m.adjoint_columns();
        let (n1, n2) = self.shape();
        let ptk = DMatrix::from_columns(
            &k.column_iter()
                .map(|c| {
                    let w = DMatrix::from_column_slice(n1, n2, c.as_slice());
                    DVector::from_column_slice(proj_tperp_raw(&w, &self.csvd).as_slice())
                })
                .collect::<Vec<_>>(),
        );
        let gram = k.transpose() * &ptk;
        let gram = (&gram + gram.transpose()) * 0.5;
        if min_sym_eigenvalue(&gram) < th.gamma_band {
            return Ok(None);
        }
        let rhs = k.transpose() * DVector::from_column_slice(self.e0.as_slice());
        let coef = gram.cholesky().ok_or_else(|| Error::Numerical("γ Gram matrix".into()))?.solve(&rhs);
        let zhat = &ptk * coef;
        let zhat = DMatrix::from_column_slice(n1, n2, zhat.as_slice());
        // The feasible point for the ζ problem is -Ẑ.
        Ok(Some((spectral_norm(&zhat), -self.block_of(&zhat))))
    }

    /// `ζ`: the `ρ` problem relaxed by a free `W ∈ ℰ⊥`.
    pub(crate) fn zeta(
        &self,
        ssvd: &SimulSvd,
        cfg: &SolverConfig,
        candidates: &[DMatrix<f64>],
    ) -> Result<Option<(f64, SolveResult)>> {
        let eperp = basis_eperp(ssvd).as_columns();
        let slack = &self.ann * eperp;
        let con = self.rho_constraint();
        match solve_spectral_affine(self.block_shape(), &con, Some(&slack), cfg, candidates) {
            Ok(r) => Ok(Some((r.objective, r))),
            Err(Error::Infeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn certificate(&self, d0: &DMatrix<f64>) -> DenseMat {
        DenseMat::wrap(self.e0.as_matrix() + self.embed(d0))
    }
}

/// Injectivity of `Φ` on the model tangent space `𝕋₀`.
pub fn restricted_injectivity(inst: &ProblemInstance) -> Result<bool> {
    Ok(Prepared::new(inst, &Thresholds::default())?.ri())
}

/// Injectivity of `Φ` on `U₀ 𝕊ʳ V₀ᵀ`.
pub fn strict_restricted_injectivity(inst: &ProblemInstance) -> Result<bool> {
    Ok(Prepared::new(inst, &Thresholds::default())?.strict_ri())
}

/// Injectivity of `Φ` on `ℰ ∩ 𝕋` (rank of the first `s` columns of `Ψ`).
pub fn strong_restricted_injectivity(inst: &ProblemInstance, ssvd: &SimulSvd) -> Result<bool> {
    Prepared::new(inst, &Thresholds::default())?.strong_ri(ssvd)
}

/// Injectivity of `Φ` on the symmetric leading `p×p` block (first `l` columns of `Ψ`).
pub fn strong_sufficient_condition(inst: &ProblemInstance, ssvd: &SimulSvd) -> Result<bool> {
    Prepared::new(inst, &Thresholds::default())?.ssc(ssvd)
}

/// Spectral norm of the minimum-Frobenius `Z ∈ 𝕋₀⊥` with `E₀ + Z ∈ Im Φ*`;
/// `None` without restricted injectivity.
pub fn coeff_tau(inst: &ProblemInstance) -> Result<Option<f64>> {
    Prepared::new(inst, &Thresholds::default())?.tau()
}

/// Irrepresentability coefficient `‖P_{𝕋⊥} Φ* Φ_𝕋 (Φ_𝕋* Φ_𝕋)⁻¹ E₀‖`.
pub fn coeff_ic(inst: &ProblemInstance) -> Result<Option<f64>> {
    Prepared::new(inst, &Thresholds::default())?.ic()
}

/// `ρ = min ‖Z‖` over `Z ∈ 𝕋₀⊥` with `E₀ + Z ∈ Im Φ*`, and the certificate `Y₀ = E₀ + Z₀`.
pub fn coeff_rho(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Option<(f64, DenseMat)>> {
    let prep = Prepared::new(inst, &Thresholds::default())?;
    Ok(prep.rho(cfg)?.map(|(v, d, _)| (v, prep.certificate(&d))))
}

/// `ζ = min ‖Z‖` over `Z ∈ 𝕋₀⊥`, `W ∈ ℰ⊥` with `E₀ + Z + W ∈ Im Φ*`.
pub fn coeff_zeta(inst: &ProblemInstance, ssvd: &SimulSvd, cfg: &SolverConfig) -> Result<Option<f64>> {
    let prep = Prepared::new(inst, &Thresholds::default())?;
    Ok(prep.zeta(ssvd, cfg, &[])?.map(|(v, _)| v))
}

/// Closed-form upper bound on `ζ` through the operator `M`.
pub fn coeff_gamma(inst: &ProblemInstance, ssvd: &SimulSvd) -> Result<Option<f64>> {
    let th = Thresholds::default();
    let prep = Prepared::new(inst, &th)?;
    if !prep.strong_ri(ssvd)? {
        return Ok(None);
    }
    Ok(prep.gamma(ssvd, &th)?.map(|(g, _)| g))
}

/// `strong_ri ∧ ζ < 1 - margin`, which is equivalent to
/// `Ker Φ ∩ T_{N_B(Y₀)}(X₀) = {0}` for the certificate behind `ssvd`.
pub fn geometric_check(inst: &ProblemInstance, ssvd: &SimulSvd, cfg: &SolverConfig) -> Result<bool> {
    let th = Thresholds::default();
    let prep = Prepared::new(inst, &th)?;
    if !prep.strong_ri(ssvd)? {
        return Ok(false);
    }
    Ok(matches!(prep.zeta(ssvd, cfg, &[])?, Some((z, _)) if z < 1.0 - th.margin))
}

/// Full pipeline: solve, compute every coefficient, and label.
pub fn classify(inst: &ProblemInstance, opts: &ClassifyOptions) -> Result<CertifyReport> {
    let th = &opts.thresholds;
    let prep = Prepared::new(inst, th)?;
    let mut notes = Vec::new();

    let sol = solve_nuclear_affine(&inst.op, &inst.m0, &opts.solver)?;
    let rel_err = (sol.x_opt.as_matrix() - inst.x0.as_matrix()).norm() / inst.x0.fro_norm();
    let recovered = rel_err < th.recovery;
    if !sol.converged {
        notes.push(format!("nuclear-norm solver stopped after {} iterations", sol.iterations));
    }

    let ri = prep.ri();
    let strict_ri = prep.strict_ri();
    let tau = if ri { prep.tau()? } else { None };
    let ic = prep.ic()?;

    let mut coeff_iterations = 0;
    let mut coeff_converged = true;
    let rho_out = prep.rho(&opts.coeff_solver)?;
    if rho_out.is_none() {
        notes.push("no Z in the normal space makes E0 + Z a multiplier image".into());
    }
    let rho = rho_out.as_ref().map(|(v, _, _)| *v);
    let mut dual_certificate = None;
    let mut ssvd = None;
    if let Some((_, d0, res)) = &rho_out {
        coeff_iterations += res.iterations;
        coeff_converged &= res.converged;
        let y0 = prep.certificate(d0);
        ssvd = prep.simul(&y0, th);
        if ssvd.is_none() {
            notes.push("E0 + Z0 fails the subgradient test".into());
        }
        dual_certificate = Some(y0);
    }

    let mut strong_ri = false;
    let mut ssc = false;
    let mut zeta = None;
    let mut gamma = None;
    let mut p_of_y0 = None;
    if let (Some(s), Some((_, d0, _))) = (&ssvd, &rho_out) {
        p_of_y0 = Some(s.p);
        strong_ri = prep.strong_ri(s)?;
        ssc = prep.ssc(s)?;
        let mut cands = vec![d0.clone()];
        if strong_ri {
            if let Some((g, gd)) = prep.gamma(s, th)? {
                gamma = Some(g);
                cands.push(gd);
            }
        }
        if let Some((z, res)) = prep.zeta(s, &opts.coeff_solver, &cands)? {
            coeff_iterations += res.iterations;
            coeff_converged &= res.converged;
            zeta = Some(z);
        }
    }

    let sharp = recovered
        && ri
        && (tau.is_some_and(|t| t < th.sharp_tau) || rho.is_some_and(|r| r < th.sharp_rho));
    let strong_certified = recovered && strong_ri && zeta.is_some_and(|z| z < th.strong_zeta);
    let in_band = tau.unwrap_or(f64::INFINITY) > th.band_tau
        && rho.is_some_and(|r| th.band_rho_lo < r && r < th.band_rho_hi);
    let strong_experiment = strong_certified && in_band;
    let geometric = strong_ri && zeta.is_some_and(|z| z < 1.0 - th.margin);

    let label_for = |strong: bool| {
        if !sol.converged {
            Label::Inconclusive
        } else if !recovered {
            Label::NotRecovered
        } else if sharp {
            Label::Sharp
        } else if strong {
            Label::StrongNotSharp
        } else {
            Label::UniqueUnknown
        }
    };
    let label_certify = label_for(strong_certified);
    let label_experiment = label_for(strong_experiment);
    let label = match opts.mode {
        ClassifyMode::Certify => label_certify,
        ClassifyMode::Experiment => label_experiment,
    };

    let retry = match (&rho_out, opts.retry && recovered && !strong_certified) {
        (Some((_, d0, _)), true) => retry_blended(&prep, d0, th, &opts.coeff_solver)?,
        _ => None,
    };

    Ok(CertifyReport {
        recovered,
        ri,
        strict_ri,
        strong_ri,
        ssc,
        tau,
        rho,
        zeta,
        gamma,
        ic,
        p_of_y0,
        rank: prep.csvd.r,
        sharp,
        strong_certified,
        strong_experiment,
        geometric_check: geometric,
        label,
        label_certify,
        label_experiment,
        mode: opts.mode,
        dual_certificate,
        solver: SolverDiagnostics {
            objective: sol.objective,
            relative_error: rel_err,
            iterations: sol.iterations,
            converged: sol.converged,
            duality_gap: sol.dual_residual,
            coeff_iterations,
            coeff_converged,
        },
        thresholds: *th,
        retry,
        notes,
    })
}

fn retry_blended(
    prep: &Prepared,
    d0: &DMatrix<f64>,
    th: &Thresholds,
    cfg: &SolverConfig,
) -> Result<Option<RetryOutcome>> {
    for k in 1..=9 {
        let theta = k as f64 / 10.0;
        let y = prep.certificate(&(d0 * (1.0 - theta)));
        let Some(s) = prep.simul(&y, th) else { continue };
        if !prep.strong_ri(&s)? {
            continue;
        }
        if let Some((z, _)) = prep.zeta(&s, cfg, std::slice::from_ref(d0))? {
            if z < th.strong_zeta {
                return Ok(Some(RetryOutcome { theta, p: s.p, strong_ri: true, zeta: z }));
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleVerdict {
    Supports,
    Refutes,
    Inconclusive,
}

/// Settings for the growth oracles.
#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub n_dirs: usize,
    pub t_grid: Vec<f64>,
    /// Quadratic growth below this is not accepted as strong.
    pub c_min: f64,
    /// Random-search steps spent refining each of the best sampled directions.
    pub refine_steps: usize,
    /// First-order growth at `t_sharp` below this refutes sharpness.
    pub c_sharp: f64,
    pub t_sharp: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_dirs: 500,
            t_grid: vec![1e-3, 1e-2, 1e-1],
            c_min: 1e-6,
            refine_steps: 400,
            c_sharp: 1e-3,
            t_sharp: 1e-4,
        }
    }
}

/// Growth samples along unit directions of `Ker Φ` at a normalized `X₀`.
struct GrowthProbe {
    x0: DMatrix<f64>,
    base: f64,
    kernel: DMatrix<f64>,
}

impl GrowthProbe {
    fn new(inst: &ProblemInstance) -> Result<Self> {
        let x0 = inst.x0.as_matrix() / inst.x0.fro_norm();
        let base = singular_values(&x0).iter().sum();
        Ok(Self { x0, base, kernel: kernel_columns(&inst.op)? })
    }

    fn dim(&self) -> usize {
        self.kernel.ncols()
    }

    /// `(‖X₀ + tW‖_* - ‖X₀‖_*) / t^power` for `W = K c / ‖c‖`.
    fn growth(&self, c: &DVector<f64>, t: f64, power: i32) -> f64 {
        let w = &self.kernel * (c / c.norm());
        let (n1, n2) = self.x0.shape();
        let x = &self.x0 + DMatrix::from_column_slice(n1, n2, w.as_slice()) * t;
        (singular_values(&x).iter().sum::<f64>() - self.base) / t.powi(power)
    }

    /// Smallest growth found by sampling and then refining the best samples.
    fn min_growth(&self, rng: &mut Rng, cfg: &OracleConfig, t: f64, power: i32) -> f64 {
        let d = self.dim();
        let mut samples: Vec<(f64, DVector<f64>)> = (0..cfg.n_dirs)
            .map(|_| {
                let c = rng.normal_vector(d);
                (self.growth(&c, t, power), c)
            })
            .collect();
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = samples[0].0;
        for (mut val, mut c) in samples.into_iter().take(5) {
            c /= c.norm();
            let mut step = 0.3;
            for _ in 0..cfg.refine_steps {
                let trial = &c + rng.normal_vector(d) * step;
                let tv = self.growth(&trial, t, power);
                if tv < val {
                    val = tv;
                    c = &trial / trial.norm();
                } else {
                    step *= 0.98;
                }
                if step < 1e-6 {
                    break;
                }
            }
            best = best.min(val);
        }
        best
    }
}

/// Samples quadratic growth `(‖X₀ + tW‖_* - ‖X₀‖_*) / t²` over unit `W ∈ Ker Φ`.
///
/// Refutes on a descent direction, or when the smallest growth found decays
/// with `t` towards zero; supports when it stays above `c_min` for every `t`.
pub fn oracle_strong(inst: &ProblemInstance, cfg: &OracleConfig, rng: &mut Rng) -> Result<OracleVerdict> {
    let probe = GrowthProbe::new(inst)?;
    if probe.dim() == 0 {
        return Ok(OracleVerdict::Supports);
    }
    let mut grid = cfg.t_grid.clone();
    grid.sort_by(f64::total_cmp);
    let mins: Vec<f64> = grid.iter().map(|&t| probe.min_growth(rng, cfg, t, 2)).collect();
    if mins.iter().any(|&q| q < -1e-9) {
        return Ok(OracleVerdict::Refutes);
    }
    let smallest_t = mins[0];
    let largest_t = *mins.last().expect("nonempty grid");
    if mins.iter().all(|&q| q >= cfg.c_min) && smallest_t >= 0.1 * largest_t {
        return Ok(OracleVerdict::Supports);
    }
    let ratio = grid[0] / grid[grid.len() - 1];
    if smallest_t < cfg.c_min || smallest_t <= 10.0 * ratio * largest_t.max(cfg.c_min) {
        return Ok(OracleVerdict::Refutes);
    }
    Ok(OracleVerdict::Inconclusive)
}

/// Samples first-order growth `(‖X₀ + tW‖_* - ‖X₀‖_*) / t` at `t = t_sharp`.
pub fn oracle_sharp(inst: &ProblemInstance, cfg: &OracleConfig, rng: &mut Rng) -> Result<OracleVerdict> {
    let probe = GrowthProbe::new(inst)?;
    if probe.dim() == 0 {
        return Ok(OracleVerdict::Supports);
    }
    let m = probe.min_growth(rng, cfg, cfg.t_sharp, 1);
    Ok(if m < cfg.c_sharp { OracleVerdict::Refutes } else { OracleVerdict::Supports })
}

/// Rank of `Φ` restricted to the columns of `basis`, used by reports and tests.
pub fn restricted_rank(op: &LinOp, basis: &DMatrix<f64>) -> usize {
    let img = op.to_dense() * basis;
    if img.is_empty() {
        return 0;
    }
    let (_, s, _) = svd_thin(&img).expect("SVD of a finite matrix");
    count_above(&s, DEFAULT_RANK_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, d: &[f64]) -> DenseMat {
        DenseMat::from_row_slice(rows, cols, d).unwrap()
    }

    fn completion3() -> ProblemInstance {
        let op = LinOp::entry_mask(3, 3, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)])
            .unwrap();
        ProblemInstance::new(op, mat(3, 3, &[4., 2., 4., 2., 1., 2., 4., 2., 4.])).unwrap()
    }

    fn diag2() -> ProblemInstance {
        let op = LinOp::entry_mask(2, 2, vec![(0, 0), (1, 1)]).unwrap();
        ProblemInstance::new(op, mat(2, 2, &[1., 0., 0., 0.])).unwrap()
    }

    fn lrr2() -> ProblemInstance {
        let op = LinOp::left_mult(DMatrix::from_row_slice(1, 2, &[1., 1.]), 2).unwrap();
        ProblemInstance::new(op, mat(2, 2, &[0.5, 0., 0.5, 0.])).unwrap()
    }

    #[test]
    fn completion_fixture_coefficients() {
        let r = classify(&completion3(), &ClassifyOptions::default()).unwrap();
        assert!(r.recovered);
        // Feasible blocks form D(t) = [[4t, 1+2t], [1+2t, t]] in the frame of
        // (2,1,2)/3; the minimum-Frobenius member is t = -4/25 with spectral
        // norm 0.4 + √0.52.
        let tau = 0.4 + 0.52f64.sqrt();
        assert!((r.tau.unwrap() - tau).abs() < 1e-9, "tau {:?}", r.tau);
        assert!((r.ic.unwrap() - tau).abs() < 1e-9, "ic {:?}", r.ic);
        assert!((r.rho.unwrap() - 1.0).abs() < 0.02, "rho {:?}", r.rho);
        let zeta = brute_zeta(&completion3(), r.dual_certificate.as_ref().unwrap());
        assert!((r.zeta.unwrap() - zeta).abs() < 1e-4, "zeta {:?} vs {zeta}", r.zeta);
        assert!(r.gamma.unwrap() >= r.zeta.unwrap() - 1e-6);
        assert_eq!(r.p_of_y0, Some(3));
        assert_eq!(r.label, Label::StrongNotSharp);
    }

    /// Pattern search over an explicit parametrization of the feasible set of
    /// the `ζ` problem, independent of the ADMM solver.
    fn brute_zeta(inst: &ProblemInstance, y0: &DenseMat) -> f64 {
        let th = Thresholds::default();
        let prep = Prepared::new(inst, &th).unwrap();
        let s = prep.simul(y0, &th).unwrap();
        let con = prep.rho_constraint();
        let slack = &prep.ann * basis_eperp(&s).as_columns();
        let nd = con.c.ncols();
        let mut full = DMatrix::zeros(con.c.nrows(), nd + slack.ncols());
        full.columns_mut(0, nd).copy_from(&con.c);
        full.columns_mut(nd, slack.ncols()).copy_from(&slack);
        let x0 = pinv_raw(&full, 1e-12).unwrap() * &con.d;
        let kern = crate::numkernel::null_basis(&full, 1e-12).unwrap();
        let (a, b) = prep.block_shape();
        let value = |c: &DVector<f64>| {
            let x = &x0 + &kern * c;
            spectral_norm(&DMatrix::from_column_slice(a, b, &x.as_slice()[..nd]))
        };
        let mut rng = Rng::new(99);
        let mut best = f64::INFINITY;
        for _ in 0..20 {
            let mut c = rng.normal_vector(kern.ncols());
            let mut v = value(&c);
            let mut step = 1.0;
            while step > 1e-10 {
                let mut improved = false;
                for k in 0..kern.ncols() {
                    for sgn in [1.0, -1.0] {
                        let mut t = c.clone();
                        t[k] += sgn * step;
                        let tv = value(&t);
                        if tv < v {
                            v = tv;
                            c = t;
                            improved = true;
                        }
                    }
                }
                let dir = rng.normal_vector(kern.ncols()) * step;
                let tv = value(&(&c + &dir));
                if tv < v {
                    v = tv;
                    c += dir;
                    improved = true;
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best = best.min(v);
        }
        best
    }

    #[test]
    fn diagonal_fixture() {
        let inst = diag2();
        let r = classify(&inst, &ClassifyOptions::default()).unwrap();
        assert!(!r.ri);
        assert!(r.geometric_check);
        assert_eq!(r.rho, Some(0.0));
        assert_eq!(r.label, Label::StrongNotSharp);
    }

    #[test]
    fn lrr_fixture() {
        let r = classify(&lrr2(), &ClassifyOptions::default()).unwrap();
        assert!(!r.ri);
        assert!(r.strict_ri);
        assert_eq!(r.label, Label::StrongNotSharp);
        let mut rng = Rng::new(1);
        assert_eq!(oracle_sharp(&lrr2(), &OracleConfig::default(), &mut rng).unwrap(), OracleVerdict::Refutes);
        assert_eq!(oracle_strong(&lrr2(), &OracleConfig::default(), &mut rng).unwrap(), OracleVerdict::Supports);
    }

    #[test]
    fn full_observation_is_sharp() {
        let mut rng = Rng::new(2);
        let x0 = crate::numkernel::gaussian_mat(&mut rng, 3, 3);
        let inst = ProblemInstance::new(LinOp::full_observation(3, 3).unwrap(), x0).unwrap();
        let r = classify(&inst, &ClassifyOptions::default()).unwrap();
        assert_eq!(r.tau, Some(0.0));
        assert_eq!(r.rho, Some(0.0));
        assert_eq!(r.zeta, Some(0.0));
        assert_eq!(r.ic, Some(0.0));
        assert_eq!(r.label, Label::Sharp);
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = completion3();
        let back = ProblemInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back.m0, inst.m0);
        let mut bad = inst.to_json();
        bad["m0"] = json!([1, 2, 3, 4, 5, 6]);
        assert!(ProblemInstance::from_json(&bad).is_err());
    }
}
