//! Convex solvers behind the certificates.
//!
//! Both norm-minimization problems (`min ‖X‖_*` and `min ‖D‖` over an affine
//! set) run the same scaled ADMM splitting between the norm's prox and the
//! affine projection. The affine iterate is always feasible, so every check
//! yields an upper bound on the optimal value; the scaled multiplier projected
//! onto the row space of the constraint gives a matching dual lower bound.
//! Convergence means the relative gap between the two is below `tol_dual`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure_ops::LinOp;
use crate::numkernel::{
    complete_orthonormal, count_above, nuclear_norm, spectral_norm, svd_thin, DenseMat, Rng,
    DEFAULT_RANK_TOL,
};
use crate::subspaces::in_subdifferential;

/// Relative residual above which an affine system counts as inconsistent.
pub const CONSISTENCY_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative tolerance on the splitting residual `‖x - y‖`.
    pub tol_primal: f64,
    /// Relative tolerance on the duality gap.
    pub tol_dual: f64,
    pub max_iter: usize,
    /// Initial penalty, relative to the scale of the starting point.
    pub step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_primal: 1e-8,
            tol_dual: 1e-8,
            max_iter: 50_000,
            step: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol_primal > 0.0 && self.tol_dual > 0.0 && self.max_iter > 0 && self.step > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("solver tolerances, iteration cap and step must be positive".into()))
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x_opt: DenseMat,
    /// Norm of `x_opt`, recomputed from it.
    pub objective: f64,
    /// Best certified lower bound on the optimal value.
    pub lower_bound: f64,
    pub primal_residual: f64,
    /// Relative duality gap `(objective - lower_bound) / max(1, objective)`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Normalized dual certificate in the row space of the constraint.
    pub dual: Option<DenseMat>,
    /// Random feasible perturbations of 20% failed to lower the objective.
    pub local_check: bool,
}

/// Singular-value soft thresholding, the prox of `λ‖·‖_*`.
pub fn prox_nuclear(x: &DenseMat, lambda: f64) -> DenseMat {
    DenseMat::wrap(prox_nuclear_raw(x.as_matrix(), lambda))
}

/// Projection onto `{‖X‖_* ≤ radius}`.
pub fn project_nuclear_ball(x: &DenseMat, radius: f64) -> DenseMat {
    DenseMat::wrap(project_nuclear_ball_raw(x.as_matrix(), radius))
}

/// Prox of `λ‖·‖` via Moreau: `x - Π_{‖·‖_* ≤ λ}(x)`.
pub fn prox_spectral(x: &DenseMat, lambda: f64) -> DenseMat {
    DenseMat::wrap(prox_spectral_raw(x.as_matrix(), lambda))
}

fn map_singular_values(x: &DMatrix<f64>, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let (u, s, v) = svd_thin(x).expect("SVD of a finite iterate");
    let t = f(&s);
    let mut us = u;
    for (j, tj) in t.iter().enumerate() {
        us.column_mut(j).scale_mut(*tj);
    }
    us * v.transpose()
}

pub(crate) fn prox_nuclear_raw(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    map_singular_values(x, |s| s.iter().map(|v| (v - lambda).max(0.0)).collect())
}

pub(crate) fn project_nuclear_ball_raw(x: &DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    if nuclear_norm(x) <= radius {
        return x.clone();
    }
    map_singular_values(x, |s| project_l1_nonneg(s, radius))
}

pub(crate) fn prox_spectral_raw(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    x - project_nuclear_ball_raw(x, lambda)
}

/// Projection of a nonincreasing nonnegative vector onto `{s ≥ 0, Σ s ≤ radius}`.
fn project_l1_nonneg(sorted: &[f64], radius: f64) -> Vec<f64> {
    let total: f64 = sorted.iter().sum();
    if total <= radius {
        return sorted.to_vec();
    }
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - radius) / (j + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    sorted.iter().map(|s| (s - theta).max(0.0)).collect()
}

/// Projector onto `{v : C v = d}` with the row space or the kernel of `C`
/// cached, whichever is smaller.
#[derive(Clone, Debug)]
pub(crate) struct AffineProjector {
    basis: DMatrix<f64>,
    basis_is_kernel: bool,
    particular: DVector<f64>,
}

impl AffineProjector {
    pub(crate) fn new(c: &DMatrix<f64>, d: &DVector<f64>) -> Result<Self> {
        let n = c.ncols();
        if c.nrows() == 0 {
            return Ok(Self {
                basis: DMatrix::zeros(n, 0),
                basis_is_kernel: false,
                particular: DVector::zeros(n),
            });
        }
        let (u, s, v) = svd_thin(c)?;
        let k = count_above(&s, DEFAULT_RANK_TOL);
        let mut particular = DVector::zeros(n);
        for i in 0..k {
            particular += v.column(i) * (u.column(i).dot(d) / s[i]);
        }
        let residual = (c * &particular - d).norm();
        if residual > CONSISTENCY_TOL * (1.0 + d.norm()) {
            return Err(Error::Infeasible { residual });
        }
        let rows = v.columns(0, k).into_owned();
        let (basis, basis_is_kernel) = if 2 * k <= n {
            (rows, false)
        } else {
            (complete_orthonormal(&rows).columns(k, n - k).into_owned(), true)
        };
        Ok(Self { basis, basis_is_kernel, particular })
    }

    pub(crate) fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let shifted = x - &self.particular;
        let q = &self.basis;
        if self.basis_is_kernel {
            &self.particular + q * (q.transpose() * shifted)
        } else {
            x - q * (q.transpose() * shifted)
        }
    }

    /// Orthogonal projection onto the row space of `C`.
    pub(crate) fn project_row_space(&self, g: &DVector<f64>) -> DVector<f64> {
        let q = &self.basis;
        if self.basis_is_kernel {
            g - q * (q.transpose() * g)
        } else {
            q * (q.transpose() * g)
        }
    }

    /// Orthogonal projection onto the kernel of `C`.
    pub(crate) fn project_kernel(&self, g: &DVector<f64>) -> DVector<f64> {
        g - self.project_row_space(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Norm {
    Nuclear,
    Spectral,
}

impl Norm {
    fn value(self, x: &DMatrix<f64>) -> f64 {
        match self {
            Norm::Nuclear => nuclear_norm(x),
            Norm::Spectral => spectral_norm(x),
        }
    }

    fn dual_value(self, x: &DMatrix<f64>) -> f64 {
        match self {
            Norm::Nuclear => spectral_norm(x),
            Norm::Spectral => nuclear_norm(x),
        }
    }

    fn prox(self, x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        match self {
            Norm::Nuclear => prox_nuclear_raw(x, lambda),
            Norm::Spectral => prox_spectral_raw(x, lambda),
        }
    }
}

const CHECK_EVERY: usize = 10;

/// `min ‖x‖ s.t. x ∈ affine set`, started from the feasible point `start`.
fn admm_affine(
    shape: (usize, usize),
    proj: &AffineProjector,
    norm: Norm,
    cfg: &SolverConfig,
    start: DVector<f64>,
) -> SolveResult {
    let (n1, n2) = shape;
    let as_mat = |v: &DVector<f64>| DMatrix::from_column_slice(n1, n2, v.as_slice());

    let mut y = start;
    let mut best_y = y.clone();
    let mut best_ub = norm.value(&as_mat(&y));
    let mut best_lb = 0.0f64;
    let mut best_dual: Option<DVector<f64>> = None;
    let mut u = DVector::zeros(n1 * n2);
    let scale = (y.norm() / (n1.min(n2) as f64).sqrt()).max(1e-3);
    let mut rho = cfg.step / scale;
    let mut primal = f64::INFINITY;
    let mut gap = if best_ub == 0.0 { 0.0 } else { f64::INFINITY };
    let mut iterations = 0;
    let mut converged = gap == 0.0;

    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let x = norm.prox(&as_mat(&(&y - &u)), 1.0 / rho);
        let xv = DVector::from_column_slice(x.as_slice());
        let y_prev = std::mem::replace(&mut y, proj.project(&(&xv + &u)));
        let diff = &xv - &y;
        u += &diff;

        if iterations % CHECK_EVERY != 0 && iterations != cfg.max_iter {
            continue;
        }
        let ub = norm.value(&as_mat(&y));
        if ub < best_ub {
            best_ub = ub;
            best_y = y.clone();
        }
        let g = proj.project_row_space(&(&u * -rho));
        let gm = as_mat(&g);
        let gn = norm.dual_value(&gm);
        if gn > 0.0 {
            let lb = g.dot(&y) / gn;
            if lb > best_lb {
                best_lb = lb;
                best_dual = Some(&g / gn);
            }
        }
        primal = diff.norm() / y.norm().max(1.0);
        let dual_res = rho * (&y - &y_prev).norm() / (rho * u.norm()).max(1.0);
        gap = (best_ub - best_lb).max(0.0) / best_ub.max(1.0);
        converged = gap <= cfg.tol_dual && primal <= cfg.tol_primal.max(cfg.tol_dual);
        if gap <= cfg.tol_dual * 1e-2 {
            converged = true;
        }

        if primal > 10.0 * dual_res {
            rho *= 2.0;
            u /= 2.0;
        } else if dual_res > 10.0 * primal {
            rho /= 2.0;
            u *= 2.0;
        }
    }

    let x_opt = as_mat(&best_y);
    SolveResult {
        objective: norm.value(&x_opt),
        x_opt: DenseMat::wrap(x_opt),
        lower_bound: best_lb,
        primal_residual: primal,
        dual_residual: gap,
        iterations,
        converged,
        dual: best_dual.map(|g| DenseMat::wrap(as_mat(&g))),
        local_check: false,
    }
}

/// `min ‖X‖_*` subject to `Φ X = M₀`.
pub fn solve_nuclear_affine(op: &LinOp, m0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if m0.len() != op.m() {
        return Err(Error::Shape(format!("M0 has {} entries, operator has m = {}", m0.len(), op.m())));
    }
    let proj = AffineProjector::new(&op.to_dense(), &DVector::from_column_slice(m0))?;
    let start = proj.project(&DVector::zeros(op.shape().0 * op.shape().1));
    let mut res = admm_affine(op.shape(), &proj, Norm::Nuclear, cfg, start);
    res.primal_residual = res.primal_residual.min(constraint_residual(op, &res.x_opt, m0));
    Ok(res)
}

fn constraint_residual(op: &LinOp, x: &DenseMat, m0: &[f64]) -> f64 {
    let m = DVector::from_column_slice(m0);
    (op.apply_raw(x.as_matrix()) - &m).norm() / (1.0 + m.norm())
}

/// `C · vec(D) = d`, optionally relaxed by a free slack `S w`.
#[derive(Clone, Debug)]
pub struct AffineConstraint {
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl AffineConstraint {
    /// Eliminates `w` from `C vec(D) + S w = d` by restricting to `(Im S)⊥`.
    pub fn with_slack(&self, slack: &DMatrix<f64>) -> Result<AffineConstraint> {
        if slack.ncols() == 0 {
            return Ok(self.clone());
        }
        if slack.nrows() != self.c.nrows() {
            return Err(Error::Shape("slack rows must match the constraint".into()));
        }
        let (u, s, _) = svd_thin(slack)?;
        let k = count_above(&s, DEFAULT_RANK_TOL);
        let rows = self.c.nrows();
        let full = complete_orthonormal(&u.columns(0, k).into_owned());
        let keep = full.columns(k, rows - k).transpose();
        Ok(AffineConstraint { c: &keep * &self.c, d: &keep * &self.d })
    }
}

/// `min ‖D‖` (spectral) over `D ∈ ℝ^{shape}` with `C vec(D) + S w = d` for some `w`.
///
/// `candidates` are projected onto the feasible set; the solver starts from
/// the best of them, so the returned value never exceeds any candidate's.
pub fn solve_spectral_affine(
    shape: (usize, usize),
    constraint: &AffineConstraint,
    slack: Option<&DMatrix<f64>>,
    cfg: &SolverConfig,
    candidates: &[DMatrix<f64>],
) -> Result<SolveResult> {
    cfg.validate()?;
    let (n1, n2) = shape;
    if constraint.c.ncols() != n1 * n2 || constraint.c.nrows() != constraint.d.len() {
        return Err(Error::Shape("constraint does not match the variable shape".into()));
    }
    let eff = match slack {
        Some(s) => constraint.with_slack(s)?,
        None => constraint.clone(),
    };
    let proj = AffineProjector::new(&eff.c, &eff.d)?;
    if n1 * n2 == 0 {
        let empty = DMatrix::zeros(n1, n2);
        return Ok(SolveResult {
            x_opt: DenseMat::wrap(empty),
            objective: 0.0,
            lower_bound: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
            converged: true,
            dual: None,
            local_check: true,
        });
    }
    let mut start = proj.project(&DVector::zeros(n1 * n2));
    let mut start_val = spectral_norm(&DMatrix::from_column_slice(n1, n2, start.as_slice()));
    for cand in candidates {
        if cand.shape() != shape {
            return Err(Error::Shape("candidate shape mismatch".into()));
        }
        let p = proj.project(&DVector::from_column_slice(cand.as_slice()));
        let v = spectral_norm(&DMatrix::from_column_slice(n1, n2, p.as_slice()));
        if v < start_val {
            start = p;
            start_val = v;
        }
    }
    let mut res = admm_affine(shape, &proj, Norm::Spectral, cfg, start);
    res.local_check = perturbation_sweep(&res.x_opt, &proj, 20);
    Ok(res)
}

/// Moves 20% of the solution's size along random feasible directions and
/// checks that none of them lowers the spectral norm.
fn perturbation_sweep(x: &DenseMat, proj: &AffineProjector, samples: usize) -> bool {
    let (n1, n2) = x.shape();
    let base = x.spectral_norm();
    let step = 0.2 * x.fro_norm().max(1e-3);
    let mut rng = Rng::new(0x5eed);
    let xv = DVector::from_column_slice(x.as_slice());
    (0..samples).all(|_| {
        let dir = proj.project_kernel(&rng.normal_vector(n1 * n2));
        let nrm = dir.norm();
        if nrm == 0.0 {
            return true;
        }
        let moved = &xv + dir * (step / nrm);
        spectral_norm(&DMatrix::from_column_slice(n1, n2, moved.as_slice())) >= base - 1e-9
    })
}

/// `min ½‖Φ X - M‖² + μ‖X‖_*`.
pub fn solve_regularized(op: &LinOp, m: &[f64], mu: f64, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if !(mu > 0.0) {
        return Err(Error::Config("regularization weight must be positive".into()));
    }
    if m.len() != op.m() {
        return Err(Error::Shape(format!("M has {} entries, operator has m = {}", m.len(), op.m())));
    }
    let (n1, n2) = op.shape();
    let n = n1 * n2;
    let a = op.to_dense();
    let mv = DVector::from_column_slice(m);
    let atm = a.transpose() * &mv;
    let ata = a.transpose() * &a;
    let mut rho = cfg.step * ata.diagonal().max().max(mu).max(1e-6);
    let factor = |rho: f64| {
        (&ata + DMatrix::identity(n, n) * rho)
            .cholesky()
            .expect("ΦᵀΦ + ρI is positive definite")
    };
    let mut chol = factor(rho);
    let mut z = DVector::zeros(n);
    let mut u = DVector::zeros(n);
    let mut iterations = 0;
    let mut converged = false;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let as_mat = |v: &DVector<f64>| DMatrix::from_column_slice(n1, n2, v.as_slice());
    while iterations < cfg.max_iter {
        iterations += 1;
        let x = chol.solve(&(&atm + (&z - &u) * rho));
        let z_prev = z.clone();
        let zm = prox_nuclear_raw(&as_mat(&(&x + &u)), mu / rho);
        z = DVector::from_column_slice(zm.as_slice());
        u += &x - &z;
        primal = (&x - &z).norm() / x.norm().max(z.norm()).max(1.0);
        dual = rho * (&z - &z_prev).norm() / (rho * u.norm()).max(1.0);
        if primal <= cfg.tol_primal && dual <= cfg.tol_dual {
            converged = true;
            break;
        }
        if iterations % CHECK_EVERY == 0 {
            let mut changed = false;
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
                changed = true;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= 2.0;
                changed = true;
            }
            if changed {
                chol = factor(rho);
            }
        }
    }
    let zm = DenseMat::wrap(as_mat(&z));
    let grad = a.transpose() * (&a * &z - &mv) / (-mu);
    let y = DenseMat::wrap(as_mat(&grad));
    let objective = zm.nuclear_norm();
    Ok(SolveResult {
        objective,
        lower_bound: f64::NAN,
        primal_residual: primal,
        dual_residual: dual,
        iterations,
        converged,
        local_check: in_subdifferential(&zm, &y, 1e-5),
        dual: Some(y),
        x_opt: zm,
    })
}

/// `L† M₀`, the solution of `min ‖X‖_*` s.t. `L X = M₀`.
pub fn lrr_closed_form(l: &DenseMat, m0: &DenseMat) -> Result<DenseMat> {
    if l.rows() != m0.rows() {
        return Err(Error::Shape(format!("L is {:?}, M0 is {:?}", l.shape(), m0.shape())));
    }
    let lp = crate::numkernel::pinv_raw(l.as_matrix(), DEFAULT_RANK_TOL)?;
    let x = &lp * m0.as_matrix();
    let residual = (l.as_matrix() * &x - m0.as_matrix()).norm();
    if residual > CONSISTENCY_TOL * (1.0 + m0.fro_norm()) {
        return Err(Error::Infeasible { residual });
    }
    Ok(DenseMat::wrap(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{gaussian_mat, gaussian_raw};

    fn mat(rows: usize, cols: usize, d: &[f64]) -> DenseMat {
        DenseMat::from_row_slice(rows, cols, d).unwrap()
    }

    #[test]
    fn prox_examples() {
        let x = mat(2, 2, &[3., 0., 0., 1.]);
        assert!((prox_nuclear(&x, 0.0).as_matrix() - x.as_matrix()).amax() < 1e-14);
        let p = prox_nuclear(&x, 2.0);
        assert!((p.as_matrix() - mat(2, 2, &[1., 0., 0., 0.]).as_matrix()).amax() < 1e-14);
        let b = project_nuclear_ball(&x, 1.0);
        assert!((b.as_matrix() - mat(2, 2, &[1., 0., 0., 0.]).as_matrix()).amax() < 1e-14);
        let small = mat(2, 2, &[0.2, 0., 0., 0.1]);
        assert_eq!(project_nuclear_ball(&small, 1.0).as_matrix(), small.as_matrix());
    }

    #[test]
    fn prox_optimality_and_moreau() {
        let mut rng = Rng::new(7);
        for _ in 0..20 {
            let a = gaussian_mat(&mut rng, 4, 5);
            let lambda = 0.5 + rng.uniform();
            let p = prox_nuclear(&a, lambda);
            let y = DenseMat::wrap((a.as_matrix() - p.as_matrix()) / lambda);
            assert!(y.spectral_norm() <= 1.0 + 1e-8);
            assert!((y.inner(&p) - p.nuclear_norm()).abs() < 1e-6);

            let ps = prox_spectral(&a, lambda);
            let scaled = DenseMat::wrap(a.as_matrix() / lambda);
            let back = ps.as_matrix() + project_nuclear_ball(&scaled, 1.0).as_matrix() * lambda;
            assert!((back - a.as_matrix()).amax() < 1e-10);
        }
    }

    #[test]
    fn prox_firmly_nonexpansive() {
        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let x = gaussian_mat(&mut rng, 3, 4);
            let y = gaussian_mat(&mut rng, 3, 4);
            for (px, py) in [
                (prox_nuclear(&x, 0.7), prox_nuclear(&y, 0.7)),
                (prox_spectral(&x, 0.7), prox_spectral(&y, 0.7)),
            ] {
                let d = px.as_matrix() - py.as_matrix();
                let lhs = d.norm_squared();
                let rhs = d.dot(&(x.as_matrix() - y.as_matrix()));
                assert!(lhs <= rhs + 1e-8);
            }
        }
    }

    #[test]
    fn nuclear_affine_lrr_fixture() {
        let op = LinOp::left_mult(DMatrix::from_row_slice(1, 2, &[1., 1.]), 2).unwrap();
        let res = solve_nuclear_affine(&op, &[1., 0.], &SolverConfig::default()).unwrap();
        let want = mat(2, 2, &[0.5, 0., 0.5, 0.]);
        assert!((res.x_opt.as_matrix() - want.as_matrix()).amax() < 1e-5, "{:?}", res.x_opt);
        let y = res.dual.unwrap();
        assert!(in_subdifferential(&res.x_opt, &y, 1e-5));
    }

    #[test]
    fn nuclear_affine_diagonal_mask() {
        let op = LinOp::entry_mask(2, 2, vec![(0, 0), (1, 1)]).unwrap();
        let res = solve_nuclear_affine(&op, &[1., 0.], &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!((res.objective - 1.0).abs() < 1e-8);
        assert!((res.x_opt.as_matrix() - mat(2, 2, &[1., 0., 0., 0.]).as_matrix()).amax() < 1e-6);
    }

    #[test]
    fn nuclear_affine_full_observation() {
        let mut rng = Rng::new(9);
        let x0 = gaussian_mat(&mut rng, 3, 4);
        let op = LinOp::full_observation(3, 4).unwrap();
        let m0 = op.apply(&x0).unwrap();
        let res = solve_nuclear_affine(&op, m0.as_slice(), &SolverConfig::default()).unwrap();
        assert!((res.x_opt.as_matrix() - x0.as_matrix()).amax() < 1e-10);
    }

    #[test]
    fn nuclear_affine_completion_fixture() {
        let op = LinOp::entry_mask(3, 3, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)])
            .unwrap();
        let x0 = mat(3, 3, &[4., 2., 4., 2., 1., 2., 4., 2., 4.]);
        let m0 = op.apply(&x0).unwrap();
        let res = solve_nuclear_affine(&op, m0.as_slice(), &SolverConfig::default()).unwrap();
        let err = (res.x_opt.as_matrix() - x0.as_matrix()).norm() / x0.fro_norm();
        assert!(err < 1e-3, "relative error {err}, iterations {}", res.iterations);
        assert!(in_subdifferential(&res.x_opt, res.dual.as_ref().unwrap(), 1e-5));
    }

    #[test]
    fn inconsistent_system_is_infeasible() {
        let op = LinOp::dense(1, 2, DMatrix::from_row_slice(2, 2, &[1., 1., 1., 1.])).unwrap();
        assert!(matches!(
            solve_nuclear_affine(&op, &[1., 2.], &SolverConfig::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn spectral_affine_basics() {
        // Empty constraint: zero is optimal.
        let c = AffineConstraint { c: DMatrix::zeros(0, 4), d: DVector::zeros(0) };
        let res = solve_spectral_affine((2, 2), &c, None, &SolverConfig::default(), &[]).unwrap();
        assert_eq!(res.objective, 0.0);

        // trace(D) = 2 forces ‖D‖ ≥ 1, attained at I.
        let c = AffineConstraint {
            c: DMatrix::from_row_slice(1, 4, &[1., 0., 0., 1.]),
            d: DVector::from_vec(vec![2.0]),
        };
        let res = solve_spectral_affine((2, 2), &c, None, &SolverConfig::default(), &[]).unwrap();
        assert!(res.converged);
        assert!((res.objective - 1.0).abs() < 1e-6, "{}", res.objective);
        assert!(res.lower_bound <= res.objective + 1e-12);
        assert!(res.local_check);
    }

    #[test]
    fn slack_never_increases_value() {
        let mut rng = Rng::new(10);
        for _ in 0..5 {
            let c = AffineConstraint {
                c: gaussian_raw(&mut rng, 4, 9),
                d: rng.normal_vector(4),
            };
            let s = gaussian_raw(&mut rng, 4, 1);
            let cfg = SolverConfig::default();
            let plain = solve_spectral_affine((3, 3), &c, None, &cfg, &[]).unwrap();
            let relaxed = solve_spectral_affine((3, 3), &c, Some(&s), &cfg, &[]).unwrap();
            assert!(relaxed.objective <= plain.objective + 1e-6);
        }
    }

    #[test]
    fn regularized_cases() {
        let op = LinOp::full_observation(2, 3).unwrap();
        let cfg = SolverConfig::default();
        let zero = solve_regularized(&op, &[0.0; 6], 0.5, &cfg).unwrap();
        assert_eq!(zero.objective, 0.0);

        let mut rng = Rng::new(11);
        let x = gaussian_mat(&mut rng, 2, 3);
        let m = op.apply(&x).unwrap();
        let big = x.spectral_norm() * 1.01;
        let res = solve_regularized(&op, m.as_slice(), big, &cfg).unwrap();
        assert!(res.x_opt.fro_norm() < 1e-8);

        let res = solve_regularized(&op, m.as_slice(), 0.1, &cfg).unwrap();
        assert!(res.converged);
        assert!(res.local_check);
    }

    #[test]
    fn lrr_closed_form_cases() {
        let l = mat(1, 2, &[1., 1.]);
        let x = lrr_closed_form(&l, &mat(1, 2, &[1., 0.])).unwrap();
        assert!((x.as_matrix() - mat(2, 2, &[0.5, 0., 0.5, 0.]).as_matrix()).amax() < 1e-12);
        let m0 = mat(2, 2, &[1., 2., 3., 4.]);
        let x = lrr_closed_form(&DenseMat::identity(2), &m0).unwrap();
        assert!((x.as_matrix() - m0.as_matrix()).amax() < 1e-12);
        let l = mat(2, 1, &[1., 1.]);
        assert!(matches!(
            lrr_closed_form(&l, &mat(2, 1, &[1., 0.])),
            Err(Error::Infeasible { .. })
        ));
    }
}
