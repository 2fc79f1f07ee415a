//! Monte-Carlo phase-transition sweeps, the minimal-measurement and
//! low-rank representation demos, and the small fixed fixtures.
//!
//! Every trial draws from its own generator, seeded from the master seed and
//! the trial's `(r, m, index)`, so rows are identical whatever the thread count.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certify::{
    classify, oracle_sharp, CertifyReport, ClassifyMode, ClassifyOptions, Label, OracleConfig,
    OracleVerdict, ProblemInstance, Thresholds,
};
use crate::cvxsolvers::{lrr_closed_form, solve_regularized, SolverConfig};
use crate::error::{Error, Result};
use crate::measure_ops::{minimal_phi, minimal_phi_truncated, LinOp};
use crate::numkernel::{gaussian_mat, rank_raw, spectral_norm, svd_full, DenseMat, Rng};
use crate::subspaces::compact_svd;

pub const CSV_HEADER: &str =
    "seed,n,r,m,recovered,sharp,strong_not_sharp,tau,rho,zeta,ic,solver_iters,wall_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// Dense i.i.d. Gaussian measurement operator.
    Gaussian,
    /// `m` entries observed, sampled uniformly without replacement.
    Completion,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ensemble: Ensemble,
    pub n: usize,
    pub rank_list: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output_path: String,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.rank_list.is_empty() || self.m_grid.is_empty() {
            return bad("rank_list and m_grid must be nonempty".into());
        }
        if let Some(r) = self.rank_list.iter().find(|&&r| r == 0 || r > self.n) {
            return bad(format!("rank {r} outside 1..={}", self.n));
        }
        if let Some(m) = self.m_grid.iter().find(|&&m| m == 0 || m > self.n * self.n) {
            return bad(format!("m = {m} outside 1..={}", self.n * self.n));
        }
        self.solver.validate()
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v.clone())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One trial of a sweep. Booleans follow the experiment-protocol label.
#[derive(Clone, Debug, Serialize)]
pub struct TrialRow {
    pub seed: u64,
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub trial: usize,
    pub recovered: bool,
    pub sharp: bool,
    pub strong_not_sharp: bool,
    /// Strong under the single-instance rule, ignoring the `τ`/`ρ` band.
    pub strong_full: bool,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub zeta: Option<f64>,
    pub ic: Option<f64>,
    /// `τ` through the coordinate linear system, completion sweeps only.
    pub tau_alpha: Option<f64>,
    pub tau_alpha_checked: bool,
    pub solver_iters: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl TrialRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.seed,
            self.n,
            self.r,
            self.m,
            u8::from(self.recovered),
            u8::from(self.sharp),
            u8::from(self.strong_not_sharp),
            opt(self.tau),
            opt(self.rho),
            opt(self.zeta),
            opt(self.ic),
            self.solver_iters,
            self.wall_ms,
        )
    }
}

pub fn to_csv(rows: &[TrialRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv_line());
    }
    out
}

/// Per-rank curves over the `m` grid.
#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    pub r: usize,
    pub m: Vec<usize>,
    pub prop_recovered: Vec<f64>,
    pub prop_sharp: Vec<f64>,
    pub prop_strong: Vec<f64>,
    /// Strong-not-sharp under the single-instance rule.
    pub prop_strong_full: Vec<f64>,
    pub mean_tau: Vec<Option<f64>>,
    pub mean_rho: Vec<Option<f64>>,
    pub mean_zeta: Vec<Option<f64>>,
    pub mean_ic: Vec<Option<f64>>,
    pub errors: usize,
    pub tau_mismatches: usize,
}

pub fn summarize(rows: &[TrialRow]) -> Vec<Curve> {
    let mut ranks: Vec<usize> = rows.iter().map(|r| r.r).collect();
    ranks.sort_unstable();
    ranks.dedup();
    ranks
        .into_iter()
        .map(|r| {
            let of_rank: Vec<&TrialRow> = rows.iter().filter(|row| row.r == r).collect();
            let mut ms: Vec<usize> = of_rank.iter().map(|row| row.m).collect();
            ms.sort_unstable();
            ms.dedup();
            let mut curve = Curve {
                r,
                m: ms.clone(),
                prop_recovered: vec![],
                prop_sharp: vec![],
                prop_strong: vec![],
                prop_strong_full: vec![],
                mean_tau: vec![],
                mean_rho: vec![],
                mean_zeta: vec![],
                mean_ic: vec![],
                errors: of_rank.iter().filter(|row| row.error.is_some()).count(),
                tau_mismatches: of_rank.iter().filter(|row| tau_mismatch(row)).count(),
            };
            for m in ms {
                let at: Vec<&&TrialRow> = of_rank.iter().filter(|row| row.m == m).collect();
                let prop = |f: &dyn Fn(&TrialRow) -> bool| {
                    at.iter().filter(|row| f(row)).count() as f64 / at.len() as f64
                };
                let mean = |f: &dyn Fn(&TrialRow) -> Option<f64>| {
                    let vals: Vec<f64> = at.iter().filter_map(|row| f(row)).collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                };
                curve.prop_recovered.push(prop(&|row| row.recovered));
                curve.prop_sharp.push(prop(&|row| row.sharp));
                curve.prop_strong.push(prop(&|row| row.strong_not_sharp));
                curve.prop_strong_full.push(prop(&|row| row.strong_full && !row.sharp));
                curve.mean_tau.push(mean(&|row| row.tau));
                curve.mean_rho.push(mean(&|row| row.rho));
                curve.mean_zeta.push(mean(&|row| row.zeta));
                curve.mean_ic.push(mean(&|row| row.ic));
            }
            curve
        })
        .collect()
}

fn tau_mismatch(row: &TrialRow) -> bool {
    if !row.tau_alpha_checked {
        return false;
    }
    match (row.tau, row.tau_alpha) {
        (Some(a), Some(b)) => (a - b).abs() > 1e-6 * (1.0 + a.abs()),
        (None, None) => false,
        _ => true,
    }
}

pub fn summary_json(cfg: &ExperimentConfig, rows: &[TrialRow]) -> Value {
    json!({
        "ensemble": cfg.ensemble,
        "n": cfg.n,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "curves": summarize(rows),
    })
}

/// Worker count: `STRONGMIN_THREADS` when set and positive, otherwise all cores.
pub fn thread_count() -> usize {
    std::env::var("STRONGMIN_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Seed of trial `index` at `(r, m)`, from a SplitMix64 mix of the inputs.
pub fn trial_seed(master: u64, r: usize, m: usize, index: usize) -> u64 {
    let mut z = master;
    for part in [r as u64, m as u64, index as u64] {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(part);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn run_exp_gaussian(cfg: &ExperimentConfig) -> Result<Vec<TrialRow>> {
    run_sweep(cfg, Ensemble::Gaussian, thread_count())
}

pub fn run_exp_completion(cfg: &ExperimentConfig) -> Result<Vec<TrialRow>> {
    run_sweep(cfg, Ensemble::Completion, thread_count())
}

/// Runs the sweep of `cfg.ensemble` on `threads` workers.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<TrialRow>> {
    run_sweep(cfg, cfg.ensemble, threads)
}

fn run_sweep(cfg: &ExperimentConfig, ensemble: Ensemble, threads: usize) -> Result<Vec<TrialRow>> {
    use rayon::prelude::*;
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &r in &cfg.rank_list {
        for &m in &cfg.m_grid {
            for trial in 0..cfg.trials {
                jobs.push((r, m, trial));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows: Vec<TrialRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, m, trial)| run_trial(cfg, ensemble, r, m, trial))
            .collect()
    });
    rows.sort_by_key(|row| (row.r, row.m, row.trial));
    Ok(rows)
}

/// Instance of one sweep trial: `X₀ = W Hᵀ` and the ensemble's operator.
pub fn trial_instance(ensemble: Ensemble, n: usize, r: usize, m: usize, seed: u64) -> Result<ProblemInstance> {
    let mut rng = Rng::new(seed);
    let w = gaussian_mat(&mut rng, n, r);
    let h = gaussian_mat(&mut rng, n, r);
    let x0 = DenseMat::from_matrix(w.as_matrix() * h.as_matrix().transpose())?;
    let op = match ensemble {
        Ensemble::Gaussian => {
            let a = gaussian_mat(&mut rng, m, n * n).into_matrix() / (m as f64).sqrt();
            LinOp::dense(n, n, a)?
        }
        Ensemble::Completion => {
            let omega = rng
                .sample_indices(n * n, m)
                .into_iter()
                .map(|k| (k % n, k / n))
                .collect();
            LinOp::entry_mask(n, n, omega)?
        }
    };
    ProblemInstance::new(op, x0)
}

fn run_trial(cfg: &ExperimentConfig, ensemble: Ensemble, r: usize, m: usize, trial: usize) -> TrialRow {
    let seed = trial_seed(cfg.seed, r, m, trial);
    let start = Instant::now();
    let mut row = TrialRow {
        seed,
        n: cfg.n,
        r,
        m,
        trial,
        recovered: false,
        sharp: false,
        strong_not_sharp: false,
        strong_full: false,
        tau: None,
        rho: None,
        zeta: None,
        ic: None,
        tau_alpha: None,
        tau_alpha_checked: false,
        solver_iters: 0,
        wall_ms: 0.0,
        error: None,
    };
    let opts = ClassifyOptions {
        thresholds: cfg.thresholds,
        mode: ClassifyMode::Experiment,
        solver: cfg.solver,
        coeff_solver: cfg.solver,
        retry: false,
    };
    let outcome = trial_instance(ensemble, cfg.n, r, m, seed).and_then(|inst| {
        let rep = classify(&inst, &opts)?;
        let alpha = match ensemble {
            Ensemble::Completion => tau_by_alpha_system(&inst, cfg.thresholds.rank_tol)?,
            Ensemble::Gaussian => None,
        };
        Ok((rep, alpha))
    });
    match outcome {
        Ok((rep, alpha)) => {
            row.recovered = rep.recovered;
            row.sharp = rep.label == Label::Sharp;
            row.strong_not_sharp = rep.label == Label::StrongNotSharp;
            row.strong_full = rep.label_certify.is_strong();
            row.tau = rep.tau;
            row.rho = rep.rho;
            row.zeta = rep.zeta;
            row.ic = rep.ic;
            row.tau_alpha_checked = ensemble == Ensemble::Completion;
            row.tau_alpha = alpha;
            row.solver_iters = rep.solver.iterations;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// `τ` from the square system in the coordinates of a full SVD `U₀ D V₀ᵀ`.
///
/// With `B_ij = Φ*Φ(u_i v_jᵀ)` over the index set `Γ` of `𝕋₀` (rows or
/// columns below the rank), solve `Σ α_ij P_Γ(U₀ᵀ B_ij V₀) = diag(I_r, 0)`;
/// then `τ = ‖Σ α_ij B_ij - E₀‖`. Absent when the system is singular, which
/// happens exactly when restricted injectivity fails.
pub fn tau_by_alpha_system(inst: &ProblemInstance, rank_tol: f64) -> Result<Option<f64>> {
    let csvd = compact_svd(&inst.x0)?;
    let r = csvd.r;
    let full = svd_full(&inst.x0)?;
    let (n1, n2) = inst.x0.shape();
    let gamma: Vec<(usize, usize)> = (0..n2)
        .flat_map(|j| (0..n1).map(move |i| (i, j)))
        .filter(|&(i, j)| i < r || j < r)
        .collect();
    let k = gamma.len();
    let mut system = DMatrix::zeros(k, k);
    let mut images = Vec::with_capacity(k);
    for (col, &(i, j)) in gamma.iter().enumerate() {
        let uv = DenseMat::from_matrix(full.u.column(i) * full.v.column(j).transpose())?;
        let b = inst.op.adjoint_apply(inst.op.apply(&uv)?.as_slice())?.into_matrix();
        let coords = full.u.transpose() * &b * &full.v;
        for (row, &(a, c)) in gamma.iter().enumerate() {
            system[(row, col)] = coords[(a, c)];
        }
        images.push(b);
    }
    if rank_raw(&system, rank_tol) < k {
        return Ok(None);
    }
    let rhs = nalgebra::DVector::from_iterator(
        k,
        gamma.iter().map(|&(i, j)| if i == j { 1.0 } else { 0.0 }),
    );
    let alpha = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("coordinate system for tau is singular".into()))?;
    let mut y = DMatrix::zeros(n1, n2);
    for (a, b) in alpha.iter().zip(&images) {
        y += b * *a;
    }
    let e0 = full.u.columns(0, r) * full.v.columns(0, r).transpose();
    Ok(Some(spectral_norm(&(y - e0))))
}

/// Outcome of the minimal-measurement demo.
#[derive(Clone, Debug, Serialize)]
pub struct MinimalDemo {
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub recovered: bool,
    pub strong: bool,
    pub label: Label,
    /// Strict restricted injectivity with one measurement dropped.
    pub dropped_strict_ri: bool,
    pub passed: bool,
    pub report: Value,
}

/// Random rank-`r` `X₀` measured by `r(r+1)/2` functionals spanning `U₀ 𝕊ʳ V₀ᵀ`.
///
/// Passes when `X₀` is recovered and certified strong while the family with
/// one member dropped loses strict restricted injectivity.
pub fn demo_minimal(n: usize, r: usize, seed: u64) -> Result<MinimalDemo> {
    if r == 0 || r > n {
        return Err(Error::Config(format!("rank {r} outside 1..={n}")));
    }
    let mut rng = Rng::new(seed);
    let w = gaussian_mat(&mut rng, n, r);
    let h = gaussian_mat(&mut rng, n, r);
    let x0 = DenseMat::from_matrix(w.as_matrix() * h.as_matrix().transpose())?;
    let csvd = compact_svd(&x0)?;
    let mut phi_rng = rng.substream(0);
    let op = minimal_phi(&csvd, &mut phi_rng.clone());
    let m = op.m();
    let rep = classify(&ProblemInstance::new(op, x0.clone())?, &ClassifyOptions::default())?;
    let s = r * (r + 1) / 2;
    let dropped_strict_ri = if s > 1 {
        let fewer = minimal_phi_truncated(&csvd, &mut phi_rng, s - 1);
        crate::certify::strict_restricted_injectivity(&ProblemInstance::new(fewer, x0)?)?
    } else {
        false
    };
    let strong = rep.label.is_strong();
    Ok(MinimalDemo {
        n,
        r,
        m,
        recovered: rep.recovered,
        strong,
        label: rep.label,
        dropped_strict_ri,
        passed: rep.recovered && strong && !dropped_strict_ri,
        report: rep.to_json(),
    })
}

/// Outcome of the low-rank representation demo.
#[derive(Clone, Debug, Serialize)]
pub struct LrrDemo {
    pub q: usize,
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
    /// `‖X_opt - L†M₀‖_F` from the nuclear-norm solver.
    pub solution_error: f64,
    pub strong: bool,
    pub label: Label,
    pub oracle_sharp: Option<OracleVerdict>,
    /// The regularized problem's solution passes the stationarity test.
    pub regularized_stationary: bool,
    pub passed: bool,
    pub report: Value,
}

/// Random `L` (`q × n1`) and rank-`r` consistent `M₀ = L X`; the unique
/// solution of `min ‖X‖_*` s.t. `L X = M₀` is `L†M₀`.
pub fn demo_lrr(q: usize, n1: usize, n2: usize, r: usize, seed: u64) -> Result<LrrDemo> {
    if q == 0 || q > n1 || r == 0 || r > q.min(n2) {
        return Err(Error::Config(format!(
            "need 1 ≤ q ≤ n1 and 1 ≤ r ≤ min(q, n2), got q={q}, n1={n1}, n2={n2}, r={r}"
        )));
    }
    let mut rng = Rng::new(seed);
    let l = gaussian_mat(&mut rng, q, n1);
    let x = gaussian_mat(&mut rng, n1, r).into_matrix() * gaussian_mat(&mut rng, r, n2).into_matrix();
    let m0 = DenseMat::from_matrix(l.as_matrix() * x)?;
    let x0 = lrr_closed_form(&l, &m0)?;
    let op = LinOp::left_mult(l.as_matrix().clone(), n2)?;
    let inst = ProblemInstance::new(op, x0.clone())?;
    let rep = lrr_report(&inst)?;
    let solution_error = rep_error(&rep, &x0);
    let verdict = if q < n1 {
        Some(oracle_sharp(&inst, &OracleConfig::default(), &mut rng.substream(1))?)
    } else {
        None
    };
    let reg = solve_regularized(&inst.op, &inst.m0, 1e-2, &SolverConfig::default())?;
    let strong = rep.label.is_strong();
    let passed = solution_error < 1e-5
        && strong
        && verdict.is_none_or(|v| v == OracleVerdict::Refutes)
        && reg.local_check;
    Ok(LrrDemo {
        q,
        n1,
        n2,
        r,
        solution_error,
        strong,
        label: rep.label,
        oracle_sharp: verdict,
        regularized_stationary: reg.local_check,
        passed,
        report: rep.to_json(),
    })
}

fn lrr_report(inst: &ProblemInstance) -> Result<CertifyReport> {
    let tight = SolverConfig { tol_primal: 1e-10, tol_dual: 1e-10, ..SolverConfig::default() };
    let opts = ClassifyOptions { solver: tight, ..ClassifyOptions::default() };
    classify(inst, &opts)
}

fn rep_error(rep: &CertifyReport, x0: &DenseMat) -> f64 {
    rep.solver.relative_error * x0.fro_norm()
}

/// 2×2, `X₀ = diag(1, 0)` with only the diagonal observed.
pub fn fixture_diag2x2() -> ProblemInstance {
    let op = LinOp::entry_mask(2, 2, vec![(0, 0), (1, 1)]).expect("valid mask");
    let x0 = DenseMat::from_row_slice(2, 2, &[1., 0., 0., 0.]).expect("finite");
    ProblemInstance::new(op, x0).expect("consistent")
}

/// 3×3 rank-one completion with the lower-right 2×2 corner missing except `(1,1)`.
pub fn fixture_completion3x3() -> ProblemInstance {
    let omega = vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)];
    let op = LinOp::entry_mask(3, 3, omega).expect("valid mask");
    let x0 = DenseMat::from_row_slice(3, 3, &[4., 2., 4., 2., 1., 2., 4., 2., 4.]).expect("finite");
    ProblemInstance::new(op, x0).expect("consistent")
}

/// `min ‖X‖_*` s.t. `(1 1) X = (1 0)`, whose solution is `L†M₀`.
pub fn fixture_lrr2x2() -> ProblemInstance {
    let l = DMatrix::from_row_slice(1, 2, &[1., 1.]);
    let op = LinOp::left_mult(l, 2).expect("valid operator");
    let x0 = DenseMat::from_row_slice(2, 2, &[0.5, 0., 0.5, 0.]).expect("finite");
    ProblemInstance::new(op, x0).expect("consistent")
}

#[derive(Clone, Debug, Serialize)]
pub struct FixtureOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// The three fixed instances and the facts each must show.
pub fn run_fixtures() -> Result<Vec<FixtureOutcome>> {
    let opts = ClassifyOptions::default();
    let mut out = Vec::new();

    let rep = classify(&fixture_diag2x2(), &opts)?;
    out.push(FixtureOutcome {
        name: "diag2x2",
        passed: !rep.ri && rep.geometric_check && rep.label == Label::StrongNotSharp,
        detail: format!("ri={} geometric={} label={}", rep.ri, rep.geometric_check, rep.label.as_str()),
    });

    let rep = classify(&fixture_completion3x3(), &opts)?;
    let tau_exact = 0.4 + 0.52f64.sqrt();
    let near = |v: Option<f64>, target: f64, tol: f64| v.is_some_and(|x| (x - target).abs() < tol);
    out.push(FixtureOutcome {
        name: "completion3x3",
        passed: near(rep.tau, tau_exact, 1e-6)
            && near(rep.rho, 1.0, 0.02)
            && rep.zeta.is_some_and(|z| z < rep.gamma.unwrap_or(f64::INFINITY) + 1e-6 && z < 0.95)
            && rep.label == Label::StrongNotSharp,
        detail: format!(
            "tau={:?} rho={:?} zeta={:?} label={}",
            rep.tau,
            rep.rho,
            rep.zeta,
            rep.label.as_str()
        ),
    });

    let inst = fixture_lrr2x2();
    let rep = lrr_report(&inst)?;
    let err = rep_error(&rep, &inst.x0);
    let verdict = oracle_sharp(&inst, &OracleConfig::default(), &mut Rng::new(7))?;
    out.push(FixtureOutcome {
        name: "lrr2x2",
        passed: err < 1e-5 && verdict == OracleVerdict::Refutes && rep.label.is_strong(),
        detail: format!("solution_error={err:.2e} oracle_sharp={verdict:?} label={}", rep.label.as_str()),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(ensemble: Ensemble) -> ExperimentConfig {
        ExperimentConfig {
            ensemble,
            n: 4,
            rank_list: vec![1],
            m_grid: vec![6, 16],
            trials: 3,
            seed: 11,
            thresholds: Thresholds::default(),
            output_path: String::new(),
            solver: SolverConfig::default(),
        }
    }

    #[test]
    fn full_observation_rows_are_sharp() {
        for ens in [Ensemble::Gaussian, Ensemble::Completion] {
            let rows = run_experiment(&small(ens), 2).unwrap();
            assert_eq!(rows.len(), 6);
            for row in rows.iter().filter(|r| r.m == 16) {
                assert!(row.recovered && row.sharp, "{row:?}");
            }
            for row in &rows {
                assert!(!(row.sharp && row.strong_not_sharp));
                assert!(!(row.sharp || row.strong_not_sharp) || row.recovered);
                assert!(!tau_mismatch(row), "{row:?}");
            }
        }
    }

    #[test]
    fn alpha_system_matches_completion_fixture() {
        let tau = tau_by_alpha_system(&fixture_completion3x3(), 1e-8).unwrap().unwrap();
        assert!((tau - (0.4 + 0.52f64.sqrt())).abs() < 1e-9);
        assert_eq!(tau_by_alpha_system(&fixture_diag2x2(), 1e-8).unwrap(), None);
    }

    #[test]
    fn trial_seeds_differ() {
        let a = trial_seed(1, 2, 10, 0);
        assert_ne!(a, trial_seed(1, 2, 10, 1));
        assert_ne!(a, trial_seed(1, 2, 11, 0));
        assert_ne!(a, trial_seed(2, 2, 10, 0));
    }

    #[test]
    fn config_rejects_oversized_m() {
        let mut cfg = small(Ensemble::Completion);
        cfg.m_grid = vec![17];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn fixtures_pass() {
        for f in run_fixtures().unwrap() {
            assert!(f.passed, "{}: {}", f.name, f.detail);
        }
    }

    #[test]
    fn demos_pass_small() {
        let d = demo_minimal(5, 2, 3).unwrap();
        assert!(d.passed, "{d:?}");
        let l = demo_lrr(2, 4, 3, 2, 5).unwrap();
        assert!(l.passed, "{l:?}");
    }
}
