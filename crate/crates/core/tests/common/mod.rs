//! Instance corpora shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use strongmin::certify::ProblemInstance;
use strongmin::cvxsolvers::lrr_closed_form;
use strongmin::harness::{
    fixture_completion3x3, fixture_diag2x2, fixture_lrr2x2, trial_instance, Ensemble,
};
use strongmin::measure_ops::{minimal_phi, LinOp};
use strongmin::numkernel::{gaussian_mat, svd_full, DenseMat, Rng};
use strongmin::subspaces::compact_svd;

pub fn rank_r(rng: &mut Rng, n1: usize, n2: usize, r: usize) -> DenseMat {
    let w = gaussian_mat(rng, n1, r);
    let h = gaussian_mat(rng, n2, r);
    DenseMat::from_matrix(w.as_matrix() * h.as_matrix().transpose()).unwrap()
}

/// Gaussian and completion instances with `n ≤ max_n`, rank below `n` and `m` spread over `1..=n²`.
pub fn random_corpus(seed: u64, count: usize, max_n: usize) -> Vec<(String, ProblemInstance)> {
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|k| {
            let n = 2 + (rng.uniform() * (max_n - 1) as f64) as usize;
            let n = n.min(max_n);
            let r = 1 + (rng.uniform() * (n - 1).min(3) as f64) as usize;
            let m = 1 + (rng.uniform() * (n * n) as f64) as usize;
            let m = m.min(n * n);
            let ens = if k % 2 == 0 { Ensemble::Gaussian } else { Ensemble::Completion };
            let seed = (rng.uniform() * 1e15) as u64;
            let name = format!("{ens:?} n={n} r={r} m={m} seed={seed}");
            (name, trial_instance(ens, n, r, m, seed).unwrap())
        })
        .collect()
}

/// Instances of size 2×2 and 3×3: random ensembles, minimal-measurement
/// families, low-rank representation systems, masks, and the fixed fixtures.
pub fn tiny_corpus(seed: u64) -> Vec<(String, ProblemInstance)> {
    let mut rng = Rng::new(seed);
    let mut out = vec![
        ("diag2x2".to_string(), fixture_diag2x2()),
        ("completion3x3".to_string(), fixture_completion3x3()),
        ("lrr2x2".to_string(), fixture_lrr2x2()),
    ];
    for k in 0..24 {
        let n = 2 + k % 2;
        let r = 1 + (k / 2) % (n - 1);
        let m = 1 + (rng.uniform() * (n * n) as f64) as usize;
        let ens = if k % 4 < 2 { Ensemble::Gaussian } else { Ensemble::Completion };
        let s = (rng.uniform() * 1e12) as u64;
        out.push((format!("{ens:?} n={n} r={r} m={m}"), trial_instance(ens, n, r, m.min(n * n), s).unwrap()));
    }
    for k in 0..12 {
        let n = 2 + k % 2;
        let r = 1 + (k / 2) % (n - 1).max(1);
        let x0 = rank_r(&mut rng, n, n, r);
        let op = minimal_phi(&compact_svd(&x0).unwrap(), &mut rng);
        out.push((format!("minimal n={n} r={r}"), ProblemInstance::new(op, x0).unwrap()));
    }
    for k in 0..12 {
        let (q, n1, n2) = [(1, 2, 2), (1, 3, 2), (2, 3, 2), (1, 2, 3), (2, 3, 3), (1, 3, 3)][k % 6];
        let l = gaussian_mat(&mut rng, q, n1);
        let m0 = DenseMat::from_matrix(l.as_matrix() * rank_r(&mut rng, n1, n2, 1).into_matrix()).unwrap();
        let x0 = lrr_closed_form(&l, &m0).unwrap();
        let op = LinOp::left_mult(l.into_matrix(), n2).unwrap();
        out.push((format!("lrr q={q} n1={n1} n2={n2}"), ProblemInstance::new(op, x0).unwrap()));
    }
    for k in 0..12 {
        let mask = 7 + 41 * k;
        let omega: Vec<(usize, usize)> = (0..9).filter(|b| mask >> b & 1 == 1).map(|b| (b % 3, b / 3)).collect();
        let x0 = rank_r(&mut rng, 3, 3, 1);
        let op = LinOp::entry_mask(3, 3, omega).unwrap();
        out.push((format!("mask {mask:09b}"), ProblemInstance::new(op, x0).unwrap()));
    }
    out
}

/// A pair `(X₀, Y₀)` with `Y₀ ∈ ∂‖X₀‖_*` having exactly `p` unit singular values.
pub fn subgradient_pair(rng: &mut Rng, n1: usize, n2: usize, r: usize, p: usize) -> (DenseMat, DenseMat) {
    let x0 = rank_r(rng, n1, n2, r);
    let full = svd_full(&x0).unwrap();
    let (a, b) = (n1 - r, n2 - r);
    let g = gaussian_mat(rng, a, b);
    let gs = svd_full(&g).unwrap();
    let k = a.min(b);
    let mut d = DMatrix::zeros(a, b);
    for i in 0..k {
        d[(i, i)] = if i < p - r { 1.0 } else { 0.9 * rng.uniform() };
    }
    let w = &gs.u * d * gs.v.transpose();
    let u_j = full.u.columns(r, a);
    let v_k = full.v.columns(r, b);
    let y = full.u.columns(0, r) * full.v.columns(0, r).transpose() + u_j * w * v_k.transpose();
    (x0, DenseMat::from_matrix(y).unwrap())
}
