//! Classical LASSO baselines: proximal gradient (ISTA), its accelerated
//! variant (FISTA), a power-iteration step-size rule, and grid-search
//! hyperparameter tuning.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::SparseInstance;
use crate::mat::{self, DenseMat};
use crate::math;
use crate::metrics;

/// Hyperparameters of one solver run: l1 weight, gradient step, iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoConfig {
    pub rho: f64,
    pub step: f64,
    pub max_iters: usize,
}

/// Iterates left the finite range; names the first bad iteration (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct Diverged {
    pub iter: usize,
}

impl core::fmt::Display for Diverged {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "solver diverged at iteration {}", self.iter)
    }
}

/// Proximal gradient descent on `0.5 ||b - Ax||^2 + rho ||x||_1` from
/// `x_0 = 0`. Returns the full iterate path `x_1..x_T`.
pub fn ista_solve(
    a: &DenseMat,
    b: &[f64],
    cfg: &LassoConfig,
) -> Result<Vec<Vec<f64>>, Diverged> {
    let n = a.cols();
    let lam = cfg.rho * cfg.step;
    let mut x = vec![0.0; n];
    let mut path = Vec::with_capacity(cfg.max_iters);
    for it in 1..=cfg.max_iters {
        let mut r = a.matvec(&x);
        for (ri, bi) in r.iter_mut().zip(b.iter()) {
            *ri -= bi;
        }
        let g = a.matvec_t(&r);
        let y: Vec<f64> = x
            .iter()
            .zip(g.iter())
            .map(|(xi, gi)| xi - cfg.step * gi)
            .collect();
        x = mat::soft_threshold(&y, lam);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Diverged { iter: it });
        }
        path.push(x.clone());
    }
    Ok(path)
}

/// Accelerated proximal gradient with the Nesterov momentum sequence
/// `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`. Returns the `x` iterate path.
pub fn fista_solve(
    a: &DenseMat,
    b: &[f64],
    cfg: &LassoConfig,
) -> Result<Vec<Vec<f64>>, Diverged> {
    fista_with_momentum(a, b, cfg, true)
}

/// With `nesterov` off the extrapolation point is the previous iterate, which
/// reduces the recursion to plain proximal gradient.
pub(crate) fn fista_with_momentum(
    a: &DenseMat,
    b: &[f64],
    cfg: &LassoConfig,
    nesterov: bool,
) -> Result<Vec<Vec<f64>>, Diverged> {
    let n = a.cols();
    let lam = cfg.rho * cfg.step;
    let mut x_prev = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut t_k = 1.0;
    let mut path = Vec::with_capacity(cfg.max_iters);
    for it in 1..=cfg.max_iters {
        let mut r = a.matvec(&y);
        for (ri, bi) in r.iter_mut().zip(b.iter()) {
            *ri -= bi;
        }
        let g = a.matvec_t(&r);
        let z: Vec<f64> = y
            .iter()
            .zip(g.iter())
            .map(|(yi, gi)| yi - cfg.step * gi)
            .collect();
        let x = mat::soft_threshold(&z, lam);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Diverged { iter: it });
        }
        let t_next = 0.5 * (1.0 + math::sqrt(1.0 + 4.0 * t_k * t_k));
        let coeff = if nesterov { (t_k - 1.0) / t_next } else { 0.0 };
        y = x
            .iter()
            .zip(x_prev.iter())
            .map(|(xi, pi)| xi + coeff * (xi - pi))
            .collect();
        t_k = t_next;
        x_prev = x.clone();
        path.push(x);
    }
    Ok(path)
}

/// LASSO objective `0.5 ||b - Ax||^2 + rho ||x||_1`.
pub fn lasso_objective(a: &DenseMat, b: &[f64], x: &[f64], rho: f64) -> f64 {
    let mut r = a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b.iter()) {
        *ri -= bi;
    }
    let l1: f64 = x.iter().map(|&v| math::abs(v)).sum();
    0.5 * mat::sq_norm(&r) + rho * l1
}

/// Largest eigenvalue of `A^T A` by power iteration (deterministic all-ones
/// start). Defaults elsewhere: 50 iterations, tolerance 1e-9.
pub fn power_iteration_lmax(a: &DenseMat, max_iters: usize, tol: f64) -> f64 {
    let n = a.cols();
    let mut v = vec![1.0 / math::sqrt(n as f64); n];
    let mut lam = 0.0;
    for _ in 0..max_iters {
        let av = a.matvec(&v);
        let atav = a.matvec_t(&av);
        let norm = mat::l2_norm(&atav);
        if norm == 0.0 {
            return 0.0;
        }
        let next_lam = mat::dot(&v, &atav);
        for (vi, wi) in v.iter_mut().zip(atav.iter()) {
            *vi = wi / norm;
        }
        if math::abs(next_lam - lam) <= tol * math::abs(next_lam) {
            return next_lam;
        }
        lam = next_lam;
    }
    lam
}

/// `1 / lambda_max(A^T A)`, the largest step with guaranteed monotone
/// descent for proximal gradient.
pub fn auto_step(a: &DenseMat) -> f64 {
    1.0 / power_iteration_lmax(a, 50, 1e-9)
}

/// Ten log-spaced l1 weights in `[1e-4, 1]`.
pub fn default_rho_grid() -> Vec<f64> {
    let lo = -4.0;
    let hi = 0.0;
    (0..10)
        .map(|i| math::pow(10.0, lo + (hi - lo) * i as f64 / 9.0))
        .collect()
}

/// Which solver a tuned configuration belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Ista,
    Fista,
}

/// Exhaustive grid search minimizing pooled NMSE at iteration `t` over a
/// tuning subset. Ties break to the smaller `rho`, then the smaller `step`.
/// Grid points whose solves diverge are skipped.
///
/// Panics on an empty subset or empty grids.
pub fn grid_search(
    a: &DenseMat,
    subset: &[&SparseInstance],
    kind: SolverKind,
    rho_grid: &[f64],
    step_grid: &[f64],
    t: usize,
) -> (LassoConfig, f64) {
    assert!(!subset.is_empty(), "grid_search: empty tuning subset");
    assert!(
        !rho_grid.is_empty() && !step_grid.is_empty(),
        "grid_search: empty grid"
    );
    let mut rhos = rho_grid.to_vec();
    let mut steps = step_grid.to_vec();
    rhos.sort_by(|x, y| x.partial_cmp(y).unwrap());
    steps.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let mut best: Option<(LassoConfig, f64)> = None;
    for &rho in &rhos {
        for &step in &steps {
            let cfg = LassoConfig {
                rho,
                step,
                max_iters: t,
            };
            let mut estimates = Vec::with_capacity(subset.len());
            let mut truths = Vec::with_capacity(subset.len());
            let mut ok = true;
            for inst in subset {
                match solve_last(a, &inst.b, &cfg, kind) {
                    Ok(x) => {
                        estimates.push(x);
                        truths.push(inst.x_star.clone());
                    }
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let nmse = metrics::nmse_db(&estimates, &truths);
            // Strict improvement keeps the first (smallest rho, then step)
            // config on ties.
            if best.map_or(true, |(_, b)| nmse < b) {
                best = Some((cfg, nmse));
            }
        }
    }
    best.expect("grid_search: every grid point diverged")
}

fn solve_last(
    a: &DenseMat,
    b: &[f64],
    cfg: &LassoConfig,
    kind: SolverKind,
) -> Result<Vec<f64>, Diverged> {
    let path = match kind {
        SolverKind::Ista => ista_solve(a, b, cfg)?,
        SolverKind::Fista => fista_solve(a, b, cfg)?,
    };
    Ok(path.into_iter().next_back().expect("empty path"))
}
