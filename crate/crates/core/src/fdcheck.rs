//! Validation harness: central finite differences against untaped reference
//! objectives, plus an independent simplex minimizer.
//!
//! Everything here deliberately avoids the gradient tape. Objective values
//! come from the plain forward-evaluation APIs, derivatives from central
//! differences, and the simplex reference from projected gradient descent,
//! so agreement with the tape is a two-route check rather than a tautology.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::SparseInstance;
use crate::lista::{self, ListaParams};
use crate::mat;
use crate::math;
use crate::policy::{self, PolicyParams};
use crate::stopping;
use crate::train::{Channels, FlatGrads, Stage2Mode};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;
/// Relative-error denominators are floored here: central differences carry
/// `O(|f| * eps / h)` rounding noise, so coordinates whose true gradient
/// sits at noise level are compared absolutely.
pub const FD_FLOOR: f64 = 1e-3;

/// `|analytic - fd| / max(|analytic|, |fd|, FD_FLOOR)`, or an error message.
pub fn compare(analytic: f64, fd: f64, what: &str) -> Result<(), String> {
    let denom = math::abs(analytic).max(math::abs(fd)).max(FD_FLOOR);
    let rel = math::abs(analytic - fd) / denom;
    if rel < FD_TOL {
        Ok(())
    } else {
        Err(format!(
            "{what}: analytic {analytic:.12e} vs fd {fd:.12e} (rel {rel:.3e})"
        ))
    }
}

// ---- parameter flattening --------------------------------------------------

pub fn theta_to_vec(theta: &ListaParams) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &theta.layers {
        out.push(l.lambda);
        out.extend_from_slice(l.w1.data());
        out.extend_from_slice(l.w2.data());
    }
    out
}

pub fn vec_to_theta(theta: &mut ListaParams, flat: &[f64]) {
    let mut k = 0;
    for l in &mut theta.layers {
        l.lambda = flat[k];
        k += 1;
        let w1 = l.w1.data_mut();
        w1.copy_from_slice(&flat[k..k + w1.len()]);
        k += w1.len();
        let w2 = l.w2.data_mut();
        w2.copy_from_slice(&flat[k..k + w2.len()]);
        k += w2.len();
    }
    assert_eq!(k, flat.len());
}

pub fn phi_to_vec(phi: &PolicyParams) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend_from_slice(phi.w_in.data());
    out.extend_from_slice(&phi.b_in);
    out.extend_from_slice(phi.w_mid.data());
    out.extend_from_slice(&phi.b_mid);
    out.extend_from_slice(&phi.w_out);
    out.push(phi.b_out);
    for e in &phi.layer_embed {
        out.extend_from_slice(e);
    }
    out
}

pub fn vec_to_phi(phi: &mut PolicyParams, flat: &[f64]) {
    let mut k = 0;
    let w_in = phi.w_in.data_mut();
    w_in.copy_from_slice(&flat[k..k + w_in.len()]);
    k += w_in.len();
    let nb = phi.b_in.len();
    phi.b_in.copy_from_slice(&flat[k..k + nb]);
    k += nb;
    let w_mid = phi.w_mid.data_mut();
    w_mid.copy_from_slice(&flat[k..k + w_mid.len()]);
    k += w_mid.len();
    let nm = phi.b_mid.len();
    phi.b_mid.copy_from_slice(&flat[k..k + nm]);
    k += nm;
    let no = phi.w_out.len();
    phi.w_out.copy_from_slice(&flat[k..k + no]);
    k += no;
    phi.b_out = flat[k];
    k += 1;
    for e in &mut phi.layer_embed {
        let ne = e.len();
        e.copy_from_slice(&flat[k..k + ne]);
        k += ne;
    }
    assert_eq!(k, flat.len());
}

pub fn grads_to_vec(grads: &FlatGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for t in &grads.tensors {
        out.extend_from_slice(t);
    }
    out
}

// ---- untaped reference objectives -------------------------------------------

pub fn baseline_objective(theta: &ListaParams, batch: &[&SparseInstance], gamma: f64) -> f64 {
    batch
        .iter()
        .map(|inst| {
            let path = lista::forward(theta, &inst.b).unwrap();
            lista::baseline_loss(&path, &inst.x_star, gamma)
        })
        .sum()
}

pub fn stage1_objective(
    theta: &ListaParams,
    batch: &[&SparseInstance],
    beta: f64,
    channels: &Channels,
) -> f64 {
    batch
        .iter()
        .map(|inst| {
            let path = lista::forward(theta, &inst.b).unwrap();
            let losses = channels.restrict(&stopping::loss_path(&path.states, &inst.x_star));
            let q = stopping::oracle_q(&losses, beta);
            mat::dot(q.probs(), &losses)
        })
        .sum()
}

fn policy_q(
    theta: &ListaParams,
    phi: &PolicyParams,
    inst: &SparseInstance,
    channels: &Channels,
) -> (Vec<f64>, Vec<f64>) {
    let path = lista::forward(theta, &inst.b).unwrap();
    let losses = channels.restrict(&stopping::loss_path(&path.states, &inst.x_star));
    let states: Vec<&[f64]> = channels.layers().iter().map(|&t| path.state(t)).collect();
    let q = policy::rollout_states(phi, &inst.b, &states, None);
    (q.probs().to_vec(), losses)
}

pub fn stage2_objective(
    theta: &ListaParams,
    phi: &PolicyParams,
    batch: &[&SparseInstance],
    beta: f64,
    mode: Stage2Mode,
    channels: &Channels,
) -> f64 {
    batch
        .iter()
        .map(|inst| {
            let (qp, losses) = policy_q(theta, phi, inst, channels);
            match mode {
                Stage2Mode::ForwardKl => {
                    let q_star = stopping::oracle_q(&losses, beta);
                    -q_star
                        .probs()
                        .iter()
                        .zip(qp.iter())
                        .map(|(&s, &p)| s * math::ln_floored(p))
                        .sum::<f64>()
                }
                Stage2Mode::Map => {
                    let pos = stopping::map_stop(&losses);
                    -math::ln_floored(qp[pos - 1])
                }
            }
        })
        .sum()
}

pub fn stage3_objective(
    theta: &ListaParams,
    phi: &PolicyParams,
    batch: &[&SparseInstance],
    beta: f64,
    channels: &Channels,
) -> f64 {
    let k = channels.count() as f64;
    batch
        .iter()
        .map(|inst| {
            let (qp, losses) = policy_q(theta, phi, inst, channels);
            let expected = mat::dot(&qp, &losses);
            let entropy = stopping::entropy(&qp);
            expected + beta * (math::ln(k) - entropy)
        })
        .sum()
}

// ---- finite-difference drivers ----------------------------------------------

pub fn fd_theta(theta: &ListaParams, mut f: impl FnMut(&ListaParams) -> f64) -> Vec<f64> {
    let base = theta_to_vec(theta);
    let mut probe = theta.clone();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus[i] += FD_STEP;
            vec_to_theta(&mut probe, &plus);
            let up = f(&probe);
            let mut minus = base.clone();
            minus[i] -= FD_STEP;
            vec_to_theta(&mut probe, &minus);
            let down = f(&probe);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn fd_phi(phi: &PolicyParams, mut f: impl FnMut(&PolicyParams) -> f64) -> Vec<f64> {
    let base = phi_to_vec(phi);
    let mut probe = phi.clone();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            plus[i] += FD_STEP;
            vec_to_phi(&mut probe, &plus);
            let up = f(&probe);
            let mut minus = base.clone();
            minus[i] -= FD_STEP;
            vec_to_phi(&mut probe, &minus);
            let down = f(&probe);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

// ---- simplex reference minimizer ---------------------------------------------

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let candidate = (css - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Projected gradient descent on `q -> <l, q> - beta H(q)` with an
/// approximate exact line search over a dyadic step sweep.
pub fn pgd_simplex_minimizer(losses: &[f64], beta: f64) -> Vec<f64> {
    let t = losses.len();
    let mut q = vec![1.0 / t as f64; t];
    let f = |q: &[f64]| mat::dot(losses, q) - beta * stopping::entropy(q);
    let mut fq = f(&q);
    for _ in 0..20_000 {
        let grad: Vec<f64> = losses
            .iter()
            .zip(q.iter())
            .map(|(&l, &p)| l + beta * (1.0 + math::ln_floored(p)))
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut step = 2.0;
        for _ in 0..55 {
            let trial: Vec<f64> = q
                .iter()
                .zip(grad.iter())
                .map(|(&p, &g)| p - step * g)
                .collect();
            let proj = project_simplex(&trial);
            let fp = f(&proj);
            if best.as_ref().is_none_or(|(b, _)| fp < *b) {
                best = Some((fp, proj));
            }
            step *= 0.5;
        }
        let (fp, proj) = best.unwrap();
        if fp >= fq {
            break;
        }
        q = proj;
        fq = fp;
    }
    q
}
