//! Stop-time distributions and the objectives built on them.
//!
//! Conventions used throughout:
//! - Stop positions are 1-based in public APIs (`map_stop` returning 1 means
//!   "stop at the first output").
//! - Per-position losses are negative log-likelihoods; for regression with a
//!   unit-variance Gaussian likelihood this is `0.5 * ||x_t - x*||^2` with
//!   the additive constant dropped.
//! - Distribution math runs in log space with log-sum-exp; `0 * log 0` is
//!   treated as zero via a `1e-12` floor inside logarithms.

use alloc::vec::Vec;

use crate::mat;
use crate::math;

/// Probability mass over stop positions `1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct StopDistribution {
    probs: Vec<f64>,
}

impl StopDistribution {
    /// Wraps a probability vector, checking simplex membership.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        assert!(!probs.is_empty(), "StopDistribution: empty");
        let mut sum = 0.0;
        for &p in &probs {
            assert!(
                (-1e-12..=1.0 + 1e-9).contains(&p),
                "StopDistribution: entry {p} outside [0, 1]"
            );
            sum += p;
        }
        assert!(
            (sum - 1.0).abs() <= 1e-9,
            "StopDistribution: mass sums to {sum}"
        );
        StopDistribution { probs }
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Mass at 1-based position `t`.
    pub fn prob(&self, t: usize) -> f64 {
        self.probs[t - 1]
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    /// 1-based argmax; ties break to the earliest position.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// Shannon entropy in nats with the `0 log 0 = 0` convention.
pub fn entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &pi in p {
        h -= pi * math::ln_floored(pi);
    }
    h
}

/// Per-position NLL losses `0.5 * ||x_t - x*||^2` along a forward path.
pub fn loss_path(states: &[Vec<f64>], x_star: &[f64]) -> Vec<f64> {
    states
        .iter()
        .map(|x| 0.5 * mat::sq_dist(x, x_star))
        .collect()
}

/// Stop-time distribution induced by sequential stop probabilities
/// `pi[0..T-1]`: `q(t) = pi_t * prod_{s<t} (1 - pi_s)`, with the survival
/// mass at the final position.
///
/// Panics if any `pi_t` is outside `[0, 1]`.
pub fn induced_q(pi: &[f64]) -> StopDistribution {
    for &p in pi {
        assert!(
            (0.0..=1.0).contains(&p),
            "induced_q: stop probability {p} outside [0, 1]"
        );
    }
    let t_total = pi.len() + 1;
    let mut probs = Vec::with_capacity(t_total);
    let mut survive = 1.0;
    for &p in pi {
        probs.push(p * survive);
        survive *= 1.0 - p;
    }
    probs.push(survive);
    StopDistribution { probs }
}

/// Survival probabilities `s_t = prod_{tau < t} (1 - pi_tau)` for
/// `t = 1..=len(pi)` (so `s_1 = 1`).
pub fn survival(pi: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(pi.len());
    let mut s = 1.0;
    for &p in pi {
        out.push(s);
        s *= 1.0 - p;
    }
    out
}

/// Label-aware oracle stop distribution: softmax of `-losses / beta`,
/// computed via log-sum-exp.
pub fn oracle_q(losses: &[f64], beta: f64) -> StopDistribution {
    assert!(beta > 0.0, "oracle_q: beta must be positive, got {beta}");
    // `scale * l` (not `-l / beta`) so the value path is bit-identical to
    // the taped route, which records the same affine form.
    let scale = -1.0 / beta;
    let logits: Vec<f64> = losses.iter().map(|&l| scale * l).collect();
    let z = math::logsumexp(&logits);
    let probs: Vec<f64> = logits.iter().map(|&l| math::exp(l - z)).collect();
    StopDistribution { probs }
}

/// Expected loss under `q` minus `beta` times its entropy.
pub fn joint_loss(losses: &[f64], q: &StopDistribution, beta: f64) -> f64 {
    assert_eq!(losses.len(), q.len(), "joint_loss: length mismatch");
    mat::dot(losses, q.probs()) - beta * q.entropy()
}

/// Expected log-likelihood under `q` minus `beta * KL(q || uniform_T)`.
pub fn beta_vae_objective(losses: &[f64], q: &StopDistribution, beta: f64) -> f64 {
    assert_eq!(losses.len(), q.len(), "beta_vae_objective: length mismatch");
    let t = losses.len() as f64;
    let kl_to_uniform = math::ln(t) - q.entropy();
    -mat::dot(losses, q.probs()) - beta * kl_to_uniform
}

/// Cross-entropy `-sum_t q*(t) log q_phi(t)`, the forward KL up to the
/// constant `H(q*)` which is dropped.
pub fn forward_kl(q_star: &StopDistribution, q_phi: &StopDistribution) -> f64 {
    forward_kl_diag(q_star, q_phi).0
}

/// Cross-entropy plus the count of positions where `q_phi` needed the
/// probability floor while `q*` carried mass.
pub fn forward_kl_diag(q_star: &StopDistribution, q_phi: &StopDistribution) -> (f64, usize) {
    assert_eq!(q_star.len(), q_phi.len(), "forward_kl: length mismatch");
    let mut ce = 0.0;
    let mut floored = 0;
    for (&ps, &pp) in q_star.probs().iter().zip(q_phi.probs().iter()) {
        if ps > 0.0 && pp <= math::LN_FLOOR {
            floored += 1;
        }
        ce -= ps * math::ln_floored(pp);
    }
    (ce, floored)
}

/// `KL(q_phi || q*)` computed through the stable identity
/// `joint_loss(l, q_phi, beta) / beta + logsumexp(-l / beta)`.
pub fn reverse_kl(q_phi: &StopDistribution, losses: &[f64], beta: f64) -> f64 {
    assert!(beta > 0.0, "reverse_kl: beta must be positive, got {beta}");
    assert_eq!(losses.len(), q_phi.len(), "reverse_kl: length mismatch");
    let scale = -1.0 / beta;
    let logits: Vec<f64> = losses.iter().map(|&l| scale * l).collect();
    joint_loss(losses, q_phi, beta) / beta + math::logsumexp(&logits)
}

/// Closed-form maximum-entropy return of the stop/continue policy `pi`:
/// expected reward `-beta * loss` at the stop position plus the trajectory
/// entropy, which equals `sum_t q(t) * (-beta * l_t) + H(q)` for the induced
/// stop distribution.
pub fn maxent_rl_objective(pi: &[f64], losses: &[f64], beta: f64) -> f64 {
    let q = induced_q(pi);
    assert_eq!(losses.len(), q.len(), "maxent_rl_objective: length mismatch");
    -beta * mat::dot(losses, q.probs()) + q.entropy()
}

/// 1-based position of the smallest loss; ties break to the earliest. This
/// is the mode of the oracle distribution for every `beta`.
pub fn map_stop(losses: &[f64]) -> usize {
    assert!(!losses.is_empty(), "map_stop: empty loss path");
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = i;
        }
    }
    best + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn induced_q_half_half() {
        let q = induced_q(&[0.5, 0.5]);
        assert_eq!(q.probs(), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn induced_q_never_stop() {
        let q = induced_q(&[0.0, 0.0, 0.0]);
        assert_eq!(q.probs(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn induced_q_immediate_stop() {
        let q = induced_q(&[1.0, 0.3]);
        assert_eq!(q.probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "outside [0, 1]")]
    fn induced_q_rejects_bad_pi() {
        induced_q(&[1.2]);
    }

    #[test]
    fn oracle_uniform_on_constant_losses() {
        let q = oracle_q(&[3.3, 3.3, 3.3, 3.3], 0.7);
        for &p in q.probs() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_softmax_values() {
        let e = core::f64::consts::E;
        let q = oracle_q(&[1.0, 0.0], 1.0);
        assert!((q.prob(1) - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((q.prob(2) - e / (1.0 + e)).abs() < 1e-12);

        let q = oracle_q(&[1.0, 0.0], 0.5);
        let em2 = (-2.0f64).exp();
        assert!((q.prob(1) - em2 / (1.0 + em2)).abs() < 1e-12);
        assert!((q.prob(2) - 1.0 / (1.0 + em2)).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_expectation_and_entropy() {
        let q = StopDistribution::from_probs(vec![0.5, 0.5]);
        assert!((joint_loss(&[0.0, 2.0], &q, 0.0) - 1.0).abs() < 1e-15);
        let with_entropy = joint_loss(&[0.0, 2.0], &q, 1.0);
        assert!((with_entropy - (1.0 - (2.0f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_degenerate_at_argmin() {
        let q = StopDistribution::from_probs(vec![0.0, 1.0, 0.0]);
        assert_eq!(joint_loss(&[5.0, 1.5, 2.0], &q, 0.0), 1.5);
    }

    #[test]
    fn beta_vae_equals_neg_joint_minus_beta_ln_t() {
        // Lemma-style identity for arbitrary q, not just induced ones.
        let mut s = crate::rng::StreamKey::root(9).stream();
        for _ in 0..1000 {
            let t = 2 + (s.below(6) as usize);
            let mut q: Vec<f64> = (0..t).map(|_| s.uniform()).collect();
            let z: f64 = q.iter().sum();
            for p in &mut q {
                *p /= z;
            }
            let q = StopDistribution::from_probs(q);
            let losses: Vec<f64> = (0..t).map(|_| s.uniform() * 4.0).collect();
            let beta = 0.05 + s.uniform();
            let j = beta_vae_objective(&losses, &q, beta);
            let l = joint_loss(&losses, &q, beta);
            assert!((j - (-l - beta * math::ln(t as f64))).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_vae_kl_term_vanishes_for_uniform_q() {
        let losses = [0.4, 0.2, 0.9, 0.1];
        let q = StopDistribution::from_probs(vec![0.25; 4]);
        let j = beta_vae_objective(&losses, &q, 2.0);
        let expectation = -mat::dot(&losses, q.probs());
        assert!((j - expectation).abs() < 1e-12);
    }

    #[test]
    fn beta_vae_with_beta_zero_is_expected_loglik() {
        let losses = [0.4, 0.2];
        let q = StopDistribution::from_probs(vec![0.7, 0.3]);
        let j = beta_vae_objective(&losses, &q, 0.0);
        assert!((j + mat::dot(&losses, q.probs())).abs() < 1e-15);
    }

    #[test]
    fn forward_kl_point_mass() {
        let q_star = StopDistribution::from_probs(vec![0.0, 1.0, 0.0]);
        let q_phi = StopDistribution::from_probs(vec![0.2, 0.5, 0.3]);
        assert!((forward_kl(&q_star, &q_phi) + (0.5f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_kl_uniform_self_is_ln_t() {
        let u = StopDistribution::from_probs(vec![0.25; 4]);
        assert!((forward_kl(&u, &u) - (4.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_kl_flags_floored_positions() {
        let q_star = StopDistribution::from_probs(vec![0.5, 0.5]);
        let q_phi = StopDistribution::from_probs(vec![1.0, 0.0]);
        let (ce, floored) = forward_kl_diag(&q_star, &q_phi);
        assert_eq!(floored, 1);
        assert!(ce.is_finite());
    }

    #[test]
    fn reverse_kl_zero_at_oracle() {
        let losses = [0.3, 1.1, 0.05, 0.7];
        let beta = 0.4;
        let q = oracle_q(&losses, beta);
        assert!(reverse_kl(&q, &losses, beta).abs() < 1e-10);
    }

    #[test]
    fn reverse_kl_matches_direct_sum() {
        let mut s = crate::rng::StreamKey::root(17).stream();
        for _ in 0..1000 {
            let t = 2 + (s.below(6) as usize);
            let losses: Vec<f64> = (0..t).map(|_| s.uniform() * 3.0).collect();
            let beta = 0.1 + s.uniform();
            let pi: Vec<f64> = (0..t - 1).map(|_| 0.05 + 0.9 * s.uniform()).collect();
            let q = induced_q(&pi);
            let q_star = oracle_q(&losses, beta);
            let mut direct = 0.0;
            for (&qp, &qs) in q.probs().iter().zip(q_star.probs().iter()) {
                if qp > 0.0 {
                    direct += qp * (math::ln(qp) - math::ln(qs));
                }
            }
            let stable = reverse_kl(&q, &losses, beta);
            assert!(
                (stable - direct).abs() < 1e-10,
                "identity broke: {stable} vs {direct}"
            );
            assert!(stable >= -1e-12, "KL must be nonnegative, got {stable}");
        }
    }

    #[test]
    fn maxent_entropy_chain_rule_example() {
        // H(q) for pi = [0.5, 0.5] via survival-weighted binary entropies.
        let pi = [0.5, 0.5];
        let q = induced_q(&pi);
        let ln2 = (2.0f64).ln();
        let expect = 1.0 * ln2 + 0.5 * ln2;
        assert!((q.entropy() - expect).abs() < 1e-12);
        assert!((q.entropy() - 1.0397207708399179).abs() < 1e-10);
    }

    #[test]
    fn maxent_equals_reverse_kl_with_beta_scaled_losses() {
        // The bridge between the stop/continue return and KL(q || q*): with
        // the oracle convention q* = softmax(-l / beta), scaling the losses
        // by beta^2 makes softmax(-(beta^2 l) / beta) = softmax(-beta l), so
        //   -maxent(pi, l, beta) + logsumexp(-beta l) = KL(q || softmax(-beta l))
        //                                            = reverse_kl(q, beta^2 l, beta).
        let mut s = crate::rng::StreamKey::root(23).stream();
        for _ in 0..1000 {
            let t = 2 + (s.below(5) as usize);
            let losses: Vec<f64> = (0..t).map(|_| s.uniform() * 2.0).collect();
            let beta = 0.2 + s.uniform();
            let pi: Vec<f64> = (0..t - 1).map(|_| 0.05 + 0.9 * s.uniform()).collect();
            let q = induced_q(&pi);

            let m = maxent_rl_objective(&pi, &losses, beta);
            let logits: Vec<f64> = losses.iter().map(|&l| -beta * l).collect();
            let lhs = -m + math::logsumexp(&logits);

            let scaled: Vec<f64> = losses.iter().map(|&l| beta * beta * l).collect();
            let rhs = reverse_kl(&q, &scaled, beta);
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn maxent_prefers_uniform_q_on_equal_losses() {
        // With constant losses the reward term is constant, so the maximum
        // over pi (grid-searched for T = 3) is where induced q is uniform.
        let losses = [1.7, 1.7, 1.7];
        let beta = 0.3;
        let mut best = f64::NEG_INFINITY;
        let mut best_pi = [0.0, 0.0];
        let steps = 200;
        for i in 1..steps {
            for j in 1..steps {
                let pi = [i as f64 / steps as f64, j as f64 / steps as f64];
                let v = maxent_rl_objective(&pi, &losses, beta);
                if v > best {
                    best = v;
                    best_pi = pi;
                }
            }
        }
        let q = induced_q(&best_pi);
        for &p in q.probs() {
            assert!((p - 1.0 / 3.0).abs() < 0.02, "grid argmax q = {:?}", q.probs());
        }
    }

    #[test]
    fn map_stop_argmin() {
        assert_eq!(map_stop(&[3.0, 1.0, 2.0]), 2);
    }

    #[test]
    fn map_stop_tie_breaks_early() {
        assert_eq!(map_stop(&[1.0, 1.0, 5.0]), 1);
    }

    #[test]
    fn oracle_argmax_is_map_stop_for_all_beta() {
        let mut s = crate::rng::StreamKey::root(31).stream();
        for trial in 0..1000 {
            let t = 2 + (s.below(8) as usize);
            let losses: Vec<f64> = (0..t).map(|_| s.uniform() * 5.0).collect();
            let beta = [1e-3, 0.1, 1.0, 10.0][trial % 4];
            assert_eq!(oracle_q(&losses, beta).argmax(), map_stop(&losses));
        }
    }

    #[test]
    fn oracle_shift_invariance() {
        let mut s = crate::rng::StreamKey::root(37).stream();
        for _ in 0..200 {
            let losses: Vec<f64> = (0..5).map(|_| s.uniform() * 4.0).collect();
            let shift = 10.0 * (s.uniform() - 0.5);
            let shifted: Vec<f64> = losses.iter().map(|&l| l + shift).collect();
            let beta = 0.2 + s.uniform();
            let a = oracle_q(&losses, beta);
            let b = oracle_q(&shifted, beta);
            for (x, y) in a.probs().iter().zip(b.probs().iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_minimizes_joint_loss_over_random_q() {
        let mut s = crate::rng::StreamKey::root(41).stream();
        for _ in 0..100 {
            let t = 3 + (s.below(5) as usize);
            let losses: Vec<f64> = (0..t).map(|_| s.uniform() * 3.0).collect();
            let beta = 0.1 + s.uniform();
            let q_star = oracle_q(&losses, beta);
            let best = joint_loss(&losses, &q_star, beta);
            for _ in 0..100 {
                let mut q: Vec<f64> = (0..t).map(|_| s.uniform()).collect();
                let z: f64 = q.iter().sum();
                for p in &mut q {
                    *p /= z;
                }
                let q = StopDistribution::from_probs(q);
                assert!(joint_loss(&losses, &q, beta) >= best - 1e-10);
            }
        }
    }

    #[test]
    fn entropy_chain_rule_random() {
        let mut s = crate::rng::StreamKey::root(43).stream();
        for _ in 0..1000 {
            let t = 2 + (s.below(8) as usize);
            let pi: Vec<f64> = (0..t - 1).map(|_| s.uniform() * 0.999).collect();
            let q = induced_q(&pi);
            let surv = survival(&pi);
            let mut chained = 0.0;
            for (&p, &sv) in pi.iter().zip(surv.iter()) {
                let hb = -(p * math::ln_floored(p) + (1.0 - p) * math::ln_floored(1.0 - p));
                chained += sv * hb;
            }
            assert!((q.entropy() - chained).abs() < 1e-9);
        }
    }

    #[test]
    fn induced_q_sums_to_one_including_boundaries() {
        let cases: [&[f64]; 5] = [
            &[0.0, 0.0, 0.0],
            &[1.0, 1.0],
            &[0.0, 1.0, 0.3],
            &[0.9999999, 1e-9],
            &[0.3],
        ];
        for pi in cases {
            let q = induced_q(pi);
            let sum: f64 = q.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
