//! The sequential stopping network: a small two-hidden-layer perceptron over
//! the concatenated (measurement, current state) pair with a learned additive
//! per-step embedding, emitting the probability of halting at each eligible
//! position.

use alloc::vec;
use alloc::vec::Vec;

use crate::lista::ForwardPath;
use crate::mat::{self, DenseMat};
use crate::math;
use crate::rng::StreamKey;
use crate::stopping::{self, StopDistribution};
use crate::tape::{NodeId, Tape};

/// What the policy sees at each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    /// The raw `[b; x_t]` pair; the network must discover convergence cues
    /// itself.
    Raw,
    /// `[b; x_t; ||b - A x_t||^2]`; requires the measurement matrix at call
    /// sites.
    ResidualAugmented,
}

pub fn input_dim(mode: FeatureMode, m: usize, n: usize) -> usize {
    match mode {
        FeatureMode::Raw => m + n,
        FeatureMode::ResidualAugmented => m + n + 1,
    }
}

/// Weights of the stopping network.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    /// `h1 x input_dim`.
    pub w_in: DenseMat,
    pub b_in: Vec<f64>,
    /// `h2 x h1`.
    pub w_mid: DenseMat,
    pub b_mid: Vec<f64>,
    /// `h2`.
    pub w_out: Vec<f64>,
    pub b_out: f64,
    /// One additive embedding per decision step, each of length `h2`.
    pub layer_embed: Vec<Vec<f64>>,
    pub feature_mode: FeatureMode,
    pub measurement_dim: usize,
    pub signal_dim: usize,
}

impl PolicyParams {
    /// Hidden weights are Gaussian with variance `1/fan_in`; the output head
    /// and all biases/embeddings start at zero, so the initial stop
    /// probability is exactly 0.5 everywhere.
    pub fn init(
        m: usize,
        n: usize,
        stop_positions: usize,
        h1: usize,
        h2: usize,
        mode: FeatureMode,
        key: StreamKey,
    ) -> Self {
        assert!(h1 >= 1 && h2 >= 1, "hidden sizes must be at least 1");
        assert!(stop_positions >= 1, "need at least one stop position");
        let d = input_dim(mode, m, n);
        let mut s_in = key.tagged("w_in").stream();
        let sd_in = math::sqrt(1.0 / d as f64);
        let w_in = DenseMat::from_fn(h1, d, |_, _| sd_in * s_in.normal());
        let mut s_mid = key.tagged("w_mid").stream();
        let sd_mid = math::sqrt(1.0 / h1 as f64);
        let w_mid = DenseMat::from_fn(h2, h1, |_, _| sd_mid * s_mid.normal());
        PolicyParams {
            w_in,
            b_in: vec![0.0; h1],
            w_mid,
            b_mid: vec![0.0; h2],
            w_out: vec![0.0; h2],
            b_out: 0.0,
            layer_embed: vec![vec![0.0; h2]; stop_positions - 1],
            feature_mode: mode,
            measurement_dim: m,
            signal_dim: n,
        }
    }

    /// Number of decision steps (one less than the stop positions).
    pub fn decisions(&self) -> usize {
        self.layer_embed.len()
    }

    /// Number of stop positions T (the final one is the survival mass).
    pub fn stop_positions(&self) -> usize {
        self.layer_embed.len() + 1
    }

    pub fn hidden_dims(&self) -> (usize, usize) {
        (self.w_in.rows(), self.w_mid.rows())
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w_in.is_finite()
            && self.w_mid.is_finite()
            && self.b_in.iter().all(|v| v.is_finite())
            && self.b_mid.iter().all(|v| v.is_finite())
            && self.w_out.iter().all(|v| v.is_finite())
            && self.b_out.is_finite()
            && self
                .layer_embed
                .iter()
                .all(|e| e.iter().all(|v| v.is_finite()))
    }
}

fn assemble_features(
    phi: &PolicyParams,
    b: &[f64],
    x_t: &[f64],
    a: Option<&DenseMat>,
) -> Vec<f64> {
    let mut f = Vec::with_capacity(phi.input_dim());
    f.extend_from_slice(b);
    f.extend_from_slice(x_t);
    if phi.feature_mode == FeatureMode::ResidualAugmented {
        let a = a.expect("residual-augmented policy needs the measurement matrix");
        let ax = a.matvec(x_t);
        f.push(mat::sq_dist(b, &ax));
    }
    f
}

/// Network body over assembled features at 0-based decision index `d`.
/// Mirrors the traced version operation-for-operation.
fn forward_features(phi: &PolicyParams, feats: &[f64], d: usize) -> f64 {
    let pre1 = phi.w_in.matvec(feats);
    let h1: Vec<f64> = pre1
        .iter()
        .zip(phi.b_in.iter())
        .map(|(x, b)| math::tanh(x + b))
        .collect();
    let pre2 = phi.w_mid.matvec(&h1);
    let h2: Vec<f64> = pre2
        .iter()
        .zip(phi.b_mid.iter())
        .zip(phi.layer_embed[d].iter())
        .map(|((x, b), e)| math::tanh(x + b + e))
        .collect();
    math::sigmoid(mat::dot(&phi.w_out, &h2) + phi.b_out)
}

/// Stop probability at 1-based decision step `t` (raw feature mode).
///
/// Panics when `t` is the final position: the last layer has no decision,
/// its mass is whatever survives.
pub fn policy_forward(phi: &PolicyParams, b: &[f64], x_t: &[f64], t: usize) -> f64 {
    policy_forward_aux(phi, b, x_t, t, None)
}

/// As [`policy_forward`], with the measurement matrix available for the
/// residual-augmented feature mode.
pub fn policy_forward_aux(
    phi: &PolicyParams,
    b: &[f64],
    x_t: &[f64],
    t: usize,
    a: Option<&DenseMat>,
) -> f64 {
    assert!(
        t >= 1 && t <= phi.decisions(),
        "policy_forward: step {t} out of range; decisions are 1..={} and the \
         final position {} has no decision",
        phi.decisions(),
        phi.stop_positions()
    );
    let feats = assemble_features(phi, b, x_t, a);
    forward_features(phi, &feats, t - 1)
}

/// Stop distribution induced by running the policy over the given states
/// (one per stop position; the last state gets no decision).
pub fn rollout_states(
    phi: &PolicyParams,
    b: &[f64],
    states: &[&[f64]],
    a: Option<&DenseMat>,
) -> StopDistribution {
    assert_eq!(
        states.len(),
        phi.stop_positions(),
        "rollout: {} states for {} stop positions",
        states.len(),
        phi.stop_positions()
    );
    let pi: Vec<f64> = (0..phi.decisions())
        .map(|d| {
            let feats = assemble_features(phi, b, states[d], a);
            forward_features(phi, &feats, d)
        })
        .collect();
    stopping::induced_q(&pi)
}

/// [`rollout_states`] over a full forward path.
pub fn rollout_q(
    phi: &PolicyParams,
    b: &[f64],
    path: &ForwardPath,
    a: Option<&DenseMat>,
) -> StopDistribution {
    let states: Vec<&[f64]> = path.states.iter().map(|s| s.as_slice()).collect();
    rollout_states(phi, b, &states, a)
}

/// Consumes states one at a time and halts at the first decision with
/// `pi >= threshold`, else at the final position. Returns the 1-based stop
/// position and how many states were actually pulled (they coincide; the
/// second is the computation-savings accounting and is what the causality
/// tripwire checks).
///
/// Panics unless `threshold` lies in `(0, 1)`.
pub fn deterministic_stop<'s, I>(
    phi: &PolicyParams,
    b: &[f64],
    mut states: I,
    threshold: f64,
    a: Option<&DenseMat>,
) -> (usize, usize)
where
    I: Iterator<Item = &'s [f64]>,
{
    assert!(
        threshold > 0.0 && threshold < 1.0,
        "threshold must be in (0, 1), got {threshold}"
    );
    let k = phi.stop_positions();
    for t in 1..=k {
        let x = states.next().expect("state stream ended early");
        if t < k {
            let feats = assemble_features(phi, b, x, a);
            if forward_features(phi, &feats, t - 1) >= threshold {
                return (t, t);
            }
        }
    }
    (k, k)
}

/// Tape handles for the policy parameters, in canonical order.
pub struct PolicyLeaves {
    pub w_in: NodeId,
    pub b_in: NodeId,
    pub w_mid: NodeId,
    pub b_mid: NodeId,
    pub w_out: NodeId,
    pub b_out: NodeId,
    pub embed: Vec<NodeId>,
}

impl PolicyLeaves {
    pub fn register<'a>(tape: &mut Tape<'a>, phi: &'a PolicyParams) -> Self {
        PolicyLeaves {
            w_in: tape.leaf(phi.w_in.data()),
            b_in: tape.leaf(&phi.b_in),
            w_mid: tape.leaf(phi.w_mid.data()),
            b_mid: tape.leaf(&phi.b_mid),
            w_out: tape.leaf(&phi.w_out),
            b_out: tape.leaf(core::slice::from_ref(&phi.b_out)),
            embed: phi
                .layer_embed
                .iter()
                .map(|e| tape.leaf(e.as_slice()))
                .collect(),
        }
    }

    /// Leaf ids in the same canonical order as `train::phi_tensors`.
    pub fn all_ids(&self) -> Vec<NodeId> {
        let mut out = alloc::vec![
            self.w_in, self.b_in, self.w_mid, self.b_mid, self.w_out, self.b_out
        ];
        out.extend_from_slice(&self.embed);
        out
    }
}

/// Traced stop probability at 0-based decision index `d` over a traced
/// feature vector.
pub fn forward_traced(
    tape: &mut Tape<'_>,
    leaves: &PolicyLeaves,
    phi: &PolicyParams,
    feat: NodeId,
    d: usize,
) -> NodeId {
    let (h1, h2) = phi.hidden_dims();
    let din = phi.input_dim();
    let pre1 = tape.matvec(leaves.w_in, feat, h1, din);
    let pre1b = tape.add(pre1, leaves.b_in);
    let act1 = tape.tanh(pre1b);
    let pre2 = tape.matvec(leaves.w_mid, act1, h2, h1);
    let pre2b = tape.add(pre2, leaves.b_mid);
    let pre2e = tape.add(pre2b, leaves.embed[d]);
    let act2 = tape.tanh(pre2e);
    let logit = tape.dot(leaves.w_out, act2);
    let logit_b = tape.add(logit, leaves.b_out);
    tape.sigmoid(logit_b)
}

/// Builds traced features `[b; x_t]` (plus the residual when augmented; the
/// residual flows gradients into the state node).
pub fn features_traced(
    tape: &mut Tape<'_>,
    phi: &PolicyParams,
    b_leaf: NodeId,
    state: NodeId,
    a_leaf: Option<(NodeId, usize, usize)>,
) -> NodeId {
    let base = tape.concat(b_leaf, state);
    match phi.feature_mode {
        FeatureMode::Raw => base,
        FeatureMode::ResidualAugmented => {
            let (a, rows, cols) =
                a_leaf.expect("residual-augmented policy needs the measurement matrix leaf");
            let ax = tape.matvec(a, state, rows, cols);
            let resid = tape.sq_dist(b_leaf, ax);
            tape.concat(base, resid)
        }
    }
}

/// Traced rollout: stop-mass nodes per position (the survival product chain).
pub fn rollout_traced(
    tape: &mut Tape<'_>,
    leaves: &PolicyLeaves,
    phi: &PolicyParams,
    b_leaf: NodeId,
    state_ids: &[NodeId],
    a_leaf: Option<(NodeId, usize, usize)>,
) -> Vec<NodeId> {
    assert_eq!(state_ids.len(), phi.stop_positions());
    let mut q = Vec::with_capacity(state_ids.len());
    let mut survive = tape.scalar(1.0);
    for d in 0..phi.decisions() {
        let feat = features_traced(tape, phi, b_leaf, state_ids[d], a_leaf);
        let pi = forward_traced(tape, leaves, phi, feat, d);
        q.push(tape.mul(pi, survive));
        let keep = tape.affine(pi, -1.0, 1.0);
        survive = tape.mul(survive, keep);
    }
    q.push(survive);
    q
}
