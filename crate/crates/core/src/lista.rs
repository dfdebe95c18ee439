//! The unrolled shrinkage network: a T-layer model
//! `x_t = eta_{lambda_t}(W1_t b + W2_t x_{t-1})` with per-layer learned
//! parameters, its baseline (fixed-depth) training loss, and the classical
//! initialization that makes layer-for-layer equivalence with proximal
//! gradient descent exact.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::mat::{self, DenseMat};
use crate::tape::{NodeId, Tape};

/// Thresholds are projected to at least this value inside the forward pass,
/// keeping the shrinkage well-defined while the raw parameter stays
/// unconstrained.
pub const LAMBDA_FLOOR: f64 = 1e-6;

/// One unrolled layer: threshold plus the two mixing matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ListaLayer {
    pub lambda: f64,
    /// `n x m`, applied to the measurement.
    pub w1: DenseMat,
    /// `n x n`, applied to the previous state.
    pub w2: DenseMat,
}

/// Parameters of the full unrolled model.
#[derive(Clone, Debug, PartialEq)]
pub struct ListaParams {
    pub layers: Vec<ListaLayer>,
}

impl ListaParams {
    /// Number of layers T.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Measurement dimension m.
    pub fn measurement_dim(&self) -> usize {
        self.layers[0].w1.cols()
    }

    /// Signal dimension n.
    pub fn signal_dim(&self) -> usize {
        self.layers[0].w1.rows()
    }

    /// Initializes every layer to one proximal-gradient step of the LASSO
    /// objective: `(rho * step, step * A^T, I - step * A^T A)`. With this
    /// initialization the forward path reproduces the classical iterates
    /// exactly.
    pub fn init_ista_like(a: &DenseMat, rho: f64, step: f64, depth: usize) -> Self {
        assert!(depth >= 1, "depth must be at least 1");
        let n = a.cols();
        let w1 = a.transpose().scaled(step);
        let mut w2 = DenseMat::identity(n);
        // I - step * A^T A
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..a.rows() {
                    acc += a.get(k, i) * a.get(k, j);
                }
                let v = w2.get(i, j) - step * acc;
                w2.set(i, j, v);
            }
        }
        let layer = ListaLayer {
            lambda: rho * step,
            w1,
            w2,
        };
        ListaParams {
            layers: vec![layer; depth],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.lambda.is_finite() && l.w1.is_finite() && l.w2.is_finite())
    }
}

/// States `x_1..x_T` produced from one measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardPath {
    pub states: Vec<Vec<f64>>,
}

impl ForwardPath {
    /// 1-based state accessor.
    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t - 1]
    }

    pub fn depth(&self) -> usize {
        self.states.len()
    }
}

/// A non-finite state surfaced during the forward pass, naming the layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NonFiniteState {
    pub layer: usize,
}

impl core::fmt::Display for NonFiniteState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "non-finite state at layer {}", self.layer)
    }
}

pub fn effective_lambda(lambda: f64) -> f64 {
    if lambda > LAMBDA_FLOOR {
        lambda
    } else {
        LAMBDA_FLOOR
    }
}

/// Runs the unrolled model from `x_0 = 0`, returning all T states.
pub fn forward(params: &ListaParams, b: &[f64]) -> Result<ForwardPath, NonFiniteState> {
    let n = params.signal_dim();
    let mut states = Vec::with_capacity(params.depth());
    let mut x = vec![0.0; n];
    for (idx, layer) in params.layers.iter().enumerate() {
        let wb = layer.w1.matvec(b);
        let wx = layer.w2.matvec(&x);
        let z: Vec<f64> = wb.iter().zip(wx.iter()).map(|(a, b)| a + b).collect();
        let next = mat::soft_threshold(&z, effective_lambda(layer.lambda));
        if !next.iter().all(|v| v.is_finite()) {
            return Err(NonFiniteState { layer: idx + 1 });
        }
        x = next.clone();
        states.push(next);
    }
    Ok(ForwardPath { states })
}

/// Tape handles for every layer parameter, in canonical order.
pub struct ListaLeaves {
    pub lambda: Vec<NodeId>,
    pub w1: Vec<NodeId>,
    pub w2: Vec<NodeId>,
}

impl ListaLeaves {
    /// Registers all parameters as borrowed leaves (no copies).
    pub fn register<'a>(tape: &mut Tape<'a>, params: &'a ListaParams) -> Self {
        let mut lambda = Vec::with_capacity(params.depth());
        let mut w1 = Vec::with_capacity(params.depth());
        let mut w2 = Vec::with_capacity(params.depth());
        for layer in &params.layers {
            lambda.push(tape.leaf(core::slice::from_ref(&layer.lambda)));
            w1.push(tape.leaf(layer.w1.data()));
            w2.push(tape.leaf(layer.w2.data()));
        }
        ListaLeaves { lambda, w1, w2 }
    }

    /// Leaf ids in the same canonical order as `train::theta_tensors`.
    pub fn all_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(3 * self.lambda.len());
        for i in 0..self.lambda.len() {
            out.push(self.lambda[i]);
            out.push(self.w1[i]);
            out.push(self.w2[i]);
        }
        out
    }
}

/// Traced forward pass; mirrors [`forward`] operation-for-operation so the
/// recorded values are bit-identical to the untaped path.
pub fn forward_traced(
    tape: &mut Tape<'_>,
    leaves: &ListaLeaves,
    params: &ListaParams,
    b_leaf: NodeId,
) -> Vec<NodeId> {
    forward_traced_prefix(tape, leaves, params, b_leaf, params.depth())
}

/// Traced forward pass through the first `layers` layers only (the
/// stochastic oracle-sampling mode never needs the suffix).
pub fn forward_traced_prefix(
    tape: &mut Tape<'_>,
    leaves: &ListaLeaves,
    params: &ListaParams,
    b_leaf: NodeId,
    layers: usize,
) -> Vec<NodeId> {
    assert!(layers >= 1 && layers <= params.depth());
    let n = params.signal_dim();
    let m = params.measurement_dim();
    let mut states = Vec::with_capacity(layers);
    let mut x = tape.leaf_owned(vec![0.0; n]);
    for t in 0..layers {
        let wb = tape.matvec(leaves.w1[t], b_leaf, n, m);
        let wx = tape.matvec(leaves.w2[t], x, n, n);
        let z = tape.add(wb, wx);
        let lam = tape.clamp_min(leaves.lambda[t], LAMBDA_FLOOR);
        let next = tape.soft_threshold(z, lam);
        states.push(next);
        x = next;
    }
    states
}

/// Fixed-depth training loss `sum_t gamma^(T-t) ||x_t - x*||^2`, supervising
/// every layer with geometrically decaying weights toward earlier layers.
pub fn baseline_loss(path: &ForwardPath, x_star: &[f64], gamma: f64) -> f64 {
    let weights = baseline_weights(path.depth(), gamma);
    let dists: Vec<f64> = path
        .states
        .iter()
        .map(|x| mat::sq_dist(x, x_star))
        .collect();
    mat::dot(&weights, &dists)
}

/// Weights `gamma^(T-t)` for `t = 1..=T`.
pub fn baseline_weights(depth: usize, gamma: f64) -> Vec<f64> {
    assert!(
        gamma > 0.0 && gamma <= 1.0,
        "gamma must be in (0, 1], got {gamma}"
    );
    let mut w = vec![1.0; depth];
    for t in (0..depth.saturating_sub(1)).rev() {
        w[t] = w[t + 1] * gamma;
    }
    w
}

/// Traced counterpart of [`baseline_loss`] over already-traced states.
pub fn baseline_loss_traced(
    tape: &mut Tape<'_>,
    states: &[NodeId],
    x_star_leaf: NodeId,
    gamma: f64,
) -> NodeId {
    let weights = baseline_weights(states.len(), gamma);
    let dists: Vec<NodeId> = states
        .iter()
        .map(|&s| tape.sq_dist(s, x_star_leaf))
        .collect();
    let dvec = tape.stack(&dists);
    let wleaf = tape.leaf_owned(weights);
    tape.dot(wleaf, dvec)
}

/// Human-readable shape summary used in mismatch errors.
pub fn shape_string(params: &ListaParams) -> String {
    format!(
        "T={} m={} n={}",
        params.depth(),
        params.measurement_dim(),
        params.signal_dim()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::{ista_solve, LassoConfig};
    use crate::data;
    use crate::rng::StreamKey;

    fn toy_matrix(seed: u64, m: usize, n: usize) -> DenseMat {
        let mut a = data::gaussian_matrix(m, n, StreamKey::root(seed));
        a.normalize_columns();
        a
    }

    #[test]
    fn zero_input_gives_zero_path() {
        let a = toy_matrix(5, 4, 8);
        let params = ListaParams::init_ista_like(&a, 0.1, 0.5, 3);
        let path = forward(&params, &[0.0; 4]).unwrap();
        for s in &path.states {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_layer_matches_first_ista_iterate() {
        let a = toy_matrix(6, 5, 9);
        let mut s = StreamKey::root(60).stream();
        let b: Vec<f64> = (0..5).map(|_| s.normal()).collect();
        let rho = 0.08;
        let step = 0.4;
        let params = ListaParams::init_ista_like(&a, rho, step, 1);
        let path = forward(&params, &b).unwrap();
        let ista = ista_solve(
            &a,
            &b,
            &LassoConfig {
                rho,
                step,
                max_iters: 1,
            },
        )
        .unwrap();
        for (x, y) in path.state(1).iter().zip(ista[0].iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ista_init_reproduces_full_ista_path() {
        let a = toy_matrix(7, 6, 12);
        let mut s = StreamKey::root(61).stream();
        let b: Vec<f64> = (0..6).map(|_| s.normal()).collect();
        let cfg = LassoConfig {
            rho: 0.05,
            step: 0.3,
            max_iters: 7,
        };
        let params = ListaParams::init_ista_like(&a, cfg.rho, cfg.step, cfg.max_iters);
        let path = forward(&params, &b).unwrap();
        let ista = ista_solve(&a, &b, &cfg).unwrap();
        for t in 0..cfg.max_iters {
            for (x, y) in path.states[t].iter().zip(ista[t].iter()) {
                assert!((x - y).abs() < 1e-12, "layer {t} diverges: {x} vs {y}");
            }
        }
    }

    #[test]
    fn init_lambdas_equal_rho_step_and_are_deterministic() {
        let a = toy_matrix(8, 4, 7);
        let p1 = ListaParams::init_ista_like(&a, 0.2, 0.5, 4);
        let p2 = ListaParams::init_ista_like(&a, 0.2, 0.5, 4);
        assert_eq!(p1, p2);
        for l in &p1.layers {
            assert_eq!(l.lambda, 0.1);
        }
    }

    #[test]
    fn forward_is_pure_across_instances() {
        let a = toy_matrix(9, 4, 6);
        let params = ListaParams::init_ista_like(&a, 0.1, 0.4, 3);
        let mut s = StreamKey::root(62).stream();
        let b1: Vec<f64> = (0..4).map(|_| s.normal()).collect();
        let b2: Vec<f64> = (0..4).map(|_| s.normal()).collect();
        let first = forward(&params, &b1).unwrap();
        let _ = forward(&params, &b2).unwrap();
        let again = forward(&params, &b1).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn zero_entries_match_preactivation_threshold() {
        let a = toy_matrix(10, 5, 10);
        let params = ListaParams::init_ista_like(&a, 0.3, 0.5, 4);
        let mut s = StreamKey::root(63).stream();
        let b: Vec<f64> = (0..5).map(|_| s.normal()).collect();
        let path = forward(&params, &b).unwrap();
        let mut prev = vec![0.0; 10];
        for (t, layer) in params.layers.iter().enumerate() {
            let wb = layer.w1.matvec(&b);
            let wx = layer.w2.matvec(&prev);
            let lam = effective_lambda(layer.lambda);
            for i in 0..10 {
                let pre = wb[i] + wx[i];
                let out = path.states[t][i];
                if out == 0.0 {
                    assert!(pre.abs() <= lam + 1e-15);
                } else {
                    assert!(pre.abs() > lam);
                }
            }
            prev = path.states[t].clone();
        }
    }

    #[test]
    fn traced_forward_bit_identical_to_untaped() {
        let a = toy_matrix(11, 5, 8);
        let params = ListaParams::init_ista_like(&a, 0.12, 0.45, 5);
        let mut s = StreamKey::root(64).stream();
        let b: Vec<f64> = (0..5).map(|_| s.normal()).collect();
        let plain = forward(&params, &b).unwrap();
        let mut tape = Tape::new();
        let leaves = ListaLeaves::register(&mut tape, &params);
        let b_leaf = tape.leaf(&b);
        let states = forward_traced(&mut tape, &leaves, &params, b_leaf);
        for (t, &id) in states.iter().enumerate() {
            assert_eq!(tape.value(id), plain.states[t].as_slice());
        }
    }

    #[test]
    fn baseline_loss_weighting() {
        // gamma = 1: 4 + 1 = 5; gamma = 0.5: 0.5*4 + 1*1 = 3
        let path = ForwardPath {
            states: vec![vec![2.0], vec![1.0]],
        };
        let x_star = [0.0];
        assert_eq!(baseline_loss(&path, &x_star, 1.0), 5.0);
        assert_eq!(baseline_loss(&path, &x_star, 0.5), 3.0);
    }
}
