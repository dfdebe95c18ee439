//! Training: oracle-weighted model learning (stage 1), policy imitation
//! (stage 2), optional joint fine-tuning (stage 3), the jointly-trained
//! ablation baseline, and fixed-depth baseline training under the same
//! budget accounting.
//!
//! Determinism contract: batches are keyed by `(seed, stage, iteration)`,
//! gradients are accumulated over a fixed chunk partition of the batch and
//! folded in chunk order, so results are bit-identical across reruns and
//! thread counts. Optimizer state is created fresh at each stage boundary.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, SparseInstance};
use crate::lista::{self, ListaParams};
use crate::mat::{self, DenseMat};
use crate::math;
use crate::policy::{self, FeatureMode, PolicyParams};
use crate::rng::{Stream, StreamKey};
use crate::stopping;
use crate::tape::{NodeId, Tape};

/// Fixed number of gradient-accumulation chunks per batch. Chunking is a
/// pure function of the batch size (never of the thread count), which keeps
/// the floating-point reduction order reproducible.
pub const GRAD_CHUNKS: usize = 8;

/// Iterations between mode-collapse probes (averaged stop-distribution
/// entropy over a fixed training subset) in policy-bearing stages.
pub const PROBE_EVERY: u64 = 500;

/// Probe subset size for the collapse detector.
pub const PROBE_COUNT: usize = 256;

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_WINDOW: u64 = 1000;

/// Stop-eligible output layers (1-based, strictly increasing, and always
/// containing the final layer, which carries the survival mass).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channels {
    layers: Vec<usize>,
}

impl Channels {
    /// Every layer is stop-eligible.
    pub fn full(depth: usize) -> Self {
        Channels {
            layers: (1..=depth).collect(),
        }
    }

    /// Panics unless `layers` is nonempty, strictly increasing, within
    /// `1..=depth`, and ends at `depth` (the terminal position is required
    /// to absorb the survival mass).
    pub fn new(layers: Vec<usize>, depth: usize) -> Self {
        assert!(!layers.is_empty(), "channels: empty");
        for w in layers.windows(2) {
            assert!(w[0] < w[1], "channels: must be strictly increasing");
        }
        assert!(layers[0] >= 1, "channels: layers are 1-based");
        assert_eq!(
            *layers.last().unwrap(),
            depth,
            "channels: final layer {depth} must be a channel"
        );
        Channels { layers }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        match &cfg.channels {
            Some(layers) => Channels::new(layers.clone(), cfg.depth),
            None => Channels::full(cfg.depth),
        }
    }

    pub fn count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn is_full(&self) -> bool {
        self.layers
            .iter()
            .enumerate()
            .all(|(i, &l)| l == i + 1)
    }

    /// Selects the channel positions out of a full per-layer vector.
    pub fn restrict<T: Clone>(&self, full: &[T]) -> Vec<T> {
        self.layers.iter().map(|&t| full[t - 1].clone()).collect()
    }
}

/// How stage-1 handles the expectation over the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage1Mode {
    /// Differentiate the full oracle-weighted sum, gradient flowing through
    /// the oracle weights.
    FullExpectation,
    /// Sample one position from the oracle per sample; no gradient through
    /// the oracle.
    StochasticSample,
}

/// How stage-2 fits the policy to the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage2Mode {
    /// Cross-entropy against the full oracle distribution.
    ForwardKl,
    /// Cross-entropy against the oracle mode only.
    Map,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub depth: usize,
    pub warm_iters: usize,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub stage3_iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    /// Layer-weight decay of the fixed-depth baseline loss.
    pub gamma: f64,
    pub stage1_mode: Stage1Mode,
    pub stage2_mode: Stage2Mode,
    /// Stop-eligible layers; `None` means all.
    pub channels: Option<Vec<usize>>,
    pub hidden1: usize,
    pub hidden2: usize,
    pub feature_mode: FeatureMode,
    /// ISTA-like initialization hyperparameters (tuned upstream).
    pub init_rho: f64,
    pub init_step: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn desk_defaults(seed: u64) -> Self {
        TrainConfig {
            depth: 16,
            warm_iters: 2000,
            stage1_iters: 15_000,
            stage2_iters: 5000,
            stage3_iters: 0,
            batch_size: 64,
            lr: 1e-4,
            beta: 0.1,
            gamma: 1.0,
            stage1_mode: Stage1Mode::FullExpectation,
            stage2_mode: Stage2Mode::ForwardKl,
            channels: None,
            hidden1: 64,
            hidden2: 32,
            feature_mode: FeatureMode::Raw,
            init_rho: 0.1,
            init_step: 1.0,
            seed,
        }
    }

    /// Gradient evaluations of the staged schedule; the jointly-trained
    /// ablation gets exactly the same count.
    pub fn total_iters(&self) -> usize {
        self.warm_iters + self.stage1_iters + self.stage2_iters + self.stage3_iters
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageTag {
    Warm,
    Stage1,
    Stage2,
    Stage3,
    Aevb,
    Baseline,
}

impl StageTag {
    pub fn name(self) -> &'static str {
        match self {
            StageTag::Warm => "warm",
            StageTag::Stage1 => "stage1",
            StageTag::Stage2 => "stage2",
            StageTag::Stage3 => "stage3",
            StageTag::Aevb => "aevb",
            StageTag::Baseline => "baseline",
        }
    }
}

/// One log line per optimization step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub stage: StageTag,
    /// 1-based within the stage.
    pub iter: u64,
    /// Reported in the direction the stage optimizes (ascended objectives
    /// are positive-is-better).
    pub objective: f64,
    /// Batch-mean entropy of the oracle stop distribution, where computed.
    pub oracle_entropy: Option<f64>,
    /// Batch-mean entropy of the policy's stop distribution, where computed.
    pub q_entropy: Option<f64>,
    /// Entropy of the probe-averaged stop histogram (collapse detector),
    /// on probe iterations of policy-bearing stages.
    pub probe_q_entropy: Option<f64>,
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn stage_len(&self, stage: StageTag) -> usize {
        self.records.iter().filter(|r| r.stage == stage).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    NonFinite { stage: StageTag, iter: u64 },
    Diverged { stage: StageTag, iter: u64 },
    Hook(String),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::NonFinite { stage, iter } => {
                write!(f, "non-finite objective in {} at iteration {iter}", stage.name())
            }
            TrainError::Diverged { stage, iter } => write!(
                f,
                "objective diverged in {} at iteration {iter} (10x its best for {} iterations)",
                stage.name(),
                DIVERGENCE_WINDOW
            ),
            TrainError::Hook(msg) => write!(f, "training hook failed: {msg}"),
        }
    }
}

/// Ordered parallel map. Implementations must return outputs in index order;
/// everything downstream relies on that for bit-reproducibility.
pub trait BatchRunner: Sync {
    fn run<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T>;
}

/// Single-threaded runner.
pub struct SerialRunner;

impl BatchRunner for SerialRunner {
    fn run<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (0..n).map(f).collect()
    }
}

/// Wall-clock source for log records; the core never reads a clock itself.
pub trait Clock {
    fn now_secs(&self) -> f64;
}

/// Clock that always reads zero (for tests and fully deterministic logs).
pub struct NullClock;

impl Clock for NullClock {
    fn now_secs(&self) -> f64 {
        0.0
    }
}

/// Checkpoint/log sinks driven by the training loop.
pub trait TrainHooks {
    fn on_record(&mut self, _rec: &TrainRecord) -> Result<(), String> {
        Ok(())
    }
    fn on_stage_complete(
        &mut self,
        _stage: StageTag,
        _theta: &ListaParams,
        _phi: &PolicyParams,
    ) -> Result<(), String> {
        Ok(())
    }
}

/// No-op hooks.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Per-tensor gradient buffers in canonical parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatGrads {
    pub tensors: Vec<Vec<f64>>,
}

impl FlatGrads {
    pub fn zeros_like(shapes: &[usize]) -> Self {
        FlatGrads {
            tensors: shapes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn add(&mut self, other: &FlatGrads) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            mat::axpy(a, 1.0, b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            for x in t.iter_mut() {
                *x *= k;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn from_tape(tape: &Tape<'_>, ids: &[NodeId]) -> Self {
        FlatGrads {
            tensors: ids.iter().map(|&id| tape.adjoint(id).to_vec()).collect(),
        }
    }
}

/// Canonical tensor order of the predictive model:
/// `lambda_1, W1_1, W2_1, lambda_2, ...`.
pub fn theta_shapes(theta: &ListaParams) -> Vec<usize> {
    let mut out = Vec::with_capacity(3 * theta.depth());
    for l in &theta.layers {
        out.push(1);
        out.push(l.w1.data().len());
        out.push(l.w2.data().len());
    }
    out
}

pub fn theta_tensors_mut(theta: &mut ListaParams) -> Vec<&mut [f64]> {
    let mut out = Vec::with_capacity(3 * theta.layers.len());
    for l in &mut theta.layers {
        out.push(core::slice::from_mut(&mut l.lambda));
        out.push(l.w1.data_mut());
        out.push(l.w2.data_mut());
    }
    out
}

/// Canonical tensor order of the policy:
/// `W_in, b_in, W_mid, b_mid, w_out, b_out, embed_1..`.
pub fn phi_shapes(phi: &PolicyParams) -> Vec<usize> {
    let mut out = vec![
        phi.w_in.data().len(),
        phi.b_in.len(),
        phi.w_mid.data().len(),
        phi.b_mid.len(),
        phi.w_out.len(),
        1,
    ];
    out.extend(phi.layer_embed.iter().map(|e| e.len()));
    out
}

pub fn phi_tensors_mut(phi: &mut PolicyParams) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = vec![
        phi.w_in.data_mut(),
        &mut phi.b_in,
        phi.w_mid.data_mut(),
        &mut phi.b_mid,
        &mut phi.w_out,
        core::slice::from_mut(&mut phi.b_out),
    ];
    out.extend(phi.layer_embed.iter_mut().map(|e| e.as_mut_slice()));
    out
}

/// Adaptive moment estimation with bias correction.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[usize], lr: f64) -> Self {
        AdamState {
            m: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            v: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &FlatGrads) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.tensors.len(), self.m.len());
        self.step_count += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.step_count as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.step_count as f64);
        for k in 0..params.len() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let g = &grads.tensors[k];
            let p = &mut *params[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
            }
        }
    }
}

/// Sums over a slice of samples, in the minimization convention.
#[derive(Clone, Debug, Default)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub oracle_entropy_sum: Option<f64>,
    pub q_entropy_sum: Option<f64>,
    pub floored_positions: usize,
}

fn fold_stats(acc: &mut BatchStats, part: &BatchStats) {
    acc.loss_sum += part.loss_sum;
    if let Some(x) = part.oracle_entropy_sum {
        *acc.oracle_entropy_sum.get_or_insert(0.0) += x;
    }
    if let Some(x) = part.q_entropy_sum {
        *acc.q_entropy_sum.get_or_insert(0.0) += x;
    }
    acc.floored_positions += part.floored_positions;
}

fn fold_scalar_objectives(tape: &mut Tape<'_>, parts: &[NodeId]) -> NodeId {
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = tape.add(total, p);
    }
    total
}

/// Fixed-depth baseline loss (sum over the batch) and its model gradients.
pub fn baseline_grad(
    theta: &ListaParams,
    batch: &[&SparseInstance],
    gamma: f64,
) -> (BatchStats, FlatGrads) {
    let mut tape = Tape::new();
    let leaves = lista::ListaLeaves::register(&mut tape, theta);
    let mut objectives = Vec::with_capacity(batch.len());
    for inst in batch {
        let b_leaf = tape.leaf(&inst.b);
        let states = lista::forward_traced(&mut tape, &leaves, theta, b_leaf);
        let xs = tape.leaf(&inst.x_star);
        objectives.push(lista::baseline_loss_traced(&mut tape, &states, xs, gamma));
    }
    let total = fold_scalar_objectives(&mut tape, &objectives);
    tape.backward(total);
    let grads = FlatGrads::from_tape(&tape, &leaves.all_ids());
    let stats = BatchStats {
        loss_sum: tape.scalar_value(total),
        ..BatchStats::default()
    };
    (stats, grads)
}

/// Builds traced per-channel losses `0.5 ||x_t - x*||^2` for one sample.
fn traced_channel_losses<'a>(
    tape: &mut Tape<'a>,
    leaves: &lista::ListaLeaves,
    theta: &ListaParams,
    channels: &Channels,
    inst: &'a SparseInstance,
) -> (Vec<NodeId>, Vec<NodeId>, NodeId) {
    let b_leaf = tape.leaf(&inst.b);
    let states = lista::forward_traced(tape, leaves, theta, b_leaf);
    let selected = channels.restrict(&states);
    let xs = tape.leaf(&inst.x_star);
    let losses: Vec<NodeId> = selected
        .iter()
        .map(|&x| {
            let d = tape.sq_dist(x, xs);
            tape.affine(d, 0.5, 0.0)
        })
        .collect();
    (losses, selected, b_leaf)
}

/// Oracle-weighted marginal objective, full-expectation mode: minimizes
/// `sum_t q*_t(theta) * l_t(theta)` per sample with the gradient flowing
/// through the oracle weights.
pub fn stage1_full_grad(
    theta: &ListaParams,
    batch: &[&SparseInstance],
    beta: f64,
    channels: &Channels,
) -> (BatchStats, FlatGrads) {
    let mut tape = Tape::new();
    let leaves = lista::ListaLeaves::register(&mut tape, theta);
    let mut objectives = Vec::with_capacity(batch.len());
    let mut oracle_entropy = 0.0;
    for inst in batch {
        let (losses, _, _) = traced_channel_losses(&mut tape, &leaves, theta, channels, inst);
        let lvec = tape.stack(&losses);
        let logits = tape.affine(lvec, -1.0 / beta, 0.0);
        let lse = tape.logsumexp(logits);
        let logq = tape.sub_scalar(logits, lse);
        let q = tape.exp(logq);
        oracle_entropy += stopping::entropy(tape.value(q));
        objectives.push(tape.dot(q, lvec));
    }
    let total = fold_scalar_objectives(&mut tape, &objectives);
    tape.backward(total);
    let grads = FlatGrads::from_tape(&tape, &leaves.all_ids());
    let stats = BatchStats {
        loss_sum: tape.scalar_value(total),
        oracle_entropy_sum: Some(oracle_entropy),
        ..BatchStats::default()
    };
    (stats, grads)
}

/// Stochastic stage-1 variant: draws one position per sample from the
/// (untaped) oracle and minimizes that position's loss only; no gradient
/// flows through the oracle.
pub fn stage1_sample_grad(
    theta: &ListaParams,
    batch: &[&SparseInstance],
    beta: f64,
    channels: &Channels,
    sample_keys: &[StreamKey],
) -> (BatchStats, FlatGrads) {
    assert_eq!(batch.len(), sample_keys.len());
    let mut tape = Tape::new();
    let leaves = lista::ListaLeaves::register(&mut tape, theta);
    let mut objectives = Vec::with_capacity(batch.len());
    let mut oracle_entropy = 0.0;
    for (inst, &key) in batch.iter().zip(sample_keys.iter()) {
        // Untaped pass to sample from the oracle.
        let (q_star, _) = match oracle_for_instance(theta, channels, inst, beta) {
            Some(v) => v,
            None => {
                return (
                    BatchStats {
                        loss_sum: f64::NAN,
                        ..BatchStats::default()
                    },
                    FlatGrads::zeros_like(&theta_shapes(theta)),
                )
            }
        };
        oracle_entropy += q_star.entropy();
        let pos = q_star.sample(&mut key.stream());
        let layer = channels.layers()[pos - 1];

        // Traced prefix up to the sampled layer only.
        let b_leaf = tape.leaf(&inst.b);
        let states = lista::forward_traced_prefix(&mut tape, &leaves, theta, b_leaf, layer);
        let xs = tape.leaf(&inst.x_star);
        let d = tape.sq_dist(states[layer - 1], xs);
        objectives.push(tape.affine(d, 0.5, 0.0));
    }
    let total = fold_scalar_objectives(&mut tape, &objectives);
    tape.backward(total);
    let grads = FlatGrads::from_tape(&tape, &leaves.all_ids());
    let stats = BatchStats {
        loss_sum: tape.scalar_value(total),
        oracle_entropy_sum: Some(oracle_entropy),
        ..BatchStats::default()
    };
    (stats, grads)
}

/// Untaped forward pass, channel losses, and oracle for one sample. `None`
/// when the forward pass left the finite range.
fn oracle_for_instance(
    theta: &ListaParams,
    channels: &Channels,
    inst: &SparseInstance,
    beta: f64,
) -> Option<(stopping::StopDistribution, Vec<f64>)> {
    let path = lista::forward(theta, &inst.b).ok()?;
    let all_losses = stopping::loss_path(&path.states, &inst.x_star);
    let losses = channels.restrict(&all_losses);
    Some((stopping::oracle_q(&losses, beta), losses))
}

/// Imitation objective: cross-entropy of the policy's stop distribution
/// against the frozen-model oracle (or its mode, in MAP mode). Returns
/// policy gradients only; the model is read, never touched.
pub fn stage2_grad(
    theta: &ListaParams,
    phi: &PolicyParams,
    batch: &[&SparseInstance],
    beta: f64,
    mode: Stage2Mode,
    channels: &Channels,
    a: Option<&DenseMat>,
) -> (BatchStats, FlatGrads) {
    let mut tape = Tape::new();
    let leaves = policy::PolicyLeaves::register(&mut tape, phi);
    let a_leaf = a.map(|m| {
        let id = tape.leaf(m.data());
        (id, m.rows(), m.cols())
    });
    let mut objectives = Vec::with_capacity(batch.len());
    let mut oracle_entropy = 0.0;
    let mut q_entropy = 0.0;
    let mut floored = 0;
    for inst in batch {
        let pair = oracle_for_instance(theta, channels, inst, beta);
        let (q_star, losses) = match pair {
            Some(v) => v,
            None => {
                return (
                    BatchStats {
                        loss_sum: f64::NAN,
                        ..BatchStats::default()
                    },
                    FlatGrads::zeros_like(&phi_shapes(phi)),
                )
            }
        };
        oracle_entropy += q_star.entropy();

        // Recompute the path untaped for the policy inputs (theta frozen).
        let path = lista::forward(theta, &inst.b).expect("finite above");
        let b_leaf = tape.leaf(&inst.b);
        let state_ids: Vec<NodeId> = channels
            .layers()
            .iter()
            .map(|&t| tape.leaf_owned(path.state(t).to_vec()))
            .collect();
        let q_ids = policy::rollout_traced(&mut tape, &leaves, phi, b_leaf, &state_ids, a_leaf);
        let qvec = tape.stack(&q_ids);
        q_entropy += stopping::entropy(tape.value(qvec));
        for (&qs, &qp) in q_star.probs().iter().zip(tape.value(qvec).iter()) {
            if qs > 0.0 && qp <= math::LN_FLOOR {
                floored += 1;
            }
        }
        let lnq = tape.ln_floored(qvec);
        let obj = match mode {
            Stage2Mode::ForwardKl => {
                let qs_leaf = tape.leaf_owned(q_star.probs().to_vec());
                let ce = tape.dot(qs_leaf, lnq);
                tape.affine(ce, -1.0, 0.0)
            }
            Stage2Mode::Map => {
                let pos = stopping::map_stop(&losses);
                let picked = tape.index(lnq, pos - 1);
                tape.affine(picked, -1.0, 0.0)
            }
        };
        objectives.push(obj);
    }
    let total = fold_scalar_objectives(&mut tape, &objectives);
    tape.backward(total);
    let grads = FlatGrads::from_tape(&tape, &leaves.all_ids());
    let stats = BatchStats {
        loss_sum: tape.scalar_value(total),
        oracle_entropy_sum: Some(oracle_entropy),
        q_entropy_sum: Some(q_entropy),
        floored_positions: floored,
    };
    (stats, grads)
}

/// Joint objective (negated variational bound): `E_q[l] + beta * KL(q || uniform)`
/// with gradients to both parameter sets; the policy's inputs carry model
/// gradients too. Used for stage 3 and for the jointly-trained ablation.
pub fn stage3_grad(
    theta: &ListaParams,
    phi: &PolicyParams,
    batch: &[&SparseInstance],
    beta: f64,
    channels: &Channels,
    a: Option<&DenseMat>,
) -> (BatchStats, FlatGrads, FlatGrads) {
    let mut tape = Tape::new();
    let theta_leaves = lista::ListaLeaves::register(&mut tape, theta);
    let phi_leaves = policy::PolicyLeaves::register(&mut tape, phi);
    let a_leaf = a.map(|m| {
        let id = tape.leaf(m.data());
        (id, m.rows(), m.cols())
    });
    let k = channels.count() as f64;
    let ln_k = math::ln(k);
    let mut objectives = Vec::with_capacity(batch.len());
    let mut oracle_entropy = 0.0;
    let mut q_entropy = 0.0;
    for inst in batch {
        let (losses, selected, b_leaf) =
            traced_channel_losses(&mut tape, &theta_leaves, theta, channels, inst);
        let lvec = tape.stack(&losses);
        oracle_entropy += stopping::oracle_q(tape.value(lvec), beta).entropy();
        let q_ids =
            policy::rollout_traced(&mut tape, &phi_leaves, phi, b_leaf, &selected, a_leaf);
        let qvec = tape.stack(&q_ids);
        q_entropy += stopping::entropy(tape.value(qvec));
        let expected = tape.dot(qvec, lvec);
        let lnq = tape.ln_floored(qvec);
        let neg_h = tape.dot(qvec, lnq);
        let kl_term = tape.affine(neg_h, beta, beta * ln_k);
        objectives.push(tape.add(expected, kl_term));
    }
    let total = fold_scalar_objectives(&mut tape, &objectives);
    tape.backward(total);
    let theta_grads = FlatGrads::from_tape(&tape, &theta_leaves.all_ids());
    let phi_grads = FlatGrads::from_tape(&tape, &phi_leaves.all_ids());
    let stats = BatchStats {
        loss_sum: tape.scalar_value(total),
        oracle_entropy_sum: Some(oracle_entropy),
        q_entropy_sum: Some(q_entropy),
        floored_positions: 0,
    };
    (stats, theta_grads, phi_grads)
}

/// One schedulable training phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Warm,
    BaselineOnly,
    Stage1,
    Stage2,
    Stage3,
    Aevb,
}

impl Phase {
    fn tag(&self) -> StageTag {
        match self {
            Phase::Warm => StageTag::Warm,
            Phase::BaselineOnly => StageTag::Baseline,
            Phase::Stage1 => StageTag::Stage1,
            Phase::Stage2 => StageTag::Stage2,
            Phase::Stage3 => StageTag::Stage3,
            Phase::Aevb => StageTag::Aevb,
        }
    }

    /// Ascended objectives are reported sign-flipped from the minimized
    /// surrogate.
    fn report_sign(&self) -> f64 {
        match self {
            Phase::Warm | Phase::BaselineOnly | Phase::Stage2 => 1.0,
            Phase::Stage1 | Phase::Stage3 | Phase::Aevb => -1.0,
        }
    }

    fn updates_theta(&self) -> bool {
        !matches!(self, Phase::Stage2)
    }

    fn updates_phi(&self) -> bool {
        matches!(self, Phase::Stage3 | Phase::Aevb | Phase::Stage2)
    }

    fn probes_policy(&self) -> bool {
        self.updates_phi()
    }
}

struct ChunkOut {
    stats: BatchStats,
    theta: Option<FlatGrads>,
    phi: Option<FlatGrads>,
}

fn chunk_ranges(batch: usize) -> Vec<(usize, usize)> {
    let per = batch.div_ceil(GRAD_CHUNKS);
    let mut out = Vec::new();
    let mut start = 0;
    while start < batch {
        let end = core::cmp::min(start + per, batch);
        out.push((start, end));
        start = end;
    }
    out
}

/// Runs one phase in place; stage boundaries (optimizer resets, checkpoint
/// hooks) are the caller's concern. The scheduled entry points compose this.
#[allow(clippy::too_many_arguments)]
pub fn run_phase<R: BatchRunner, H: TrainHooks, C: Clock>(
    phase: Phase,
    iters: usize,
    theta: &mut ListaParams,
    phi: &mut PolicyParams,
    ds: &Dataset,
    cfg: &TrainConfig,
    channels: &Channels,
    runner: &R,
    hooks: &mut H,
    clock: &C,
    log: &mut TrainLog,
) -> Result<(), TrainError> {
    if iters == 0 {
        return Ok(());
    }
    let tag = phase.tag();
    let root = StreamKey::root(cfg.seed);
    let batch_key = root.tagged(tag.name()).tagged("batch");
    let sample_key = root.tagged(tag.name()).tagged("oracle-sample");

    let mut theta_adam = phase
        .updates_theta()
        .then(|| AdamState::new(&theta_shapes(theta), cfg.lr));
    let mut phi_adam = phase
        .updates_phi()
        .then(|| AdamState::new(&phi_shapes(phi), cfg.lr));

    let mut best_surrogate = f64::INFINITY;
    let mut degraded_streak: u64 = 0;

    for iter in 1..=iters as u64 {
        let mut bstream = batch_key.at(iter).stream();
        let indices: Vec<usize> = (0..cfg.batch_size)
            .map(|_| bstream.below(ds.len() as u64) as usize)
            .collect();
        let slot_keys: Vec<StreamKey> = (0..cfg.batch_size)
            .map(|s| sample_key.at(iter).at(s as u64))
            .collect();
        let ranges = chunk_ranges(cfg.batch_size);

        let theta_ref: &ListaParams = theta;
        let phi_ref: &PolicyParams = phi;
        let chunks: Vec<ChunkOut> = runner.run(ranges.len(), &|c| {
            let (lo, hi) = ranges[c];
            let batch: Vec<&SparseInstance> =
                indices[lo..hi].iter().map(|&i| &ds.instances[i]).collect();
            match phase {
                Phase::Warm | Phase::BaselineOnly => {
                    let (stats, g) = baseline_grad(theta_ref, &batch, cfg.gamma);
                    ChunkOut {
                        stats,
                        theta: Some(g),
                        phi: None,
                    }
                }
                Phase::Stage1 => match cfg.stage1_mode {
                    Stage1Mode::FullExpectation => {
                        let (stats, g) = stage1_full_grad(theta_ref, &batch, cfg.beta, channels);
                        ChunkOut {
                            stats,
                            theta: Some(g),
                            phi: None,
                        }
                    }
                    Stage1Mode::StochasticSample => {
                        let (stats, g) = stage1_sample_grad(
                            theta_ref,
                            &batch,
                            cfg.beta,
                            channels,
                            &slot_keys[lo..hi],
                        );
                        ChunkOut {
                            stats,
                            theta: Some(g),
                            phi: None,
                        }
                    }
                },
                Phase::Stage2 => {
                    let (stats, g) = stage2_grad(
                        theta_ref,
                        phi_ref,
                        &batch,
                        cfg.beta,
                        cfg.stage2_mode,
                        channels,
                        Some(&ds.a),
                    );
                    ChunkOut {
                        stats,
                        theta: None,
                        phi: Some(g),
                    }
                }
                Phase::Stage3 | Phase::Aevb => {
                    let (stats, gt, gp) =
                        stage3_grad(theta_ref, phi_ref, &batch, cfg.beta, channels, Some(&ds.a));
                    ChunkOut {
                        stats,
                        theta: Some(gt),
                        phi: Some(gp),
                    }
                }
            }
        });

        // Ordered fold: chunk index order, fixed partition.
        let mut stats = BatchStats::default();
        let mut theta_grads: Option<FlatGrads> = None;
        let mut phi_grads: Option<FlatGrads> = None;
        for ch in &chunks {
            fold_stats(&mut stats, &ch.stats);
            if let Some(g) = &ch.theta {
                match &mut theta_grads {
                    Some(acc) => acc.add(g),
                    None => theta_grads = Some(g.clone()),
                }
            }
            if let Some(g) = &ch.phi {
                match &mut phi_grads {
                    Some(acc) => acc.add(g),
                    None => phi_grads = Some(g.clone()),
                }
            }
        }

        let inv_batch = 1.0 / cfg.batch_size as f64;
        let surrogate = stats.loss_sum * inv_batch;
        if !surrogate.is_finite() {
            return Err(TrainError::NonFinite { stage: tag, iter });
        }
        if surrogate < best_surrogate {
            best_surrogate = surrogate;
        }
        if surrogate > DIVERGENCE_FACTOR * best_surrogate.abs() + 1e-12
            && surrogate > best_surrogate
        {
            degraded_streak += 1;
            if degraded_streak >= DIVERGENCE_WINDOW {
                return Err(TrainError::Diverged { stage: tag, iter });
            }
        } else {
            degraded_streak = 0;
        }

        if let (Some(adam), Some(mut g)) = (&mut theta_adam, theta_grads) {
            g.scale(inv_batch);
            adam.step(&mut theta_tensors_mut(theta), &g);
        }
        if let (Some(adam), Some(mut g)) = (&mut phi_adam, phi_grads) {
            g.scale(inv_batch);
            adam.step(&mut phi_tensors_mut(phi), &g);
        }

        let probe = if phase.probes_policy() && iter % PROBE_EVERY == 0 {
            Some(probe_averaged_entropy(theta, phi, ds, channels, runner))
        } else {
            None
        };

        let rec = TrainRecord {
            stage: tag,
            iter,
            objective: phase.report_sign() * surrogate,
            oracle_entropy: stats.oracle_entropy_sum.map(|s| s * inv_batch),
            q_entropy: stats.q_entropy_sum.map(|s| s * inv_batch),
            probe_q_entropy: probe,
            wall_secs: clock.now_secs(),
        };
        hooks.on_record(&rec).map_err(TrainError::Hook)?;
        log.records.push(rec);
    }
    Ok(())
}

/// Entropy of the stop histogram averaged over a fixed probe subset of the
/// training set; flat-lining toward zero is the collapse signature.
pub fn probe_averaged_entropy<R: BatchRunner>(
    theta: &ListaParams,
    phi: &PolicyParams,
    ds: &Dataset,
    channels: &Channels,
    runner: &R,
) -> f64 {
    let count = core::cmp::min(PROBE_COUNT, ds.len());
    let qs: Vec<Vec<f64>> = runner.run(count, &|i| {
        let inst = &ds.instances[i];
        match lista::forward(theta, &inst.b) {
            Ok(path) => {
                let states: Vec<&[f64]> = channels
                    .layers()
                    .iter()
                    .map(|&t| path.state(t))
                    .collect();
                policy::rollout_states(phi, &inst.b, &states, Some(&ds.a))
                    .probs()
                    .to_vec()
            }
            Err(_) => vec![f64::NAN; channels.count()],
        }
    });
    let k = channels.count();
    let mut avg = vec![0.0; k];
    for q in &qs {
        for (a, &p) in avg.iter_mut().zip(q.iter()) {
            *a += p;
        }
    }
    for a in &mut avg {
        *a /= count as f64;
    }
    stopping::entropy(&avg)
}

fn init_models(ds: &Dataset, cfg: &TrainConfig, channels: &Channels) -> (ListaParams, PolicyParams) {
    let theta = ListaParams::init_ista_like(&ds.a, cfg.init_rho, cfg.init_step, cfg.depth);
    let phi = PolicyParams::init(
        ds.m(),
        ds.n(),
        channels.count(),
        cfg.hidden1,
        cfg.hidden2,
        cfg.feature_mode,
        StreamKey::root(cfg.seed).tagged("policy-init"),
    );
    (theta, phi)
}

/// The staged schedule: baseline warm start, oracle-weighted model learning,
/// policy imitation, then optional joint fine-tuning. Checkpoints fire via
/// hooks at each stage boundary.
pub fn train_full<R: BatchRunner, H: TrainHooks, C: Clock>(
    ds: &Dataset,
    cfg: &TrainConfig,
    runner: &R,
    hooks: &mut H,
    clock: &C,
) -> Result<(ListaParams, PolicyParams, TrainLog), TrainError> {
    let channels = Channels::from_config(cfg);
    let (mut theta, mut phi) = init_models(ds, cfg, &channels);
    let mut log = TrainLog::default();

    let plan: [(Phase, usize); 4] = [
        (Phase::Warm, cfg.warm_iters),
        (Phase::Stage1, cfg.stage1_iters),
        (Phase::Stage2, cfg.stage2_iters),
        (Phase::Stage3, cfg.stage3_iters),
    ];
    for (phase, iters) in plan {
        if iters == 0 {
            continue;
        }
        let tag = phase.tag();
        run_phase(
            phase, iters, &mut theta, &mut phi, ds, cfg, &channels, runner, hooks, clock, &mut log,
        )?;
        hooks
            .on_stage_complete(tag, &theta, &phi)
            .map_err(TrainError::Hook)?;
    }
    Ok((theta, phi, log))
}

/// Joint training ablation: the same warm start, then the joint objective
/// from scratch for the rest of the staged budget (equal gradient-evaluation
/// count; no oracle, no stages).
pub fn train_aevb<R: BatchRunner, H: TrainHooks, C: Clock>(
    ds: &Dataset,
    cfg: &TrainConfig,
    runner: &R,
    hooks: &mut H,
    clock: &C,
) -> Result<(ListaParams, PolicyParams, TrainLog), TrainError> {
    let channels = Channels::from_config(cfg);
    let (mut theta, mut phi) = init_models(ds, cfg, &channels);
    let mut log = TrainLog::default();

    if cfg.warm_iters > 0 {
        run_phase(
            Phase::Warm,
            cfg.warm_iters,
            &mut theta,
            &mut phi,
            ds,
            cfg,
            &channels,
            runner,
            hooks,
            clock,
            &mut log,
        )?;
        hooks
            .on_stage_complete(StageTag::Warm, &theta, &phi)
            .map_err(TrainError::Hook)?;
    }
    let joint = cfg.stage1_iters + cfg.stage2_iters + cfg.stage3_iters;
    run_phase(
        Phase::Aevb,
        joint,
        &mut theta,
        &mut phi,
        ds,
        cfg,
        &channels,
        runner,
        hooks,
        clock,
        &mut log,
    )?;
    hooks
        .on_stage_complete(StageTag::Aevb, &theta, &phi)
        .map_err(TrainError::Hook)?;
    Ok((theta, phi, log))
}

/// Fixed-depth baseline trained for the full staged budget (warm start
/// included), so equal-budget comparisons are iteration-for-iteration fair.
pub fn train_baseline<R: BatchRunner, H: TrainHooks, C: Clock>(
    ds: &Dataset,
    cfg: &TrainConfig,
    runner: &R,
    hooks: &mut H,
    clock: &C,
) -> Result<(ListaParams, PolicyParams, TrainLog), TrainError> {
    let channels = Channels::from_config(cfg);
    let (mut theta, mut phi) = init_models(ds, cfg, &channels);
    let mut log = TrainLog::default();
    run_phase(
        Phase::BaselineOnly,
        cfg.total_iters(),
        &mut theta,
        &mut phi,
        ds,
        cfg,
        &channels,
        runner,
        hooks,
        clock,
        &mut log,
    )?;
    hooks
        .on_stage_complete(StageTag::Baseline, &theta, &phi)
        .map_err(TrainError::Hook)?;
    Ok((theta, phi, log))
}

impl stopping::StopDistribution {
    /// Draws a 1-based position.
    pub fn sample(&self, stream: &mut Stream) -> usize {
        let u = stream.uniform();
        let mut acc = 0.0;
        for (i, &p) in self.probs().iter().enumerate() {
            acc += p;
            if u <= acc {
                return i + 1;
            }
        }
        self.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GenConfig;

    fn tiny_dataset(seed: u64) -> Dataset {
        let cfg = GenConfig {
            m: 5,
            n: 8,
            p_b: 0.25,
            snr_levels: vec![20.0, 40.0],
            train_count: 24,
            test_count_per_snr: 2,
            seed,
        };
        crate::data::generate(&cfg).0
    }

    fn tiny_config(seed: u64) -> TrainConfig {
        TrainConfig {
            depth: 3,
            warm_iters: 5,
            stage1_iters: 8,
            stage2_iters: 6,
            stage3_iters: 4,
            batch_size: 6,
            lr: 1e-3,
            beta: 0.1,
            gamma: 1.0,
            stage1_mode: Stage1Mode::FullExpectation,
            stage2_mode: Stage2Mode::ForwardKl,
            channels: None,
            hidden1: 4,
            hidden2: 4,
            feature_mode: FeatureMode::Raw,
            init_rho: 0.1,
            init_step: 0.4,
            seed,
        }
    }

    #[test]
    fn channels_full_set_is_identity() {
        let ch = Channels::full(5);
        assert!(ch.is_full());
        let vals = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(ch.restrict(&vals), vals.to_vec());
    }

    #[test]
    fn channels_subset_selects_positions() {
        let ch = Channels::new(vec![2, 4, 6], 6);
        let vals = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
        assert_eq!(ch.restrict(&vals), vec![20.0, 40.0, 60.0]);
    }

    #[test]
    #[should_panic(expected = "must be a channel")]
    fn channels_require_terminal_layer() {
        Channels::new(vec![1, 2], 4);
    }

    #[test]
    fn singleton_channel_training_is_one_hot() {
        // With only the terminal channel, every stop distribution is the
        // point mass there regardless of the policy.
        let ds = tiny_dataset(400);
        let mut cfg = tiny_config(400);
        cfg.channels = Some(vec![3]);
        let channels = Channels::from_config(&cfg);
        let (theta, phi) = init_models(&ds, &cfg, &channels);
        let inst = &ds.instances[0];
        let path = lista::forward(&theta, &inst.b).unwrap();
        let states: Vec<&[f64]> = channels.layers().iter().map(|&t| path.state(t)).collect();
        let q = policy::rollout_states(&phi, &inst.b, &states, None);
        assert_eq!(q.probs(), &[1.0]);
    }

    #[test]
    fn channel_q_sums_to_one_on_subset() {
        let ds = tiny_dataset(401);
        let mut cfg = tiny_config(401);
        cfg.depth = 6;
        cfg.channels = Some(vec![2, 4, 6]);
        let channels = Channels::from_config(&cfg);
        let (theta, phi) = init_models(&ds, &cfg, &channels);
        let inst = &ds.instances[1];
        let path = lista::forward(&theta, &inst.b).unwrap();
        let states: Vec<&[f64]> = channels.layers().iter().map(|&t| path.state(t)).collect();
        let q = policy::rollout_states(&phi, &inst.b, &states, None);
        let sum: f64 = q.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut x = vec![3.0f64];
        let mut adam = AdamState::new(&[1], 0.05);
        for _ in 0..2000 {
            let g = FlatGrads {
                tensors: vec![vec![2.0 * x[0]]],
            };
            let mut params: Vec<&mut [f64]> = vec![&mut x];
            adam.step(&mut params, &g);
        }
        assert!(x[0].abs() < 1e-2, "x = {}", x[0]);
    }

    #[test]
    fn stage1_single_layer_reduces_to_supervised() {
        // T = 1: the oracle is the point mass, so the objective is plain l_1.
        let ds = tiny_dataset(402);
        let mut cfg = tiny_config(402);
        cfg.depth = 1;
        let channels = Channels::full(1);
        let theta = ListaParams::init_ista_like(&ds.a, cfg.init_rho, cfg.init_step, 1);
        let batch: Vec<&SparseInstance> = ds.instances.iter().take(4).collect();
        let (stats, _) = stage1_full_grad(&theta, &batch, cfg.beta, &channels);
        let mut manual = 0.0;
        for inst in &batch {
            let path = lista::forward(&theta, &inst.b).unwrap();
            manual += 0.5 * mat::sq_dist(path.state(1), &inst.x_star);
        }
        assert!((stats.loss_sum - manual).abs() < 1e-12);
    }

    #[test]
    fn stage2_map_objective_at_init_is_two_ln_two() {
        // pi = 0.5 at a zero-initialized head, T = 3, oracle mode at 2:
        // -log q(2) = -log 0.25.
        let ds = tiny_dataset(403);
        let cfg = tiny_config(403);
        let channels = Channels::full(3);
        let (mut theta, phi) = init_models(&ds, &cfg, &channels);
        // A huge third-layer threshold zeroes x_3, putting the oracle mode
        // at position 2 (two proximal steps beat one).
        theta.layers[2].lambda = 1e6;
        let mut found = false;
        for inst in &ds.instances {
            if let Some((q, losses)) = oracle_for_instance(&theta, &channels, inst, cfg.beta) {
                let _ = q;
                if stopping::map_stop(&losses) == 2 {
                    let (stats, _) = stage2_grad(
                        &theta,
                        &phi,
                        &[inst],
                        cfg.beta,
                        Stage2Mode::Map,
                        &channels,
                        None,
                    );
                    let expect = -(0.25f64).ln();
                    assert!((stats.loss_sum - expect).abs() < 1e-12);
                    found = true;
                    break;
                }
            }
        }
        assert!(found, "no instance with oracle mode at position 2");
    }

    #[test]
    fn stage2_leaves_theta_untouched() {
        let ds = tiny_dataset(404);
        let cfg = tiny_config(404);
        let channels = Channels::full(3);
        let (theta, mut phi) = init_models(&ds, &cfg, &channels);
        let before = theta.clone();
        let batch: Vec<&SparseInstance> = ds.instances.iter().take(6).collect();
        let mut adam = AdamState::new(&phi_shapes(&phi), cfg.lr);
        for _ in 0..5 {
            let (_, mut g) = stage2_grad(
                &theta,
                &phi,
                &batch,
                cfg.beta,
                Stage2Mode::ForwardKl,
                &channels,
                None,
            );
            g.scale(1.0 / batch.len() as f64);
            adam.step(&mut phi_tensors_mut(&mut phi), &g);
        }
        assert_eq!(theta, before);
    }

    #[test]
    fn full_training_is_seed_deterministic() {
        let ds = tiny_dataset(405);
        let cfg = tiny_config(405);
        let one = train_full(&ds, &cfg, &SerialRunner, &mut NoHooks, &NullClock).unwrap();
        let two = train_full(&ds, &cfg, &SerialRunner, &mut NoHooks, &NullClock).unwrap();
        assert_eq!(one.0, two.0);
        assert_eq!(one.1, two.1);
        assert_eq!(one.2, two.2);
    }

    #[test]
    fn stage_iteration_counts_match_config() {
        let ds = tiny_dataset(406);
        let cfg = tiny_config(406);
        let (_, _, log) = train_full(&ds, &cfg, &SerialRunner, &mut NoHooks, &NullClock).unwrap();
        assert_eq!(log.stage_len(StageTag::Warm), cfg.warm_iters);
        assert_eq!(log.stage_len(StageTag::Stage1), cfg.stage1_iters);
        assert_eq!(log.stage_len(StageTag::Stage2), cfg.stage2_iters);
        assert_eq!(log.stage_len(StageTag::Stage3), cfg.stage3_iters);
    }

    #[test]
    fn stage3_zero_reproduces_two_stage_semantics() {
        let ds = tiny_dataset(407);
        let mut cfg = tiny_config(407);
        cfg.stage3_iters = 0;
        let (_, _, log) = train_full(&ds, &cfg, &SerialRunner, &mut NoHooks, &NullClock).unwrap();
        assert_eq!(log.stage_len(StageTag::Stage3), 0);
        assert_eq!(
            log.records.last().unwrap().stage,
            StageTag::Stage2,
            "two-stage run must end with the imitation stage"
        );
    }

    #[test]
    fn aevb_budget_matches_staged_budget() {
        let ds = tiny_dataset(408);
        let cfg = tiny_config(408);
        let (_, _, full_log) =
            train_full(&ds, &cfg, &SerialRunner, &mut NoHooks, &NullClock).unwrap();
        let (_, _, aevb_log) =
            train_aevb(&ds, &cfg, &SerialRunner, &mut NoHooks, &NullClock).unwrap();
        assert_eq!(full_log.records.len(), aevb_log.records.len());
    }

    #[test]
    fn rerunning_a_stage_from_its_entry_state_is_bit_exact() {
        let ds = tiny_dataset(409);
        let cfg = tiny_config(409);
        let channels = Channels::from_config(&cfg);
        let (mut theta, mut phi) = init_models(&ds, &cfg, &channels);
        let mut log = TrainLog::default();
        run_phase(
            Phase::Warm,
            cfg.warm_iters,
            &mut theta,
            &mut phi,
            &ds,
            &cfg,
            &channels,
            &SerialRunner,
            &mut NoHooks,
            &NullClock,
            &mut log,
        )
        .unwrap();
        let entry_theta = theta.clone();
        let entry_phi = phi.clone();
        run_phase(
            Phase::Stage1,
            cfg.stage1_iters,
            &mut theta,
            &mut phi,
            &ds,
            &cfg,
            &channels,
            &SerialRunner,
            &mut NoHooks,
            &NullClock,
            &mut log,
        )
        .unwrap();
        let first = theta.clone();

        // Rerun from the captured entry checkpoint.
        let mut theta2 = entry_theta;
        let mut phi2 = entry_phi;
        let mut log2 = TrainLog::default();
        run_phase(
            Phase::Stage1,
            cfg.stage1_iters,
            &mut theta2,
            &mut phi2,
            &ds,
            &cfg,
            &channels,
            &SerialRunner,
            &mut NoHooks,
            &NullClock,
            &mut log2,
        )
        .unwrap();
        assert_eq!(first, theta2);
    }

    #[test]
    fn oracle_sampling_concentrates_as_beta_vanishes() {
        let losses = [0.8, 0.2, 0.5];
        let q = stopping::oracle_q(&losses, 1e-4);
        let key = StreamKey::root(410).tagged("concentrate");
        let mut hits = 0;
        for i in 0..1000 {
            if q.sample(&mut key.at(i).stream()) == 2 {
                hits += 1;
            }
        }
        assert!(hits > 990, "only {hits}/1000 samples at the argmin");
    }

    #[test]
    fn chunk_partition_is_thread_count_free() {
        assert_eq!(chunk_ranges(64).len(), 8);
        assert_eq!(chunk_ranges(6), vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)]);
        assert_eq!(chunk_ranges(10), vec![(0, 2), (2, 4), (4, 6), (6, 8), (8, 10)]);
    }
}
