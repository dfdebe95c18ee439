//! Recovery metrics: pooled NMSE, stop-weighted expected NMSE, the
//! test-averaged stop histogram, the mass-weighted per-layer convergence
//! curve, and threshold-stopping accounting.
//!
//! NMSE here is always the pooled ratio `10 log10(sum ||xhat - x*||^2 /
//! sum ||x*||^2)`, never a mean of per-instance ratios.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::lista::{self, ListaParams};
use crate::mat;
use crate::math;
use crate::policy::{self, PolicyParams};
use crate::train::{BatchRunner, Channels};

/// Mass below which a convergence-curve layer is reported as undefined.
pub const CURVE_MASS_FLOOR: f64 = 1e-8;

/// Pooled NMSE in dB. Exact recovery yields `-inf`.
///
/// Panics on length mismatch, empty input, or zero total truth energy.
pub fn nmse_db(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> f64 {
    assert_eq!(estimates.len(), truths.len(), "nmse_db: length mismatch");
    assert!(!estimates.is_empty(), "nmse_db: empty input");
    let mut err = 0.0;
    let mut energy = 0.0;
    for (e, t) in estimates.iter().zip(truths.iter()) {
        err += mat::sq_dist(e, t);
        energy += mat::sq_norm(t);
    }
    assert!(energy > 0.0, "nmse_db: zero truth energy");
    if err == 0.0 {
        return f64::NEG_INFINITY;
    }
    10.0 * math::log10(err / energy)
}

/// Per-instance evaluation artifacts for the stop model on a dataset:
/// everything the report metrics need, gathered in one parallel pass.
#[derive(Clone, Debug)]
pub struct StopEval {
    /// Stop distribution per instance, over channel positions.
    pub q: Vec<Vec<f64>>,
    /// Squared error per instance and channel position.
    pub sq_err: Vec<Vec<f64>>,
    /// `||x*||^2` per instance.
    pub truth_energy: Vec<f64>,
    /// Recorded noise level per instance.
    pub snr_db: Vec<f64>,
    /// 1-based stop layer chosen by threshold stopping.
    pub det_stop_layer: Vec<usize>,
    /// Squared error of the threshold-stopped estimate.
    pub det_sq_err: Vec<f64>,
    /// Layers actually computed under threshold stopping.
    pub det_layers_computed: Vec<usize>,
    /// Layer index (1-based) of each channel position.
    pub channel_layers: Vec<usize>,
}

/// Runs the predictive model and policy over a dataset.
///
/// `threshold` drives the sequential deployment mode reported alongside the
/// expectation metrics.
pub fn eval_stop_model<R: BatchRunner>(
    theta: &ListaParams,
    phi: &PolicyParams,
    ds: &Dataset,
    channels: &Channels,
    threshold: f64,
    runner: &R,
) -> StopEval {
    let n_inst = ds.len();
    struct PerInstance {
        q: Vec<f64>,
        sq_err: Vec<f64>,
        truth_energy: f64,
        snr_db: f64,
        det: (usize, usize, f64),
    }
    let rows: Vec<PerInstance> = runner.run(n_inst, &|i| {
        let inst = &ds.instances[i];
        let path = lista::forward(theta, &inst.b).expect("non-finite state during eval");
        let states: Vec<&[f64]> = channels
            .layers()
            .iter()
            .map(|&t| path.state(t))
            .collect();
        let q = policy::rollout_states(phi, &inst.b, &states, Some(&ds.a));
        let sq_err: Vec<f64> = states
            .iter()
            .map(|x| mat::sq_dist(x, &inst.x_star))
            .collect();
        let (stop_pos, computed_pos) =
            policy::deterministic_stop(phi, &inst.b, states.iter().copied(), threshold, Some(&ds.a));
        let det_layer = channels.layers()[stop_pos - 1];
        let det_computed = channels.layers()[computed_pos - 1];
        let det_err = sq_err[stop_pos - 1];
        PerInstance {
            q: q.probs().to_vec(),
            sq_err,
            truth_energy: mat::sq_norm(&inst.x_star),
            snr_db: inst.snr_db,
            det: (det_layer, det_computed, det_err),
        }
    });

    let mut out = StopEval {
        q: Vec::with_capacity(n_inst),
        sq_err: Vec::with_capacity(n_inst),
        truth_energy: Vec::with_capacity(n_inst),
        snr_db: Vec::with_capacity(n_inst),
        det_stop_layer: Vec::with_capacity(n_inst),
        det_sq_err: Vec::with_capacity(n_inst),
        det_layers_computed: Vec::with_capacity(n_inst),
        channel_layers: channels.layers().to_vec(),
    };
    for r in rows {
        out.q.push(r.q);
        out.sq_err.push(r.sq_err);
        out.truth_energy.push(r.truth_energy);
        out.snr_db.push(r.snr_db);
        out.det_stop_layer.push(r.det.0);
        out.det_layers_computed.push(r.det.1);
        out.det_sq_err.push(r.det.2);
    }
    out
}

/// Per-layer squared errors of the fixed-depth model over a dataset, plus
/// truth energies and noise levels (ordered reduction, deterministic).
pub struct FixedEval {
    pub sq_err: Vec<Vec<f64>>,
    pub truth_energy: Vec<f64>,
    pub snr_db: Vec<f64>,
}

pub fn eval_fixed_model<R: BatchRunner>(
    theta: &ListaParams,
    ds: &Dataset,
    runner: &R,
) -> FixedEval {
    let rows: Vec<(Vec<f64>, f64, f64)> = runner.run(ds.len(), &|i| {
        let inst = &ds.instances[i];
        let path = lista::forward(theta, &inst.b).expect("non-finite state during eval");
        let errs: Vec<f64> = path
            .states
            .iter()
            .map(|x| mat::sq_dist(x, &inst.x_star))
            .collect();
        (errs, mat::sq_norm(&inst.x_star), inst.snr_db)
    });
    let mut out = FixedEval {
        sq_err: Vec::with_capacity(ds.len()),
        truth_energy: Vec::with_capacity(ds.len()),
        snr_db: Vec::with_capacity(ds.len()),
    };
    for (e, te, snr) in rows {
        out.sq_err.push(e);
        out.truth_energy.push(te);
        out.snr_db.push(snr);
    }
    out
}

impl FixedEval {
    /// Pooled NMSE of the final layer, optionally restricted to one SNR.
    pub fn nmse_at_layer(&self, layer: usize, snr_filter: Option<f64>) -> f64 {
        let mut err = 0.0;
        let mut energy = 0.0;
        for i in 0..self.sq_err.len() {
            if snr_filter.is_some_and(|s| self.snr_db[i] != s) {
                continue;
            }
            err += self.sq_err[i][layer - 1];
            energy += self.truth_energy[i];
        }
        assert!(energy > 0.0, "nmse_at_layer: no instances selected");
        if err == 0.0 {
            f64::NEG_INFINITY
        } else {
            10.0 * math::log10(err / energy)
        }
    }

    /// Per-layer pooled NMSE curve (every layer defined).
    pub fn convergence_curve(&self) -> Vec<f64> {
        let depth = self.sq_err[0].len();
        (1..=depth).map(|t| self.nmse_at_layer(t, None)).collect()
    }
}

impl StopEval {
    /// Pooled expected NMSE under each instance's stop distribution:
    /// `10 log10( sum_i sum_t q(t|i) e_{i,t} / sum_i ||x*_i||^2 )`.
    pub fn expected_nmse_db(&self, snr_filter: Option<f64>) -> f64 {
        let mut err = 0.0;
        let mut energy = 0.0;
        for i in 0..self.q.len() {
            if snr_filter.is_some_and(|s| self.snr_db[i] != s) {
                continue;
            }
            err += mat::dot(&self.q[i], &self.sq_err[i]);
            energy += self.truth_energy[i];
        }
        assert!(energy > 0.0, "expected_nmse_db: no instances selected");
        if err == 0.0 {
            f64::NEG_INFINITY
        } else {
            10.0 * math::log10(err / energy)
        }
    }

    /// Test-averaged stop distribution `(1/N) sum_i q(.|i)` over channel
    /// positions.
    pub fn stop_histogram(&self) -> Vec<f64> {
        let k = self.channel_layers.len();
        let mut hist = vec![0.0; k];
        for q in &self.q {
            for (h, &p) in hist.iter_mut().zip(q.iter()) {
                *h += p;
            }
        }
        let norm = 1.0 / self.q.len() as f64;
        for h in &mut hist {
            *h *= norm;
        }
        hist
    }

    /// Mass-weighted NMSE per channel position:
    /// `10 log10( (sum_i q(t|i) e_{i,t} / sum_i q(t|i)) / (sum_i ||x*_i||^2 / N) )`.
    /// Positions with total mass below [`CURVE_MASS_FLOOR`] are `None`.
    pub fn weighted_convergence(&self) -> Vec<Option<f64>> {
        let k = self.channel_layers.len();
        let n = self.q.len();
        let mean_energy: f64 = self.truth_energy.iter().sum::<f64>() / n as f64;
        (0..k)
            .map(|t| {
                let mut mass = 0.0;
                let mut err = 0.0;
                for i in 0..n {
                    mass += self.q[i][t];
                    err += self.q[i][t] * self.sq_err[i][t];
                }
                if mass < CURVE_MASS_FLOOR {
                    None
                } else {
                    Some(10.0 * math::log10((err / mass) / mean_energy))
                }
            })
            .collect()
    }

    /// Pooled NMSE of the threshold-stopped estimates.
    pub fn det_stop_nmse_db(&self) -> f64 {
        let err: f64 = self.det_sq_err.iter().sum();
        let energy: f64 = self.truth_energy.iter().sum();
        if err == 0.0 {
            f64::NEG_INFINITY
        } else {
            10.0 * math::log10(err / energy)
        }
    }

    /// Mean layers actually computed under threshold stopping.
    pub fn mean_layers_computed(&self) -> f64 {
        self.det_layers_computed.iter().sum::<usize>() as f64
            / self.det_layers_computed.len() as f64
    }

    /// Expected stop mass strictly before the final channel, averaged over
    /// instances.
    pub fn mass_before_final(&self) -> f64 {
        let hist = self.stop_histogram();
        1.0 - hist[hist.len() - 1]
    }
}
