//! Synthetic sparse-recovery problem generation.
//!
//! One shared measurement matrix with unit-norm columns, Bernoulli-Gaussian
//! signals, and white Gaussian noise rescaled per instance so the recorded
//! SNR is hit exactly. Every draw is keyed by `(seed, purpose, index)`, so
//! datasets regenerate bit-identically regardless of generation order.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::mat::{self, DenseMat};
use crate::math;
use crate::rng::StreamKey;

/// Generation parameters for one train/test dataset pair.
#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    /// Measurement count m.
    pub m: usize,
    /// Signal dimension n.
    pub n: usize,
    /// Per-entry probability of a nonzero signal coefficient.
    pub p_b: f64,
    /// Noise levels in dB; training draws uniformly among them.
    pub snr_levels: Vec<f64>,
    pub train_count: usize,
    pub test_count_per_snr: usize,
    pub seed: u64,
}

impl GenConfig {
    /// Small profile that trains in minutes on a laptop.
    pub fn desk(seed: u64) -> Self {
        GenConfig {
            m: 50,
            n: 100,
            p_b: 0.1,
            snr_levels: vec![20.0, 30.0, 40.0],
            train_count: 20_000,
            test_count_per_snr: 500,
            seed,
        }
    }

    /// Full-size profile.
    pub fn paper(seed: u64) -> Self {
        GenConfig {
            m: 250,
            n: 500,
            p_b: 0.1,
            snr_levels: vec![20.0, 30.0, 40.0],
            train_count: 50_000,
            test_count_per_snr: 1000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        use alloc::format;
        if self.m == 0 || self.m >= self.n {
            return Err(format!(
                "need 0 < m < n for an underdetermined system, got m={} n={}",
                self.m, self.n
            ));
        }
        if !(self.p_b > 0.0 && self.p_b < 1.0) {
            return Err(format!("p_b must be in (0, 1), got {}", self.p_b));
        }
        if self.snr_levels.is_empty() {
            return Err("snr_levels must be nonempty".into());
        }
        if self.snr_levels.iter().any(|s| !s.is_finite()) {
            return Err("snr_levels must be finite".into());
        }
        Ok(())
    }
}

/// One synthetic problem: measurement, ground truth, recorded noise level,
/// and the stream key it was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseInstance {
    pub b: Vec<f64>,
    pub x_star: Vec<f64>,
    pub snr_db: f64,
    pub instance_seed: u64,
}

/// Fields of [`GenConfig`] that the dataset container carries along; the
/// remaining generation counts live in the run manifest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetMeta {
    pub p_b: f64,
    pub seed: u64,
}

/// A measurement matrix with its instances. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub a: DenseMat,
    pub instances: Vec<SparseInstance>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// I.i.d. `N(0, 1/m)` entries, row-major from a single stream.
pub fn gaussian_matrix(m: usize, n: usize, key: StreamKey) -> DenseMat {
    let sd = math::sqrt(1.0 / m as f64);
    let mut s = key.stream();
    DenseMat::from_fn(m, n, |_, _| sd * s.normal())
}

/// Gaussian measurement matrix with columns normalized to unit l2 norm.
///
/// Panics unless `0 < m < n` (the generator only serves underdetermined
/// systems).
pub fn generate_matrix(cfg: &GenConfig) -> DenseMat {
    assert!(
        cfg.m > 0 && cfg.m < cfg.n,
        "generate_matrix: need 0 < m < n, got m={} n={}",
        cfg.m,
        cfg.n
    );
    let mut a = gaussian_matrix(cfg.m, cfg.n, StreamKey::root(cfg.seed).tagged("matrix"));
    a.normalize_columns();
    a
}

/// Draws one instance from its own stream: Bernoulli support (redrawn in the
/// all-zero corner case), standard-Gaussian values, then white noise scaled
/// so that `10 log10(||A x*||^2 / ||eps||^2)` equals `snr_db` exactly.
pub fn generate_instance(
    a: &DenseMat,
    p_b: f64,
    snr_db: f64,
    key: StreamKey,
) -> SparseInstance {
    assert!(snr_db.is_finite(), "snr_db must be finite, got {snr_db}");
    let n = a.cols();
    let m = a.rows();
    let mut s = key.stream();

    let mut support = vec![false; n];
    loop {
        let mut any = false;
        for flag in support.iter_mut() {
            *flag = s.bernoulli(p_b);
            any |= *flag;
        }
        if any {
            break;
        }
    }
    let mut x_star = vec![0.0; n];
    for (x, &on) in x_star.iter_mut().zip(support.iter()) {
        if on {
            *x = s.normal();
        }
    }

    let ax = a.matvec(&x_star);
    let mut eps: Vec<f64> = (0..m).map(|_| s.normal()).collect();
    let signal_norm = mat::l2_norm(&ax);
    let noise_norm = mat::l2_norm(&eps);
    let scale = signal_norm * math::pow(10.0, -snr_db / 20.0) / noise_norm;
    let b: Vec<f64> = ax
        .iter()
        .zip(eps.iter_mut())
        .map(|(axi, e)| {
            *e *= scale;
            axi + *e
        })
        .collect();

    SparseInstance {
        b,
        x_star,
        snr_db,
        instance_seed: key.value(),
    }
}

/// Generates the train and test datasets for a config.
///
/// Training instances draw their SNR uniformly from `snr_levels`; the test
/// set holds exactly `test_count_per_snr` instances per level, in declared
/// level order.
pub fn generate(cfg: &GenConfig) -> (Dataset, Dataset) {
    cfg.validate().expect("invalid GenConfig");
    let a = generate_matrix(cfg);
    let root = StreamKey::root(cfg.seed);
    let meta = DatasetMeta {
        p_b: cfg.p_b,
        seed: cfg.seed,
    };

    let snr_key = root.tagged("train-snr");
    let inst_key = root.tagged("train-instance");
    let train_instances: Vec<SparseInstance> = (0..cfg.train_count)
        .map(|i| {
            let li = snr_key.at(i as u64).stream().below(cfg.snr_levels.len() as u64);
            let snr = cfg.snr_levels[li as usize];
            generate_instance(&a, cfg.p_b, snr, inst_key.at(i as u64))
        })
        .collect();

    let test_key = root.tagged("test-instance");
    let mut test_instances = Vec::with_capacity(cfg.snr_levels.len() * cfg.test_count_per_snr);
    for (li, &snr) in cfg.snr_levels.iter().enumerate() {
        for j in 0..cfg.test_count_per_snr {
            let idx = (li * cfg.test_count_per_snr + j) as u64;
            test_instances.push(generate_instance(&a, cfg.p_b, snr, test_key.at(idx)));
        }
    }

    (
        Dataset {
            a: a.clone(),
            instances: train_instances,
            meta,
        },
        Dataset {
            a,
            instances: test_instances,
            meta,
        },
    )
}

/// SNR recomputed from stored fields, in dB.
pub fn measured_snr_db(a: &DenseMat, inst: &SparseInstance) -> f64 {
    let ax = a.matvec(&inst.x_star);
    let eps: Vec<f64> = inst.b.iter().zip(ax.iter()).map(|(b, s)| b - s).collect();
    10.0 * math::log10(mat::sq_norm(&ax) / mat::sq_norm(&eps))
}
