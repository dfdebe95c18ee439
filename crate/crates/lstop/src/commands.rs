//! Command implementations behind the CLI.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use lstop_core::classic::{self, LassoConfig, SolverKind};
use lstop_core::data::{self, Dataset, GenConfig, SparseInstance};
use lstop_core::lista::ListaParams;
use lstop_core::mat;
use lstop_core::metrics;
use lstop_core::policy::{FeatureMode, PolicyParams};
use lstop_core::train::{
    self, BatchRunner, Channels, StageTag, TrainConfig, TrainError, TrainHooks, TrainLog,
    TrainRecord,
};

use crate::cli::*;
use crate::formats;
use crate::parallel::{resolve_threads, RayonRunner, SystemClock};
use crate::report::{comparison_csv, comparison_json, EvalReport};

fn finite_or_null(x: f64) -> Value {
    match serde_json::Number::from_f64(x) {
        Some(n) => Value::Number(n),
        None => Value::Null,
    }
}

fn opt_or_null(x: Option<f64>) -> Value {
    match x {
        Some(v) => finite_or_null(v),
        None => Value::Null,
    }
}

/// Every command leaves a resolved-config snapshot next to its outputs; the
/// snapshot alone suffices to re-run the command identically.
fn write_snapshot(dir_or_file: &Path, is_dir: bool, payload: Value) -> Result<(), CliError> {
    let path = if is_dir {
        dir_or_file.join("config.json")
    } else {
        let mut name = dir_or_file.as_os_str().to_owned();
        name.push(".config.json");
        PathBuf::from(name)
    };
    fs::write(&path, serde_json::to_string_pretty(&payload).unwrap() + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------- gen ----

pub fn gen(args: GenArgs) -> Result<(), CliError> {
    let mut cfg = match args.scale {
        Scale::Desk => GenConfig::desk(args.seed),
        Scale::Paper => GenConfig::paper(args.seed),
    };
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(p) = args.p_b {
        cfg.p_b = p;
    }
    if let Some(snr) = &args.snr {
        cfg.snr_levels = snr.clone();
    }
    if let Some(c) = args.train_count {
        cfg.train_count = c;
    }
    if let Some(c) = args.test_per_snr {
        cfg.test_count_per_snr = c;
    }
    cfg.validate().map_err(CliError::Usage)?;

    fs::create_dir_all(&args.out)?;
    let started = Instant::now();
    let (train_ds, test_ds) = data::generate(&cfg);
    let train_path = args.out.join("train.lstp");
    let test_path = args.out.join("test.lstp");
    formats::write_dataset(&train_ds, &train_path)?;
    formats::write_dataset(&test_ds, &test_path)?;

    let manifest = json!({
        "config": {
            "m": cfg.m,
            "n": cfg.n,
            "p_b": cfg.p_b,
            "snr_levels": cfg.snr_levels,
            "train_count": cfg.train_count,
            "test_count_per_snr": cfg.test_count_per_snr,
            "seed": cfg.seed,
        },
        "train_file": "train.lstp",
        "train_instances": train_ds.len(),
        "test_file": "test.lstp",
        "test_instances": test_ds.len(),
    });
    fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap() + "\n",
    )?;
    write_snapshot(
        &args.out,
        true,
        json!({
            "command": "gen",
            "scale": format!("{:?}", args.scale).to_lowercase(),
            "seed": args.seed,
            "out": args.out,
            "resolved": manifest["config"],
        }),
    )?;
    eprintln!(
        "gen: {} train + {} test instances (m={} n={}) in {:.1}s",
        train_ds.len(),
        test_ds.len(),
        cfg.m,
        cfg.n,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

// --------------------------------------------------------------- tune ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuneEntry {
    pub algo: String,
    pub t: usize,
    pub rho: f64,
    pub step: f64,
    pub tuning_nmse_db: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuneFile {
    pub subset: usize,
    pub entries: Vec<TuneEntry>,
}

pub fn tune(args: TuneArgs) -> Result<(), CliError> {
    let ds = formats::read_dataset(&args.train)?;
    if args.subset == 0 {
        return Err(CliError::Usage("--subset must be positive".into()));
    }
    let subset: Vec<&SparseInstance> = ds
        .instances
        .iter()
        .take(args.subset.min(ds.len()))
        .collect();
    if subset.is_empty() {
        return Err(CliError::Runtime("training dataset is empty".into()));
    }
    let rho_grid = args
        .rho_grid
        .clone()
        .unwrap_or_else(classic::default_rho_grid);
    let started = Instant::now();
    let step_grid = args
        .step_grid
        .clone()
        .unwrap_or_else(|| vec![classic::auto_step(&ds.a)]);

    let mut entries = Vec::new();
    for &algo in &args.algos {
        let kind = match algo {
            TuneAlgo::Ista => SolverKind::Ista,
            TuneAlgo::Fista => SolverKind::Fista,
        };
        for &t in &args.t {
            if t == 0 {
                return Err(CliError::Usage("--t entries must be positive".into()));
            }
            let (cfg, nmse) = classic::grid_search(&ds.a, &subset, kind, &rho_grid, &step_grid, t);
            entries.push(TuneEntry {
                algo: match algo {
                    TuneAlgo::Ista => "ista".into(),
                    TuneAlgo::Fista => "fista".into(),
                },
                t,
                rho: cfg.rho,
                step: cfg.step,
                tuning_nmse_db: nmse,
            });
        }
    }
    let file = TuneFile {
        subset: subset.len(),
        entries,
    };
    fs::write(
        &args.out,
        serde_json::to_string_pretty(&file).unwrap() + "\n",
    )?;
    write_snapshot(
        &args.out,
        false,
        json!({
            "command": "tune",
            "train": args.train,
            "algos": args.algos.iter().map(|a| format!("{a:?}").to_lowercase()).collect::<Vec<_>>(),
            "t": args.t,
            "subset": args.subset,
            "rho_grid": rho_grid,
            "step_grid": step_grid,
            "out": args.out,
        }),
    )?;
    eprintln!(
        "tune: {} entries over subset of {} in {:.1}s (step-rule estimation included)",
        file.entries.len(),
        file.subset,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn read_tune_entry(path: &Path, algo: &str, t: usize) -> Result<LassoConfig, CliError> {
    let text = fs::read_to_string(path)?;
    let file: TuneFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("bad tune file {}: {e}", path.display())))?;
    let entry = file
        .entries
        .iter()
        .find(|e| e.algo == algo && e.t == t)
        .ok_or_else(|| {
            CliError::Runtime(format!(
                "tune file {} has no entry for ({algo}, T={t})",
                path.display()
            ))
        })?;
    Ok(LassoConfig {
        rho: entry.rho,
        step: entry.step,
        max_iters: t,
    })
}

// -------------------------------------------------------------- train ----

/// Streams per-stage JSONL logs and checkpoints into the run directory.
struct DirHooks {
    run_dir: PathBuf,
    current: Option<(StageTag, BufWriter<fs::File>)>,
    last_checkpoint: Option<PathBuf>,
}

impl DirHooks {
    fn new(run_dir: PathBuf) -> Self {
        DirHooks {
            run_dir,
            current: None,
            last_checkpoint: None,
        }
    }

    fn stage_dir(&self, stage: StageTag) -> PathBuf {
        self.run_dir.join(stage.name())
    }
}

impl TrainHooks for DirHooks {
    fn on_record(&mut self, rec: &TrainRecord) -> Result<(), String> {
        let need_new = match &self.current {
            Some((stage, _)) => *stage != rec.stage,
            None => true,
        };
        if need_new {
            if let Some((_, mut w)) = self.current.take() {
                w.flush().map_err(|e| e.to_string())?;
            }
            let dir = self.stage_dir(rec.stage);
            fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
            let f = fs::File::create(dir.join("log.jsonl")).map_err(|e| e.to_string())?;
            self.current = Some((rec.stage, BufWriter::new(f)));
        }
        let line = json!({
            "stage": rec.stage.name(),
            "iter": rec.iter,
            "objective": finite_or_null(rec.objective),
            "oracle_entropy": opt_or_null(rec.oracle_entropy),
            "q_entropy": opt_or_null(rec.q_entropy),
            "probe_q_entropy": opt_or_null(rec.probe_q_entropy),
            "wall_secs": finite_or_null(rec.wall_secs),
        });
        let (_, w) = self.current.as_mut().unwrap();
        writeln!(w, "{line}").map_err(|e| e.to_string())
    }

    fn on_stage_complete(
        &mut self,
        stage: StageTag,
        theta: &ListaParams,
        phi: &PolicyParams,
    ) -> Result<(), String> {
        if let Some((cur, w)) = self.current.as_mut() {
            if *cur == stage {
                w.flush().map_err(|e| e.to_string())?;
            }
        }
        let dir = self.stage_dir(stage);
        fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        formats::write_theta(theta, &dir.join("theta.lstw")).map_err(|e| e.to_string())?;
        formats::write_policy(phi, &dir.join("policy.lstq")).map_err(|e| e.to_string())?;
        self.last_checkpoint = Some(dir);
        Ok(())
    }
}

fn resolve_init(
    args: &TrainArgs,
    ds: &Dataset,
) -> Result<(f64, f64, &'static str), CliError> {
    if let (Some(rho), Some(step)) = (args.init_rho, args.init_step) {
        return Ok((rho, step, "explicit"));
    }
    if args.init_rho.is_some() || args.init_step.is_some() {
        return Err(CliError::Usage(
            "--init-rho and --init-step must be given together".into(),
        ));
    }
    if let Some(tune_path) = &args.tune {
        let cfg = read_tune_entry(tune_path, "ista", args.depth)?;
        return Ok((cfg.rho, cfg.step, "tune-file"));
    }
    // Fall back to a quick internal grid search on a training prefix.
    let subset: Vec<&SparseInstance> = ds.instances.iter().take(512.min(ds.len())).collect();
    let steps = [classic::auto_step(&ds.a)];
    let (cfg, _) = classic::grid_search(
        &ds.a,
        &subset,
        SolverKind::Ista,
        &classic::default_rho_grid(),
        &steps,
        args.depth,
    );
    Ok((cfg.rho, cfg.step, "internal-grid"))
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let ds = formats::read_dataset(&args.train)?;
    if args.depth == 0 || args.batch == 0 {
        return Err(CliError::Usage("--depth and --batch must be positive".into()));
    }
    if let Some(ch) = &args.channels {
        if ch.last() != Some(&args.depth) {
            return Err(CliError::Usage(format!(
                "--channels must end at the final layer {}",
                args.depth
            )));
        }
    }
    let (init_rho, init_step, init_source) = resolve_init(&args, &ds)?;
    let cfg = TrainConfig {
        depth: args.depth,
        warm_iters: args.warm,
        stage1_iters: args.stage1,
        stage2_iters: args.stage2,
        stage3_iters: args.stage3,
        batch_size: args.batch,
        lr: args.lr,
        beta: args.beta,
        gamma: args.gamma,
        stage1_mode: match args.stage1_mode {
            Stage1ModeArg::Full => train::Stage1Mode::FullExpectation,
            Stage1ModeArg::Sample => train::Stage1Mode::StochasticSample,
        },
        stage2_mode: match args.stage2_mode {
            Stage2ModeArg::Fkl => train::Stage2Mode::ForwardKl,
            Stage2ModeArg::Map => train::Stage2Mode::Map,
        },
        channels: args.channels.clone(),
        hidden1: args.hidden1,
        hidden2: args.hidden2,
        feature_mode: match args.features {
            FeaturesArg::Raw => FeatureMode::Raw,
            FeaturesArg::Residual => FeatureMode::ResidualAugmented,
        },
        init_rho,
        init_step,
        seed: args.seed,
    };

    fs::create_dir_all(&args.out)?;
    let threads = resolve_threads(args.threads);
    write_snapshot(
        &args.out,
        true,
        json!({
            "command": "train",
            "train": args.train,
            "algo": format!("{:?}", args.algo).to_lowercase(),
            "out": args.out,
            "seed": cfg.seed,
            "depth": cfg.depth,
            "warm": cfg.warm_iters,
            "stage1": cfg.stage1_iters,
            "stage2": cfg.stage2_iters,
            "stage3": cfg.stage3_iters,
            "batch": cfg.batch_size,
            "lr": cfg.lr,
            "beta": cfg.beta,
            "gamma": cfg.gamma,
            "stage1_mode": format!("{:?}", args.stage1_mode).to_lowercase(),
            "stage2_mode": format!("{:?}", args.stage2_mode).to_lowercase(),
            "channels": cfg.channels,
            "hidden1": cfg.hidden1,
            "hidden2": cfg.hidden2,
            "features": format!("{:?}", args.features).to_lowercase(),
            "init_rho": cfg.init_rho,
            "init_step": cfg.init_step,
            "init_source": init_source,
            "threads": threads,
        }),
    )?;

    let runner = RayonRunner::new(threads)
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let clock = SystemClock::new();
    let mut hooks = DirHooks::new(args.out.clone());
    let started = Instant::now();
    let result = match args.algo {
        Algo::Twostage => train::train_full(&ds, &cfg, &runner, &mut hooks, &clock),
        Algo::Aevb => train::train_aevb(&ds, &cfg, &runner, &mut hooks, &clock),
        Algo::Baseline => train::train_baseline(&ds, &cfg, &runner, &mut hooks, &clock),
    };
    match result {
        Ok((_, _, log)) => {
            summarize_log(&log);
            eprintln!(
                "train: {} iterations in {:.1}s ({} threads), checkpoints under {}",
                log.records.len(),
                started.elapsed().as_secs_f64(),
                threads,
                args.out.display()
            );
            Ok(())
        }
        Err(TrainError::Hook(msg)) => Err(CliError::Runtime(msg)),
        Err(e) => {
            let at = hooks
                .last_checkpoint
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "none".into());
            Err(CliError::TrainAbort(format!(
                "{e}; last good checkpoint: {at}"
            )))
        }
    }
}

fn summarize_log(log: &TrainLog) {
    for tag in [
        StageTag::Warm,
        StageTag::Stage1,
        StageTag::Stage2,
        StageTag::Stage3,
        StageTag::Aevb,
        StageTag::Baseline,
    ] {
        let recs: Vec<&TrainRecord> = log.records.iter().filter(|r| r.stage == tag).collect();
        if recs.is_empty() {
            continue;
        }
        let last = recs.last().unwrap();
        eprintln!(
            "  {}: {} iters, final objective {:.6}",
            tag.name(),
            recs.len(),
            last.objective
        );
    }
}

// --------------------------------------------------------------- eval ----

fn snr_levels_in_order(ds: &Dataset) -> Vec<f64> {
    let mut levels = Vec::new();
    for inst in &ds.instances {
        if !levels.contains(&inst.snr_db) {
            levels.push(inst.snr_db);
        }
    }
    levels
}

struct LayerEval {
    sq_err: Vec<Vec<f64>>,
    truth_energy: Vec<f64>,
    snr_db: Vec<f64>,
}

impl LayerEval {
    fn nmse_at(&self, layer: usize, snr: Option<f64>) -> f64 {
        let mut err = 0.0;
        let mut energy = 0.0;
        for i in 0..self.sq_err.len() {
            if snr.is_some_and(|s| self.snr_db[i] != s) {
                continue;
            }
            err += self.sq_err[i][layer - 1];
            energy += self.truth_energy[i];
        }
        if err == 0.0 {
            f64::NEG_INFINITY
        } else {
            10.0 * (err / energy).log10()
        }
    }
}

fn classical_eval<R: BatchRunner>(
    kind: SolverKind,
    cfg: &LassoConfig,
    ds: &Dataset,
    runner: &R,
) -> LayerEval {
    let rows: Vec<(Vec<f64>, f64, f64)> = runner.run(ds.len(), &|i| {
        let inst = &ds.instances[i];
        let path = match kind {
            SolverKind::Ista => classic::ista_solve(&ds.a, &inst.b, cfg),
            SolverKind::Fista => classic::fista_solve(&ds.a, &inst.b, cfg),
        }
        .expect("classical solver diverged on the test set");
        let errs: Vec<f64> = path
            .iter()
            .map(|x| mat::sq_dist(x, &inst.x_star))
            .collect();
        (errs, mat::sq_norm(&inst.x_star), inst.snr_db)
    });
    let mut out = LayerEval {
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

fn layer_eval_report(
    method: &str,
    depth: usize,
    ev: &LayerEval,
    levels: &[f64],
    runtime_secs: f64,
) -> EvalReport {
    EvalReport {
        method: method.into(),
        depth,
        nmse_mixed_db: ev.nmse_at(depth, None),
        nmse_per_snr: levels
            .iter()
            .map(|&s| (s, ev.nmse_at(depth, Some(s))))
            .collect(),
        curve_layers: (1..=depth).collect(),
        convergence: (1..=depth).map(|t| Some(ev.nmse_at(t, None))).collect(),
        stop_histogram: None,
        det_stop_nmse_db: None,
        mean_layers_computed: None,
        runtime_secs,
    }
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(CliError::Usage(format!(
            "--threshold must be in (0, 1), got {}",
            args.threshold
        )));
    }
    let ds = formats::read_dataset(&args.test)?;
    let levels = snr_levels_in_order(&ds);
    let threads = resolve_threads(args.threads);
    let runner = RayonRunner::new(threads)
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;

    let needs_theta = args
        .methods
        .iter()
        .any(|m| matches!(m, Method::ListaBaseline | Method::ListaStop));
    if needs_theta && args.theta.is_none() {
        return Err(CliError::Usage("--theta required for lista methods".into()));
    }
    let theta = match &args.theta {
        Some(path) => {
            let theta = formats::read_theta(path)?;
            if theta.measurement_dim() != ds.m() || theta.signal_dim() != ds.n() {
                return Err(CliError::Runtime(format!(
                    "checkpoint/dataset mismatch: model has m={} n={}, dataset has m={} n={}",
                    theta.measurement_dim(),
                    theta.signal_dim(),
                    ds.m(),
                    ds.n()
                )));
            }
            Some(theta)
        }
        None => None,
    };
    let policy = if args.methods.contains(&Method::ListaStop) {
        let path = args
            .policy
            .as_ref()
            .ok_or_else(|| CliError::Usage("--policy required for lista-stop".into()))?;
        let phi = formats::read_policy(path)?;
        if phi.measurement_dim != ds.m() || phi.signal_dim != ds.n() {
            return Err(CliError::Runtime(format!(
                "checkpoint/dataset mismatch: policy has m={} n={}, dataset has m={} n={}",
                phi.measurement_dim, phi.signal_dim, ds.m(), ds.n()
            )));
        }
        Some(phi)
    } else {
        None
    };
    let classical_depth = match (args.t, &theta) {
        (Some(t), _) => t,
        (None, Some(th)) => th.depth(),
        (None, None) => {
            if args
                .methods
                .iter()
                .any(|m| matches!(m, Method::Ista | Method::Fista))
            {
                return Err(CliError::Usage(
                    "--t required for classical methods without a model checkpoint".into(),
                ));
            }
            0
        }
    };

    fs::create_dir_all(&args.out)?;
    let mut reports = Vec::new();
    for &method in &args.methods {
        let started = Instant::now();
        let report = match method {
            Method::Ista | Method::Fista => {
                let tune_path = args.tune.as_ref().ok_or_else(|| {
                    CliError::Usage("--tune required for classical methods".into())
                })?;
                let kind = if method == Method::Ista {
                    SolverKind::Ista
                } else {
                    SolverKind::Fista
                };
                let cfg = read_tune_entry(tune_path, method.name(), classical_depth)?;
                let ev = classical_eval(kind, &cfg, &ds, &runner);
                layer_eval_report(method.name(), classical_depth, &ev, &levels, 0.0)
            }
            Method::ListaBaseline => {
                let theta = theta.as_ref().unwrap();
                let ev = metrics::eval_fixed_model(theta, &ds, &runner);
                let le = LayerEval {
                    sq_err: ev.sq_err,
                    truth_energy: ev.truth_energy,
                    snr_db: ev.snr_db,
                };
                layer_eval_report(method.name(), theta.depth(), &le, &levels, 0.0)
            }
            Method::ListaStop => {
                let theta = theta.as_ref().unwrap();
                let phi = policy.as_ref().unwrap();
                let channels = match &args.channels {
                    Some(ch) => Channels::new(ch.clone(), theta.depth()),
                    None => Channels::full(theta.depth()),
                };
                if channels.count() != phi.stop_positions() {
                    return Err(CliError::Runtime(format!(
                        "checkpoint/dataset mismatch: policy has {} stop positions but \
                         {} channels requested over T={}",
                        phi.stop_positions(),
                        channels.count(),
                        theta.depth()
                    )));
                }
                let ev = metrics::eval_stop_model(
                    theta,
                    phi,
                    &ds,
                    &channels,
                    args.threshold,
                    &runner,
                );
                EvalReport {
                    method: method.name().into(),
                    depth: theta.depth(),
                    nmse_mixed_db: ev.expected_nmse_db(None),
                    nmse_per_snr: levels
                        .iter()
                        .map(|&s| (s, ev.expected_nmse_db(Some(s))))
                        .collect(),
                    curve_layers: channels.layers().to_vec(),
                    convergence: ev.weighted_convergence(),
                    stop_histogram: Some(ev.stop_histogram()),
                    det_stop_nmse_db: Some(ev.det_stop_nmse_db()),
                    mean_layers_computed: Some(ev.mean_layers_computed()),
                    runtime_secs: 0.0,
                }
            }
        };
        let mut report = report;
        report.runtime_secs = match args.timing {
            TimingArg::Wall => started.elapsed().as_secs_f64(),
            TimingArg::Off => 0.0,
        };
        let base = args.out.join(format!("report-{}", method.name()));
        if matches!(args.format, FormatArg::Json | FormatArg::Both) {
            report.write_json(&base.with_extension("json"))?;
        }
        if matches!(args.format, FormatArg::Csv | FormatArg::Both) {
            report.write_csv(&base.with_extension("csv"))?;
        }
        eprintln!(
            "eval {}: mixed {:.2} dB{}",
            method.name(),
            report.nmse_mixed_db,
            report
                .det_stop_nmse_db
                .map(|v| format!(" (threshold-stop {v:.2} dB)"))
                .unwrap_or_default()
        );
        reports.push(report);
    }

    if args.compare {
        if matches!(args.format, FormatArg::Json | FormatArg::Both) {
            fs::write(args.out.join("compare.json"), comparison_json(&reports))?;
        }
        if matches!(args.format, FormatArg::Csv | FormatArg::Both) {
            fs::write(args.out.join("compare.csv"), comparison_csv(&reports))?;
        }
    }

    write_snapshot(
        &args.out,
        true,
        json!({
            "command": "eval",
            "test": args.test,
            "methods": args.methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "tune": args.tune,
            "theta": args.theta,
            "policy": args.policy,
            "t": classical_depth,
            "channels": args.channels,
            "threshold": args.threshold,
            "format": format!("{:?}", args.format).to_lowercase(),
            "compare": args.compare,
            "timing": format!("{:?}", args.timing).to_lowercase(),
            "threads": threads,
            "out": args.out,
        }),
    )?;
    Ok(())
}

// ------------------------------------------------------------- report ----

pub fn report(args: ReportArgs) -> Result<(), CliError> {
    if args.inputs.is_empty() {
        return Err(CliError::Usage("--inputs must be nonempty".into()));
    }
    let mut reports = Vec::new();
    for path in &args.inputs {
        reports.push(EvalReport::read_json(path)?);
    }
    match args.format {
        FormatArg::Csv => fs::write(&args.out, comparison_csv(&reports))?,
        FormatArg::Json => fs::write(&args.out, comparison_json(&reports))?,
        FormatArg::Both => {
            return Err(CliError::Usage(
                "report: --format must be json or csv".into(),
            ))
        }
    }
    write_snapshot(
        &args.out,
        false,
        json!({
            "command": "report",
            "inputs": args.inputs,
            "out": args.out,
            "format": format!("{:?}", args.format).to_lowercase(),
        }),
    )?;
    Ok(())
}
