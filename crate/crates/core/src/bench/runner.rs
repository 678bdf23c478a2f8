use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig, ExperimentKind, RuntimeConfig, SpectrumConfig, SweepPoint};
use crate::agents::{AgentError, TraceState, Transition};
use crate::envs::{EnvError, EnvSpec, Simulator, StateStream, SyntheticMdp, TransitionStream};
use crate::eval::{grid_states, rmse, rollout_values, spectrum_count, EvalReport, ReportError};
use crate::features::{FeatureError, FeatureMap, FeatureVector};
use crate::linalg::singular_values;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("run {label} seed {seed}: {source}")]
    Agent {
        label: String,
        seed: u64,
        source: AgentError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("output directory {0} already holds results; pass --force to overwrite")]
    OutputExists(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub workers: Option<usize>,
    pub dump_svd: bool,
    pub rate_cap: Option<f64>,
}

/// Environment, features and ground truth shared by every run of an experiment.
pub struct Problem {
    pub sim: Box<dyn Simulator>,
    pub features: Box<dyn FeatureMap<f64>>,
    pub eval_states: Vec<Vec<f64>>,
    pub true_values: Vec<f64>,
}

/// Smallest horizon with `gamma^h < 1e-4`.
pub fn default_horizon(gamma: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    if gamma >= 1.0 {
        return 10_000;
    }
    ((1e-4f64).ln() / gamma.ln()).floor() as usize + 1
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, BenchError> {
        let sim = cfg.env.build()?;
        if let EnvSpec::Synthetic(sc) = &cfg.env {
            // exact values on every state
            let mdp = SyntheticMdp::from_config(sc)?;
            let features: Box<dyn FeatureMap<f64>> = match &cfg.features {
                Some(f) => f.build()?,
                None => Box::new(mdp.tabular_features()),
            };
            let values = mdp.values()?;
            return Ok(Self {
                sim,
                features,
                eval_states: (0..mdp.n_states()).map(|i| vec![i as f64]).collect(),
                true_values: values.iter().copied().collect(),
            });
        }
        let features = cfg
            .features
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(vec!["features: required for this environment".into()]))?
            .build()?;
        let (lo, hi) = sim.bounds();
        let eval_states = grid_states(&lo, &hi, cfg.evaluation.grid_per_dim);
        let horizon = cfg.evaluation.horizon.unwrap_or_else(|| default_horizon(sim.gamma()));
        let values = rollout_values(sim.as_ref(), &eval_states, cfg.evaluation.rollouts, horizon, cfg.evaluation.seed);
        Ok(Self {
            sim,
            features,
            eval_states,
            true_values: values.values,
        })
    }

    pub fn rmse(&self, w: &DVector<f64>) -> f64 {
        rmse(w, self.features.as_ref(), &self.eval_states, &self.true_values)
    }

    pub fn stream(&self, seed: u64) -> TransitionStream<'_, f64> {
        TransitionStream::new(self.sim.as_ref(), self.features.as_ref(), seed)
    }
}

/// Result of one (sweep point, seed) run.
pub struct RunOutput {
    pub label: String,
    pub report: EvalReport,
    /// Samples rejected by the learner as numerically singular.
    pub skipped: usize,
    pub svd_dump: Option<String>,
}

fn extra_params(p: &SweepPoint) -> String {
    let a = &p.agent;
    let mut parts = vec![format!("k={}", a.batch_size)];
    match a.beta {
        crate::agents::BetaSchedule::RunningAverage => parts.push("beta=running_average".into()),
        crate::agents::BetaSchedule::Constant(b) => parts.push(format!("beta={b}")),
    }
    if let Some(x) = a.alpha0 {
        parts.push(format!("alpha0={x}"));
    }
    if let Some(x) = a.n0 {
        parts.push(format!("n0={x}"));
    }
    parts.push(format!("m={}", a.m));
    parts.push(format!("delta_init={}", a.delta_init));
    parts.push(format!("rel_cutoff={}", a.rel_cutoff));
    parts.push(format!("solve_every={}", a.solve_every));
    parts.join(";")
}

fn new_report(p: &SweepPoint, seed: u64) -> EvalReport {
    let rank = match p.agent.algorithm {
        crate::agents::Algorithm::Tlstd => p.agent.rank,
        _ => None,
    };
    EvalReport::new(p.agent.algorithm.as_str(), seed, rank, p.agent.lambda, extra_params(p))
}

fn dump(agent: &dyn crate::agents::Agent<f64>) -> Option<String> {
    agent.factorization().map(|svd| {
        let mut buf = Vec::new();
        svd.write_dump(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("dump is ASCII")
    })
}

/// Runs one learner over `checkpoints` (sample counts) on the stream of `seed`.
/// Learner time excludes stream generation and evaluation.
pub fn run_learning_curve(
    problem: &Problem,
    point: &SweepPoint,
    seed: u64,
    checkpoints: &[usize],
    record_time: bool,
    dump_svd: bool,
) -> Result<RunOutput, BenchError> {
    let d = problem.features.dim();
    let agent_err = |source| BenchError::Agent {
        label: point.label.clone(),
        seed,
        source,
    };
    let mut agent = point.agent.build::<f64>(d).map_err(agent_err)?;
    let mut report = new_report(point, seed);
    let mut stream = problem.stream(seed);
    let budget = checkpoints.last().copied().unwrap_or(0).min(point.samples);
    let mut next_cp = checkpoints.iter().copied().filter(|&c| c <= budget).peekable();
    let mut seconds = 0.0;
    let mut skipped = 0;
    for t in 0..=budget {
        if next_cp.peek() == Some(&t) {
            next_cp.next();
            let w = agent.weights().clone();
            report.push(t, record_time.then_some(seconds), problem.rmse(&w));
        }
        if t == budget {
            break;
        }
        let tr = stream.next().expect("endless stream");
        let start = Instant::now();
        let res = agent.step(&tr).map(|_| ());
        seconds += start.elapsed().as_secs_f64();
        match res {
            Ok(()) => {}
            Err(AgentError::SingularUpdate { .. }) => skipped += 1,
            Err(e) => return Err(agent_err(e)),
        }
    }
    Ok(RunOutput {
        label: point.label.clone(),
        report,
        skipped,
        svd_dump: if dump_svd { dump(agent.as_ref()) } else { None },
    })
}

/// Runs one learner against learner wall-clock time.
///
/// Uncapped, every sample is processed. With a rate cap the stream offers one
/// sample every `1 / rate` seconds of a virtual clock advanced by measured
/// learner time; when the learner becomes free it takes the newest offered
/// sample and the older unprocessed ones are dropped, and when no new sample
/// is available it idles until the next arrival. `max_samples > 0` also stops
/// the run after that many processed samples.
pub fn run_runtime_curve(
    problem: &Problem,
    point: &SweepPoint,
    seed: u64,
    rt: &RuntimeConfig,
    max_samples: usize,
    dump_svd: bool,
) -> Result<RunOutput, BenchError> {
    let d = problem.features.dim();
    let agent_err = |source| BenchError::Agent {
        label: point.label.clone(),
        seed,
        source,
    };
    let mut agent = point.agent.build::<f64>(d).map_err(agent_err)?;
    let mut report = new_report(point, seed);
    let mut stream = problem.stream(seed);
    let mut skipped = 0;
    if rt.time_budget > 0.0 {
        let w = agent.weights().clone();
        report.push(0, Some(0.0), problem.rmse(&w));
    }
    let mut clock = 0.0;
    let mut next_cp = rt.interval;
    let mut processed = 0usize;
    // index of the next sample the stream will produce
    let mut produced = 0usize;
    while clock < rt.time_budget && (max_samples == 0 || processed < max_samples) {
        let tr = match rt.rate_cap {
            None => {
                produced += 1;
                stream.next().expect("endless stream")
            }
            Some(rate) => {
                let mut available = (clock * rate).floor() as usize;
                if available < produced {
                    clock = produced as f64 / rate;
                    available = produced;
                }
                if clock >= rt.time_budget {
                    break;
                }
                while produced < available {
                    stream.next();
                    produced += 1;
                }
                produced += 1;
                stream.next().expect("endless stream")
            }
        };
        let start = Instant::now();
        let res = agent.step(&tr).map(|_| ());
        clock += start.elapsed().as_secs_f64();
        processed += 1;
        match res {
            Ok(()) => {}
            Err(AgentError::SingularUpdate { .. }) => skipped += 1,
            Err(e) => return Err(agent_err(e)),
        }
        if clock >= next_cp {
            let w = agent.weights().clone();
            report.push(processed, Some(clock), problem.rmse(&w));
            while next_cp <= clock {
                next_cp += rt.interval;
            }
        }
    }
    if rt.time_budget > 0.0 && report.checkpoints.last().is_some_and(|c| c.samples != processed) {
        let w = agent.weights().clone();
        report.push(processed, Some(clock), problem.rmse(&w));
    }
    Ok(RunOutput {
        label: point.label.clone(),
        report,
        skipped,
        svd_dump: if dump_svd { dump(agent.as_ref()) } else { None },
    })
}

/// Singular values of the empirical system for one feature configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub label: String,
    pub seed: u64,
    pub dim: usize,
    pub samples: usize,
    pub sigma: Vec<f64>,
    pub count: usize,
}

/// Accumulates `A_t` (up to scale) over `episodes` episodes of the stream of `seed`.
/// `episode_len` cuts episodes for simulators that never terminate on their own.
pub fn empirical_system(
    sim: &dyn Simulator,
    features: &dyn FeatureMap<f64>,
    episodes: usize,
    episode_len: Option<usize>,
    lambda: f64,
    seed: u64,
) -> (DMatrix<f64>, usize) {
    const BLOCK: usize = 256;
    let d = features.dim();
    let gamma = sim.gamma();
    let mut a = DMatrix::zeros(d, d);
    let mut states = StateStream::new(sim, seed).with_episode_len(episode_len);
    let mut trace = TraceState::new(d, lambda);
    let mut zs = DMatrix::zeros(d, BLOCK);
    let mut ds = DMatrix::zeros(d, BLOCK);
    let mut filled = 0;
    let mut samples = 0;
    let mut done = 0;
    let mut carried: Option<(Vec<f64>, FeatureVector<f64>)> = None;
    while done < episodes {
        let st = states.next().expect("endless stream");
        let x = match carried.take() {
            Some((s, f)) if s == st.state => f,
            _ => features.features(&st.state),
        };
        let x_next = features.features(&st.next);
        let cd = if st.terminal { 0.0 } else { gamma };
        let tr = Transition::new(x, x_next, 0.0, cd);
        let diff = tr.difference();
        if lambda == 0.0 && tr.x.is_sparse() {
            for (i, xi) in tr.x.iter() {
                for (j, dj) in diff.iter() {
                    a[(i, j)] += xi * dj;
                }
            }
        } else {
            let z = trace.update(&tr);
            zs.set_column(filled, z);
            let mut col = ds.column_mut(filled);
            col.fill(0.0);
            for (j, v) in diff.iter() {
                col[j] += v;
            }
            filled += 1;
            if filled == BLOCK {
                a.gemm(1.0, &zs, &ds.transpose(), 1.0);
                filled = 0;
            }
        }
        carried = Some((st.next.clone(), tr.x_next));
        samples += 1;
        if states.episode_ended() {
            done += 1;
        }
    }
    if filled > 0 {
        a.gemm(1.0, &zs.columns(0, filled), &ds.columns(0, filled).transpose(), 1.0);
    }
    if samples > 0 {
        a /= samples as f64;
    }
    (a, samples)
}

pub fn run_spectrum_point(
    sim: &dyn Simulator,
    label: &str,
    features: &dyn FeatureMap<f64>,
    sp: &SpectrumConfig,
    seed: u64,
) -> SpectrumResult {
    let (a, samples) = empirical_system(sim, features, sp.episodes, sp.episode_len, sp.lambda, seed);
    let sigma: Vec<f64> = singular_values(&a).iter().copied().collect();
    SpectrumResult {
        label: label.to_string(),
        seed,
        dim: features.dim(),
        samples,
        count: spectrum_count(&sigma, sp.mass_fraction),
        sigma,
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Serialize)]
struct AggregateRow<'a> {
    label: &'a str,
    algo: &'a str,
    checkpoint: usize,
    samples: f64,
    seeds: usize,
    rmse_mean: f64,
    rmse_stderr: f64,
    seconds_mean: Option<f64>,
    r: Option<usize>,
    lambda: f64,
    extra: &'a str,
}

/// Mean and standard error over seeds, per label and checkpoint ordinal.
/// Curves of unequal length are cut to the shortest.
pub fn write_aggregate<W: Write>(mut out: W, outputs: &[RunOutput], header_note: Option<&str>) -> Result<(), BenchError> {
    if let Some(note) = header_note {
        writeln!(out, "# {note}").map_err(|e| BenchError::Report(ReportError::Csv(e.into())))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut labels: Vec<&str> = Vec::new();
    for o in outputs {
        if !labels.contains(&o.label.as_str()) {
            labels.push(&o.label);
        }
    }
    let mut wrote = false;
    for label in labels {
        let runs: Vec<&EvalReport> = outputs.iter().filter(|o| o.label == label).map(|o| &o.report).collect();
        let len = runs.iter().map(|r| r.checkpoints.len()).min().unwrap_or(0);
        for k in 0..len {
            let rm: Vec<f64> = runs.iter().map(|r| r.checkpoints[k].rmse).collect();
            let sm: Vec<f64> = runs.iter().map(|r| r.checkpoints[k].samples as f64).collect();
            let secs: Option<Vec<f64>> = runs.iter().map(|r| r.checkpoints[k].seconds).collect();
            let (mean, se) = mean_stderr(&rm);
            w.serialize(AggregateRow {
                label,
                algo: &runs[0].algorithm,
                checkpoint: k,
                samples: mean_stderr(&sm).0,
                seeds: runs.len(),
                rmse_mean: mean,
                rmse_stderr: se,
                seconds_mean: secs.map(|s| mean_stderr(&s).0),
                r: runs[0].rank,
                lambda: runs[0].lambda,
                extra: &runs[0].extra,
            })
            .map_err(ReportError::from)?;
            wrote = true;
        }
    }
    if !wrote {
        w.write_record([
            "label", "algo", "checkpoint", "samples", "seeds", "rmse_mean", "rmse_stderr", "seconds_mean", "r", "lambda", "extra",
        ])
        .map_err(ReportError::from)?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    name: &'a str,
    kind: ExperimentKind,
    library_version: &'a str,
    seeds: &'a [u64],
    workers: usize,
    rate_cap: Option<f64>,
    files: Vec<String>,
    config: &'a ExperimentConfig,
}

/// Everything a finished experiment produced.
pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub runs: Vec<RunOutput>,
    pub spectra: Vec<SpectrumResult>,
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<(), BenchError>) -> Result<(), BenchError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(io_err(path))
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_=.".contains(c) { c } else { '-' })
        .collect()
}

/// Validates `cfg` with the overrides applied and runs it, writing per-run
/// CSVs, an aggregate CSV and `manifest.json` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput, BenchError> {
    let mut cfg = cfg.clone();
    if let Some(seeds) = &opts.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(cap) = opts.rate_cap {
        if let Some(rt) = cfg.runtime.as_mut() {
            rt.rate_cap = Some(cap);
        }
    }
    cfg.validate()?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    if out_dir.join("manifest.json").exists() && !opts.force {
        return Err(BenchError::OutputExists(out_dir));
    }
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;

    let workers = match cfg.kind {
        // timing runs never share the machine with each other
        ExperimentKind::Runtime => 1,
        _ => opts.workers.unwrap_or_else(rayon::current_num_threads).max(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;

    let mut files = Vec::new();
    let mut runs = Vec::new();
    let mut spectra = Vec::new();
    match cfg.kind {
        ExperimentKind::Learning | ExperimentKind::Runtime => {
            let problem = pool.install(|| Problem::build(&cfg))?;
            let points = cfg.sweep_points().map_err(|e| ConfigError::Invalid(vec![e]))?;
            let jobs: Vec<(&SweepPoint, u64)> = points.iter().flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
            let results: Vec<Result<RunOutput, BenchError>> = pool.install(|| {
                jobs.par_iter()
                    .map(|&(p, seed)| match cfg.kind {
                        ExperimentKind::Runtime => {
                            let rt = cfg.runtime.as_ref().expect("validated");
                            run_runtime_curve(&problem, p, seed, rt, p.samples, opts.dump_svd)
                        }
                        _ => {
                            let cps = cfg.checkpoints.points(p.samples);
                            run_learning_curve(&problem, p, seed, &cps, cfg.record_time, opts.dump_svd)
                        }
                    })
                    .collect()
            });
            for r in results {
                let r = r?;
                let stem = format!("{}_seed{}", sanitize(&r.label), r.report.seed);
                let path = out_dir.join(format!("{stem}.csv"));
                write_file(&path, |w| Ok(r.report.write_csv(w)?))?;
                files.push(path);
                if let Some(text) = &r.svd_dump {
                    let path = out_dir.join(format!("{stem}.svd"));
                    fs::write(&path, text).map_err(io_err(&path))?;
                    files.push(path);
                }
                runs.push(r);
            }
            let note = cfg
                .desk_scale
                .then(|| format!("desk-scale preset: {} seeds, {} samples per run", cfg.seeds.len(), cfg.samples));
            let path = out_dir.join("aggregate.csv");
            write_file(&path, |w| write_aggregate(w, &runs, note.as_deref()))?;
            files.push(path);
        }
        ExperimentKind::Spectrum => {
            let sp = cfg.spectrum.as_ref().expect("validated");
            let sim = cfg.env.build()?;
            let mut maps = Vec::new();
            for p in &sp.points {
                maps.push((p.label.as_str(), p.features.build::<f64>()?));
            }
            let jobs: Vec<(usize, u64)> = (0..maps.len()).flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s))).collect();
            spectra = pool.install(|| {
                jobs.par_iter()
                    .map(|&(i, seed)| run_spectrum_point(sim.as_ref(), maps[i].0, maps[i].1.as_ref(), sp, seed))
                    .collect()
            });
            let path = out_dir.join("spectrum.csv");
            write_file(&path, |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["label", "seed", "d", "index", "sigma"]).map_err(ReportError::from)?;
                for s in &spectra {
                    for (i, v) in s.sigma.iter().enumerate() {
                        c.write_record([s.label.clone(), s.seed.to_string(), s.dim.to_string(), (i + 1).to_string(), v.to_string()])
                            .map_err(ReportError::from)?;
                    }
                }
                c.flush().map_err(|e| ReportError::Csv(e.into()))?;
                Ok(())
            })?;
            files.push(path);
            let path = out_dir.join("spectrum_counts.csv");
            write_file(&path, |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["label", "seed", "d", "samples", "mass_fraction", "count"]).map_err(ReportError::from)?;
                for s in &spectra {
                    c.write_record([
                        s.label.clone(),
                        s.seed.to_string(),
                        s.dim.to_string(),
                        s.samples.to_string(),
                        sp.mass_fraction.to_string(),
                        s.count.to_string(),
                    ])
                    .map_err(ReportError::from)?;
                }
                c.flush().map_err(|e| ReportError::Csv(e.into()))?;
                Ok(())
            })?;
            files.push(path);
        }
    }

    let manifest_path = out_dir.join("manifest.json");
    let manifest = Manifest {
        name: &cfg.name,
        kind: cfg.kind,
        library_version: env!("CARGO_PKG_VERSION"),
        seeds: &cfg.seeds,
        workers,
        rate_cap: cfg.runtime.as_ref().and_then(|r| r.rate_cap),
        files: files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        config: &cfg,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    files.push(manifest_path);
    Ok(ExperimentOutput {
        out_dir,
        files,
        runs,
        spectra,
    })
}

