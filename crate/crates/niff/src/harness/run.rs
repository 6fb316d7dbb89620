//! Experiment orchestration: prepare data, dispatch the configured
//! algorithm, and write artifacts (CSV samples and traces, JSON summaries).
//! Everything is deterministic given the config and seed.

use super::config::{Algorithm, DataSourceKind, ExperimentConfig};
use super::predictive::posterior_predictive;
use super::summary::{summarize_guide, summarize_samples, uniform_grid, PosteriorSummary};
use super::HarnessError;
use crate::inference::{
    npsgld_posterior, nsvi_posterior, AdamParams, ChainOutput, EstimationMode, InferError,
    NormalizedData, NpsgldOpts, NpsgldSizes, NsviOpts, NsviResult, NsviSizes, NsviState,
    NsviTraceRow, PartitionAnneal, Problem,
};
use crate::models::{rk4_integrate, synthesize_dataset, Dataset, OdeModel, Trajectory};
use crate::paths::{PathKind, PathSpec};
use crate::priors::PriorConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// A fully resolved experiment: model, spec, prior, data, and output
/// directory, ready to run.
pub struct PreparedExperiment {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
    pub model: OdeModel,
    pub spec: PathSpec,
    pub prior: PriorConfig,
    pub dataset: Dataset,
    pub data: NormalizedData,
    pub truth: Option<Trajectory>,
    pub window: f64,
    pub seed: u64,
    pub threads: usize,
}

fn absolutize(base: &Path, rel: &str) -> String {
    let p = base.join(rel);
    p.to_string_lossy().into_owned()
}

/// Load, validate, build, and synthesize/load the dataset. Writes nothing.
pub fn prepare(config_path: &Path, overrides: &RunOverrides) -> Result<PreparedExperiment, HarnessError> {
    let (mut cfg, base) = super::config::load_config(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.experiment.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(threads) = overrides.threads {
        cfg.experiment.threads = threads;
    }
    cfg.validate()?;

    // resolve file references against the config location so the saved
    // resolved config works from anywhere
    if let Some(e) = &cfg.model.excitation {
        cfg.model.excitation = Some(absolutize(&base, e));
    }
    if let Some(e) = &cfg.model.excitation2 {
        cfg.model.excitation2 = Some(absolutize(&base, e));
    }
    if let Some(p) = &cfg.data.path {
        cfg.data.path = Some(absolutize(&base, p));
    }

    let model = cfg.build_model(Path::new(""))?;
    let dims = model.dims();

    let (dataset, truth, data_end) = match cfg.data.source {
        DataSourceKind::Synthetic => {
            let x_init = cfg.data.x_init.clone().unwrap();
            let t_end = cfg.data.t_end.unwrap();
            let dt = cfg.data.dt.unwrap();
            let theta = cfg.data.theta_truth.clone().unwrap();
            if x_init.len() != dims.d_x || theta.len() != dims.d_theta {
                return Err(HarnessError::Invalid(
                    "[data]: x_init/theta_truth do not match the model dimensions".into(),
                ));
            }
            let traj = rk4_integrate(&model, &x_init, &theta, (0.0, t_end), dt)?;
            let ds = synthesize_dataset(
                &model,
                &traj,
                cfg.data.sample_stride.unwrap(),
                cfg.data.noise_rule.into(),
                cfg.data.noise_fraction.unwrap(),
                &theta,
                cfg.data.seed.unwrap_or(cfg.experiment.seed),
            )?;
            // record the actual noise levels for downstream consumers
            cfg.data.sigma_y = Some(ds.sigma_y.clone());
            (ds, Some(traj), t_end)
        }
        DataSourceKind::File => {
            let path = PathBuf::from(cfg.data.path.clone().unwrap());
            let ds = read_dataset_csv(&path, cfg.data.sigma_y.clone().unwrap())?;
            let end = *ds.times.last().unwrap();
            (ds, None, end)
        }
    };
    dataset.validate()?;

    let window = cfg.prior.horizon.unwrap_or(data_end);
    cfg.prior.horizon = Some(window);
    let spec = cfg.build_spec(dims.d_x, window)?;
    let n_t = if cfg.experiment.algorithm.is_sampler() {
        cfg.npsgld.n_t
    } else {
        cfg.nsvi.sizes[1]
    };
    let prior = cfg.build_prior(window, &dataset.times, n_t);
    let data = NormalizedData::new(&model, &dataset)?;

    let out_dir = PathBuf::from(&cfg.experiment.out_dir);
    let seed = cfg.experiment.seed;
    let threads = cfg.experiment.threads;
    Ok(PreparedExperiment {
        cfg,
        out_dir,
        model,
        spec,
        prior,
        dataset,
        data,
        truth,
        window,
        seed,
        threads,
    })
}

fn read_dataset_csv(path: &Path, sigma_y: Vec<f64>) -> Result<Dataset, HarnessError> {
    let file = std::fs::File::open(path)
        .map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    let mut times = Vec::new();
    let mut y = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Invalid(e.to_string()))?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t: f64 = fields
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| HarnessError::Invalid(format!("line {}: bad time", lineno + 1)))?;
        let row: Result<Vec<f64>, _> = fields.map(|s| s.trim().parse::<f64>()).collect();
        let row =
            row.map_err(|e| HarnessError::Invalid(format!("line {}: {e}", lineno + 1)))?;
        times.push(t);
        y.push(row);
    }
    Ok(Dataset { times, y, sigma_y })
}

fn write_resolved_config(prep: &PreparedExperiment) -> Result<PathBuf, HarnessError> {
    let path = prep.out_dir.join("config_resolved.toml");
    let text = toml::to_string_pretty(&prep.cfg)
        .map_err(|e| HarnessError::Invalid(format!("serializing config: {e}")))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

fn write_data_artifacts(prep: &PreparedExperiment) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(&prep.out_dir)?;
    let mut files = vec![write_resolved_config(prep)?];
    let ds_path = prep.out_dir.join("dataset.csv");
    prep.dataset.write_csv(&ds_path)?;
    files.push(ds_path);
    if let Some(truth) = &prep.truth {
        let t_path = prep.out_dir.join("truth.csv");
        truth.write_csv(&t_path)?;
        files.push(t_path);
    }
    Ok(files)
}

/// Normalized filter-mode anchors from the physical config values.
fn filter_mode(prep: &PreparedExperiment) -> Result<EstimationMode, HarnessError> {
    let f = prep.cfg.filter.as_ref().ok_or_else(|| {
        HarnessError::Invalid("[filter] section required for filter algorithms".into())
    })?;
    let dims = prep.model.dims();
    if f.theta.len() != dims.d_theta || f.x0.len() != dims.d_x {
        return Err(HarnessError::Invalid(
            "[filter]: theta/x0 do not match the model dimensions".into(),
        ));
    }
    let theta = f
        .theta
        .iter()
        .zip(prep.model.theta_scale())
        .map(|(v, s)| v / s)
        .collect();
    let x0 = f.x0.iter().zip(prep.model.state_scale()).map(|(v, s)| v / s).collect();
    Ok(EstimationMode::FilterOnly { theta, x0 })
}

fn nsvi_opts(prep: &PreparedExperiment, mode: EstimationMode) -> NsviOpts {
    let n = &prep.cfg.nsvi;
    let [n_eez, n_t, aux_eps, aux_t, m_y] = n.sizes;
    NsviOpts {
        niter: n.niter,
        niter_auxi: n.niter_auxi,
        sizes: NsviSizes { n_eez, n_t, aux_eps, aux_t, m_y, n_w_tilde: n.n_w_tilde },
        lr: n.lr.clone(),
        inner_lr: n.inner_lr.unwrap_or_else(|| n.lr.at(0)),
        partition: PartitionAnneal {
            ramp_iters: n.partition_ramp.unwrap_or(2 * n.niter / 3),
        },
        adam: AdamParams::default(),
        trace_every: n.trace_every,
        mode,
    }
}

fn npsgld_opts(prep: &PreparedExperiment, mode: EstimationMode, precondition: bool) -> NpsgldOpts {
    let n = &prep.cfg.npsgld;
    NpsgldOpts {
        niter: n.niter,
        niter_auxi: n.niter_auxi,
        sizes: NpsgldSizes { n_t: n.n_t, aux_t: n.aux_t, n_w_tilde: n.n_w_tilde, m_y: n.m_y },
        lr: n.lr.clone(),
        aux_lr: n.aux_lr.clone().unwrap_or_else(|| n.lr.clone()),
        alpha: n.alpha.clone(),
        delta: n.delta,
        aux_alpha: n.aux_alpha.clone(),
        aux_delta: n.aux_delta,
        precondition,
        n_chains: n.n_chains,
        record_every: n.record_every,
        trace_every: n.trace_every,
        threads: prep.threads,
        mode,
    }
}

#[derive(Debug, Serialize)]
struct ChainFailure {
    chain: usize,
    error: String,
}

#[derive(Debug, Serialize)]
struct FailureReport {
    algorithm: String,
    error: Option<String>,
    completed_iterations: Option<u64>,
    failed_chains: Vec<ChainFailure>,
}

fn write_failure_report(
    out_dir: &Path,
    report: &FailureReport,
) -> Result<PathBuf, HarnessError> {
    let path = out_dir.join("failure_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
    Ok(path)
}

fn float_row(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn sample_columns(prep: &PreparedExperiment, with_theta: bool) -> Vec<String> {
    let n_w = prep.spec.n_params();
    let mut cols: Vec<String> = (0..n_w).map(|i| format!("w_{i}")).collect();
    if with_theta {
        cols.extend(prep.model.theta_names());
    }
    cols
}

fn write_samples_csv(
    path: &Path,
    columns: &[String],
    rows: impl Iterator<Item = (usize, u64, Vec<f64>)>,
) -> Result<(), HarnessError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "chain,iter,{}", columns.join(","))?;
    for (chain, iter, values) in rows {
        writeln!(out, "{chain},{iter},{}", float_row(&values))?;
    }
    Ok(())
}

fn write_nsvi_trace(
    path: &Path,
    prep: &PreparedExperiment,
    rows: &[NsviTraceRow],
    joint: bool,
) -> Result<(), HarnessError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header =
        "iter,elbo_like,elbo_ham,elbo_prior,elbo_entropy,elbo_partition".to_string();
    if joint {
        for name in prep.model.theta_names() {
            header.push_str(&format!(",mean_{name}"));
        }
        for i in 1..=prep.model.dims().d_x {
            header.push_str(&format!(",mean_x0_{i}"));
        }
    }
    writeln!(out, "{header}")?;
    let theta_scale = prep.model.theta_scale();
    let state_scale = prep.model.state_scale();
    for row in rows {
        let mut line = format!(
            "{},{},{},{},{},{}",
            row.iter, row.like, row.ham, row.prior, row.entropy, row.partition
        );
        if joint {
            for (v, s) in row.theta_mean.iter().zip(theta_scale) {
                line.push_str(&format!(",{}", v * s));
            }
            for (v, s) in row.x0_mean.iter().zip(state_scale) {
                line.push_str(&format!(",{}", v * s));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn write_npsgld_trace(
    path: &Path,
    prep: &PreparedExperiment,
    chains: &[(usize, &ChainOutput)],
    joint: bool,
) -> Result<(), HarnessError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = "iter,chain".to_string();
    if joint {
        for name in prep.model.theta_names() {
            header.push_str(&format!(",{name}"));
        }
    }
    writeln!(out, "{header}")?;
    let scale = prep.model.theta_scale();
    for (chain_idx, chain) in chains {
        for row in &chain.trace {
            let mut line = format!("{},{chain_idx}", row.iter);
            if joint {
                for (v, s) in row.theta.iter().zip(scale) {
                    line.push_str(&format!(",{}", v * s));
                }
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryFile {
    experiment: String,
    algorithm: String,
    n_samples: usize,
    #[serde(flatten)]
    summary: PosteriorSummary,
}

fn write_summary(
    out_dir: &Path,
    prep: &PreparedExperiment,
    summary: PosteriorSummary,
    n_samples: usize,
) -> Result<PathBuf, HarnessError> {
    let path = out_dir.join("summary.json");
    let file = SummaryFile {
        experiment: prep.cfg.experiment.name.clone(),
        algorithm: format!("{:?}", prep.cfg.experiment.algorithm).to_lowercase(),
        n_samples,
        summary,
    };
    std::fs::write(&path, serde_json::to_string_pretty(&file)?)?;
    Ok(path)
}

/// Everything an experiment run leaves on disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Generate (or load) the data and write the data artifacts only.
pub fn run_simulate(config_path: &Path, overrides: &RunOverrides) -> Result<RunArtifacts, HarnessError> {
    let prep = prepare(config_path, overrides)?;
    let files = write_data_artifacts(&prep)?;
    Ok(RunArtifacts { out_dir: prep.out_dir.clone(), files })
}

/// Run the experiment selected by the config's algorithm field.
pub fn run_experiment(config_path: &Path, overrides: &RunOverrides) -> Result<RunArtifacts, HarnessError> {
    let prep = prepare(config_path, overrides)?;
    match prep.cfg.experiment.algorithm {
        Algorithm::Nsvi => run_nsvi(prep, EstimationMode::Joint),
        Algorithm::FilterNsvi => {
            let mode = filter_mode(&prep)?;
            run_nsvi(prep, mode)
        }
        Algorithm::Npsgld => run_npsgld(prep, EstimationMode::Joint, true),
        Algorithm::Nsgld => run_npsgld(prep, EstimationMode::Joint, false),
        Algorithm::FilterNpsgld => {
            let mode = filter_mode(&prep)?;
            let precondition = prep.cfg.npsgld.precondition;
            run_npsgld(prep, mode, precondition)
        }
    }
}

fn run_nsvi(prep: PreparedExperiment, mode: EstimationMode) -> Result<RunArtifacts, HarnessError> {
    let mut files = write_data_artifacts(&prep)?;
    let joint = matches!(mode, EstimationMode::Joint);
    let opts = nsvi_opts(&prep, mode.clone());
    let prob = Problem {
        model: &prep.model,
        spec: &prep.spec,
        prior: &prep.prior,
        data: &prep.data,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(prep.seed);
    let mut state = NsviState::init(&prep.model, &prep.spec, &mode, prep.seed);
    let mut trace = Vec::new();

    // run in chunks so a divergence still leaves the trace so far on disk
    let chunk = opts.niter.clamp(1, 20_000);
    let mut remaining = opts.niter;
    let mut failure: Option<InferError> = None;
    while remaining > 0 {
        let step = remaining.min(chunk);
        let chunk_opts = NsviOpts { niter: step, ..opts.clone() };
        match nsvi_posterior(&prob, &chunk_opts, state.clone(), &mut rng) {
            Ok(NsviResult { state: s, trace: t }) => {
                state = s;
                trace.extend(t);
                remaining -= step;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    let trace_path = prep.out_dir.join("trace.csv");
    write_nsvi_trace(&trace_path, &prep, &trace, joint)?;
    files.push(trace_path);

    if let Some(err) = failure {
        let report = FailureReport {
            algorithm: "nsvi".into(),
            error: Some(err.to_string()),
            completed_iterations: Some(state.iter),
            failed_chains: Vec::new(),
        };
        files.push(write_failure_report(&prep.out_dir, &report)?);
        return Err(HarnessError::Failed {
            artifacts: RunArtifacts { out_dir: prep.out_dir.clone(), files },
            message: err.to_string(),
        });
    }

    // posterior draws from the final guides
    let n_draws = prep.cfg.nsvi.n_posterior_samples;
    let mut draw_rng = ChaCha8Rng::seed_from_u64(prep.seed ^ 0x5eed_5a17);
    let reparam = matches!(prep.spec.kind, PathKind::ReparamFourier { .. });
    let theta_scale = prep.model.theta_scale().to_vec();
    let mut w_samples = Vec::with_capacity(n_draws);
    let mut theta_samples = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let mut w = state.phi.draw(&mut draw_rng);
        if reparam {
            w.extend(match &mode {
                EstimationMode::Joint => state.chi.draw(&mut draw_rng),
                EstimationMode::FilterOnly { x0, .. } => x0.clone(),
            });
        }
        w_samples.push(w);
        if joint {
            theta_samples.push(state.psi.draw(&mut draw_rng));
        }
    }
    let columns = sample_columns(&prep, joint);
    let samples_path = prep.out_dir.join("samples.csv");
    write_samples_csv(
        &samples_path,
        &columns,
        w_samples.iter().enumerate().map(|(i, w)| {
            let mut row = w.clone();
            if joint {
                for (v, s) in theta_samples[i].iter().zip(&theta_scale) {
                    row.push(v * s);
                }
            }
            (0, i as u64, row)
        }),
    )?;
    files.push(samples_path);

    let grid = uniform_grid(prep.window, prep.cfg.summary.grid_points);
    let summary =
        summarize_samples(&prep.model, &prep.spec, &w_samples, &theta_samples, &grid)?;
    files.push(write_summary(&prep.out_dir, &prep, summary, n_draws)?);
    Ok(RunArtifacts { out_dir: prep.out_dir, files })
}

fn run_npsgld(
    prep: PreparedExperiment,
    mode: EstimationMode,
    precondition: bool,
) -> Result<RunArtifacts, HarnessError> {
    let mut files = write_data_artifacts(&prep)?;
    let joint = matches!(mode, EstimationMode::Joint);
    let opts = npsgld_opts(&prep, mode, precondition);
    let prob = Problem {
        model: &prep.model,
        spec: &prep.spec,
        prior: &prep.prior,
        data: &prep.data,
    };
    let output = npsgld_posterior(&prob, &opts, prep.seed);

    let mut ok_chains: Vec<(usize, &ChainOutput)> = Vec::new();
    let mut failed: Vec<ChainFailure> = Vec::new();
    for (i, chain) in output.chains.iter().enumerate() {
        match chain {
            Ok(c) => ok_chains.push((i, c)),
            Err(e) => failed.push(ChainFailure { chain: i, error: e.to_string() }),
        }
    }

    if !failed.is_empty() {
        let report = FailureReport {
            algorithm: "npsgld".into(),
            error: None,
            completed_iterations: None,
            failed_chains: failed,
        };
        files.push(write_failure_report(&prep.out_dir, &report)?);
        if ok_chains.is_empty() {
            return Err(HarnessError::Failed {
                artifacts: RunArtifacts { out_dir: prep.out_dir.clone(), files },
                message: "every chain diverged".into(),
            });
        }
    }

    // burn-in and thinning on the recorded samples
    let burn_in = prep.cfg.npsgld.burn_in;
    let stride = (prep.cfg.npsgld.thinning / prep.cfg.npsgld.record_every).max(1);
    let theta_scale = prep.model.theta_scale().to_vec();
    let mut w_kept = Vec::new();
    let mut theta_kept = Vec::new();
    let mut rows = Vec::new();
    for (chain_idx, chain) in &ok_chains {
        let mut kept_in_chain = 0u64;
        for (pos, &iter) in chain.iters.iter().enumerate() {
            if iter <= burn_in {
                continue;
            }
            if kept_in_chain % stride == 0 {
                let mut row = chain.w_samples[pos].clone();
                if joint {
                    for (v, s) in chain.theta_samples[pos].iter().zip(&theta_scale) {
                        row.push(v * s);
                    }
                }
                rows.push((*chain_idx, iter, row));
                w_kept.push(chain.w_samples[pos].clone());
                theta_kept.push(chain.theta_samples[pos].clone());
            }
            kept_in_chain += 1;
        }
    }
    if w_kept.is_empty() {
        return Err(HarnessError::Invalid(
            "burn-in and thinning left no samples; lower burn_in or record more often".into(),
        ));
    }

    let samples_path = prep.out_dir.join("samples.csv");
    write_samples_csv(&samples_path, &sample_columns(&prep, joint), rows.into_iter())?;
    files.push(samples_path);

    let trace_path = prep.out_dir.join("trace.csv");
    write_npsgld_trace(&trace_path, &prep, &ok_chains, joint)?;
    files.push(trace_path);

    let grid = uniform_grid(prep.window, prep.cfg.summary.grid_points);
    let theta_for_summary = if joint { theta_kept } else { Vec::new() };
    let summary =
        summarize_samples(&prep.model, &prep.spec, &w_kept, &theta_for_summary, &grid)?;
    files.push(write_summary(&prep.out_dir, &prep, summary, w_kept.len())?);
    Ok(RunArtifacts { out_dir: prep.out_dir, files })
}

/// Read θ samples (physical units) from a samples.csv by column name.
pub fn read_theta_samples(path: &Path, names: &[String]) -> Result<Vec<Vec<f64>>, HarnessError> {
    let file = std::fs::File::open(path)
        .map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Invalid("empty samples file".into()))?
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            cols.iter().position(|c| c == n).ok_or_else(|| {
                HarnessError::Invalid(format!("samples file lacks a {n} column"))
            })
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| HarnessError::Invalid(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let row: Result<Vec<f64>, _> = idx.iter().map(|&i| fields[i].parse::<f64>()).collect();
        out.push(row.map_err(|e| HarnessError::Invalid(e.to_string()))?);
    }
    Ok(out)
}

/// Read the path-parameter columns (w_0..w_{n-1}) from a samples.csv.
pub fn read_w_samples(path: &Path, n_w: usize) -> Result<Vec<Vec<f64>>, HarnessError> {
    let names: Vec<String> = (0..n_w).map(|i| format!("w_{i}")).collect();
    read_theta_samples(path, &names)
}

/// Posterior-predictive run: θ samples from a CSV, forward simulation,
/// banded output.
pub fn run_predict(
    config_path: &Path,
    samples_csv: &Path,
    overrides: &RunOverrides,
) -> Result<RunArtifacts, HarnessError> {
    let prep = prepare(config_path, overrides)?;
    let predict = prep.cfg.predict.clone().ok_or_else(|| {
        HarnessError::Invalid("[predict] section required for the predict command".into())
    })?;
    let names = prep.model.theta_names();
    let mut theta = read_theta_samples(samples_csv, &names)?;
    if let Some(cap) = predict.max_samples {
        theta.truncate(cap);
    }
    if theta.is_empty() {
        return Err(HarnessError::Invalid("no parameter samples in the CSV".into()));
    }
    let bands = posterior_predictive(
        &prep.model,
        &theta,
        &predict.x_init,
        predict.horizon,
        predict.dt,
        &prep.dataset.sigma_y,
        predict.noise_seed,
    )?;
    std::fs::create_dir_all(&prep.out_dir)?;
    let path = prep.out_dir.join("predictive.csv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    let mut header = vec!["t".to_string()];
    for band in bands.states.iter().chain(&bands.measurements) {
        header.push(format!("{}_q05", band.name));
        header.push(format!("{}_q50", band.name));
        header.push(format!("{}_q95", band.name));
    }
    writeln!(out, "{}", header.join(","))?;
    for (ti, t) in bands.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for band in bands.states.iter().chain(&bands.measurements) {
            row.push(band.q05[ti].to_string());
            row.push(band.q50[ti].to_string());
            row.push(band.q95[ti].to_string());
        }
        writeln!(out, "{}", row.join(","))?;
    }
    drop(out);
    if bands.n_divergent > 0 {
        eprintln!("predict: {} divergent parameter samples were skipped", bands.n_divergent);
    }
    Ok(RunArtifacts { out_dir: prep.out_dir, files: vec![path] })
}

/// Rebuild summary.json from the samples.csv in an output directory, using
/// the resolved config stored there.
pub fn run_summarize(dir: &Path) -> Result<RunArtifacts, HarnessError> {
    let cfg_path = dir.join("config_resolved.toml");
    let (cfg, _) = super::config::load_config(&cfg_path)?;
    let model = cfg.build_model(Path::new(""))?;
    let window = cfg.prior.horizon.ok_or_else(|| {
        HarnessError::Invalid("resolved config lacks prior.horizon".into())
    })?;
    let spec = cfg.build_spec(model.dims().d_x, window)?;
    let samples_path = dir.join("samples.csv");
    let w = read_w_samples(&samples_path, spec.n_params())?;
    let names = model.theta_names();
    // θ columns are optional (filter-only runs)
    let theta = match read_theta_samples(&samples_path, &names) {
        Ok(mut t) => {
            for row in t.iter_mut() {
                for (v, s) in row.iter_mut().zip(model.theta_scale()) {
                    *v /= s;
                }
            }
            t
        }
        Err(_) => Vec::new(),
    };
    let grid = uniform_grid(window, cfg.summary.grid_points);
    let summary = summarize_samples(&model, &spec, &w, &theta, &grid)?;
    let path = dir.join("summary.json");
    let file = SummaryFile {
        experiment: cfg.experiment.name.clone(),
        algorithm: format!("{:?}", cfg.experiment.algorithm).to_lowercase(),
        n_samples: w.len(),
        summary,
    };
    std::fs::write(&path, serde_json::to_string_pretty(&file)?)?;
    Ok(RunArtifacts { out_dir: dir.to_path_buf(), files: vec![path] })
}

/// Summarize a guide-based result directly (used by tests and tooling).
#[allow(clippy::too_many_arguments)]
pub fn summarize_nsvi_state(
    model: &OdeModel,
    spec: &PathSpec,
    state: &NsviState,
    joint: bool,
    n_draws: usize,
    seed: u64,
    grid: &[f64],
) -> Result<PosteriorSummary, HarnessError> {
    summarize_guide(
        model,
        spec,
        &state.phi,
        Some(&state.chi),
        if joint { Some(&state.psi) } else { None },
        n_draws,
        seed,
        grid,
    )
}
