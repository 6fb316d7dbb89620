//! Experiment configuration: one TOML file per experiment, with an
//! `extends` key for layering a case file over a shared base. Paths inside a
//! config are resolved relative to the file that declares them.

use super::HarnessError;
use crate::inference::{AlphaSchedule, LrSchedule};
use crate::models::{
    bouc_wen_frame, duffing, nes, two_dof_duffing, NoiseRule, OdeModel, TimeSeries,
};
use crate::paths::{LinearBasis, PathSpec};
use crate::priors::{PriorConfig, TimeMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Nsvi,
    Npsgld,
    /// NPSGLD with the identity metric.
    Nsgld,
    FilterNsvi,
    FilterNpsgld,
}

impl Algorithm {
    pub fn is_filter(self) -> bool {
        matches!(self, Algorithm::FilterNsvi | Algorithm::FilterNpsgld)
    }

    pub fn is_sampler(self) -> bool {
        matches!(self, Algorithm::Npsgld | Algorithm::Nsgld | Algorithm::FilterNpsgld)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub seed: u64,
    pub out_dir: String,
    pub algorithm: Algorithm,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Duffing,
    TwoDofDuffing,
    BoucWen,
    Nes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Forcing amplitude of the two-mass system. No default.
    pub f0: Option<f64>,
    /// Forcing frequency of the two-mass system. No default.
    pub omega0: Option<f64>,
    pub n_stories: Option<usize>,
    /// Ground-acceleration CSV for the frame model (t,value with header).
    pub excitation: Option<String>,
    /// Second excitation CSV for the stacked NES model.
    pub excitation2: Option<String>,
    pub bw_beta: Option<f64>,
    pub bw_gamma: Option<f64>,
    pub bw_exponent: Option<f64>,
    /// Measurement normalization override (e.g. per-channel RMS).
    pub y_scale: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSourceKind {
    Synthetic,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRuleCfg {
    ScaleFraction,
    RmsFraction,
}

impl From<NoiseRuleCfg> for NoiseRule {
    fn from(v: NoiseRuleCfg) -> NoiseRule {
        match v {
            NoiseRuleCfg::ScaleFraction => NoiseRule::ScaleFraction,
            NoiseRuleCfg::RmsFraction => NoiseRule::RmsFraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSourceKind,
    // synthetic generation
    pub x_init: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub sample_stride: Option<usize>,
    #[serde(default = "default_noise_rule")]
    pub noise_rule: NoiseRuleCfg,
    pub noise_fraction: Option<f64>,
    pub seed: Option<u64>,
    /// True parameters (physical units) used to generate the data.
    pub theta_truth: Option<Vec<f64>>,
    // file loading
    pub path: Option<String>,
    pub sigma_y: Option<Vec<f64>>,
}

fn default_noise_rule() -> NoiseRuleCfg {
    NoiseRuleCfg::ScaleFraction
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKindCfg {
    Fourier,
    ReparamFourier,
    Rbf,
    ResidualNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    pub kind: PathKindCfg,
    pub modes: Option<usize>,
    /// Number of evenly spaced rbf centers.
    pub centers: Option<usize>,
    pub scale: Option<f64>,
    /// Linear basis of the residual kind: "fourier" or "rbf".
    pub basis: Option<String>,
    pub basis_modes: Option<usize>,
    pub basis_centers: Option<usize>,
    pub basis_scale: Option<f64>,
    pub encoder_modes: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeModeCfg {
    Uniform,
    DatasetGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "default_time_mode")]
    pub time_mode: TimeModeCfg,
    /// Inference window; defaults to the data span.
    pub horizon: Option<f64>,
}

fn default_time_mode() -> TimeModeCfg {
    TimeModeCfg::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsviSection {
    pub niter: u64,
    pub niter_auxi: u64,
    /// (n_εηζ, n_t, ñ_ε, ñ_t, m_y)
    pub sizes: [usize; 5],
    pub n_w_tilde: usize,
    pub lr: LrSchedule,
    pub inner_lr: Option<f64>,
    /// Iterations of the linear partition-term ramp; defaults to two thirds
    /// of `niter`.
    pub partition_ramp: Option<u64>,
    pub trace_every: u64,
    pub n_posterior_samples: usize,
}

impl Default for NsviSection {
    fn default() -> Self {
        NsviSection {
            niter: 100_000,
            niter_auxi: 10,
            sizes: [1, 10, 1, 10, 10],
            n_w_tilde: 1,
            lr: LrSchedule::StepDecay { init: 1e-3, factor: 0.1, interval: 100_000 },
            inner_lr: None,
            partition_ramp: None,
            trace_every: 1000,
            n_posterior_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NpsgldSection {
    pub niter: u64,
    pub niter_auxi: u64,
    pub n_t: usize,
    pub aux_t: usize,
    pub n_w_tilde: usize,
    pub m_y: usize,
    pub lr: LrSchedule,
    pub aux_lr: Option<LrSchedule>,
    pub delta: f64,
    pub aux_delta: f64,
    pub alpha: AlphaSchedule,
    pub aux_alpha: AlphaSchedule,
    pub precondition: bool,
    pub n_chains: usize,
    /// Discard recorded samples at or below this iteration.
    pub burn_in: u64,
    /// Keep one sample every this many iterations (must be a multiple of
    /// `record_every`).
    pub thinning: u64,
    pub record_every: u64,
    pub trace_every: u64,
}

impl Default for NpsgldSection {
    fn default() -> Self {
        NpsgldSection {
            niter: 500_000,
            niter_auxi: 10,
            n_t: 10,
            aux_t: 10,
            n_w_tilde: 1,
            m_y: 10,
            lr: LrSchedule::ExpDecayTo { init: 1e-4, end: 1e-5, over: 1_000_000 },
            aux_lr: None,
            delta: 0.1,
            aux_delta: 0.1,
            alpha: AlphaSchedule::RampToOne { init: 0.99, ramp_iters: 1_000_000 },
            aux_alpha: AlphaSchedule::Constant { value: 0.99 },
            precondition: true,
            n_chains: 3,
            burn_in: 250_000,
            thinning: 1000,
            record_every: 1000,
            trace_every: 1000,
        }
    }
}

/// θ and x0 for the filter-only mode, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub theta: Vec<f64>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub x_init: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub max_samples: Option<usize>,
    #[serde(default = "default_predict_seed")]
    pub noise_seed: u64,
}

fn default_predict_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummarySection {
    pub grid_points: usize,
    pub n_guide_draws: usize,
}

impl Default for SummarySection {
    fn default() -> Self {
        SummarySection { grid_points: 500, n_guide_draws: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    pub data: DataSection,
    pub path: PathSection,
    pub prior: PriorSection,
    #[serde(default)]
    pub nsvi: NsviSection,
    #[serde(default)]
    pub npsgld: NpsgldSection,
    pub filter: Option<FilterSection>,
    pub predict: Option<PredictSection>,
    #[serde(default)]
    pub summary: SummarySection,
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(bt)), toml::Value::Table(ot)) => merge_tables(bt, ot),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn load_merged_table(path: &Path, visiting: &mut Vec<PathBuf>) -> Result<toml::Table, HarnessError> {
    let canonical = path
        .canonicalize()
        .map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
    if visiting.contains(&canonical) {
        return Err(HarnessError::Invalid(format!(
            "extends cycle through {}",
            canonical.display()
        )));
    }
    visiting.push(canonical);
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
    if let Some(ext) = table.remove("extends") {
        let rel = ext.as_str().ok_or_else(|| {
            HarnessError::Invalid(format!("{}: extends must be a string", path.display()))
        })?;
        let parent_path = path.parent().unwrap_or(Path::new(".")).join(rel);
        let mut parent = load_merged_table(&parent_path, visiting)?;
        merge_tables(&mut parent, table);
        table = parent;
    }
    visiting.pop();
    Ok(table)
}

/// Load a config file, resolving `extends` chains. Returns the config plus
/// the directory the file lives in (for resolving data paths).
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let table = load_merged_table(path, &mut Vec::new())?;
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((cfg, base))
}

fn require<T: Clone>(field: &Option<T>, what: &str) -> Result<T, HarnessError> {
    field.clone().ok_or_else(|| HarnessError::Invalid(format!("missing config field {what}")))
}

impl ExperimentConfig {
    /// Construct the physical model.
    pub fn build_model(&self, base: &Path) -> Result<OdeModel, HarnessError> {
        let m = &self.model;
        let model = match m.kind {
            ModelKind::Duffing => duffing(),
            ModelKind::TwoDofDuffing => {
                let f0 = require(&m.f0, "[model].f0 (no default)")?;
                let omega0 = require(&m.omega0, "[model].omega0 (no default)")?;
                two_dof_duffing(f0, omega0)
            }
            ModelKind::BoucWen => {
                let n = require(&m.n_stories, "[model].n_stories")?;
                let exc = require(&m.excitation, "[model].excitation")?;
                let series = TimeSeries::read_csv(&base.join(&exc))?;
                let mut model = bouc_wen_frame(n, series);
                if let OdeModel::BoucWenFrame(frame) = &mut model {
                    if let Some(b) = m.bw_beta {
                        frame.bw_beta = b;
                    }
                    if let Some(g) = m.bw_gamma {
                        frame.bw_gamma = g;
                    }
                    if let Some(e) = m.bw_exponent {
                        frame.bw_exponent = e;
                    }
                    if let Some(ys) = &m.y_scale {
                        if ys.len() != n {
                            return Err(HarnessError::Invalid(format!(
                                "[model].y_scale needs {n} entries, got {}",
                                ys.len()
                            )));
                        }
                        frame.set_y_scale(ys.clone());
                    }
                }
                model
            }
            ModelKind::Nes => {
                let e1 = require(&m.excitation, "[model].excitation")?;
                let e2 = require(&m.excitation2, "[model].excitation2")?;
                let s1 = TimeSeries::read_csv(&base.join(&e1))?;
                let s2 = TimeSeries::read_csv(&base.join(&e2))?;
                nes([s1, s2])
            }
        };
        Ok(model)
    }

    /// Construct the path spec for the given model dimension and window.
    pub fn build_spec(&self, d_x: usize, window: f64) -> Result<PathSpec, HarnessError> {
        let p = &self.path;
        let mut spec = match p.kind {
            PathKindCfg::Fourier => {
                PathSpec::fourier(d_x, require(&p.modes, "[path].modes")?, window)
            }
            PathKindCfg::ReparamFourier => {
                PathSpec::reparam_fourier(d_x, require(&p.modes, "[path].modes")?, window)
            }
            PathKindCfg::Rbf => PathSpec::rbf(
                d_x,
                require(&p.centers, "[path].centers")?,
                require(&p.scale, "[path].scale")?,
                window,
            ),
            PathKindCfg::ResidualNet => {
                let basis_name = p.basis.clone().unwrap_or_else(|| "rbf".into());
                let basis = match basis_name.as_str() {
                    "fourier" => LinearBasis::Fourier {
                        modes: require(&p.basis_modes, "[path].basis_modes")?,
                    },
                    "rbf" => {
                        let count = require(&p.basis_centers, "[path].basis_centers")?;
                        let scale = require(&p.basis_scale, "[path].basis_scale")?;
                        let centers = if count == 1 {
                            vec![0.5]
                        } else {
                            (0..count).map(|k| k as f64 / (count - 1) as f64).collect()
                        };
                        LinearBasis::Rbf { centers, scale }
                    }
                    other => {
                        return Err(HarnessError::Invalid(format!(
                            "[path].basis must be fourier or rbf, got {other}"
                        )))
                    }
                };
                PathSpec::residual_net(
                    d_x,
                    basis,
                    require(&p.encoder_modes, "[path].encoder_modes")?,
                    require(&p.hidden, "[path].hidden")?,
                    window,
                )
            }
        };
        if let Some(period) = p.period {
            spec = spec.with_period(period);
        }
        spec.validate().map_err(|e| HarnessError::Invalid(format!("[path]: {e}")))?;
        Ok(spec)
    }

    /// Construct the prior configuration given the window and measurement
    /// grid.
    pub fn build_prior(&self, window: f64, data_times: &[f64], n_t: usize) -> PriorConfig {
        let time_mode = match self.prior.time_mode {
            TimeModeCfg::Uniform => TimeMode::UniformContinuous,
            TimeModeCfg::DatasetGrid => TimeMode::DiscreteGrid(data_times.to_vec()),
        };
        PriorConfig {
            beta1: self.prior.beta1,
            beta2: self.prior.beta2,
            horizon: window,
            n_t,
            time_mode,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.prior.beta1 >= 0.0) || !(self.prior.beta2 >= 0.0) {
            return Err(HarnessError::Invalid("[prior]: beta1 and beta2 must be >= 0".into()));
        }
        match self.data.source {
            DataSourceKind::Synthetic => {
                for (opt, name) in [
                    (self.data.x_init.is_none(), "[data].x_init"),
                    (self.data.t_end.is_none(), "[data].t_end"),
                    (self.data.dt.is_none(), "[data].dt"),
                    (self.data.sample_stride.is_none(), "[data].sample_stride"),
                    (self.data.noise_fraction.is_none(), "[data].noise_fraction"),
                    (self.data.theta_truth.is_none(), "[data].theta_truth"),
                ] {
                    if opt {
                        return Err(HarnessError::Invalid(format!(
                            "missing config field {name} for synthetic data"
                        )));
                    }
                }
            }
            DataSourceKind::File => {
                if self.data.path.is_none() || self.data.sigma_y.is_none() {
                    return Err(HarnessError::Invalid(
                        "[data]: file source needs path and sigma_y".into(),
                    ));
                }
            }
        }
        if self.experiment.algorithm.is_filter() && self.filter.is_none() {
            return Err(HarnessError::Invalid(
                "[filter] section required for filter algorithms".into(),
            ));
        }
        let np = &self.npsgld;
        if np.record_every == 0 || np.thinning == 0 {
            return Err(HarnessError::Invalid(
                "[npsgld]: record_every and thinning must be >= 1".into(),
            ));
        }
        if np.thinning % np.record_every != 0 {
            return Err(HarnessError::Invalid(format!(
                "[npsgld]: thinning {} must be a multiple of record_every {}",
                np.thinning, np.record_every
            )));
        }
        if np.burn_in >= np.niter {
            return Err(HarnessError::Invalid(format!(
                "[npsgld]: burn_in {} must be below niter {}",
                np.burn_in, np.niter
            )));
        }
        self.nsvi.lr.validate().map_err(|e| HarnessError::Invalid(format!("[nsvi].lr: {e}")))?;
        np.lr.validate().map_err(|e| HarnessError::Invalid(format!("[npsgld].lr: {e}")))?;
        if let Some(lr) = &np.aux_lr {
            lr.validate().map_err(|e| HarnessError::Invalid(format!("[npsgld].aux_lr: {e}")))?;
        }
        np.alpha
            .validate()
            .map_err(|e| HarnessError::Invalid(format!("[npsgld].alpha: {e}")))?;
        np.aux_alpha
            .validate()
            .map_err(|e| HarnessError::Invalid(format!("[npsgld].aux_alpha: {e}")))?;
        if self.summary.grid_points < 2 {
            return Err(HarnessError::Invalid("[summary].grid_points must be >= 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const BASE: &str = r#"
[experiment]
name = "base"
seed = 1
out_dir = "runs/base"
algorithm = "nsvi"

[model]
kind = "duffing"

[data]
source = "synthetic"
x_init = [1.0, 0.0]
t_end = 20.0
dt = 0.01
sample_stride = 10
noise_fraction = 0.05
seed = 7
theta_truth = [0.3, -1.0, 1.0]

[path]
kind = "fourier"
modes = 20

[prior]
beta1 = 200.0
beta2 = 100000.0
"#;

    #[test]
    fn parses_and_validates_a_minimal_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "duffing.toml", BASE);
        let (cfg, _) = load_config(&p).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.experiment.algorithm, Algorithm::Nsvi);
        assert_eq!(cfg.nsvi.sizes, [1, 10, 1, 10, 10]);
        let model = cfg.build_model(dir.path()).unwrap();
        let spec = cfg.build_spec(model.dims().d_x, 20.0).unwrap();
        assert_eq!(spec.n_params(), 82);
    }

    #[test]
    fn extends_overrides_fields() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "base.toml", BASE);
        let child = r#"
extends = "base.toml"

[experiment]
name = "child"
seed = 2
out_dir = "runs/child"
algorithm = "npsgld"

[prior]
beta1 = 100.0
beta2 = 50000.0
"#;
        let p = write_file(dir.path(), "child.toml", child);
        let (cfg, _) = load_config(&p).unwrap();
        assert_eq!(cfg.experiment.name, "child");
        assert_eq!(cfg.prior.beta1, 100.0);
        // inherited from the base
        assert_eq!(cfg.data.t_end, Some(20.0));
        assert_eq!(cfg.path.modes, Some(20));
    }

    #[test]
    fn extends_cycles_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "a.toml", "extends = \"b.toml\"\n");
        write_file(dir.path(), "b.toml", "extends = \"a.toml\"\n");
        let err = load_config(&dir.path().join("a.toml")).unwrap_err();
        assert!(err.to_string().contains("cycle"));
    }

    #[test]
    fn unknown_fields_are_field_level_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = BASE.replace("beta1 = 200.0", "beta1 = 200.0\nbeta_one = 3.0");
        let p = write_file(dir.path(), "bad.toml", &bad);
        let err = load_config(&p).unwrap_err();
        assert!(err.to_string().contains("beta_one"), "{err}");
    }

    #[test]
    fn missing_mandatory_forcing_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let two_dof = BASE.replace("kind = \"duffing\"", "kind = \"two_dof_duffing\"");
        let p = write_file(dir.path(), "two.toml", &two_dof);
        let (cfg, base) = load_config(&p).unwrap();
        let err = cfg.build_model(&base).unwrap_err();
        assert!(err.to_string().contains("f0"));
    }

    #[test]
    fn round_trip_is_field_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "duffing.toml", BASE);
        let (cfg, _) = load_config(&p).unwrap();
        let serialized = toml::to_string(&cfg).unwrap();
        let reparsed: ExperimentConfig = toml::from_str(&serialized).unwrap();
        assert_eq!(cfg, reparsed);
    }
}
