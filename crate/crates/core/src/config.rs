//! Experiment configuration files (TOML) and calibration files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration::{
    CalibrationResult, DEFAULT_ENSEMBLE_SIZE, DEFAULT_GRID_POINTS, DEFAULT_GRID_RANGE,
};
use crate::error::{Error, Result};
use crate::implicit::PcnOptions;
use crate::method::{Method, MethodTag, SamplerMode};
use crate::problems::{system_by_name, Ivp, OdeSystem, State};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub params: Vec<f64>,
    pub x0: Vec<f64>,
    pub t_end: f64,
}

impl ProblemConfig {
    pub fn system(&self) -> Result<Arc<dyn OdeSystem>> {
        system_by_name(&self.name, &self.params)
    }

    pub fn ivp(&self, h: f64) -> Result<Ivp> {
        Ivp::new(
            self.system()?,
            State::from_column_slice(&self.x0),
            self.t_end,
            h,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcnConfig {
    #[serde(default = "default_pcn_beta")]
    pub beta: f64,
    #[serde(default = "default_pcn_iterations")]
    pub iterations: usize,
    #[serde(default = "default_pcn_burn_in")]
    pub burn_in: usize,
}

fn default_pcn_beta() -> f64 {
    PcnOptions::default().beta
}
fn default_pcn_iterations() -> usize {
    PcnOptions::default().iterations
}
fn default_pcn_burn_in() -> usize {
    PcnOptions::default().burn_in
}

impl Default for PcnConfig {
    fn default() -> Self {
        PcnConfig {
            beta: default_pcn_beta(),
            iterations: default_pcn_iterations(),
            burn_in: default_pcn_burn_in(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub tag: MethodTag,
    #[serde(default)]
    pub mode: SamplerMode,
    /// Single step size for solve, ensemble and calibrate.
    pub h: Option<f64>,
    /// Step sizes for convergence studies.
    #[serde(default)]
    pub hs: Vec<f64>,
    pub alpha: Option<f64>,
    /// File written by `calibrate`; supplies alpha when `alpha` is not set.
    pub calibration_file: Option<PathBuf>,
    #[serde(default)]
    pub pcn: PcnConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_ensemble_size")]
    pub size: usize,
}

fn default_ensemble_size() -> usize {
    DEFAULT_ENSEMBLE_SIZE
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            size: DEFAULT_ENSEMBLE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_grid_lo")]
    pub grid_lo: f64,
    #[serde(default = "default_grid_hi")]
    pub grid_hi: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
}

fn default_grid_lo() -> f64 {
    DEFAULT_GRID_RANGE.0
}
fn default_grid_hi() -> f64 {
    DEFAULT_GRID_RANGE.1
}
fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            grid_lo: default_grid_lo(),
            grid_hi: default_grid_hi(),
            grid_points: default_grid_points(),
            ensemble_size: DEFAULT_ENSEMBLE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    /// Forward models to compare; defaults to the configured method.
    #[serde(default)]
    pub methods: Vec<MethodTag>,
    /// Step sizes; defaults to the configured `h`.
    #[serde(default)]
    pub hs: Vec<f64>,
    #[serde(default = "default_mcmc_iterations")]
    pub iterations: usize,
    #[serde(default = "default_mcmc_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Initial parameters; defaults to the problem parameters.
    pub init: Option<Vec<f64>>,
    pub initial_proposal_sd: Option<f64>,
    /// Observation times; defaults to `1, 2, .., floor(T)`.
    pub observation_times: Option<Vec<f64>>,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default)]
    pub data_seed: u64,
}

fn default_mcmc_iterations() -> usize {
    11_000
}
fn default_mcmc_burn_in() -> usize {
    1_000
}
fn default_thin() -> usize {
    10
}
fn default_noise_var() -> f64 {
    0.01
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            methods: Vec::new(),
            hs: Vec::new(),
            iterations: default_mcmc_iterations(),
            burn_in: default_mcmc_burn_in(),
            thin: default_thin(),
            init: None,
            initial_proposal_sd: None,
            observation_times: None,
            noise_var: default_noise_var(),
            data_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<MethodTag>,
    pub mode: Option<SamplerMode>,
    pub h: Option<f64>,
    pub alpha: Option<f64>,
    pub t_end: Option<f64>,
    pub ensemble_size: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(m) = o.method {
            self.method.tag = m;
        }
        if let Some(m) = o.mode {
            self.method.mode = m;
        }
        if let Some(h) = o.h {
            self.method.h = Some(h);
        }
        if let Some(a) = o.alpha {
            self.method.alpha = Some(a);
            self.method.calibration_file = None;
        }
        if let Some(t) = o.t_end {
            self.problem.t_end = t;
        }
        if let Some(m) = o.ensemble_size {
            self.ensemble.size = m;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        if let Some(p) = &o.output {
            self.output = p.clone();
        }
        self.validate()
    }

    /// Structural checks that do not need the problem to be built.
    pub fn validate(&self) -> Result<()> {
        positive("t_end", self.problem.t_end)?;
        if let Some(h) = self.method.h {
            positive("h", h)?;
        }
        for h in self.method.hs.iter().chain(&self.inference.hs) {
            positive("h", *h)?;
        }
        if let Some(a) = self.method.alpha {
            positive("alpha", a)?;
        }
        if self.method.alpha.is_some() && self.method.calibration_file.is_some() {
            return Err(Error::Config(
                "give either alpha or calibration_file, not both".into(),
            ));
        }
        if self.ensemble.size == 0 || self.calibration.ensemble_size == 0 {
            return Err(Error::Config("ensemble size must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        positive("calibration grid_lo", self.calibration.grid_lo)?;
        positive("calibration grid_hi", self.calibration.grid_hi)?;
        if self.calibration.grid_hi <= self.calibration.grid_lo || self.calibration.grid_points < 2
        {
            return Err(Error::Config(
                "calibration grid needs grid_lo < grid_hi and at least 2 points".into(),
            ));
        }
        let pcn = self.pcn_options();
        pcn.validate().map_err(|e| Error::Config(e.to_string()))?;
        positive("noise_var", self.inference.noise_var)?;
        if self.inference.burn_in >= self.inference.iterations || self.inference.thin == 0 {
            return Err(Error::Config(
                "mcmc needs burn_in < iterations and thin > 0".into(),
            ));
        }
        if let Some(sd) = self.inference.initial_proposal_sd {
            positive("initial_proposal_sd", sd)?;
        }
        Ok(())
    }

    pub fn pcn_options(&self) -> PcnOptions {
        PcnOptions {
            beta: self.method.pcn.beta,
            iterations: self.method.pcn.iterations,
            burn_in: self.method.pcn.burn_in,
            thin: 1,
            seed: self.seed,
        }
    }

    pub fn step(&self) -> Result<f64> {
        self.method
            .h
            .ok_or_else(|| Error::Config("no step size: set method.h or pass --h".into()))
    }

    /// Step sizes in descending order.
    pub fn step_list(&self) -> Result<Vec<f64>> {
        let mut hs = self.method.hs.clone();
        if hs.is_empty() {
            return Err(Error::Config("convergence needs method.hs".into()));
        }
        hs.sort_by(|a, b| b.total_cmp(a));
        if hs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("method.hs contains duplicates".into()));
        }
        Ok(hs)
    }

    /// Noise scale from `alpha` or the calibration file; `None` for
    /// deterministic methods.
    pub fn resolve_alpha(&self) -> Result<Option<f64>> {
        if !self.method.tag.randomized {
            return Ok(None);
        }
        if let Some(a) = self.method.alpha {
            return Ok(Some(a));
        }
        match &self.method.calibration_file {
            Some(p) => {
                let cal = read_calibration(p)?;
                if cal.method.family != self.method.tag.family
                    || cal.method.steps != self.method.tag.steps
                {
                    log::warn!(
                        "calibration file is for {} but the method is {}",
                        cal.method,
                        self.method.tag
                    );
                }
                Ok(Some(cal.alpha_star))
            }
            None => Err(Error::Config(format!(
                "method {} needs alpha or calibration_file",
                self.method.tag
            ))),
        }
    }

    pub fn build_method(&self, tag: MethodTag) -> Result<Method> {
        let alpha = if tag.randomized {
            let mut probe = self.clone();
            probe.method.tag = tag;
            probe.resolve_alpha()?
        } else {
            None
        };
        let mut m = Method::new(tag, self.method.mode, alpha);
        m.pcn = self.pcn_options();
        Ok(m)
    }

    pub fn method(&self) -> Result<Method> {
        self.build_method(self.method.tag)
    }
}

pub fn calibration_to_toml(cal: &CalibrationResult) -> Result<String> {
    toml::to_string(cal).map_err(|e| Error::Config(e.to_string()))
}

pub fn calibration_from_toml(text: &str) -> Result<CalibrationResult> {
    let cal: CalibrationResult =
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    if !(cal.alpha_star > 0.0 && cal.alpha_star.is_finite()) {
        return Err(Error::Config(
            "calibration alpha_star must be positive".into(),
        ));
    }
    if cal.grid.len() != cal.objectives.len() || cal.grid.len() != cal.spreads.len() {
        return Err(Error::Config(
            "calibration grid, objectives and spreads differ in length".into(),
        ));
    }
    Ok(cal)
}

pub fn read_calibration(path: &Path) -> Result<CalibrationResult> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!(
            "cannot read calibration file {}: {e}",
            path.display()
        ))
    })?;
    calibration_from_toml(&text)
}

pub fn write_calibration(path: &Path, cal: &CalibrationResult) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, calibration_to_toml(cal)?)?;
    Ok(())
}
