//! Drivers behind the command-line subcommands. Each writes its outputs
//! under the configured output directory and returns the paths it wrote.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{calibrate_alpha, log_grid};
use crate::config::{write_calibration, ExperimentConfig};
use crate::ensemble::{run_ensemble as ensemble_members, summarize, terminal_rms_error};
use crate::error::{Error, Result};
use crate::inference::{
    generate_synthetic_data, mwg_mcmc, posterior_summary, McmcOptions, PosteriorSummary, Prior,
};
use crate::io;
use crate::method::MethodTag;
use crate::problems::{reference_solution, system_by_name, DEFAULT_REFINE};
use crate::stats::loglog_slope;

/// Process exit status for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Runs `f` on a pool with the configured number of threads.
pub fn with_threads<T: Send>(
    cfg: &ExperimentConfig,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn out(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output.join(name)
}

fn write_toml<T: Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Single forward solve (member 0 of the configured seed).
pub fn run_solve(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ivp = cfg.problem.ivp(cfg.step()?)?;
    let method = cfg.method()?;
    let path = method.solve_member(&ivp, cfg.seed, 0)?;
    let file = out(cfg, "trajectory.csv");
    io::write_trajectory_file(&file, &path)?;
    Ok(vec![file])
}

fn band_script(d: usize) -> String {
    let mut s = String::from(
        "# gnuplot script: ensemble mean with 1, 2 and 3 standard deviation bands\n\
         set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\n",
    );
    if d > 1 {
        let _ = writeln!(s, "set multiplot layout {d},1");
    }
    for k in 1..=d {
        let (m, sd) = (1 + k, 1 + d + k);
        let _ = writeln!(s, "set ylabel 'z_{k}'");
        let _ = writeln!(
            s,
            "plot for [n=3:1:-1] 'summary.csv' using 1:(${m}-n*${sd}):(${m}+n*${sd}) with filledcurves \
             fs transparent solid 0.2 title sprintf('%d sd', n), \\\n     'summary.csv' using 1:{m} with lines lw 2 title 'mean'"
        );
    }
    if d > 1 {
        s.push_str("unset multiplot\n");
    }
    s
}

pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ivp = cfg.problem.ivp(cfg.step()?)?;
    let method = cfg.method()?;
    let members = ensemble_members(&ivp, &method, cfg.ensemble.size, cfg.seed)?;
    let summary = summarize(&members)?;
    let files = [
        out(cfg, "ensemble.csv"),
        out(cfg, "summary.csv"),
        out(cfg, "bands.gp"),
    ];
    io::write_ensemble_file(&files[0], &members)?;
    io::write_summary_file(&files[1], &summary)?;
    std::fs::write(&files[2], band_script(ivp.system.dim()))?;
    Ok(files.to_vec())
}

pub fn run_calibrate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let ivp = cfg.problem.ivp(cfg.step()?)?;
    // alpha is what is being fitted; the placeholder is replaced per grid point
    let mut probe = cfg.clone();
    probe.method.alpha = Some(1.0);
    probe.method.calibration_file = None;
    let method = probe.build_method(MethodTag {
        randomized: true,
        ..cfg.method.tag
    })?;
    let c = &cfg.calibration;
    let grid = log_grid(c.grid_lo, c.grid_hi, c.grid_points);
    let result = calibrate_alpha(&ivp, &method, &grid, c.ensemble_size, cfg.seed)?;
    log::info!(
        "{}: alpha* = {} at h = {}",
        result.method,
        result.alpha_star,
        result.h
    );
    let file = out(cfg, "calibration.toml");
    write_calibration(&file, &result)?;
    Ok(vec![file])
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub method: MethodTag,
    pub hs: Vec<f64>,
    pub rms_errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Root-mean-square terminal error against the reference solution, one
/// ensemble per step size (a single solve for deterministic methods).
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let hs = cfg.step_list()?;
    let method = cfg.method()?;
    let size = if method.tag.randomized {
        cfg.ensemble.size
    } else {
        1
    };
    let mut errors = Vec::with_capacity(hs.len());
    for &h in &hs {
        let ivp = cfg.problem.ivp(h)?;
        let truth = reference_solution(&ivp, DEFAULT_REFINE)?;
        let members = ensemble_members(&ivp, &method, size, cfg.seed)?;
        errors.push(terminal_rms_error(&members, truth.terminal()));
    }
    let fit = loglog_slope(&hs, &errors)?;
    Ok(ConvergenceReport {
        method: method.tag,
        hs,
        rms_errors: errors,
        slope: fit.slope,
        intercept: fit.intercept,
        residuals: fit.residuals,
    })
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let report = convergence_study(cfg)?;
    log::info!("{}: slope {:.3}", report.method, report.slope);
    let files = [out(cfg, "rates.csv"), out(cfg, "convergence.toml")];
    io::write_rates_file(&files[0], &report.hs, &report.rms_errors)?;
    write_toml(&files[1], &report)?;
    Ok(files.to_vec())
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceEntry {
    pub method: MethodTag,
    pub h: f64,
    pub alpha: Option<f64>,
    pub chain_file: String,
    pub forward_solves: usize,
    pub xi_refreshes: usize,
    pub summary: PosteriorSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceReport {
    pub problem: String,
    pub true_params: Vec<f64>,
    pub data_seed: u64,
    pub entries: Vec<InferenceEntry>,
}

fn chain_name(tag: MethodTag, h: f64) -> String {
    format!("chain_{tag}_h{}.csv", io::fmt_g17(h))
}

fn posterior_script(names: &[String], q: usize) -> String {
    let (a, b) = if q >= 3 { (3, 4) } else { (2, 2) };
    let mut s = String::from(
        "# gnuplot script: posterior samples of the last two parameters\n\
         set datafile separator ','\nset key autotitle columnhead\n",
    );
    let _ = writeln!(
        s,
        "set xlabel 'theta_{}'\nset ylabel 'theta_{}'",
        a - 1,
        b - 1
    );
    let plots: Vec<String> = names
        .iter()
        .map(|n| format!("'{n}' every 10::1000 using {a}:{b} with points pt 7 ps 0.3 title '{n}'"))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

/// Parameter inference on synthetic data, one chain per (method, h) pair.
pub fn inference_study(
    cfg: &ExperimentConfig,
) -> Result<(InferenceReport, Vec<crate::inference::Chain>)> {
    let inf = &cfg.inference;
    let tags = if inf.methods.is_empty() {
        vec![cfg.method.tag]
    } else {
        inf.methods.clone()
    };
    let hs = if inf.hs.is_empty() {
        vec![cfg.step()?]
    } else {
        inf.hs.clone()
    };
    let times = match &inf.observation_times {
        Some(t) => t.clone(),
        None => (1..=cfg.problem.t_end.floor() as u32)
            .map(f64::from)
            .collect(),
    };
    let h_data = hs.iter().copied().fold(f64::INFINITY, f64::min);
    let truth_ivp = cfg.problem.ivp(h_data)?;
    let d = truth_ivp.system.dim();
    let data = generate_synthetic_data(&truth_ivp, &times, &vec![inf.noise_var; d], inf.data_seed)?;

    let q = cfg.problem.params.len();
    // positive parameters are sampled on the log scale
    let priors: Vec<Prior> = cfg
        .problem
        .params
        .iter()
        .map(|p| {
            if *p > 0.0 {
                Prior::vague_positive()
            } else {
                Prior::Normal { mean: 0.0, sd: 1.0 }
            }
        })
        .collect();
    let init = inf
        .init
        .clone()
        .unwrap_or_else(|| cfg.problem.params.clone());
    let name = cfg.problem.name.clone();
    let factory = move |theta: &[f64]| system_by_name(&name, theta);

    let jobs: Vec<(MethodTag, f64)> = tags
        .iter()
        .flat_map(|t| hs.iter().map(move |h| (*t, *h)))
        .collect();
    let results: Vec<Result<(InferenceEntry, crate::inference::Chain)>> = jobs
        .par_iter()
        .map(|&(tag, h)| {
            let method = cfg.build_method(tag)?;
            let ivp = cfg.problem.ivp(h)?;
            let mut opts = McmcOptions::new(init.clone(), inf.iterations, inf.burn_in, cfg.seed);
            if let Some(sd) = inf.initial_proposal_sd {
                opts.initial_proposal_sd = vec![sd; q];
            }
            let chain = mwg_mcmc(&data, &ivp, &method, &priors, &factory, &opts)?;
            let summary = posterior_summary(&chain, inf.burn_in, inf.thin)?;
            log::info!(
                "{tag} h={h}: acceptance {:.3}, {} forward solves",
                chain.acceptance_rate(),
                chain.forward_solves
            );
            let entry = InferenceEntry {
                method: tag,
                h,
                alpha: method.alpha,
                chain_file: chain_name(tag, h),
                forward_solves: chain.forward_solves,
                xi_refreshes: chain.xi_refreshes,
                summary,
            };
            Ok((entry, chain))
        })
        .collect();
    let mut entries = Vec::new();
    let mut chains = Vec::new();
    for r in results {
        let (e, c) = r?;
        entries.push(e);
        chains.push(c);
    }
    Ok((
        InferenceReport {
            problem: cfg.problem.name.clone(),
            true_params: cfg.problem.params.clone(),
            data_seed: inf.data_seed,
            entries,
        },
        chains,
    ))
}

pub fn run_infer(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let (report, chains) = inference_study(cfg)?;
    let mut files = Vec::new();
    for (entry, chain) in report.entries.iter().zip(&chains) {
        let f = out(cfg, &entry.chain_file);
        io::write_chain_file(&f, chain)?;
        files.push(f);
    }
    let summary = out(cfg, "posterior.toml");
    write_toml(&summary, &report)?;
    files.push(summary);
    let names: Vec<String> = report
        .entries
        .iter()
        .map(|e| e.chain_file.clone())
        .collect();
    let script = out(cfg, "posterior.gp");
    std::fs::write(&script, posterior_script(&names, cfg.problem.params.len()))?;
    files.push(script);
    Ok(files)
}
