//! Step-scale construction and global scale (`alpha`) calibration.
//!
//! The derivative-space scale of the implicit step is obtained from a
//! state-space variance `alpha h^(2s+1) I` by the delta method,
//! `H = alpha h^(2s+1) J Jᵀ`. The global constant `alpha` is fitted by grid
//! search so that the terminal spread of a probabilistic ensemble matches the
//! terminal error of the corresponding deterministic method.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::{run_ensemble, terminal_spread};
use crate::error::{Error, Result};
use crate::method::{Method, MethodTag};
use crate::problems::{reference_solution, Ivp, OdeSystem, State, DEFAULT_REFINE};

/// `alpha h^(2s+1) J(z) J(z)ᵀ`.
pub fn h_matrix(
    system: &dyn OdeSystem,
    z_eval: &State,
    alpha: f64,
    h: f64,
    steps: usize,
) -> DMatrix<f64> {
    let jac = system.jacobian(z_eval);
    let jjt = &jac * jac.transpose();
    // exact symmetry, independent of the product's rounding
    let jjt = (&jjt + jjt.transpose()) * 0.5;
    jjt * (alpha * h.powi(2 * steps as i32 + 1))
}

pub const DEFAULT_GRID_POINTS: usize = 32;
pub const DEFAULT_GRID_RANGE: (f64, f64) = (1e-3, 10.0);
pub const DEFAULT_ENSEMBLE_SIZE: usize = 100;

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

pub fn default_grid() -> Vec<f64> {
    log_grid(
        DEFAULT_GRID_RANGE.0,
        DEFAULT_GRID_RANGE.1,
        DEFAULT_GRID_POINTS,
    )
}

/// `|log(spread) - log(error)|`; infinite when either side is not positive.
pub fn matching_objective(spread: f64, error: f64) -> f64 {
    if spread > 0.0 && error > 0.0 && spread.is_finite() && error.is_finite() {
        (spread.ln() - error.ln()).abs()
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub method: MethodTag,
    pub alpha_star: f64,
    pub h: f64,
    pub t_end: f64,
    /// Deterministic terminal error the ensemble spread was matched to.
    pub target_error: f64,
    pub grid: Vec<f64>,
    pub objectives: Vec<f64>,
    pub spreads: Vec<f64>,
    pub ensemble_size: usize,
    pub seed: u64,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("alpha grid is empty".into()));
    }
    if grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter(
            "alpha grid values must be positive".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "alpha grid must be sorted ascending".into(),
        ));
    }
    Ok(())
}

/// Grid search for the `alpha` whose ensemble terminal spread best matches
/// `target_error`. Ensembles that diverge score an infinite objective.
pub fn calibrate_to_target(
    ivp: &Ivp,
    method: &Method,
    grid: &[f64],
    ensemble_size: usize,
    seed: u64,
    target_error: f64,
) -> Result<CalibrationResult> {
    validate_grid(grid)?;
    if !method.tag.randomized {
        return Err(Error::Config(format!(
            "calibration needs a probabilistic method, got {}",
            method.tag
        )));
    }
    if !method.supports_fixed_perturbations() {
        return Err(Error::Config(
            "calibration runs the semi-implicit sampler; use mode semi".into(),
        ));
    }
    let mut spreads = Vec::with_capacity(grid.len());
    let mut objectives = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let spread = match run_ensemble(ivp, &method.with_alpha(alpha), ensemble_size, seed) {
            Ok(members) => terminal_spread(&members),
            Err(e) if e.is_numerical() => {
                log::info!("alpha = {alpha}: ensemble failed ({e}); objective set to infinity");
                f64::INFINITY
            }
            Err(e) => return Err(e),
        };
        spreads.push(spread);
        objectives.push(matching_objective(spread, target_error));
    }
    let best = objectives
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    if !objectives[best].is_finite() {
        return Err(Error::Diagnostics(
            "every alpha on the grid diverged".into(),
        ));
    }
    Ok(CalibrationResult {
        method: method.tag,
        alpha_star: grid[best],
        h: ivp.h,
        t_end: ivp.t_end,
        target_error,
        grid: grid.to_vec(),
        objectives,
        spreads,
        ensemble_size,
        seed,
    })
}

/// Terminal error of the deterministic counterpart of `method` against the
/// reference solution.
pub fn deterministic_terminal_error(ivp: &Ivp, method: &Method) -> Result<f64> {
    let mut det = *method;
    det.tag.randomized = false;
    let path = det.solve(ivp, None, 0)?;
    let reference = reference_solution(ivp, DEFAULT_REFINE)?;
    Ok((path.terminal() - reference.terminal()).norm())
}

pub fn calibrate_alpha(
    ivp: &Ivp,
    method: &Method,
    grid: &[f64],
    ensemble_size: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    let target = deterministic_terminal_error(ivp, method)?;
    calibrate_to_target(ivp, method, grid, ensemble_size, seed, target)
}
