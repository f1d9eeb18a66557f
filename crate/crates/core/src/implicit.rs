//! Implicit probabilistic Adams–Moulton integrators.
//!
//! Each step draws `Z_{i+1}` from the density
//!
//! ```text
//! p(z) ∝ exp(-½ r(z)ᵀ H⁻¹ r(z)),
//! r(z) = β₋₁⁻¹ (h⁻¹ (z - Z_i) - Σ_j β_j F_{i-j}) - f(z, θ)
//! ```
//!
//! which penalises the mismatch, in derivative space, between the derivative
//! implied by the linear AM relation and the vector field evaluated at `z`.
//! The density peaks at the deterministic AM solution. Two samplers are
//! provided: an exact one (a pCN chain targeting `p` with the semi-implicit
//! Gaussian as reference measure), and the semi-implicit Gaussian itself,
//! obtained by linearising `f` about `Z_i`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::calibration::h_matrix;
use crate::error::{Error, Result};
use crate::multistep::{
    ab_predictor, am_step_deterministic, guard_or_warn, march, weighted_history, AdamsCoefficients,
    Family, SolverOptions,
};
use crate::noise::{purpose, stream_rng, Perturbations};
use crate::problems::{Ivp, OdeSystem, State};
use crate::trajectory::Trajectory;

/// Relative jitter added to a degenerate step covariance before retrying Cholesky.
pub const COVARIANCE_JITTER: f64 = 1e-12;

/// Largest condition number of Γ accepted before the step is declared singular.
const MAX_GAMMA_CONDITION: f64 = 1e12;

fn symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    (m - m.transpose()).abs().max() <= 1e-12 * scale
}

/// The stepping law for one implicit step from `Z_i`.
#[derive(Debug, Clone)]
pub struct ImplicitStepLaw<'a> {
    system: &'a dyn OdeSystem,
    coeffs: &'a AdamsCoefficients,
    h: f64,
    current: State,
    history: State,
    scale: DMatrix<f64>,
    scale_chol: Option<Cholesky<f64, Dyn>>,
}

impl<'a> ImplicitStepLaw<'a> {
    /// `f_window` holds `F_i .. F_{i-s+1}`, newest first; `scale` is `H`.
    pub fn new(
        coeffs: &'a AdamsCoefficients,
        system: &'a dyn OdeSystem,
        h: f64,
        current: &State,
        f_window: &[State],
        scale: DMatrix<f64>,
    ) -> Result<Self> {
        if coeffs.family() != Family::Moulton {
            return Err(Error::Contract(
                "implicit step law needs Adams-Moulton coefficients".into(),
            ));
        }
        if f_window.len() != coeffs.steps() {
            return Err(Error::Contract(format!(
                "derivative window has {} entries, method needs {}",
                f_window.len(),
                coeffs.steps()
            )));
        }
        let d = system.dim();
        if current.len() != d || scale.nrows() != d || scale.ncols() != d {
            return Err(Error::Contract(
                "step law dimensions disagree with the system".into(),
            ));
        }
        if !symmetric(&scale) {
            return Err(Error::Matrix("scale matrix H is not symmetric".into()));
        }
        let scale_chol = Cholesky::new(scale.clone());
        Ok(ImplicitStepLaw {
            system,
            coeffs,
            h,
            current: current.clone(),
            history: weighted_history(coeffs, f_window, d),
            scale,
            scale_chol,
        })
    }

    /// Law with isotropic scale `H = eta² I`.
    pub fn isotropic(
        coeffs: &'a AdamsCoefficients,
        system: &'a dyn OdeSystem,
        h: f64,
        current: &State,
        f_window: &[State],
        eta: f64,
    ) -> Result<Self> {
        let d = system.dim();
        Self::new(
            coeffs,
            system,
            h,
            current,
            f_window,
            DMatrix::identity(d, d) * (eta * eta),
        )
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn current(&self) -> &State {
        &self.current
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn coefficients(&self) -> &AdamsCoefficients {
        self.coeffs
    }

    pub fn system(&self) -> &dyn OdeSystem {
        self.system
    }

    pub fn is_proper(&self) -> bool {
        self.scale_chol.is_some()
    }

    /// Derivative-space discrepancy `r(z)`.
    pub fn residual(&self, z: &State) -> State {
        let beta = self.coeffs.implicit_weight();
        ((z - &self.current) / self.h - &self.history) / beta - self.system.field(z)
    }

    /// `-½ r(z)ᵀ H⁻¹ r(z)`.
    pub fn log_density_unnormalized(&self, z: &State) -> Result<f64> {
        let chol = self
            .scale_chol
            .as_ref()
            .ok_or_else(|| Error::Matrix("scale matrix H is not positive definite".into()))?;
        let r = self.residual(z);
        Ok(-0.5 * r.dot(&chol.solve(&r)))
    }

    /// Deterministic AM solution, the mode of the density.
    pub fn deterministic_point(&self, f_window: &[State], opts: &SolverOptions) -> Result<State> {
        am_step_deterministic(
            self.coeffs,
            &self.current,
            f_window,
            self.h,
            self.system,
            opts,
        )
    }

    fn isotropic_variance(&self) -> Option<f64> {
        let d = self.scale.nrows();
        let v = self.scale[(0, 0)];
        let iso = DMatrix::<f64>::identity(d, d) * v;
        ((&self.scale - iso).abs().max() <= 1e-14 * v.abs()).then_some(v)
    }
}

/// Gaussian sandwich on the normalising constant `K`:
/// `(2π η² / C_h)^{d/2} ≤ K ≤ (2π η² / c_h)^{d/2}` with
/// `c_h = ((β₋₁h)⁻¹ - L)²` and `C_h = ((β₋₁h)⁻¹ + L)²`.
pub fn normalizing_bounds(law: &ImplicitStepLaw<'_>) -> Result<(f64, f64)> {
    let lip = law.system.lipschitz().ok_or_else(|| {
        Error::Precondition("normalizing bounds need a Lipschitz constant".into())
    })?;
    let eta2 = law.isotropic_variance().ok_or_else(|| {
        Error::Precondition("normalizing bounds need an isotropic scale eta² I".into())
    })?;
    let beta = law.coeffs.implicit_weight();
    if law.h * beta * lip >= 1.0 {
        return Err(Error::Precondition(format!(
            "h = {} violates h < 1 / (L beta_-1) = {}",
            law.h,
            1.0 / (lip * beta)
        )));
    }
    let inv = 1.0 / (beta * law.h);
    let small = (inv - lip).powi(2);
    let large = (inv + lip).powi(2);
    let half_d = law.system.dim() as f64 / 2.0;
    let two_pi_eta2 = 2.0 * std::f64::consts::PI * eta2;
    Ok((
        (two_pi_eta2 / large).powf(half_d),
        (two_pi_eta2 / small).powf(half_d),
    ))
}

/// Moments of the semi-implicit Gaussian approximation to the step law.
#[derive(Debug, Clone)]
pub struct SemiImplicitMoments {
    pub gamma: DMatrix<f64>,
    pub w: State,
    pub mean: State,
    pub covariance: DMatrix<f64>,
    /// Lower Cholesky factor of the covariance, `None` when the step is
    /// degenerate (deterministic).
    pub factor: Option<DMatrix<f64>>,
}

impl SemiImplicitMoments {
    /// `-½ (z-μ)ᵀ Σ⁻¹ (z-μ)`; needs a factor.
    pub fn log_density_unnormalized(&self, z: &State) -> Option<f64> {
        let l = self.factor.as_ref()?;
        let y = l.solve_lower_triangular(&(z - &self.mean))?;
        Some(-0.5 * y.norm_squared())
    }
}

/// Linearises `f` about `Z_i` inside `r(z)`:
/// `Γ = (hβ₋₁)⁻¹ I - J_f(Z_i)`, `w = f(Z_i) + β₋₁⁻¹ Σ_j β_j F_{i-j}`,
/// `μ = Z_i + Γ⁻¹ w`, `Var = Γ⁻¹ H Γ⁻ᵀ`.
pub fn semi_implicit_moments(law: &ImplicitStepLaw<'_>) -> Result<SemiImplicitMoments> {
    let d = law.system.dim();
    let beta = law.coeffs.implicit_weight();
    let jac = law.system.jacobian(&law.current);
    let gamma = DMatrix::<f64>::identity(d, d) / (law.h * beta) - jac;
    let gamma_inv = gamma
        .clone()
        .try_inverse()
        .ok_or(Error::StepSize { step: 0 })?;
    let cond = gamma.norm() * gamma_inv.norm();
    if !cond.is_finite() || cond > MAX_GAMMA_CONDITION {
        return Err(Error::StepSize { step: 0 });
    }
    let w = law.system.field(&law.current) + &law.history / beta;
    let mean = &law.current + &gamma_inv * &w;
    let cov = &gamma_inv * &law.scale * gamma_inv.transpose();
    let covariance = (&cov + cov.transpose()) * 0.5;
    let factor = Cholesky::new(covariance.clone())
        .map(|c| c.l())
        .or_else(|| {
            let jitter = COVARIANCE_JITTER * law.h.powi(2 * law.coeffs.steps() as i32 + 1);
            Cholesky::new(&covariance + DMatrix::<f64>::identity(d, d) * jitter).map(|c| c.l())
        });
    Ok(SemiImplicitMoments {
        gamma,
        w,
        mean,
        covariance,
        factor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcnOptions {
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for PcnOptions {
    fn default() -> Self {
        PcnOptions {
            beta: 0.5,
            iterations: 60,
            burn_in: 10,
            thin: 1,
            seed: 0,
        }
    }
}

impl PcnOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pCN beta must lie in (0, 1], got {}",
                self.beta
            )));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::InvalidParameter(
                "pCN iterations must exceed burn-in".into(),
            ));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter(
                "pCN thinning must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one pCN chain.
#[derive(Debug, Clone)]
pub struct PcnDraw {
    pub state: State,
    pub accepted: usize,
    pub iterations: usize,
}

impl PcnDraw {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.iterations as f64
    }
}

/// Minimum acceptance rate tolerated before the reference measure is
/// declared mismatched.
pub const MIN_PCN_ACCEPTANCE: f64 = 0.01;

/// One draw from the exact step density via a pCN chain whose reference
/// measure is the semi-implicit Gaussian `N(μ, C)`.
///
/// Proposals `z' = μ + sqrt(1-β²)(z-μ) + β ζ`, `ζ ~ N(0, C)`, leave the
/// reference invariant, so only the ratio of target to reference enters the
/// acceptance probability. The chain starts at `μ` and the last state is
/// returned.
pub fn sample_step_pcn<R: Rng + ?Sized>(
    law: &ImplicitStepLaw<'_>,
    opts: &PcnOptions,
    reference: &SemiImplicitMoments,
    rng: &mut R,
) -> Result<PcnDraw> {
    opts.validate()?;
    let factor = reference.factor.as_ref().ok_or_else(|| {
        Error::Precondition("pCN reference covariance is not positive definite".into())
    })?;
    let d = reference.mean.len();
    let log_ratio = |z: &State| -> Result<f64> {
        let target = law.log_density_unnormalized(z)?;
        let base = reference
            .log_density_unnormalized(z)
            .ok_or_else(|| Error::Matrix("singular pCN reference factor".into()))?;
        Ok(target - base)
    };
    let contraction = (1.0 - opts.beta * opts.beta).sqrt();
    let mut z = reference.mean.clone();
    let mut current = log_ratio(&z)?;
    let mut accepted = 0;
    for _ in 0..opts.iterations {
        let noise = State::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let proposal =
            &reference.mean + (&z - &reference.mean) * contraction + factor * noise * opts.beta;
        let candidate = log_ratio(&proposal)?;
        let u: f64 = rng.random();
        if u.ln() < candidate - current {
            z = proposal;
            current = candidate;
            accepted += 1;
        }
    }
    let draw = PcnDraw {
        state: z,
        accepted,
        iterations: opts.iterations,
    };
    if draw.acceptance_rate() < MIN_PCN_ACCEPTANCE {
        return Err(Error::Diagnostics(format!(
            "pCN acceptance rate {:.4} below {MIN_PCN_ACCEPTANCE}",
            draw.acceptance_rate()
        )));
    }
    Ok(draw)
}

/// How each implicit step is randomised.
#[derive(Debug, Clone, Copy)]
pub enum ImplicitMode<'a> {
    /// `Z_{i+1} = μ_i + L_i ξ_i`; deterministic in `(θ, ξ)`.
    SemiImplicit(&'a Perturbations),
    /// Exact draws from the step density by pCN, seeded from the options.
    ExactPcn { opts: PcnOptions, stream: u64 },
}

/// Builds the step law used by the solver: `H` from the delta-method scale at
/// the AB predictor of matching step count.
pub fn calibrated_step_law<'a>(
    coeffs: &'a AdamsCoefficients,
    system: &'a dyn OdeSystem,
    h: f64,
    alpha: f64,
    current: &State,
    f_window: &[State],
) -> Result<ImplicitStepLaw<'a>> {
    let predictor = ab_predictor(system, current, f_window, h)?;
    let scale = h_matrix(system, &predictor, alpha, h, coeffs.steps());
    ImplicitStepLaw::new(coeffs, system, h, current, f_window, scale)
}

/// Full-grid probabilistic AM-s solve.
pub fn solve_implicit_probabilistic(
    ivp: &Ivp,
    coeffs: &AdamsCoefficients,
    alpha: f64,
    mode: ImplicitMode<'_>,
) -> Result<Trajectory> {
    if coeffs.family() != Family::Moulton {
        return Err(Error::Contract(
            "implicit solver needs Adams-Moulton coefficients".into(),
        ));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let sys = ivp.system.as_ref();
    let h = ivp.h;
    guard_or_warn(sys, coeffs, h)?;
    let tag = format!("am{}-prob", coeffs.steps());
    match mode {
        ImplicitMode::SemiImplicit(xi) => {
            xi.check_covers(ivp.n_steps, sys.dim())?;
            march(ivp, coeffs.steps(), &tag, |i, z, f| {
                let law = calibrated_step_law(coeffs, sys, h, alpha, z, f)?;
                let m = semi_implicit_moments(&law)?;
                Ok(match &m.factor {
                    Some(l) => &m.mean + l * xi.row(i),
                    None => m.mean,
                })
            })
        }
        ImplicitMode::ExactPcn { opts, stream } => {
            opts.validate()?;
            let solver = SolverOptions::default();
            let mut rng = stream_rng(opts.seed, purpose::PCN, stream);
            march(ivp, coeffs.steps(), &tag, |_, z, f| {
                let law = calibrated_step_law(coeffs, sys, h, alpha, z, f)?;
                if !law.is_proper() {
                    // H degenerate: the density collapses onto its mode
                    return law.deterministic_point(f, &solver);
                }
                let m = semi_implicit_moments(&law)?;
                if m.factor.is_none() {
                    return law.deterministic_point(f, &solver);
                }
                Ok(sample_step_pcn(&law, &opts, &m, &mut rng)?.state)
            })
        }
    }
}
