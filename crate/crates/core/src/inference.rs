//! Bayesian parameter inference with randomised forward models.
//!
//! The sampler is Metropolis-within-Gibbs over `(theta, xi)`: a proposal
//! `theta*` is scored with the *current* perturbation sequence `xi`, and `xi`
//! is redrawn only after an acceptance. Each iteration therefore costs one
//! forward solve, plus one more per acceptance.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::method::Method;
use crate::noise::{purpose, stream_rng, Perturbations};
use crate::problems::{reference_solution, Ivp, OdeSystem, State, DEFAULT_REFINE};
use crate::stats;
use crate::trajectory::Trajectory;

/// Grid-alignment tolerance for observation times.
pub const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    pub observations: Vec<DVector<f64>>,
    /// Known noise variance per state component.
    pub noise_var: Vec<f64>,
}

impl Dataset {
    pub fn new(
        times: Vec<f64>,
        observations: Vec<DVector<f64>>,
        noise_var: Vec<f64>,
    ) -> Result<Self> {
        if times.len() != observations.len() || times.is_empty() {
            return Err(Error::Contract(
                "dataset needs one observation per time".into(),
            ));
        }
        if observations.iter().any(|y| y.len() != noise_var.len()) {
            return Err(Error::Contract(
                "observation dimension differs from noise variance".into(),
            ));
        }
        if noise_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(
                "noise variance must be positive".into(),
            ));
        }
        Ok(Dataset {
            times,
            observations,
            noise_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.noise_var.len()
    }
}

/// Gaussian log-likelihood of the data given a trajectory, reading states
/// straight off the grid.
pub fn log_likelihood(trajectory: &Trajectory, data: &Dataset) -> Result<f64> {
    if trajectory.dim() != data.dim() {
        return Err(Error::Contract(
            "trajectory and data dimensions differ".into(),
        ));
    }
    let norm: f64 = data
        .noise_var
        .iter()
        .map(|v| -0.5 * (2.0 * std::f64::consts::PI * v).ln())
        .sum();
    let mut total = 0.0;
    for (t, y) in data.times.iter().zip(&data.observations) {
        let i = trajectory.index_of(*t, TIME_TOLERANCE).ok_or_else(|| {
            Error::Contract(format!("observation time {t} is not on the solver grid"))
        })?;
        let z = &trajectory.states[i];
        let quad: f64 = (0..data.dim())
            .map(|k| (y[k] - z[k]).powi(2) / data.noise_var[k])
            .sum();
        total += norm - 0.5 * quad;
    }
    Ok(total)
}

pub const FHN_OBSERVATION_TIMES: std::ops::RangeInclusive<u32> = 1..=20;
pub const FHN_NOISE_VARIANCE: f64 = 0.01;

/// Reference-solution values at `times` plus independent `N(0, noise_var)` noise.
pub fn generate_synthetic_data(
    ivp: &Ivp,
    times: &[f64],
    noise_var: &[f64],
    seed: u64,
) -> Result<Dataset> {
    let reference = reference_solution(ivp, DEFAULT_REFINE)?;
    let mut rng = stream_rng(seed, purpose::DATA, 0);
    let observations = times
        .iter()
        .map(|t| {
            let i = reference.index_of(*t, TIME_TOLERANCE).ok_or_else(|| {
                Error::Contract(format!("observation time {t} is not on the grid"))
            })?;
            Ok(DVector::from_fn(noise_var.len(), |k, _| {
                let eps: f64 = rng.sample(StandardNormal);
                reference.states[i][k] + noise_var[k].sqrt() * eps
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    // zero variance is allowed here for noiseless data; the dataset itself
    // needs positive variance for the likelihood
    let stored_var = noise_var
        .iter()
        .map(|v| if *v > 0.0 { *v } else { f64::MIN_POSITIVE })
        .collect();
    Dataset::new(times.to_vec(), observations, stored_var)
}

/// The FitzHugh–Nagumo data set: `t = 1, .., 20`, noise variance `0.01 I₂`.
pub fn fhn_synthetic_data(seed: u64) -> Result<Dataset> {
    use crate::problems::{fitzhugh_nagumo, FHN_INITIAL_STATE, FHN_TRUE_THETA};
    let sys = Arc::new(fitzhugh_nagumo(&FHN_TRUE_THETA)?);
    let ivp = Ivp::new(
        sys,
        State::from_column_slice(&FHN_INITIAL_STATE),
        20.0,
        0.05,
    )?;
    let times: Vec<f64> = FHN_OBSERVATION_TIMES.map(f64::from).collect();
    generate_synthetic_data(&ivp, &times, &[FHN_NOISE_VARIANCE; 2], seed)
}

/// Independent prior on one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    /// `log theta ~ N(log_mean, log_sd²)`; sampled in log space.
    LogNormal { log_mean: f64, log_sd: f64 },
    /// `theta ~ N(mean, sd²)`; sampled in linear space.
    Normal { mean: f64, sd: f64 },
}

impl Prior {
    pub fn vague_positive() -> Self {
        Prior::LogNormal {
            log_mean: 0.0,
            log_sd: 1.0,
        }
    }

    fn to_unconstrained(self, theta: f64) -> f64 {
        match self {
            Prior::LogNormal { .. } => theta.ln(),
            Prior::Normal { .. } => theta,
        }
    }

    fn to_parameter(self, u: f64) -> f64 {
        match self {
            Prior::LogNormal { .. } => u.exp(),
            Prior::Normal { .. } => u,
        }
    }

    /// Log prior density of the unconstrained coordinate, including the
    /// change-of-variables Jacobian.
    fn log_density_unconstrained(self, u: f64) -> f64 {
        let (m, s) = match self {
            Prior::LogNormal { log_mean, log_sd } => (log_mean, log_sd),
            Prior::Normal { mean, sd } => (mean, sd),
        };
        -0.5 * ((u - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcOptions {
    pub iterations: usize,
    /// Adaptation runs up to this iteration and is frozen afterwards.
    pub burn_in: usize,
    pub init: Vec<f64>,
    /// Initial proposal standard deviation per unconstrained coordinate.
    pub initial_proposal_sd: Vec<f64>,
    /// Iteration at which the empirical covariance replaces the initial proposal.
    pub adapt_start: usize,
    pub regularization: f64,
    /// Iterations between stored proposal-covariance snapshots.
    pub snapshot_every: usize,
    pub seed: u64,
}

impl McmcOptions {
    pub fn new(init: Vec<f64>, iterations: usize, burn_in: usize, seed: u64) -> Self {
        let q = init.len();
        McmcOptions {
            iterations,
            burn_in,
            init,
            initial_proposal_sd: vec![0.02; q],
            adapt_start: 200,
            regularization: 1e-10,
            snapshot_every: 500,
            seed,
        }
    }
}

/// Record of one MCMC run.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// `theta^[k+1]` after each iteration.
    pub samples: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Proposals rejected because the forward solve failed.
    pub divergent: Vec<bool>,
    /// `(iteration, proposal covariance)` in unconstrained coordinates.
    pub proposal_history: Vec<(usize, DMatrix<f64>)>,
    pub init: Vec<f64>,
    pub seed: u64,
    pub xi_refreshes: usize,
    /// Refreshes whose new sequence made the forward solve fail; the previous
    /// sequence was kept.
    pub refresh_failures: usize,
    pub forward_solves: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len().max(1) as f64
    }
}

/// Builds the vector field for a parameter vector.
pub type ModelFactory<'a> = dyn Fn(&[f64]) -> Result<Arc<dyn OdeSystem>> + Sync + 'a;

struct Posterior<'a> {
    data: &'a Dataset,
    ivp: &'a Ivp,
    method: &'a Method,
    priors: &'a [Prior],
    factory: &'a ModelFactory<'a>,
    solves: usize,
}

impl Posterior<'_> {
    /// `log p(Y | Z(theta, xi)) + log p(u)`; `Err` only for non-numerical failures.
    fn evaluate(&mut self, u: &[f64], xi: Option<&Perturbations>) -> Result<f64> {
        let theta: Vec<f64> = self
            .priors
            .iter()
            .zip(u)
            .map(|(p, v)| p.to_parameter(*v))
            .collect();
        let prior: f64 = self
            .priors
            .iter()
            .zip(u)
            .map(|(p, v)| p.log_density_unconstrained(*v))
            .sum();
        let system = match (self.factory)(&theta) {
            Ok(s) => s,
            Err(Error::InvalidParameter(_)) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        self.solves += 1;
        let path = match self.method.solve(&self.ivp.with_system(system), xi, 0) {
            Ok(p) => p,
            Err(e) if e.is_numerical() => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let ll = log_likelihood(&path, self.data)?;
        Ok(if ll.is_finite() {
            ll + prior
        } else {
            f64::NEG_INFINITY
        })
    }
}

/// Running mean and covariance of the unconstrained chain for adaptive Metropolis.
struct Adaptation {
    count: f64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl Adaptation {
    fn new(q: usize) -> Self {
        Adaptation {
            count: 0.0,
            mean: DVector::zeros(q),
            scatter: DMatrix::zeros(q, q),
        }
    }

    fn push(&mut self, u: &DVector<f64>) {
        self.count += 1.0;
        let delta = u - &self.mean;
        self.mean += &delta / self.count;
        let delta2 = u - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    fn covariance(&self) -> DMatrix<f64> {
        &self.scatter / (self.count - 1.0).max(1.0)
    }
}

/// Metropolis-within-Gibbs sampler for `p(theta, xi | Y)` with an adaptive
/// Metropolis proposal on the unconstrained parameters.
pub fn mwg_mcmc(
    data: &Dataset,
    ivp_template: &Ivp,
    method: &Method,
    priors: &[Prior],
    factory: &ModelFactory<'_>,
    opts: &McmcOptions,
) -> Result<Chain> {
    let q = priors.len();
    if opts.init.len() != q || opts.initial_proposal_sd.len() != q {
        return Err(Error::Contract(
            "init, proposal scale and priors differ in length".into(),
        ));
    }
    if !method.supports_fixed_perturbations() {
        return Err(Error::Config(
            "inference needs a forward model that is deterministic in (theta, xi); use mode semi"
                .into(),
        ));
    }
    if opts.iterations == 0 || opts.burn_in >= opts.iterations {
        return Err(Error::InvalidParameter(
            "mcmc needs iterations > burn_in".into(),
        ));
    }
    let n = ivp_template.n_steps;
    let d = ivp_template.system.dim();
    let uses_xi = method.uses_perturbations();
    let mut proposal_rng = stream_rng(opts.seed, purpose::MCMC, 0);
    let mut xi_rng = stream_rng(opts.seed, purpose::PERTURBATION, 0);
    let draw_xi = |rng: &mut rand_chacha::ChaCha8Rng| {
        uses_xi.then(|| Perturbations::standard_normal(n, d, rng))
    };

    let mut post = Posterior {
        data,
        ivp: ivp_template,
        method,
        priors,
        factory,
        solves: 0,
    };

    let mut u = DVector::from_iterator(
        q,
        priors
            .iter()
            .zip(&opts.init)
            .map(|(p, t)| p.to_unconstrained(*t)),
    );
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "initial parameters outside the prior support".into(),
        ));
    }
    let mut xi = draw_xi(&mut xi_rng);
    let mut phi = post.evaluate(u.as_slice(), xi.as_ref())?;
    if !phi.is_finite() {
        return Err(Error::Diagnostics(
            "log posterior is not finite at the initial parameters".into(),
        ));
    }

    let sd_scale = 2.38f64.powi(2) / q as f64;
    let initial_cov = DMatrix::from_diagonal(&DVector::from_iterator(
        q,
        opts.initial_proposal_sd.iter().map(|s| s * s),
    ));
    let mut proposal_cov = initial_cov.clone();
    let mut proposal_factor = proposal_cov
        .clone()
        .cholesky()
        .ok_or_else(|| {
            Error::Matrix("initial proposal covariance is not positive definite".into())
        })?
        .l();
    let mut adaptation = Adaptation::new(q);
    adaptation.push(&u);

    let mut chain = Chain {
        samples: Vec::with_capacity(opts.iterations),
        log_posterior: Vec::with_capacity(opts.iterations),
        accepted: Vec::with_capacity(opts.iterations),
        divergent: Vec::with_capacity(opts.iterations),
        proposal_history: vec![(0, proposal_cov.clone())],
        init: opts.init.clone(),
        seed: opts.seed,
        xi_refreshes: 0,
        refresh_failures: 0,
        forward_solves: 0,
    };

    for k in 0..opts.iterations {
        let step = DVector::from_fn(q, |_, _| proposal_rng.sample::<f64, _>(StandardNormal));
        let u_star = &u + &proposal_factor * step;
        let phi_star = post.evaluate(u_star.as_slice(), xi.as_ref())?;
        let divergent = !phi_star.is_finite();
        let r: f64 = proposal_rng.random();
        let accept = !divergent && r.ln() < phi_star - phi;
        if accept {
            u = u_star;
            phi = phi_star;
            // a refreshed sequence is only needed if another proposal follows
            if uses_xi && k + 1 < opts.iterations {
                let fresh = draw_xi(&mut xi_rng);
                chain.xi_refreshes += 1;
                let refreshed = post.evaluate(u.as_slice(), fresh.as_ref())?;
                if refreshed.is_finite() {
                    xi = fresh;
                    phi = refreshed;
                } else {
                    chain.refresh_failures += 1;
                    log::debug!("iteration {k}: refreshed perturbations diverged; keeping the previous draw");
                }
            }
        }
        if divergent {
            log::debug!("iteration {k}: forward solve failed at the proposal; rejected");
        }
        chain.samples.push(
            priors
                .iter()
                .zip(u.iter())
                .map(|(p, v)| p.to_parameter(*v))
                .collect(),
        );
        chain.log_posterior.push(phi);
        chain.accepted.push(accept);
        chain.divergent.push(divergent);

        if k < opts.burn_in {
            adaptation.push(&u);
            if k + 1 >= opts.adapt_start {
                let regularized = (adaptation.covariance()
                    + DMatrix::identity(q, q) * opts.regularization)
                    * sd_scale;
                if let Some(c) = regularized.clone().cholesky() {
                    proposal_cov = regularized;
                    proposal_factor = c.l();
                }
            }
        }
        if (k + 1) % opts.snapshot_every.max(1) == 0 || k + 1 == opts.burn_in {
            chain.proposal_history.push((k + 1, proposal_cov.clone()));
        }
    }
    chain.forward_solves = post.solves;
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub mean: f64,
    pub std: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub retained: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub acceptance_rate: f64,
    pub parameters: Vec<ParameterSummary>,
}

/// Retained sample indices `burn_in, burn_in + thin, ..`.
pub fn retained_samples(chain: &Chain, burn_in: usize, thin: usize) -> Result<Vec<&[f64]>> {
    if thin == 0 {
        return Err(Error::InvalidParameter("thin must be positive".into()));
    }
    if burn_in >= chain.len() {
        return Err(Error::Contract("no samples left after burn-in".into()));
    }
    Ok(chain.samples[burn_in..]
        .iter()
        .step_by(thin)
        .map(|s| s.as_slice())
        .collect())
}

pub fn posterior_summary(chain: &Chain, burn_in: usize, thin: usize) -> Result<PosteriorSummary> {
    let kept = retained_samples(chain, burn_in, thin)?;
    let q = kept[0].len();
    let parameters = (0..q)
        .map(|j| {
            let xs: Vec<f64> = kept.iter().map(|s| s[j]).collect();
            ParameterSummary {
                mean: stats::mean(&xs),
                std: stats::std_dev(&xs),
                q025: stats::quantile(&xs, 0.025),
                q500: stats::quantile(&xs, 0.5),
                q975: stats::quantile(&xs, 0.975),
                ess: stats::effective_sample_size(&xs),
            }
        })
        .collect();
    Ok(PosteriorSummary {
        retained: kept.len(),
        burn_in,
        thin,
        acceptance_rate: chain.acceptance_rate(),
        parameters,
    })
}

/// Retained `(theta_a, theta_b)` pairs for density plots.
pub fn sample_cloud(
    chain: &Chain,
    burn_in: usize,
    thin: usize,
    a: usize,
    b: usize,
) -> Result<Vec<(f64, f64)>> {
    Ok(retained_samples(chain, burn_in, thin)?
        .into_iter()
        .map(|s| (s[a], s[b]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multistep::Family;
    use crate::problems::{linear_scalar, linear_test_system};

    fn zero_residual_setup() -> (Trajectory, Dataset) {
        let states: Vec<State> = (0..=200)
            .map(|i| State::from_column_slice(&[i as f64 * 0.01, -1.0]))
            .collect();
        let tr = Trajectory::new(0.1, states, "test", vec![]);
        let times: Vec<f64> = (1..=20).map(f64::from).collect();
        let obs = times
            .iter()
            .map(|t| tr.states[(t * 10.0).round() as usize].clone())
            .collect();
        (tr, Dataset::new(times, obs, vec![0.01, 0.01]).unwrap())
    }

    #[test]
    fn zero_residual_likelihood() {
        let (tr, data) = zero_residual_setup();
        let ll = log_likelihood(&tr, &data).unwrap();
        let expected = 40.0 * (-0.5 * (2.0 * std::f64::consts::PI * 0.01).ln());
        assert!((ll - expected).abs() < 1e-10);
        // -(n d / 2) log(2 π σ²)
        let data2 = Dataset::new(
            data.times.clone(),
            data.observations.clone(),
            vec![0.02, 0.02],
        )
        .unwrap();
        let ll2 = log_likelihood(&tr, &data2).unwrap();
        assert!((ll2 - (-20.0 * (2.0 * std::f64::consts::PI * 0.02).ln())).abs() < 1e-10);
        assert!((ll - ll2 - 20.0 * 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn likelihood_matches_naive_density_product() {
        let (tr, mut data) = zero_residual_setup();
        for (j, y) in data.observations.iter_mut().enumerate() {
            y[0] += 0.03 * (j as f64).sin();
            y[1] -= 0.05 * (j as f64 * 0.7).cos();
        }
        let mut naive = 0.0;
        for (t, y) in data.times.iter().zip(&data.observations) {
            let z = &tr.states[(t * 10.0).round() as usize];
            for k in 0..2 {
                let v = data.noise_var[k];
                let dens = (-(y[k] - z[k]).powi(2) / (2.0 * v)).exp()
                    / (2.0 * std::f64::consts::PI * v).sqrt();
                naive += dens.ln();
            }
        }
        assert!((log_likelihood(&tr, &data).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn misaligned_times_rejected() {
        let (tr, data) = zero_residual_setup();
        let mut bad = data.clone();
        bad.times[3] += 0.05;
        assert!(matches!(log_likelihood(&tr, &bad), Err(Error::Contract(_))));
        let mut beyond = data;
        beyond.times[19] = 40.0;
        assert!(matches!(
            log_likelihood(&tr, &beyond),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn synthetic_data_properties() {
        let a = fhn_synthetic_data(5).unwrap();
        let b = fhn_synthetic_data(5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times.len(), 20);
        assert_eq!(a.times[0], 1.0);

        let sys = Arc::new(linear_scalar(-0.5).unwrap());
        let ivp = Ivp::new(sys, State::from_element(1, 2.0), 4.0, 0.5).unwrap();
        let noiseless = generate_synthetic_data(&ivp, &[1.0, 2.0, 4.0], &[0.0], 3).unwrap();
        for (t, y) in noiseless.times.iter().zip(&noiseless.observations) {
            assert!((y[0] - 2.0 * (-0.5 * t).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn synthetic_noise_variance() {
        // 10^4 regenerations of a single observation
        let sys = Arc::new(linear_scalar(0.0).unwrap());
        let ivp = Ivp::new(sys, State::from_element(1, 0.0), 1.0, 0.5).unwrap();
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|s| {
                generate_synthetic_data(&ivp, &[1.0], &[0.01], s)
                    .unwrap()
                    .observations[0][0]
            })
            .collect();
        let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let se = (2.0 / n as f64).sqrt() * 0.01;
        assert!((var - 0.01).abs() < 3.0 * se, "var {var}");
    }

    fn decay_problem() -> (Dataset, Ivp) {
        let sys: Arc<dyn OdeSystem> = Arc::new(linear_scalar(-1.0).unwrap());
        let ivp = Ivp::new(sys, State::from_element(1, 1.0), 2.0, 0.1).unwrap();
        let data = generate_synthetic_data(&ivp, &[0.5, 1.0, 1.5, 2.0], &[0.0025], 17).unwrap();
        (data, ivp)
    }

    fn decay_factory(theta: &[f64]) -> Result<Arc<dyn OdeSystem>> {
        Ok(Arc::new(linear_test_system(DMatrix::from_element(
            1, 1, -theta[0],
        ))?))
    }

    #[test]
    fn deterministic_chain_bookkeeping() {
        let (data, ivp) = decay_problem();
        let method = Method::deterministic(Family::Moulton, 0);
        let opts = McmcOptions::new(vec![1.0], 600, 200, 1);
        let chain = mwg_mcmc(
            &data,
            &ivp,
            &method,
            &[Prior::vague_positive()],
            &decay_factory,
            &opts,
        )
        .unwrap();
        assert_eq!(chain.len(), 600);
        assert_eq!(chain.xi_refreshes, 0);
        assert_eq!(chain.forward_solves, 601);
        let mut prev = chain.init.clone();
        for (s, a) in chain.samples.iter().zip(&chain.accepted) {
            if !a {
                assert_eq!(s, &prev);
            }
            prev = s.clone();
        }
        let rate = chain.acceptance_rate();
        assert!(rate > 0.05 && rate < 0.95, "acceptance {rate}");
    }

    #[test]
    fn randomized_chain_solve_budget() {
        let (data, ivp) = decay_problem();
        for method in [
            Method::randomized(Family::Moulton, 0, 0.2),
            Method::randomized(Family::Bashforth, 1, 0.2),
        ] {
            let opts = McmcOptions::new(vec![1.0], 500, 100, 2);
            let chain = mwg_mcmc(
                &data,
                &ivp,
                &method,
                &[Prior::vague_positive()],
                &decay_factory,
                &opts,
            )
            .unwrap();
            let accepts = chain.accepted.iter().filter(|a| **a).count();
            let last_accepted = *chain.accepted.last().unwrap() as usize;
            assert_eq!(chain.xi_refreshes, accepts - last_accepted);
            assert_eq!(chain.forward_solves, 1 + 500 + chain.xi_refreshes);
            assert!(chain.forward_solves <= 2 * 500);
        }
    }

    #[test]
    fn same_seed_same_chain() {
        let (data, ivp) = decay_problem();
        let method = Method::randomized(Family::Bashforth, 1, 0.2);
        let opts = McmcOptions::new(vec![1.0], 300, 100, 9);
        let a = mwg_mcmc(
            &data,
            &ivp,
            &method,
            &[Prior::vague_positive()],
            &decay_factory,
            &opts,
        )
        .unwrap();
        let b = mwg_mcmc(
            &data,
            &ivp,
            &method,
            &[Prior::vague_positive()],
            &decay_factory,
            &opts,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_pcn_mode_is_rejected() {
        let (data, ivp) = decay_problem();
        let mut method = Method::randomized(Family::Moulton, 0, 0.2);
        method.mode = crate::method::SamplerMode::Exact;
        let opts = McmcOptions::new(vec![1.0], 100, 10, 0);
        assert!(matches!(
            mwg_mcmc(
                &data,
                &ivp,
                &method,
                &[Prior::vague_positive()],
                &decay_factory,
                &opts
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn summary_of_constant_chain() {
        let chain = Chain {
            samples: vec![vec![0.5, 2.0]; 50],
            log_posterior: vec![0.0; 50],
            accepted: vec![false; 50],
            divergent: vec![false; 50],
            proposal_history: vec![],
            init: vec![0.5, 2.0],
            seed: 0,
            xi_refreshes: 0,
            refresh_failures: 0,
            forward_solves: 51,
        };
        let s = posterior_summary(&chain, 10, 1).unwrap();
        assert_eq!(s.retained, 40);
        for p in &s.parameters {
            assert_eq!(p.std, 0.0);
            assert_eq!(p.ess, 1.0);
        }
        assert!(posterior_summary(&chain, 50, 1).is_err());
        assert!(posterior_summary(&chain, 0, 0).is_err());
    }

    #[test]
    fn thinning_count_and_naive_mean() {
        let samples: Vec<Vec<f64>> = (0..11_000).map(|k| vec![(k as f64 * 0.37).sin()]).collect();
        let chain = Chain {
            log_posterior: vec![0.0; samples.len()],
            accepted: vec![true; samples.len()],
            divergent: vec![false; samples.len()],
            samples,
            proposal_history: vec![],
            init: vec![0.0],
            seed: 0,
            xi_refreshes: 0,
            refresh_failures: 0,
            forward_solves: 0,
        };
        let s = posterior_summary(&chain, 1000, 10).unwrap();
        assert_eq!(s.retained, 1000);
        let mut acc = 0.0;
        let mut k = 1000;
        while k < 11_000 {
            acc += chain.samples[k][0];
            k += 10;
        }
        assert!((s.parameters[0].mean - acc / 1000.0).abs() < 1e-12);
    }
}
