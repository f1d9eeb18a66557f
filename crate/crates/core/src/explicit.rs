//! Randomised Adams–Bashforth integrators: a deterministic AB step followed by
//! an additive Gaussian perturbation with covariance `alpha h^(2s+1) I`.

use crate::error::{Error, Result};
use crate::multistep::{ab_step, march, AdamsCoefficients, Family};
use crate::noise::Perturbations;
use crate::problems::{Ivp, State};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplicitNoiseSpec {
    alpha: f64,
    steps: usize,
}

impl ExplicitNoiseSpec {
    pub fn new(alpha: f64, steps: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(ExplicitNoiseSpec { alpha, steps })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Variance exponent, fixed at `2s + 1`.
    pub fn exponent(&self) -> i32 {
        2 * self.steps as i32 + 1
    }

    /// Per-component standard deviation of the perturbation at step size `h`.
    pub fn scale(&self, h: f64) -> f64 {
        (self.alpha * h.powi(self.exponent())).sqrt()
    }
}

pub fn ab_step_randomized(
    coeffs: &AdamsCoefficients,
    z: &State,
    f_window: &[State],
    h: f64,
    spec: &ExplicitNoiseSpec,
    xi: &State,
) -> Result<State> {
    if xi.len() != z.len() {
        return Err(Error::Contract(
            "perturbation and state dimensions differ".into(),
        ));
    }
    Ok(ab_step(coeffs, z, f_window, h)? + xi * spec.scale(h))
}

/// Sequential randomised AB solve; step `i` consumes `xi` row `i`.
pub fn solve_explicit_randomized(
    ivp: &Ivp,
    coeffs: &AdamsCoefficients,
    spec: &ExplicitNoiseSpec,
    xi: &Perturbations,
) -> Result<Trajectory> {
    if coeffs.family() != Family::Bashforth || coeffs.steps() != spec.steps() {
        return Err(Error::Contract(
            "noise spec and AB coefficients disagree".into(),
        ));
    }
    xi.check_covers(ivp.n_steps, ivp.system.dim())?;
    let tag = format!("ab{}-prob", coeffs.steps());
    let h = ivp.h;
    march(ivp, coeffs.steps(), &tag, |i, z, f| {
        ab_step_randomized(coeffs, z, f, h, spec, xi.row(i))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multistep::{adams_coefficients, solve_deterministic, SolverOptions};
    use crate::noise::stream_rng;
    use crate::problems::{fitzhugh_nagumo, linear_scalar, FHN_INITIAL_STATE, FHN_TRUE_THETA};
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::sync::Arc;

    fn scalar(v: f64) -> State {
        State::from_element(1, v)
    }

    #[test]
    fn zero_draw_is_deterministic_step() {
        let c = adams_coefficients(Family::Bashforth, 2).unwrap();
        let spec = ExplicitNoiseSpec::new(0.3, 2).unwrap();
        let w = [scalar(-0.9), scalar(-1.0)];
        let a = ab_step_randomized(&c, &scalar(0.9), &w, 0.1, &spec, &scalar(0.0)).unwrap();
        let b = ab_step(&c, &scalar(0.9), &w, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_draw_adds_scale() {
        let c = adams_coefficients(Family::Bashforth, 1).unwrap();
        let spec = ExplicitNoiseSpec::new(0.2, 1).unwrap();
        let z = ab_step_randomized(&c, &scalar(1.0), &[scalar(-1.0)], 0.1, &spec, &scalar(1.0))
            .unwrap();
        // sqrt(0.2 * 1e-3)
        assert!((z[0] - 0.9 - 0.014_142_135_623_730_95).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        assert!(ExplicitNoiseSpec::new(0.0, 1).is_err());
        assert!(ExplicitNoiseSpec::new(-1.0, 1).is_err());
        assert_eq!(ExplicitNoiseSpec::new(1.0, 3).unwrap().exponent(), 7);
    }

    #[test]
    fn perturbation_variance_monte_carlo() {
        let c = adams_coefficients(Family::Bashforth, 1).unwrap();
        let spec = ExplicitNoiseSpec::new(0.2, 1).unwrap();
        let h = 0.1;
        let mut rng = stream_rng(5, 0, 0);
        let n = 100_000;
        let det = 0.9;
        let devs: Vec<f64> = (0..n)
            .map(|_| {
                let xi = scalar(rng.sample(StandardNormal));
                ab_step_randomized(&c, &scalar(1.0), &[scalar(-1.0)], h, &spec, &xi).unwrap()[0]
                    - det
            })
            .collect();
        let var = devs.iter().map(|d| d * d).sum::<f64>() / n as f64;
        let target = 0.2 * h.powi(3);
        // var of the sample second moment of N(0, s2) is 2 s2^2 / n
        let se = (2.0 / n as f64).sqrt() * target;
        assert!((var - target).abs() < 3.0 * se, "var {var} target {target}");
    }

    #[test]
    fn zero_sequence_matches_deterministic() {
        let sys = Arc::new(fitzhugh_nagumo(&FHN_TRUE_THETA).unwrap());
        let ivp = Ivp::new(sys, State::from_column_slice(&FHN_INITIAL_STATE), 5.0, 0.05).unwrap();
        for s in 1..=3 {
            let c = adams_coefficients(Family::Bashforth, s).unwrap();
            let spec = ExplicitNoiseSpec::new(0.2, s).unwrap();
            let xi = Perturbations::zeros(ivp.n_steps, 2);
            let a = solve_explicit_randomized(&ivp, &c, &spec, &xi).unwrap();
            let b = solve_deterministic(&ivp, &c, &SolverOptions::default()).unwrap();
            assert_eq!(a.states, b.states);
        }
    }

    #[test]
    fn fixed_sequence_is_reproducible() {
        let ivp = Ivp::new(
            Arc::new(linear_scalar(-1.0).unwrap()),
            scalar(1.0),
            1.0,
            0.05,
        )
        .unwrap();
        let c = adams_coefficients(Family::Bashforth, 1).unwrap();
        let spec = ExplicitNoiseSpec::new(0.2, 1).unwrap();
        let xi = Perturbations::for_member(ivp.n_steps, 1, 42, 0);
        let a = solve_explicit_randomized(&ivp, &c, &spec, &xi).unwrap();
        let b = solve_explicit_randomized(&ivp, &c, &spec, &xi).unwrap();
        assert_eq!(a, b);
        let short = Perturbations::for_member(ivp.n_steps - 1, 1, 42, 0);
        assert!(matches!(
            solve_explicit_randomized(&ivp, &c, &spec, &short),
            Err(Error::Contract(_))
        ));
    }
}
