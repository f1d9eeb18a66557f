//! Monte Carlo ensembles of randomised forward solves.
//!
//! Members are solved in parallel; member `m` always uses the random stream
//! `(seed, m)` and results are collected in member order, so the ensemble does
//! not depend on the number of worker threads.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::method::Method;
use crate::problems::Ivp;
use crate::trajectory::Trajectory;

pub fn run_ensemble(ivp: &Ivp, method: &Method, size: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if size == 0 {
        return Err(Error::InvalidParameter(
            "ensemble size must be positive".into(),
        ));
    }
    (0..size as u64)
        .into_par_iter()
        .map(|m| method.solve_member(ivp, seed, m))
        .collect()
}

/// Per-grid-point mean and standard deviation of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub mean: Vec<DVector<f64>>,
    /// Sample standard deviation (`n - 1` denominator); zero for one member.
    pub std: Vec<DVector<f64>>,
}

pub fn summarize(members: &[Trajectory]) -> Result<EnsembleSummary> {
    let first = members
        .first()
        .ok_or_else(|| Error::Contract("cannot summarise an empty ensemble".into()))?;
    let n = first.len();
    let d = first.dim();
    if members.iter().any(|m| m.len() != n || m.dim() != d) {
        return Err(Error::Contract("ensemble members differ in shape".into()));
    }
    let count = members.len() as f64;
    let mut mean = Vec::with_capacity(n);
    let mut std = Vec::with_capacity(n);
    for i in 0..n {
        let mu = members
            .iter()
            .fold(DVector::zeros(d), |acc, m| acc + &m.states[i])
            / count;
        let var = if members.len() > 1 {
            members
                .iter()
                .fold(DVector::zeros(d), |acc: DVector<f64>, m| {
                    acc + (&m.states[i] - &mu).map(|v| v * v)
                })
                / (count - 1.0)
        } else {
            DVector::zeros(d)
        };
        std.push(var.map(f64::sqrt));
        mean.push(mu);
    }
    Ok(EnsembleSummary {
        times: first.times.clone(),
        mean,
        std,
    })
}

/// Root-mean-square distance of the members' terminal states from their mean.
pub fn terminal_spread(members: &[Trajectory]) -> f64 {
    let d = members[0].dim();
    let count = members.len() as f64;
    let mu = members
        .iter()
        .fold(DVector::zeros(d), |acc, m| acc + m.terminal())
        / count;
    (members
        .iter()
        .map(|m| (m.terminal() - &mu).norm_squared())
        .sum::<f64>()
        / count)
        .sqrt()
}

/// Root-mean-square terminal error of the members against `truth`.
pub fn terminal_rms_error(members: &[Trajectory], truth: &DVector<f64>) -> f64 {
    let count = members.len() as f64;
    (members
        .iter()
        .map(|m| (m.terminal() - truth).norm_squared())
        .sum::<f64>()
        / count)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multistep::Family;
    use crate::problems::{linear_scalar, State};
    use std::sync::Arc;

    fn ivp() -> Ivp {
        Ivp::new(
            Arc::new(linear_scalar(-1.0).unwrap()),
            State::from_element(1, 1.0),
            1.0,
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn single_member_has_zero_std() {
        let m = Method::randomized(Family::Moulton, 0, 0.2);
        let ens = run_ensemble(&ivp(), &m, 1, 3).unwrap();
        let s = summarize(&ens).unwrap();
        assert!(s.std.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn summary_matches_naive_loops() {
        let m = Method::randomized(Family::Bashforth, 1, 0.2);
        let ens = run_ensemble(&ivp(), &m, 17, 3).unwrap();
        let s = summarize(&ens).unwrap();
        for i in 0..ens[0].len() {
            let xs: Vec<f64> = ens.iter().map(|t| t.states[i][0]).collect();
            assert!((s.mean[i][0] - crate::stats::mean(&xs)).abs() < 1e-12);
            assert!((s.std[i][0] - crate::stats::std_dev(&xs)).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let m = Method::randomized(Family::Moulton, 1, 0.05);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| run_ensemble(&ivp(), &m, 32, 8)).unwrap();
        let b = four.install(|| run_ensemble(&ivp(), &m, 32, 8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_ensemble_rejected() {
        let m = Method::randomized(Family::Moulton, 0, 0.2);
        assert!(run_ensemble(&ivp(), &m, 0, 0).is_err());
        assert!(summarize(&[]).is_err());
    }
}
