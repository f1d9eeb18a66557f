use nalgebra::DVector;

use crate::error::{Error, Result};

/// A discrete solution path on a uniform grid `t_i = i h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub method: String,
    pub theta: Vec<f64>,
}

impl Trajectory {
    pub fn new(
        h: f64,
        states: Vec<DVector<f64>>,
        method: impl Into<String>,
        theta: Vec<f64>,
    ) -> Self {
        let times = (0..states.len()).map(|i| i as f64 * h).collect();
        Trajectory {
            times,
            states,
            method: method.into(),
            theta,
        }
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// Index of the grid point at time `t`, if `t` lies on the grid within `tol`.
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        if self.times.len() < 2 {
            return self
                .times
                .first()
                .filter(|&&t0| (t0 - t).abs() <= tol)
                .map(|_| 0);
        }
        let h = self.times[1] - self.times[0];
        let i = (t / h).round();
        if i < 0.0 || i as usize >= self.times.len() {
            return None;
        }
        let i = i as usize;
        ((self.times[i] - t).abs() <= tol).then_some(i)
    }

    /// Checks the structural invariants: strictly increasing uniform grid and
    /// finite states of a single dimension.
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::Contract("times and states differ in length".into()));
        }
        let d = self.dim();
        for (i, s) in self.states.iter().enumerate() {
            if s.len() != d {
                return Err(Error::Contract(format!(
                    "state {i} has dimension {}",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { index: i });
            }
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Contract("grid is not strictly increasing".into()));
        }
        Ok(())
    }
}
