//! ODE problem abstraction and the concrete test systems.
//!
//! Every system is autonomous, `dz/dt = f(z, theta)`, and carries an analytic
//! Jacobian. Systems are immutable once built and can be shared freely across
//! threads behind an `Arc`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

pub type State = DVector<f64>;

/// An autonomous vector field with its Jacobian.
pub trait OdeSystem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Parameter vector theta.
    fn params(&self) -> &[f64];

    fn field(&self, z: &State) -> State;

    fn jacobian(&self, z: &State) -> DMatrix<f64>;

    /// Global Lipschitz constant of the field, when one is known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// Closed-form flow `z(t)` from `x0`, when available.
    fn exact_flow(&self, _x0: &State, _t: f64) -> Option<State> {
        None
    }
}

/// `f(z) = A z`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    matrix: DMatrix<f64>,
    params: Vec<f64>,
    lipschitz: f64,
}

impl LinearSystem {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl OdeSystem for LinearSystem {
    fn name(&self) -> &str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn field(&self, z: &State) -> State {
        &self.matrix * z
    }

    fn jacobian(&self, _z: &State) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn lipschitz(&self) -> Option<f64> {
        (self.lipschitz > 0.0).then_some(self.lipschitz)
    }

    fn exact_flow(&self, x0: &State, t: f64) -> Option<State> {
        let d = self.dim();
        let is_diagonal = (0..d).all(|i| (0..d).all(|j| i == j || self.matrix[(i, j)] == 0.0));
        if is_diagonal {
            Some(State::from_fn(d, |i, _| {
                (self.matrix[(i, i)] * t).exp() * x0[i]
            }))
        } else {
            Some((&self.matrix * t).exp() * x0)
        }
    }
}

/// Scalar linear test equation `dz/dt = lambda z`.
pub fn linear_scalar(lambda: f64) -> Result<LinearSystem> {
    linear_test_system(DMatrix::from_element(1, 1, lambda))
}

/// Linear test system `dz/dt = A z` with exact matrix-exponential flow.
pub fn linear_test_system(matrix: DMatrix<f64>) -> Result<LinearSystem> {
    if !matrix.is_square() || matrix.nrows() == 0 {
        return Err(Error::InvalidParameter(
            "linear system matrix must be square and non-empty".into(),
        ));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "linear system matrix must be finite".into(),
        ));
    }
    let lipschitz = matrix.clone().svd(false, false).singular_values.max();
    // row-major flattening, matching the CLI parameter list
    let params = (0..matrix.nrows())
        .flat_map(|i| (0..matrix.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| matrix[(i, j)])
        .collect();
    Ok(LinearSystem {
        matrix,
        params,
        lipschitz,
    })
}

/// FitzHugh–Nagumo oscillator in the Ramsay et al. parameterisation,
/// `theta = (a, b, c)`:
///
/// ```text
/// dV/dt = c (V - V^3/3 + R)
/// dR/dt = -(V - a + b R) / c
/// ```
#[derive(Debug, Clone)]
pub struct FitzHughNagumo {
    theta: [f64; 3],
}

pub const FHN_TRUE_THETA: [f64; 3] = [0.2, 0.2, 3.0];
pub const FHN_INITIAL_STATE: [f64; 2] = [-1.0, 1.0];

pub fn fitzhugh_nagumo(theta: &[f64]) -> Result<FitzHughNagumo> {
    let theta: [f64; 3] = theta.try_into().map_err(|_| {
        Error::InvalidParameter(format!(
            "fitzhugh_nagumo takes 3 parameters, got {}",
            theta.len()
        ))
    })?;
    if theta[2] == 0.0 {
        return Err(Error::InvalidParameter(
            "fitzhugh_nagumo requires theta3 != 0".into(),
        ));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "fitzhugh_nagumo parameters must be finite".into(),
        ));
    }
    Ok(FitzHughNagumo { theta })
}

impl OdeSystem for FitzHughNagumo {
    fn name(&self) -> &str {
        "fitzhugh_nagumo"
    }

    fn dim(&self) -> usize {
        2
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn field(&self, z: &State) -> State {
        let [a, b, c] = self.theta;
        let (v, r) = (z[0], z[1]);
        State::from_column_slice(&[c * (v - v * v * v / 3.0 + r), -(v - a + b * r) / c])
    }

    fn jacobian(&self, z: &State) -> DMatrix<f64> {
        let [_, b, c] = self.theta;
        let v = z[0];
        DMatrix::from_row_slice(2, 2, &[c * (1.0 - v * v), c, -1.0 / c, -b / c])
    }
}

/// Scalar logistic growth `dz/dt = rate z (1 - z)`.
///
/// Not globally Lipschitz; the optional hint is the local constant
/// `rate * max |1 - 2z|` over the region the caller intends to work in.
#[derive(Debug, Clone)]
pub struct Logistic {
    params: [f64; 1],
    lipschitz: Option<f64>,
}

pub fn logistic(rate: f64, lipschitz_hint: Option<f64>) -> Result<Logistic> {
    if !rate.is_finite() {
        return Err(Error::InvalidParameter(
            "logistic rate must be finite".into(),
        ));
    }
    Ok(Logistic {
        params: [rate],
        lipschitz: lipschitz_hint,
    })
}

impl OdeSystem for Logistic {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        1
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn field(&self, z: &State) -> State {
        State::from_element(1, self.params[0] * z[0] * (1.0 - z[0]))
    }

    fn jacobian(&self, z: &State) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.params[0] * (1.0 - 2.0 * z[0]))
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    fn exact_flow(&self, x0: &State, t: f64) -> Option<State> {
        let (r, z0) = (self.params[0], x0[0]);
        let e = (r * t).exp();
        Some(State::from_element(1, z0 * e / (1.0 - z0 + z0 * e)))
    }
}

/// Builds a named problem from a flat parameter list, as used by the CLI.
///
/// `linear` takes either one value (scalar lambda) or `d*d` values (row-major matrix).
pub fn system_by_name(name: &str, params: &[f64]) -> Result<Arc<dyn OdeSystem>> {
    match name {
        "linear" => {
            let n = params.len();
            let d = (n as f64).sqrt().round() as usize;
            if n == 0 || d * d != n {
                return Err(Error::InvalidParameter(format!(
                    "linear takes 1 or d*d parameters, got {n}"
                )));
            }
            Ok(Arc::new(linear_test_system(DMatrix::from_row_slice(
                d, d, params,
            ))?))
        }
        "fitzhugh_nagumo" => Ok(Arc::new(fitzhugh_nagumo(params)?)),
        other => Err(Error::Config(format!("unknown problem `{other}`"))),
    }
}

/// Initial value problem on `[0, T]` with uniform step `h`.
#[derive(Debug, Clone)]
pub struct Ivp {
    pub system: Arc<dyn OdeSystem>,
    pub x0: State,
    pub t_end: f64,
    pub h: f64,
    pub n_steps: usize,
}

impl Ivp {
    pub fn new(system: Arc<dyn OdeSystem>, x0: State, t_end: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {h}"
            )));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "final time must be positive, got {t_end}"
            )));
        }
        if x0.len() != system.dim() {
            return Err(Error::InvalidParameter(format!(
                "initial state has dimension {} but system has {}",
                x0.len(),
                system.dim()
            )));
        }
        let n = (t_end / h).round();
        if n < 1.0 || ((n * h - t_end) / t_end).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "T = {t_end} is not an integer multiple of h = {h}"
            )));
        }
        Ok(Ivp {
            system,
            x0,
            t_end,
            h,
            n_steps: n as usize,
        })
    }

    /// Same problem with a different vector field (e.g. new parameters).
    pub fn with_system(&self, system: Arc<dyn OdeSystem>) -> Self {
        Ivp {
            system,
            ..self.clone()
        }
    }

    pub fn with_step(&self, h: f64) -> Result<Self> {
        Ivp::new(self.system.clone(), self.x0.clone(), self.t_end, h)
    }
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step(system: &dyn OdeSystem, z: &State, h: f64) -> State {
    let k1 = system.field(z);
    let k2 = system.field(&(z + &k1 * (h / 2.0)));
    let k3 = system.field(&(z + &k2 * (h / 2.0)));
    let k4 = system.field(&(z + &k3 * h));
    z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

pub const MIN_REFINE: usize = 10;
pub const DEFAULT_REFINE: usize = 100;

/// Ground-truth path on the coarse grid of `ivp`.
///
/// Uses the exact flow when the system has one, otherwise RK4 at `h / refine`
/// subsampled onto the grid.
pub fn reference_solution(ivp: &Ivp, refine: usize) -> Result<Trajectory> {
    if refine < MIN_REFINE {
        return Err(Error::Precondition(format!(
            "refine must be >= {MIN_REFINE}, got {refine}"
        )));
    }
    let sys = ivp.system.as_ref();
    let mut states = Vec::with_capacity(ivp.n_steps + 1);
    states.push(ivp.x0.clone());
    if sys.exact_flow(&ivp.x0, 0.0).is_some() {
        for i in 1..=ivp.n_steps {
            let z = sys
                .exact_flow(&ivp.x0, i as f64 * ivp.h)
                .expect("flow available");
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { index: i });
            }
            states.push(z);
        }
    } else {
        let dt = ivp.h / refine as f64;
        let mut z = ivp.x0.clone();
        for i in 1..=ivp.n_steps {
            for _ in 0..refine {
                z = rk4_step(sys, &z, dt);
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { index: i });
            }
            states.push(z.clone());
        }
    }
    Ok(Trajectory::new(
        ivp.h,
        states,
        "reference",
        sys.params().to_vec(),
    ))
}
