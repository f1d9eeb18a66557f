//! Deterministic Adams–Bashforth and Adams–Moulton integrators.
//!
//! Coefficients are generated exactly, as integrals of Lagrange basis
//! polynomials over one step, and converted to floats once.

use std::fmt;
use std::sync::{Once, OnceLock};

use nalgebra::DMatrix;
use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::problems::{rk4_step, Ivp, OdeSystem, State};
use crate::trajectory::Trajectory;

type Q = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Bashforth,
    Moulton,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Bashforth => "Adams-Bashforth",
            Family::Moulton => "Adams-Moulton",
        })
    }
}

pub const MAX_STEPS: usize = 4;

/// Exact Adams coefficients.
///
/// For Moulton methods the first entry is the implicit weight `beta_{-1}`,
/// followed by `beta_0 .. beta_{s-1}`. For Bashforth methods the entries are
/// `beta_0 .. beta_{s-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamsCoefficients {
    family: Family,
    steps: usize,
    exact: Vec<Q>,
    values: Vec<f64>,
}

impl AdamsCoefficients {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn exact(&self) -> &[Ratio<i64>] {
        &self.exact
    }

    /// All coefficients as floats, in storage order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `beta_{-1}`; zero for explicit methods.
    pub fn implicit_weight(&self) -> f64 {
        match self.family {
            Family::Moulton => self.values[0],
            Family::Bashforth => 0.0,
        }
    }

    /// Weights on the past derivatives `F_i, F_{i-1}, ..`, newest first.
    pub fn history_weights(&self) -> &[f64] {
        match self.family {
            Family::Moulton => &self.values[1..],
            Family::Bashforth => &self.values,
        }
    }

    /// Classical order: `s` for AB-s, `s + 1` for AM-s.
    pub fn order(&self) -> usize {
        match self.family {
            Family::Bashforth => self.steps,
            Family::Moulton => self.steps + 1,
        }
    }
}

fn poly_mul_linear(poly: &[Q], root: Q) -> Vec<Q> {
    // (sum a_k u^k) * (u - root)
    let mut out = vec![Q::from_integer(0); poly.len() + 1];
    for (k, &a) in poly.iter().enumerate() {
        out[k + 1] += a;
        out[k] -= a * root;
    }
    out
}

fn integrate_unit(poly: &[Q]) -> Q {
    poly.iter()
        .enumerate()
        .map(|(k, &a)| a / Q::from_integer(k as i64 + 1))
        .fold(Q::from_integer(0), |acc, v| acc + v)
}

/// Integral over `[0, 1]` of each Lagrange basis polynomial on `nodes`.
fn lagrange_weights(nodes: &[Q]) -> Vec<Q> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &uj)| {
            let mut poly = vec![Q::from_integer(1)];
            let mut denom = Q::from_integer(1);
            for (k, &uk) in nodes.iter().enumerate() {
                if k != j {
                    poly = poly_mul_linear(&poly, uk);
                    denom *= uj - uk;
                }
            }
            integrate_unit(&poly) / denom
        })
        .collect()
}

pub fn adams_coefficients(family: Family, steps: usize) -> Result<AdamsCoefficients> {
    let supported = match family {
        Family::Bashforth => (1..=MAX_STEPS).contains(&steps),
        Family::Moulton => steps <= MAX_STEPS,
    };
    if !supported {
        return Err(Error::Range {
            family: match family {
                Family::Bashforth => "Adams-Bashforth",
                Family::Moulton => "Adams-Moulton",
            },
            steps,
        });
    }
    // time in units of h relative to t_i; F_{i-k} sits at u = -k
    let history = (0..steps as i64).map(|k| Q::from_integer(-k));
    let nodes: Vec<Q> = match family {
        Family::Bashforth => history.collect(),
        Family::Moulton => std::iter::once(Q::from_integer(1)).chain(history).collect(),
    };
    let exact = lagrange_weights(&nodes);
    let values = exact
        .iter()
        .map(|q| *q.numer() as f64 / *q.denom() as f64)
        .collect();
    Ok(AdamsCoefficients {
        family,
        steps,
        exact,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

fn check_window(coeffs: &AdamsCoefficients, f_window: &[State]) -> Result<()> {
    if f_window.len() != coeffs.steps() {
        return Err(Error::Contract(format!(
            "derivative window has {} entries, method needs {}",
            f_window.len(),
            coeffs.steps()
        )));
    }
    Ok(())
}

/// `sum_j beta_j F_{i-j}` over the history part of the window.
pub(crate) fn weighted_history(
    coeffs: &AdamsCoefficients,
    f_window: &[State],
    dim: usize,
) -> State {
    coeffs
        .history_weights()
        .iter()
        .zip(f_window)
        .fold(State::zeros(dim), |acc, (b, f)| acc + f * *b)
}

/// Explicit Adams–Bashforth step `Z_i + h sum_j beta_j F_{i-j}`.
///
/// `f_window` holds `F_i, F_{i-1}, ..` newest first.
pub fn ab_step(coeffs: &AdamsCoefficients, z: &State, f_window: &[State], h: f64) -> Result<State> {
    if coeffs.family() != Family::Bashforth {
        return Err(Error::Contract(
            "ab_step needs Adams-Bashforth coefficients".into(),
        ));
    }
    check_window(coeffs, f_window)?;
    Ok(z + weighted_history(coeffs, f_window, z.len()) * h)
}

/// Errors when the contraction guard `h beta_{-1} L < 1` is violated for a
/// known Lipschitz constant. Returns whether the guard could be checked.
pub fn step_guard(system: &dyn OdeSystem, coeffs: &AdamsCoefficients, h: f64) -> Result<bool> {
    let Some(lip) = system.lipschitz() else {
        return Ok(false);
    };
    let q = h * coeffs.implicit_weight() * lip;
    if q >= 1.0 {
        return Err(Error::Precondition(format!(
            "h * beta_-1 * L = {q} must be < 1 for the implicit step"
        )));
    }
    Ok(true)
}

static GUARD_WARNING: Once = Once::new();

pub(crate) fn guard_or_warn(
    system: &dyn OdeSystem,
    coeffs: &AdamsCoefficients,
    h: f64,
) -> Result<()> {
    if !step_guard(system, coeffs, h)? {
        GUARD_WARNING.call_once(|| {
            log::warn!(
                "no Lipschitz constant for `{}`; skipping the implicit step-size guard",
                system.name()
            )
        });
    }
    Ok(())
}

/// Explicit predictor of matching step count, used as Newton's initial guess
/// and as the Jacobian evaluation point for the probabilistic step scale.
pub(crate) fn ab_predictor(
    system: &dyn OdeSystem,
    z: &State,
    f_window: &[State],
    h: f64,
) -> Result<State> {
    if f_window.is_empty() {
        return Ok(z + system.field(z) * h);
    }
    ab_step(cached(Family::Bashforth, f_window.len())?, z, f_window, h)
}

/// Shared coefficient table, built once per process.
pub(crate) fn cached(family: Family, steps: usize) -> Result<&'static AdamsCoefficients> {
    static TABLE: OnceLock<Vec<AdamsCoefficients>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        (0..=MAX_STEPS)
            .map(|s| adams_coefficients(Family::Moulton, s).expect("supported"))
            .chain(
                (1..=MAX_STEPS)
                    .map(|s| adams_coefficients(Family::Bashforth, s).expect("supported")),
            )
            .collect()
    });
    match family {
        Family::Moulton if steps <= MAX_STEPS => Ok(&table[steps]),
        Family::Bashforth if (1..=MAX_STEPS).contains(&steps) => Ok(&table[MAX_STEPS + steps]),
        _ => adams_coefficients(family, steps).map(|_| unreachable!()),
    }
}

/// Deterministic Adams–Moulton step: the fixed point of
/// `z = Z_i + h (beta_{-1} f(z) + sum_j beta_j F_{i-j})`, found by Newton.
pub fn am_step_deterministic(
    coeffs: &AdamsCoefficients,
    z: &State,
    f_window: &[State],
    h: f64,
    system: &dyn OdeSystem,
    opts: &SolverOptions,
) -> Result<State> {
    if coeffs.family() != Family::Moulton {
        return Err(Error::Contract(
            "am_step needs Adams-Moulton coefficients".into(),
        ));
    }
    check_window(coeffs, f_window)?;
    step_guard(system, coeffs, h)?;
    let d = z.len();
    let hb = h * coeffs.implicit_weight();
    let explicit_part = z + weighted_history(coeffs, f_window, d) * h;
    let mut x = ab_predictor(system, z, f_window, h)?;
    let identity = DMatrix::<f64>::identity(d, d);
    let mut residual = &x - &explicit_part - system.field(&x) * hb;
    let mut res_norm = residual.norm();
    for _ in 0..opts.max_iter {
        if res_norm < opts.tol {
            return Ok(x);
        }
        let jac = &identity - system.jacobian(&x) * hb;
        let delta = jac.lu().solve(&residual).ok_or(Error::Solver {
            step: 0,
            residual: res_norm,
        })?;
        x -= &delta;
        residual = &x - &explicit_part - system.field(&x) * hb;
        res_norm = residual.norm();
        if !res_norm.is_finite() {
            break;
        }
        // converged to roundoff: the update no longer moves the iterate
        if delta.norm() <= 4.0 * f64::EPSILON * x.norm().max(1.0) && res_norm < opts.tol.sqrt() {
            return Ok(x);
        }
    }
    if res_norm < opts.tol {
        return Ok(x);
    }
    Err(Error::Solver {
        step: 0,
        residual: res_norm,
    })
}

/// Runs a multistep recursion over the grid of `ivp`.
///
/// The first `s - 1` steps are seeded with RK4 at the same `h`. `advance`
/// receives the step index `i`, `Z_i` and the derivative window
/// `F_i, .., F_{i-s+1}` (newest first) and returns `Z_{i+1}`.
pub(crate) fn march<A>(ivp: &Ivp, steps: usize, tag: &str, mut advance: A) -> Result<Trajectory>
where
    A: FnMut(usize, &State, &[State]) -> Result<State>,
{
    let sys = ivp.system.as_ref();
    let n = ivp.n_steps;
    let startup = steps.saturating_sub(1);
    let mut states = Vec::with_capacity(n + 1);
    let mut window: Vec<State> = Vec::with_capacity(steps + 1);
    states.push(ivp.x0.clone());
    if steps > 0 {
        window.push(sys.field(&ivp.x0));
    }
    for i in 0..n {
        let z = &states[i];
        let next = if i < startup {
            rk4_step(sys, z, ivp.h)
        } else {
            advance(i, z, &window).map_err(|e| e.at_step(i))?
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { index: i + 1 });
        }
        if steps > 0 {
            window.insert(0, sys.field(&next));
            window.truncate(steps);
        }
        states.push(next);
    }
    Ok(Trajectory::new(ivp.h, states, tag, sys.params().to_vec()))
}

/// Full-grid deterministic solve with AB-s or AM-s.
pub fn solve_deterministic(
    ivp: &Ivp,
    coeffs: &AdamsCoefficients,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let sys = ivp.system.as_ref();
    let h = ivp.h;
    match coeffs.family() {
        Family::Bashforth => {
            let tag = format!("ab{}-det", coeffs.steps());
            march(ivp, coeffs.steps(), &tag, |_, z, f| {
                ab_step(coeffs, z, f, h)
            })
        }
        Family::Moulton => {
            guard_or_warn(sys, coeffs, h)?;
            let tag = format!("am{}-det", coeffs.steps());
            march(ivp, coeffs.steps(), &tag, |_, z, f| {
                am_step_deterministic(coeffs, z, f, h, sys, opts)
            })
        }
    }
}
