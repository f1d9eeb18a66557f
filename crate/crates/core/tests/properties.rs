mod common;

use std::process::Command;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use probint::implicit::ImplicitStepLaw;
use probint::inference::{
    generate_synthetic_data, mwg_mcmc, posterior_summary, McmcOptions, Prior,
};
use probint::multistep::{adams_coefficients, SolverOptions};
use probint::noise::{purpose, stream_rng, Perturbations};
use probint::problems::{fitzhugh_nagumo, linear_scalar, linear_test_system, FHN_TRUE_THETA};
use probint::{Family, Ivp, Method, OdeSystem, State};

use common::adaptive_simpson;

/// Gauss–Newton on the residual with a finite-difference Jacobian.
fn gauss_newton_mode(law: &ImplicitStepLaw<'_>, start: &State) -> State {
    let d = start.len();
    let mut z = start.clone();
    for _ in 0..100 {
        let r = law.residual(&z);
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let eps = 1e-7 * z[j].abs().max(1.0);
            let mut zp = z.clone();
            zp[j] += eps;
            jac.set_column(j, &((law.residual(&zp) - &r) / eps));
        }
        let step = jac.lu().solve(&r).unwrap();
        z -= &step;
        if step.norm() < 1e-14 * z.norm().max(1.0) {
            break;
        }
    }
    z
}

#[test]
fn density_mode_is_the_deterministic_step() {
    let sys = fitzhugh_nagumo(&FHN_TRUE_THETA).unwrap();
    let mut rng = stream_rng(1, purpose::DATA, 9);
    for s in 0..=2 {
        let coeffs = adams_coefficients(Family::Moulton, s).unwrap();
        for _ in 0..20 {
            let z = State::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let window: Vec<State> = (0..s).map(|_| sys.field(&z)).collect();
            let law = ImplicitStepLaw::isotropic(&coeffs, &sys, 0.05, &z, &window, 0.1).unwrap();
            let psi = law
                .deterministic_point(&window, &SolverOptions::default())
                .unwrap();
            for _ in 0..3 {
                let start = &psi + State::from_fn(2, |_, _| rng.random_range(-0.3..0.3));
                let mode = gauss_newton_mode(&law, &start);
                assert!((&mode - &psi).norm() < 1e-8, "s={s}: {mode} vs {psi}");
                assert!(law.log_density_unnormalized(&mode).unwrap() > -1e-12);
            }
        }
    }
}

#[test]
fn semi_implicit_linear_noise_scales_with_sqrt_alpha() {
    let sys: Arc<dyn OdeSystem> = Arc::new(
        linear_test_system(DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -0.5])).unwrap(),
    );
    let ivp = Ivp::new(sys, State::from_column_slice(&[1.0, 0.5]), 2.0, 0.05).unwrap();
    let det = Method::deterministic(Family::Moulton, 1)
        .solve(&ivp, None, 0)
        .unwrap();
    let xi = Perturbations::for_member(ivp.n_steps, 2, 4, 0);
    let base = Method::randomized(Family::Moulton, 1, 1.0)
        .solve(&ivp, Some(&xi), 0)
        .unwrap();
    let scaled = Method::randomized(Family::Moulton, 1, 0.09)
        .solve(&ivp, Some(&xi), 0)
        .unwrap();
    for i in 0..det.len() {
        let expected = (&base.states[i] - &det.states[i]) * 0.3;
        let got = &scaled.states[i] - &det.states[i];
        assert!((got - expected).norm() < 1e-12, "step {i}");
    }
}

/// One-parameter decay `z' = -k z` with backward Euler: the forward map is
/// `(1 + h k)^{-n}`, so the posterior mean is available by quadrature.
#[test]
fn mcmc_matches_quadrature_posterior() {
    let h = 0.1;
    let sys: Arc<dyn OdeSystem> = Arc::new(linear_scalar(-1.0).unwrap());
    let ivp = Ivp::new(sys, State::from_element(1, 1.0), 2.0, h).unwrap();
    let times = [0.5, 1.0, 1.5, 2.0];
    let var = 0.0025;
    let data = generate_synthetic_data(&ivp, &times, &[var], 31).unwrap();

    let log_post = |u: f64| {
        let k = u.exp();
        let ll: f64 = times
            .iter()
            .zip(&data.observations)
            .map(|(t, y)| {
                let n = (t / h).round() as i32;
                -0.5 * (y[0] - (1.0 + h * k).powi(-n)).powi(2) / var
            })
            .sum();
        ll - 0.5 * u * u
    };
    let peak = (-3000..3000)
        .map(|i| log_post(i as f64 * 1e-3))
        .fold(f64::MIN, f64::max);
    let z = adaptive_simpson(&|u| (log_post(u) - peak).exp(), -3.0, 3.0, 1e-12);
    let mean_k = adaptive_simpson(&|u| u.exp() * (log_post(u) - peak).exp(), -3.0, 3.0, 1e-12) / z;

    let factory = |theta: &[f64]| -> probint::Result<Arc<dyn OdeSystem>> {
        Ok(Arc::new(linear_test_system(DMatrix::from_element(
            1, 1, -theta[0],
        ))?))
    };
    let method = Method::deterministic(Family::Moulton, 0);
    let mut opts = McmcOptions::new(vec![1.0], 30_000, 2_000, 12);
    opts.initial_proposal_sd = vec![0.1];
    let chain = mwg_mcmc(
        &data,
        &ivp,
        &method,
        &[Prior::vague_positive()],
        &factory,
        &opts,
    )
    .unwrap();
    let s = posterior_summary(&chain, 2_000, 1).unwrap();
    let p = &s.parameters[0];
    let mcse = p.std / p.ess.sqrt();
    assert!(
        (p.mean - mean_k).abs() < 4.0 * mcse,
        "mcmc {} vs quadrature {mean_k} (mcse {mcse})",
        p.mean
    );
}

#[test]
fn chains_are_reproducible_and_seed_dependent() {
    let sys: Arc<dyn OdeSystem> = Arc::new(linear_scalar(-1.0).unwrap());
    let ivp = Ivp::new(sys, State::from_element(1, 1.0), 2.0, 0.1).unwrap();
    let data = generate_synthetic_data(&ivp, &[1.0, 2.0], &[0.01], 2).unwrap();
    let factory = |theta: &[f64]| -> probint::Result<Arc<dyn OdeSystem>> {
        Ok(Arc::new(linear_test_system(DMatrix::from_element(
            1, 1, -theta[0],
        ))?))
    };
    let method = Method::randomized(Family::Moulton, 0, 0.2);
    let run = |seed| {
        let opts = McmcOptions::new(vec![1.0], 400, 100, seed);
        mwg_mcmc(
            &data,
            &ivp,
            &method,
            &[Prior::vague_positive()],
            &factory,
            &opts,
        )
        .unwrap()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).samples, run(2).samples);
}

fn cli(dir: &std::path::Path, config: &str, extra: &[&str]) -> i32 {
    let path = dir.join("c.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_probint"))
        .arg(extra[0])
        .arg("--config")
        .arg(&path)
        .arg("--output")
        .arg(dir.join("out"))
        .args(&extra[1..])
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

const LINEAR: &str = r#"
[problem]
name = "linear"
params = [-1.0]
x0 = [1.0]
t_end = 1.0

[method]
tag = "ab1-det"
h = 0.1
"#;

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(cli(d, LINEAR, &["solve"]), 0);
    assert!(d.join("out/trajectory.csv").exists());
    assert_eq!(
        cli(d, &LINEAR.replace("name = \"linear\"\n", ""), &["solve"]),
        2
    );
    assert_eq!(cli(d, &LINEAR.replace("linear", "lorenz"), &["solve"]), 2);
    assert_eq!(cli(d, LINEAR, &["solve", "--h", "-0.1"]), 2);
    assert_eq!(cli(d, LINEAR, &["solve", "--h", "0.3"]), 2);
    assert_eq!(cli(d, LINEAR, &["solve", "--method", "am7-det"]), 2);
    assert_eq!(cli(d, LINEAR, &["ensemble", "--method", "am0-prob"]), 2);
    // overflow to infinity within a few steps
    assert_eq!(
        cli(
            d,
            &LINEAR
                .replace("[-1.0]", "[1e200]")
                .replace("h = 0.1", "h = 0.5"),
            &["solve"]
        ),
        3
    );
}

#[test]
fn perturbations_are_standard_normal() {
    let xi = Perturbations::for_member(20_000, 1, 3, 1);
    let xs: Vec<f64> = (0..xi.len()).map(|i| xi.row(i)[0]).collect();
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(m.abs() < 3.0 / n.sqrt());
    assert!((v - 1.0).abs() < 3.0 * (2.0 / n).sqrt());
}
