//! Local and convex comparison methods: nonlinear IHT and linearized ℓ1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{convolve, correlate, eval_fit, phi, phi_deriv, ModelSpec};

const L1_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IhtConfig {
    pub lambda0: f64,
    /// Step size; `None` uses [`eta_max`].
    pub eta: Option<f64>,
    pub max_iter: usize,
    pub stop_tol: f64,
}

impl Default for IhtConfig {
    fn default() -> Self {
        Self { lambda0: 0.15, eta: None, max_iter: 10_000, stop_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct L1Config {
    pub lambda1: f64,
    pub max_iter: usize,
    pub stop_tol: f64,
}

impl Default for L1Config {
    fn default() -> Self {
        Self { lambda1: 0.15, max_iter: 20_000, stop_tol: 1e-10 }
    }
}

/// Keeps `v` when `|v| > a`; a tie maps to zero.
pub fn hard_threshold(v: f64, a: f64) -> f64 {
    if v.abs() > a {
        v
    } else {
        0.0
    }
}

pub fn soft_threshold(v: f64, a: f64) -> f64 {
    v.signum() * (v.abs() - a).max(0.0)
}

/// Largest singular value of the `T x T` convolution matrix.
pub fn spectral_norm(h: &[f64], t: usize) -> f64 {
    if t == 0 || h.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    // Power iteration stalls here: the top of the Toeplitz spectrum has gaps
    // of order 1/T^2. A dense eigensolve is cheap at these sizes.
    let m = DMatrix::from_fn(t, t, |i, j| if i >= j && i - j < h.len() { h[i - j] } else { 0.0 });
    let g = m.transpose() * &m;
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Admissible IHT step `chi^2 / (||H||^2 (1 + 2 max|d|))`.
pub fn eta_max(spec: &ModelSpec, d: &[f64]) -> f64 {
    let hs = spectral_norm(&spec.h, spec.t);
    let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    spec.chi * spec.chi / (hs * hs * (1.0 + 2.0 * dmax))
}

/// IHT objective `||d - phi(Hx)||^2 + lambda0 ||x||_0`.
pub fn iht_objective(x: &[f64], spec: &ModelSpec, d: &[f64], lambda0: f64) -> Result<f64> {
    let nnz = x.iter().filter(|v| **v != 0.0).count();
    Ok(eval_fit(x, spec, d)? + lambda0 * nnz as f64)
}

/// Result of an iterative baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRun {
    pub x: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_x0(x0: &[f64], spec: &ModelSpec, d: &[f64]) -> Result<()> {
    for got in [x0.len(), d.len()] {
        if got != spec.t {
            return Err(Error::LengthMismatch { expected: spec.t, got });
        }
    }
    Ok(())
}

/// One IHT iteration with step `eta`.
///
/// The gradient is that of `0.5 ||d - phi(Hx)||^2`, for which `1/eta_max` is
/// a Lipschitz constant; with threshold `sqrt(lambda0 eta)` the step is then
/// an exact proximal-gradient step on half the IHT objective. Components are
/// kept inside the box: a kept value is clipped, and it is kept only if that
/// lowers the proximal objective below the cost of zeroing it.
pub fn iht_step(x: &[f64], spec: &ModelSpec, d: &[f64], lambda0: f64, eta: f64) -> Vec<f64> {
    let v = convolve(&spec.h, x);
    let r: Vec<f64> = v
        .iter()
        .zip(d)
        .map(|(&vt, &dt)| phi_deriv(vt, spec.chi) * (phi(vt, spec.chi) - dt))
        .collect();
    let g = correlate(&spec.h, &r);
    let (lo, hi) = spec.bounds;
    let thr = lambda0 * eta;
    x.iter()
        .zip(&g)
        .map(|(&xi, &gi)| {
            let z = xi - eta * gi;
            let c = z.clamp(lo, hi);
            // Keep c when (c - z)^2 + lambda0 eta < z^2.
            if z * z - (c - z) * (c - z) > thr {
                c
            } else {
                0.0
            }
        })
        .collect()
}

/// Nonlinear iterative hard thresholding from `x0`.
pub fn iht_solve(x0: &[f64], spec: &ModelSpec, d: &[f64], cfg: &IhtConfig) -> Result<BaselineRun> {
    check_x0(x0, spec, d)?;
    if !(cfg.lambda0 > 0.0) {
        return Err(Error::InvalidSpec("lambda0 must be positive".into()));
    }
    let emax = eta_max(spec, d);
    let eta = cfg.eta.unwrap_or(emax);
    if !(eta > 0.0) {
        return Err(Error::InvalidSpec("IHT step must be positive".into()));
    }
    if eta > emax {
        return Err(Error::StepTooLarge { eta, eta_max: emax });
    }
    let mut x = x0.to_vec();
    let mut trace = vec![iht_objective(&x, spec, d, cfg.lambda0)?];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let next = iht_step(&x, spec, d, cfg.lambda0, eta);
        iterations += 1;
        let change = next.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = next;
        trace.push(iht_objective(&x, spec, d, cfg.lambda0)?);
        if change <= cfg.stop_tol {
            converged = true;
            break;
        }
    }
    Ok(BaselineRun { x, objective_trace: trace, iterations, converged })
}

fn l1_gradient(x: &[f64], spec: &ModelSpec, d: &[f64]) -> Vec<f64> {
    let chi = spec.chi;
    let r: Vec<f64> = convolve(&spec.h, x).iter().zip(d).map(|(v, dt)| v / chi - dt).collect();
    correlate(&spec.h, &r).into_iter().map(|g| 2.0 * g / chi).collect()
}

/// Sup-norm distance of `-grad` to `lambda1 * subdifferential(||x||_1)`.
pub fn l1_optimality_residual(x: &[f64], spec: &ModelSpec, d: &[f64], lambda1: f64) -> f64 {
    l1_gradient(x, spec, d)
        .iter()
        .zip(x)
        .map(|(&g, &xi)| {
            if xi != 0.0 {
                (g + lambda1 * xi.signum()).abs()
            } else {
                (g.abs() - lambda1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn prox_grad(x: &[f64], spec: &ModelSpec, d: &[f64], step: f64, lambda1: f64) -> Vec<f64> {
    let g = l1_gradient(x, spec, d);
    x.iter().zip(&g).map(|(xi, gi)| soft_threshold(xi - step * gi, lambda1 * step)).collect()
}

/// FISTA with adaptive restart on the linearized ℓ1 criterion.
pub fn l1_solve(spec: &ModelSpec, d: &[f64], cfg: &L1Config) -> Result<BaselineRun> {
    l1_run(spec, d, cfg, true)
}

/// Plain proximal gradient, mostly useful as a reference for [`l1_solve`].
pub fn l1_solve_unaccelerated(spec: &ModelSpec, d: &[f64], cfg: &L1Config) -> Result<BaselineRun> {
    l1_run(spec, d, cfg, false)
}

fn l1_run(spec: &ModelSpec, d: &[f64], cfg: &L1Config, accelerate: bool) -> Result<BaselineRun> {
    if d.len() != spec.t {
        return Err(Error::LengthMismatch { expected: spec.t, got: d.len() });
    }
    if !(cfg.lambda1 > 0.0) {
        return Err(Error::InvalidSpec("lambda1 must be positive".into()));
    }
    let objective = |x: &[f64]| crate::problem::eval_j_l1(x, spec, d, cfg.lambda1);
    let hs = spectral_norm(&spec.h, spec.t);
    let lip = 2.0 * hs * hs / (spec.chi * spec.chi);
    let mut x = vec![0.0; spec.t];
    let mut trace = vec![objective(&x)?];
    if lip == 0.0 || l1_optimality_residual(&x, spec, d, cfg.lambda1) <= L1_RESIDUAL_TOL {
        return Ok(BaselineRun { x, objective_trace: trace, iterations: 0, converged: true });
    }
    let step = 1.0 / lip;
    let mut yv = x.clone();
    let mut tk = 1.0f64;
    for it in 1..=cfg.max_iter {
        let next = if accelerate {
            prox_grad(&yv, spec, d, step, cfg.lambda1)
        } else {
            prox_grad(&x, spec, d, step, cfg.lambda1)
        };
        let f = objective(&next)?;
        let change = next.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if accelerate {
            if f > *trace.last().unwrap() {
                // Restart momentum when the objective goes up.
                tk = 1.0;
                yv.clone_from(&x);
                continue;
            }
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
            let beta = (tk - 1.0) / tn;
            yv = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            tk = tn;
        }
        x = next;
        trace.push(f);
        if l1_optimality_residual(&x, spec, d, cfg.lambda1) <= L1_RESIDUAL_TOL || change <= cfg.stop_tol {
            return Ok(BaselineRun { x, objective_trace: trace, iterations: it, converged: true });
        }
    }
    Err(Error::MaxIterReached { method: "l1", iterations: cfg.max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Regime;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn conv_matrix(h: &[f64], t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(t, t, |i, j| if i >= j && i - j < h.len() { h[i - j] } else { 0.0 })
    }

    #[test]
    fn thresholds() {
        assert_eq!(hard_threshold(3.0, 2.0), 3.0);
        assert_eq!(hard_threshold(1.5, 2.0), 0.0);
        assert_eq!(hard_threshold(-3.0, 2.0), -3.0);
        assert_eq!(hard_threshold(2.0, 2.0), 0.0);
        assert_eq!(soft_threshold(3.0, 2.0), 1.0);
        assert_eq!(soft_threshold(-0.5, 2.0), 0.0);
        assert_eq!(soft_threshold(0.0, 2.0), 0.0);
    }

    #[test]
    fn spectral_norm_against_svd() {
        assert!((spectral_norm(&[1.0], 7) - 1.0).abs() < 1e-12);
        let s = spectral_norm(&[0.0, 1.0], 500);
        assert!(s <= 1.0 + 1e-12 && s > 0.999);
        for h in [vec![0.1, 0.8, 0.1], vec![-0.1127, -0.0683, 0.8191], vec![0.2254, 0.3361, 0.4385]] {
            let oracle = conv_matrix(&h, 200).singular_values().max();
            let got = spectral_norm(&h, 200);
            assert!((got - oracle).abs() <= 1e-10 * oracle, "{got} vs {oracle}");
        }
    }

    #[test]
    fn eta_max_formula() {
        let mut spec = ModelSpec::new(vec![1.0], 4, Regime::Nonnegative);
        assert!((eta_max(&spec, &[1.0, 0.0, -0.5, 0.2]) - 0.03).abs() < 1e-12);
        assert!((eta_max(&spec, &[0.0; 4]) - 0.09).abs() < 1e-12);
        let full = eta_max(&spec, &[0.4; 4]);
        spec.chi = 0.15;
        assert!((eta_max(&spec, &[0.4; 4]) - full / 4.0).abs() < 1e-14);
    }

    #[test]
    fn iht_rejects_large_step() {
        let spec = ModelSpec::new(vec![0.1, 0.8, 0.1], 5, Regime::Nonnegative);
        let d = vec![0.1; 5];
        let cfg = IhtConfig { eta: Some(2.0 * eta_max(&spec, &d)), ..Default::default() };
        assert!(matches!(iht_solve(&[0.0; 5], &spec, &d, &cfg), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn iht_zero_data_stays_zero() {
        let spec = ModelSpec::new(vec![0.1, 0.8, 0.1], 6, Regime::RealValued);
        let run = iht_solve(&[0.0; 6], &spec, &[0.0; 6], &IhtConfig::default()).unwrap();
        assert_eq!(run.x, vec![0.0; 6]);
        assert!(run.converged);
    }

    #[test]
    fn iht_fixed_point_at_truth() {
        let spec = ModelSpec::new(vec![0.1, 0.8, 0.1], 10, Regime::Nonnegative);
        let mut xt = vec![0.0; 10];
        xt[2] = 0.8;
        xt[7] = 0.9;
        let d: Vec<f64> = convolve(&spec.h, &xt).iter().map(|v| phi(*v, spec.chi)).collect();
        let run = iht_solve(&xt, &spec, &d, &IhtConfig::default()).unwrap();
        assert_eq!(run.iterations, 1);
        for (a, b) in run.x.iter().zip(&xt) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(run.objective_trace.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn l1_trivial_zero_solutions() {
        let spec = ModelSpec::new(vec![0.1, 0.8, 0.1], 8, Regime::RealValued);
        let run = l1_solve(&spec, &[0.0; 8], &L1Config::default()).unwrap();
        assert_eq!(run.x, vec![0.0; 8]);

        let mut spec = ModelSpec::new(vec![1.0], 5, Regime::RealValued);
        spec.chi = 1.0;
        let d = [0.3, -0.2, 0.1, 0.4, -0.4];
        let cfg = L1Config { lambda1: 0.81, ..Default::default() };
        assert_eq!(l1_solve(&spec, &d, &cfg).unwrap().x, vec![0.0; 5]);
    }

    #[test]
    fn l1_accelerated_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let h: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let spec = ModelSpec::new(h, 15, Regime::RealValued);
            let d: Vec<f64> = (0..15).map(|_| rng.random_range(-0.8..0.8)).collect();
            let cfg = L1Config { max_iter: 2_000_000, stop_tol: 0.0, ..Default::default() };
            let fast = l1_solve(&spec, &d, &cfg).unwrap();
            let slow = l1_solve_unaccelerated(&spec, &d, &cfg).unwrap();
            let a = fast.objective_trace.last().unwrap();
            let b = slow.objective_trace.last().unwrap();
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn l1_beats_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = ModelSpec::new(vec![0.2254, 0.3361, 0.4385], 20, Regime::Nonnegative);
        let d: Vec<f64> = (0..20).map(|_| rng.random_range(-0.2..0.8)).collect();
        let cfg = L1Config::default();
        let run = l1_solve(&spec, &d, &cfg).unwrap();
        let best = crate::problem::eval_j_l1(&run.x, &spec, &d, cfg.lambda1).unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jz = crate::problem::eval_j_l1(&z, &spec, &d, cfg.lambda1).unwrap();
            assert!(best <= jz + 1e-6 * (1.0 + jz.abs()));
        }
    }
}
