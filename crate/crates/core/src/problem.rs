//! Observation model, penalized criterion and its split into rational terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyalg::{Polynomial, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Nonnegative,
    RealValued,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonnegative" | "nonneg" => Ok(Regime::Nonnegative),
            "real_valued" | "real" => Ok(Regime::RealValued),
            other => Err(Error::InvalidSpec(format!("unknown regime `{other}`"))),
        }
    }
}

/// Model parameters: FIR filter, saturation scale, penalty, box and regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub h: Vec<f64>,
    pub chi: f64,
    pub delta: f64,
    pub lambda: f64,
    pub bounds: (f64, f64),
    pub regime: Regime,
    #[serde(rename = "T")]
    pub t: usize,
}

impl ModelSpec {
    /// Default parameters for a filter and signal length in a given regime.
    pub fn new(h: Vec<f64>, t: usize, regime: Regime) -> Self {
        let bounds = match regime {
            Regime::Nonnegative => (0.0, 1.0),
            Regime::RealValued => (-1.0, 1.0),
        };
        Self {
            h,
            chi: 0.3,
            delta: 0.01,
            lambda: 0.15,
            bounds,
            regime,
            t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.h.is_empty() {
            return bad("filter must have at least one tap");
        }
        if self.t == 0 {
            return bad("signal length must be positive");
        }
        if !(self.chi > 0.0) || !(self.delta > 0.0) || !(self.lambda > 0.0) {
            return bad("chi, delta and lambda must be positive");
        }
        if !(self.bounds.0 < self.bounds.1) {
            return bad("bounds must satisfy low < high");
        }
        if self.h.iter().chain([&self.chi, &self.delta, &self.lambda]).any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        if self.regime == Regime::Nonnegative {
            if self.h.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidRegime("filter has negative taps".into()));
            }
            if self.bounds.0 < 0.0 {
                return Err(Error::InvalidRegime("lower bound is negative".into()));
            }
        }
        Ok(())
    }

    pub fn filter_len(&self) -> usize {
        self.h.len()
    }

    pub fn bound_abs(&self) -> f64 {
        self.bounds.0.abs().max(self.bounds.1.abs())
    }

    pub fn h_norm1(&self) -> f64 {
        self.h.iter().map(|v| v.abs()).sum()
    }

    pub fn is_lifted(&self) -> bool {
        self.regime == Regime::RealValued
    }

    /// Number of polynomial variables: `T` signal samples, plus `2T` lifted
    /// absolute values in the real-valued regime.
    pub fn n_vars(&self) -> usize {
        if self.is_lifted() {
            3 * self.t
        } else {
            self.t
        }
    }

    pub fn x_id(&self, t: usize) -> VarId {
        t as VarId
    }

    /// Lifted variable standing for `|(Hx)_t|`.
    pub fn w_id(&self, t: usize) -> VarId {
        (self.t + t) as VarId
    }

    /// Lifted variable standing for `|x_t|`.
    pub fn u_id(&self, t: usize) -> VarId {
        (2 * self.t + t) as VarId
    }

    /// Box for any variable id.
    pub fn var_bounds(&self, id: VarId) -> (f64, f64) {
        let i = id as usize;
        if i < self.t {
            self.bounds
        } else if i < 2 * self.t {
            (0.0, self.h_norm1() * self.bound_abs())
        } else {
            (0.0, self.bound_abs())
        }
    }

    /// Sample indices `j` with `h_{t-j} x_j` contributing to `(Hx)_t`.
    pub fn band(&self, t: usize) -> std::ops::RangeInclusive<usize> {
        (t + 1).saturating_sub(self.h.len())..=t
    }

    /// Lifts a signal to the full variable vector (absolute values for the
    /// lifted coordinates).
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        if self.is_lifted() {
            out.extend(convolve(&self.h, x).iter().map(|v| v.abs()));
            out.extend(x.iter().map(|v| v.abs()));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalInstance {
    pub x_true: Vec<f64>,
    pub d: Vec<f64>,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

/// A fraction `numerator / denominator` over a clique of variables.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalTerm {
    pub numerator: Polynomial,
    pub denominator: Polynomial,
    pub clique_vars: Vec<VarId>,
}

impl RationalTerm {
    pub fn eval_slice(&self, point: &[f64]) -> Result<f64> {
        Ok(self.numerator.eval_slice(point)? / self.denominator.eval_slice(point)?)
    }
}

/// Fit and penalty fractions for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitTerm {
    pub fit: RationalTerm,
    pub penalty: RationalTerm,
}

pub fn phi(u: f64, chi: f64) -> f64 {
    u / (chi + u.abs())
}

pub fn phi_deriv(u: f64, chi: f64) -> f64 {
    let s = chi + u.abs();
    chi / (s * s)
}

pub fn psi(xi: f64, delta: f64) -> f64 {
    xi.abs() / (delta + xi.abs())
}

/// `(Hx)_t = sum_i h_i x_{t-i}`, zero outside the signal.
pub fn convolve(h: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            h.iter()
                .enumerate()
                .take(t + 1)
                .map(|(i, &hi)| hi * x[t - i])
                .sum()
        })
        .collect()
}

/// Adjoint of [`convolve`]: `(H^T r)_j = sum_i h_i r_{j+i}`.
pub fn correlate(h: &[f64], r: &[f64]) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|j| {
            h.iter()
                .enumerate()
                .take_while(|(i, _)| j + i < n)
                .map(|(i, &hi)| hi * r[j + i])
                .sum()
        })
        .collect()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Data-fit part `||d - phi(Hx)||^2`.
pub fn eval_fit(x: &[f64], spec: &ModelSpec, d: &[f64]) -> Result<f64> {
    check_len(d.len(), x.len())?;
    let v = convolve(&spec.h, x);
    Ok(v
        .iter()
        .zip(d)
        .map(|(&vt, &dt)| (dt - phi(vt, spec.chi)).powi(2))
        .sum())
}

/// Penalized criterion `||d - phi(Hx)||^2 + lambda * sum psi(x_t)`.
pub fn eval_j(x: &[f64], spec: &ModelSpec, d: &[f64]) -> Result<f64> {
    let pen: f64 = x.iter().map(|&v| psi(v, spec.delta)).sum();
    Ok(eval_fit(x, spec, d)? + spec.lambda * pen)
}

/// Linearized convex criterion `||d - Hx/chi||^2 + lambda1 * ||x||_1`.
pub fn eval_j_l1(x: &[f64], spec: &ModelSpec, d: &[f64], lambda1: f64) -> Result<f64> {
    check_len(d.len(), x.len())?;
    let v = convolve(&spec.h, x);
    let fit: f64 = v.iter().zip(d).map(|(&vt, &dt)| (dt - vt / spec.chi).powi(2)).sum();
    Ok(fit + lambda1 * x.iter().map(|v| v.abs()).sum::<f64>())
}

/// Gradient of `||d - phi(Hx)||^2`.
pub fn fit_gradient(x: &[f64], spec: &ModelSpec, d: &[f64]) -> Vec<f64> {
    let v = convolve(&spec.h, x);
    let r: Vec<f64> = v
        .iter()
        .zip(d)
        .map(|(&vt, &dt)| 2.0 * phi_deriv(vt, spec.chi) * (phi(vt, spec.chi) - dt))
        .collect();
    correlate(&spec.h, &r)
}

/// Splits the criterion into `T` fit fractions and `T` penalty fractions.
///
/// In the nonnegative regime `phi(v) = v/(chi+v)` on the box, so each fit term
/// is `(d(chi+v) - v)^2 / (chi+v)^2`. In the real-valued regime `|v|` and
/// `|x|` are replaced by the lifted variables `w` and `u`.
pub fn build_split_terms(spec: &ModelSpec, d: &[f64]) -> Result<Vec<SplitTerm>> {
    spec.validate()?;
    check_len(spec.t, d.len())?;
    let chi = Polynomial::constant(spec.chi);
    let mut out = Vec::with_capacity(spec.t);
    for (t, &d_t) in d.iter().enumerate() {
        let coeffs: Vec<(VarId, f64)> = spec
            .band(t)
            .map(|j| (spec.x_id(j), spec.h[t - j]))
            .collect();
        let v = Polynomial::linear(0.0, &coeffs);
        let mut clique: Vec<VarId> = coeffs.iter().map(|&(id, _)| id).collect();
        let dt = Polynomial::constant(d_t);
        let (abs_v, abs_x) = if spec.is_lifted() {
            clique.push(spec.w_id(t));
            (Polynomial::var(spec.w_id(t)), Polynomial::var(spec.u_id(t)))
        } else {
            (v.clone(), Polynomial::var(spec.x_id(t)))
        };
        let den = &chi + &abs_v;
        let num = (&(&dt * &den) - &v).square();
        let fit = RationalTerm {
            numerator: num,
            denominator: den.square(),
            clique_vars: clique,
        };
        let mut pclique = vec![spec.x_id(t)];
        if spec.is_lifted() {
            pclique.push(spec.u_id(t));
        }
        let penalty = RationalTerm {
            numerator: abs_x.scale(spec.lambda),
            denominator: &Polynomial::constant(spec.delta) + &abs_x,
            clique_vars: pclique,
        };
        out.push(SplitTerm { fit, penalty });
    }
    Ok(out)
}

/// Evaluates the split criterion at a (lifted) point.
pub fn eval_split(terms: &[SplitTerm], point: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for term in terms {
        acc += term.fit.eval_slice(point)? + term.penalty.eval_slice(point)?;
    }
    Ok(acc)
}
