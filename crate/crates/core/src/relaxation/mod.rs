//! Moment relaxations of the split criterion.
//!
//! Every rational term gets its own measure (one segment of the moment
//! vector). The sparse relaxation lets a measure see only its clique; the
//! dense one lets it see every signal variable.

mod cliques;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use cliques::{build_cliques, verify_rip, verify_rip_sets, CliqueStructure, SideCondition};

use crate::error::{Error, Result};
use crate::momentsys::{binomial, enumerate_basis, localizing_matrix_map, moment_matrix_map, MonomialBasis};
use crate::polyalg::{MultiIndex, Polynomial, VarId};
use crate::problem::{build_split_terms, ModelSpec, RationalTerm, SplitTerm};
use crate::sdp::{self, EqRow, PsdBlock, SdpProblem, SdpSolution, Segment, SolveStatus, SolveTrace, SolverConfig};

/// Moment count above which dense assembly is refused.
pub const DENSE_MOMENT_CAP: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Fit,
    Penalty,
}

/// One measure of the relaxation and the fraction it represents.
#[derive(Clone, Debug)]
pub struct Measure {
    pub kind: MeasureKind,
    pub sample: usize,
    pub basis: MonomialBasis,
    pub term: RationalTerm,
}

#[derive(Clone, Debug)]
pub struct Relaxation {
    pub problem: SdpProblem,
    pub measures: Vec<Measure>,
    pub order: u32,
    pub dense: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub n_moments: usize,
    pub n_equalities: usize,
    pub block_sizes: Vec<usize>,
}

impl SizeReport {
    pub fn max_block(&self) -> usize {
        self.block_sizes.iter().copied().max().unwrap_or(0)
    }
}

fn ceil_half(d: u32) -> u32 {
    d.div_ceil(2)
}

/// Smallest admissible relaxation order.
pub fn min_order(terms: &[SplitTerm], cs: &CliqueStructure) -> u32 {
    let mut k = 1; // box localizers have degree 2
    for t in terms {
        for r in [&t.fit, &t.penalty] {
            k = k.max(ceil_half(r.numerator.degree())).max(ceil_half(r.denominator.degree()));
        }
    }
    for s in &cs.side_conditions {
        k = k.max(ceil_half(s.poly.degree()));
    }
    k
}

fn box_poly(v: VarId, (lo, hi): (f64, f64)) -> Polynomial {
    let x = Polynomial::var(v);
    &(&x - &Polynomial::constant(lo)) * &(&Polynomial::constant(hi) - &x)
}

struct Builder<'a> {
    spec: &'a ModelSpec,
    k: u32,
    prob: SdpProblem,
    measures: Vec<Measure>,
}

impl<'a> Builder<'a> {
    fn add_measure(
        &mut self,
        kind: MeasureKind,
        sample: usize,
        vars: &[VarId],
        term: &RationalTerm,
        side: &[&Polynomial],
    ) -> Result<()> {
        let k = self.k;
        let basis = enumerate_basis(vars, 2 * k);
        let seg = self.prob.segments.len();
        let offset = self.prob.n;
        self.prob.segments.push(Segment { offset, len: basis.len() });
        self.prob.n += basis.len();

        self.prob.blocks.push(PsdBlock { segment: seg, map: moment_matrix_map(&basis, k)? });
        for &v in basis.vars() {
            let g = box_poly(v, self.spec.var_bounds(v));
            self.prob.blocks.push(PsdBlock { segment: seg, map: localizing_matrix_map(&basis, k - 1, &g)? });
        }
        let glob = |row: Vec<(usize, f64)>| row.into_iter().map(|(p, c)| (p + offset, c)).collect::<Vec<_>>();
        self.prob.equalities.push(EqRow { coeffs: glob(basis.riesz_row(&term.denominator)?), rhs: 1.0 });
        for h in side {
            let room = 2 * k - h.degree();
            for alpha in &basis.monomials()[..basis.count_up_to(room)] {
                self.prob.equalities.push(EqRow { coeffs: glob(basis.riesz_row(&h.shift(alpha))?), rhs: 0.0 });
            }
        }
        for (p, c) in basis.riesz_row(&term.numerator)? {
            self.prob.objective.push((p + offset, c));
        }
        self.measures.push(Measure { kind, sample, basis, term: term.clone() });
        Ok(())
    }

    /// `L_a(x^alpha q_a) = L_b(x^alpha q_b)` for monomials on `shared`.
    fn link(&mut self, a: usize, b: usize, shared: &[VarId]) -> Result<()> {
        let (ma, mb) = (&self.measures[a], &self.measures[b]);
        let deg = ma.term.denominator.degree().max(mb.term.denominator.degree());
        if deg > 2 * self.k {
            return Ok(());
        }
        let shared_basis = enumerate_basis(shared, 2 * self.k - deg);
        let (oa, ob) = (self.prob.segments[a].offset, self.prob.segments[b].offset);
        let mut rows = Vec::new();
        for alpha in shared_basis.monomials() {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for (p, c) in ma.basis.riesz_row(&ma.term.denominator.shift(alpha))? {
                coeffs.push((p + oa, c));
            }
            for (p, c) in mb.basis.riesz_row(&mb.term.denominator.shift(alpha))? {
                coeffs.push((p + ob, -c));
            }
            rows.push(EqRow { coeffs, rhs: 0.0 });
        }
        self.prob.equalities.extend(rows);
        Ok(())
    }
}

fn check_order(terms: &[SplitTerm], cs: &CliqueStructure, k: u32) -> Result<()> {
    let min = min_order(terms, cs);
    if k < min {
        return Err(Error::OrderTooSmall { given: k as usize, min: min as usize });
    }
    Ok(())
}

/// Sparse clique relaxation of order `k`.
pub fn assemble_sparse(terms: &[SplitTerm], cs: &CliqueStructure, k: u32, spec: &ModelSpec) -> Result<Relaxation> {
    check_order(terms, cs, k)?;
    let t_len = terms.len();
    let mut b = Builder { spec, k, prob: SdpProblem::default(), measures: Vec::new() };
    for (t, term) in terms.iter().enumerate() {
        let side: Vec<&Polynomial> = cs.side_conditions_of(t).collect();
        b.add_measure(MeasureKind::Fit, t, cs.fit_clique(t), &term.fit, &side)?;
    }
    for (t, term) in terms.iter().enumerate() {
        let side: Vec<&Polynomial> = cs.side_conditions_of(t_len + t).collect();
        b.add_measure(MeasureKind::Penalty, t, cs.penalty_clique(t), &term.penalty, &side)?;
    }
    for t in 1..t_len {
        b.link(t, t - 1, &cs.overlaps[t - 1])?;
    }
    for t in 0..t_len {
        b.link(t_len + t, t, &[cs.couplings[t]])?;
    }
    Ok(Relaxation { problem: b.prob, measures: b.measures, order: k, dense: false })
}

/// Dense relaxation of order `k`: one measure per fraction, each over all
/// signal variables plus the fraction's own lifted variable.
pub fn assemble_dense(terms: &[SplitTerm], cs: &CliqueStructure, k: u32, spec: &ModelSpec) -> Result<Relaxation> {
    check_order(terms, cs, k)?;
    let t_len = terms.len();
    let xs: Vec<VarId> = (0..t_len).map(|t| spec.x_id(t)).collect();
    let vars_for = |clique: &[VarId]| -> Vec<VarId> {
        let mut v = xs.clone();
        v.extend(clique.iter().copied().filter(|&id| id as usize >= t_len));
        v
    };
    let needed: usize = cs.cliques.iter().map(|c| binomial(vars_for(c).len() + 2 * k as usize, 2 * k as usize)).sum();
    if needed > DENSE_MOMENT_CAP {
        return Err(Error::SizeCapExceeded { needed, cap: DENSE_MOMENT_CAP });
    }
    let mut b = Builder { spec, k, prob: SdpProblem::default(), measures: Vec::new() };
    for (t, term) in terms.iter().enumerate() {
        let side: Vec<&Polynomial> = cs.side_conditions_of(t).collect();
        b.add_measure(MeasureKind::Fit, t, &vars_for(cs.fit_clique(t)), &term.fit, &side)?;
    }
    for (t, term) in terms.iter().enumerate() {
        let side: Vec<&Polynomial> = cs.side_conditions_of(t_len + t).collect();
        b.add_measure(MeasureKind::Penalty, t, &vars_for(cs.penalty_clique(t)), &term.penalty, &side)?;
    }
    for t in 1..t_len {
        b.link(t, t - 1, &xs)?;
    }
    for t in 0..t_len {
        b.link(t_len + t, t, &xs)?;
    }
    Ok(Relaxation { problem: b.prob, measures: b.measures, order: k, dense: true })
}

impl Relaxation {
    pub fn size_report(&self) -> SizeReport {
        size_report(&self.problem)
    }

    fn segment_values<'y>(&self, m: usize, y: &'y [f64]) -> &'y [f64] {
        let seg = self.problem.segments[m];
        &y[seg.offset..seg.offset + seg.len]
    }

    fn riesz_at(&self, m: usize, y: &[f64], p: &Polynomial) -> Result<f64> {
        let vals = self.segment_values(m, y);
        Ok(self.measures[m].basis.riesz_row(p)?.into_iter().map(|(i, c)| c * vals[i]).sum())
    }

    fn n_samples(&self) -> usize {
        self.measures.len() / 2
    }

    /// First-order moments of the underlying probability measure, read from
    /// the penalty measures and clipped to the box.
    pub fn extract_estimate(&self, y: &[f64], spec: &ModelSpec) -> Result<Vec<f64>> {
        let t_len = self.n_samples();
        (0..t_len)
            .map(|t| {
                let m = &self.measures[t_len + t];
                let xq = m.term.denominator.shift(&MultiIndex::var(spec.x_id(t)));
                let v = self.riesz_at(t_len + t, y, &xq)?;
                Ok(v.clamp(spec.bounds.0, spec.bounds.1))
            })
            .collect()
    }

    /// Same as [`Relaxation::extract_estimate`] but read from the fit measures.
    /// Needs `2k > deg q_t`, so it fails with `OutOfBasis` at order 1.
    pub fn extract_estimate_from_fit(&self, y: &[f64], spec: &ModelSpec) -> Result<Vec<f64>> {
        (0..self.n_samples())
            .map(|t| {
                let m = &self.measures[t];
                let xq = m.term.denominator.shift(&MultiIndex::var(spec.x_id(t)));
                let v = self.riesz_at(t, y, &xq)?;
                Ok(v.clamp(spec.bounds.0, spec.bounds.1))
            })
            .collect()
    }

    /// Moment vector of the point `x` (lifted variables at absolute values):
    /// each measure is the Dirac at that point scaled by `1/q`. It satisfies
    /// every constraint and its objective equals the criterion at `x`.
    pub fn dirac_moments(&self, x: &[f64], spec: &ModelSpec) -> Result<Vec<f64>> {
        let point = spec.lift(x);
        let mut y = Vec::with_capacity(self.problem.n);
        for m in &self.measures {
            let q = m.term.denominator.eval_slice(&point)?;
            let mass = 1.0 / q;
            y.extend(m.basis.monomials().iter().map(|a| mass * a.eval(|v| point[v as usize])));
        }
        Ok(y)
    }
}

pub fn size_report(prob: &SdpProblem) -> SizeReport {
    SizeReport {
        n_moments: prob.n,
        n_equalities: prob.equalities.len(),
        block_sizes: prob.blocks.iter().map(|b| b.map.dim()).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxationMode {
    #[default]
    Sparse,
    Dense,
}

/// Bound, estimate and diagnostics of one solved relaxation.
#[derive(Clone, Debug)]
pub struct RelaxationOutcome {
    pub order: u32,
    pub bound: f64,
    pub x_hat: Vec<f64>,
    pub solution: SdpSolution,
    pub trace: SolveTrace,
    pub size: SizeReport,
    pub assemble_secs: f64,
    pub solve_secs: f64,
}

impl RelaxationOutcome {
    /// Bounds from solves that stopped early are not trusted.
    pub fn trusted(&self) -> bool {
        self.solution.status == SolveStatus::Optimal
    }
}

/// Builds, solves and extracts in one go.
pub fn solve_relaxation(
    spec: &ModelSpec,
    d: &[f64],
    k: u32,
    mode: RelaxationMode,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<RelaxationOutcome> {
    let clock = Instant::now();
    let terms = build_split_terms(spec, d)?;
    let cs = build_cliques(spec);
    let relax = match mode {
        RelaxationMode::Sparse => assemble_sparse(&terms, &cs, k, spec)?,
        RelaxationMode::Dense => assemble_dense(&terms, &cs, k, spec)?,
    };
    let assemble_secs = clock.elapsed().as_secs_f64();
    let start = match warm {
        Some(x) => Some(relax.dirac_moments(x, spec)?),
        None => None,
    };
    let clock = Instant::now();
    let (solution, trace) = sdp::solve_with_start(&relax.problem, cfg, start.as_deref())?;
    let solve_secs = clock.elapsed().as_secs_f64();
    let x_hat = relax.extract_estimate(&solution.y_all, spec)?;
    Ok(RelaxationOutcome {
        order: k,
        bound: solution.objective_value,
        x_hat,
        size: relax.size_report(),
        solution,
        trace,
        assemble_secs,
        solve_secs,
    })
}
