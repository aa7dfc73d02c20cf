//! Semidefinite programs over concatenated moment vectors.
//!
//! A problem reads a vector `y` split into segments (one per measure). It
//! minimizes a linear objective subject to sparse linear equalities and PSD
//! constraints on matrices that depend linearly on one segment each.

pub mod admm;
pub mod eigh;
pub mod envelope;
pub mod ipm;
pub(crate) mod presolve;

use std::io::{BufRead, Write};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momentsys::LinearMatrixMap;

pub use eigh::{eigh, project_psd};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub offset: usize,
    pub len: usize,
}

/// PSD constraint `map(y[segment]) >= 0`; map positions are segment-local.
#[derive(Clone, Debug)]
pub struct PsdBlock {
    pub segment: usize,
    pub map: LinearMatrixMap,
}

/// Sparse equality `sum coeffs[i].1 * y[coeffs[i].0] = rhs` over global positions.
#[derive(Clone, Debug, PartialEq)]
pub struct EqRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SdpProblem {
    pub n: usize,
    pub objective: Vec<(usize, f64)>,
    pub equalities: Vec<EqRow>,
    pub blocks: Vec<PsdBlock>,
    pub segments: Vec<Segment>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedProblem(m));
        let mut next = 0;
        for (s, seg) in self.segments.iter().enumerate() {
            if seg.offset != next || seg.len == 0 {
                return bad(format!("segment {s} is not contiguous or is empty"));
            }
            next += seg.len;
        }
        if next != self.n {
            return bad(format!("segments cover {next} of {} moments", self.n));
        }
        if let Some(&(p, _)) = self.objective.iter().find(|(p, _)| *p >= self.n) {
            return bad(format!("objective references position {p}"));
        }
        for (r, row) in self.equalities.iter().enumerate() {
            if row.coeffs.iter().any(|&(p, c)| p >= self.n || !c.is_finite()) || !row.rhs.is_finite() {
                return bad(format!("equality {r} is out of range or not finite"));
            }
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            let Some(seg) = self.segments.get(blk.segment) else {
                return bad(format!("block {b} reads a missing segment"));
            };
            let n = blk.map.dim();
            if blk.map.entries.len() != n * n {
                return bad(format!("block {b} has a malformed entry table"));
            }
            if blk.map.entries.iter().flatten().any(|&(p, _)| p >= seg.len) {
                return bad(format!("block {b} reads outside its segment"));
            }
        }
        Ok(())
    }

    pub fn segment_of(&self, pos: usize) -> usize {
        self.segments.partition_point(|s| s.offset + s.len <= pos)
    }

    pub fn objective_at(&self, y: &[f64]) -> f64 {
        self.objective.iter().map(|&(p, c)| c * y[p]).sum()
    }

    /// Largest absolute equality residual.
    pub fn max_equality_residual(&self, y: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|r| (r.coeffs.iter().map(|&(p, c)| c * y[p]).sum::<f64>() - r.rhs).abs())
            .fold(0.0, f64::max)
    }

    pub fn block_matrix(&self, b: usize, y: &[f64]) -> DMatrix<f64> {
        let blk = &self.blocks[b];
        let seg = self.segments[blk.segment];
        blk.map.apply(&y[seg.offset..seg.offset + seg.len])
    }

    /// Smallest eigenvalue of every PSD block at `y`.
    pub fn block_min_eigenvalues(&self, y: &[f64]) -> Result<Vec<f64>> {
        (0..self.blocks.len())
            .map(|b| {
                let m = self.block_matrix(b, y);
                Ok(if m.nrows() == 0 { 0.0 } else { eigh(&m)?.0[0] })
            })
            .collect()
    }

    /// Sparse text export: one line per nonzero, `kind id i j position coefficient`.
    ///
    /// Kinds are `seg` (id, offset, length), `obj`, `eq`, `rhs` and `psd`
    /// (upper triangle only, global positions).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n={} eq={} psd={}", self.n, self.equalities.len(), self.blocks.len())?;
        for (s, seg) in self.segments.iter().enumerate() {
            writeln!(w, "seg {s} {} {} 0 0", seg.offset, seg.len)?;
        }
        for &(p, c) in &self.objective {
            writeln!(w, "obj 0 0 0 {p} {c:e}")?;
        }
        for (r, row) in self.equalities.iter().enumerate() {
            for &(p, c) in &row.coeffs {
                writeln!(w, "eq {r} 0 0 {p} {c:e}")?;
            }
            writeln!(w, "rhs {r} 0 0 0 {:e}", row.rhs)?;
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            let off = self.segments[blk.segment].offset;
            writeln!(w, "blk {b} {} {} 0 0", blk.segment, blk.map.dim())?;
            for i in 0..blk.map.dim() {
                for j in i..blk.map.dim() {
                    for &(p, c) in blk.map.entry(i, j) {
                        writeln!(w, "psd {b} {i} {j} {} {c:e}", p + off)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Parses the format written by [`SdpProblem::write_text`]. Row labels of
    /// block maps are not stored, so they come back as constant monomials.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut p = SdpProblem::default();
        let mut dims: Vec<(usize, usize)> = Vec::new();
        let mut entries: Vec<Vec<(usize, usize, usize, f64)>> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(Error::MalformedProblem(format!("bad line `{line}`")));
            }
            let num = |k: usize| -> Result<usize> {
                f[k].parse().map_err(|_| Error::MalformedProblem(format!("bad field in `{line}`")))
            };
            let val: f64 = f[5]
                .parse()
                .map_err(|_| Error::MalformedProblem(format!("bad value in `{line}`")))?;
            match f[0] {
                "seg" => {
                    p.segments.push(Segment { offset: num(2)?, len: num(3)? });
                    p.n = p.n.max(num(2)? + num(3)?);
                }
                "obj" => p.objective.push((num(4)?, val)),
                "eq" | "rhs" => {
                    let r = num(1)?;
                    while p.equalities.len() <= r {
                        p.equalities.push(EqRow { coeffs: Vec::new(), rhs: 0.0 });
                    }
                    if f[0] == "eq" {
                        p.equalities[r].coeffs.push((num(4)?, val));
                    } else {
                        p.equalities[r].rhs = val;
                    }
                }
                "blk" => {
                    dims.push((num(2)?, num(3)?));
                    entries.push(Vec::new());
                }
                "psd" => {
                    let b = num(1)?;
                    let list = entries
                        .get_mut(b)
                        .ok_or_else(|| Error::MalformedProblem("psd before blk".into()))?;
                    list.push((num(2)?, num(3)?, num(4)?, val));
                }
                other => return Err(Error::MalformedProblem(format!("unknown kind `{other}`"))),
            }
        }
        for ((seg, dim), list) in dims.into_iter().zip(entries) {
            let off = p
                .segments
                .get(seg)
                .ok_or_else(|| Error::MalformedProblem("block on missing segment".into()))?
                .offset;
            let mut table = vec![Vec::new(); dim * dim];
            for (i, j, pos, c) in list {
                table[i * dim + j].push((pos - off, c));
                if i != j {
                    table[j * dim + i].push((pos - off, c));
                }
            }
            p.blocks.push(PsdBlock {
                segment: seg,
                map: LinearMatrixMap {
                    rows: vec![crate::polyalg::MultiIndex::one(); dim],
                    entries: table,
                },
            });
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Primal-dual interior point with Mehrotra correction.
    #[default]
    InteriorPoint,
    /// Operator splitting with PSD projections.
    Admm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub penalty_rho: f64,
    pub refine_steps: usize,
    pub method: SolverMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 50_000,
            penalty_rho: 1.0,
            refine_steps: 2,
            method: SolverMethod::InteriorPoint,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.penalty_rho > 0.0) {
            return Err(Error::InvalidSpec(
                "solver needs tol > 0, max_iter >= 1 and penalty_rho > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub primal_res: Vec<f64>,
    pub dual_res: Vec<f64>,
    /// Relative complementarity gap.
    pub gap: Vec<f64>,
    pub objective: Vec<f64>,
    pub wall_time: f64,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }

    fn push(&mut self, p: f64, d: f64, gap: f64, obj: f64) {
        self.primal_res.push(p);
        self.dual_res.push(d);
        self.gap.push(gap);
        self.objective.push(obj);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iter", "primal_res", "dual_res", "gap", "objective"])?;
        for i in 0..self.iterations() {
            out.write_record(&[
                i.to_string(),
                format!("{:e}", self.primal_res[i]),
                format!("{:e}", self.dual_res[i]),
                format!("{:e}", self.gap[i]),
                format!("{:e}", self.objective[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub y_all: Vec<f64>,
    pub objective_value: f64,
    pub primal_residual: f64,
    pub dual_gap_estimate: f64,
    pub status: SolveStatus,
}

/// Solves with the configured method and no warm start.
pub fn solve(prob: &SdpProblem, cfg: &SolverConfig) -> Result<(SdpSolution, SolveTrace)> {
    solve_with_start(prob, cfg, None)
}

/// Solves, optionally warm-starting from a moment vector. Only the splitting
/// method uses the start; the interior point method starts from a centered
/// point of its own.
pub fn solve_with_start(
    prob: &SdpProblem,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<(SdpSolution, SolveTrace)> {
    cfg.validate()?;
    prob.validate()?;
    let clock = Instant::now();
    let red = presolve::Reduced::new(prob)?;
    let (zeta, mut trace, status, gap) = match cfg.method {
        SolverMethod::InteriorPoint => ipm::run(&red, cfg)?,
        SolverMethod::Admm => admm::run(&red, cfg, start)?,
    };
    let mut zeta = zeta;
    for _ in 0..cfg.refine_steps {
        red.polish(&mut zeta);
    }
    let y_all = red.lift(&zeta);
    let objective_value = prob.objective_at(&y_all);
    let eq_res = prob.max_equality_residual(&y_all);
    let min_eig = red.min_block_eigenvalue(&zeta);
    trace.wall_time = clock.elapsed().as_secs_f64();
    Ok((
        SdpSolution {
            y_all,
            objective_value,
            primal_residual: eq_res.max(-min_eig).max(0.0),
            dual_gap_estimate: gap,
            status,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::momentsys::{enumerate_basis, localizing_matrix_map, moment_matrix_map};
    use crate::polyalg::Polynomial;

    /// `min y1` over moments of a measure on `[-1, 1]` with unit mass.
    fn interval_problem() -> SdpProblem {
        let basis = enumerate_basis(&[0], 2);
        let g = &Polynomial::constant(1.0) - &Polynomial::var(0).square();
        SdpProblem {
            n: 3,
            objective: vec![(1, 1.0)],
            equalities: vec![EqRow { coeffs: vec![(0, 1.0)], rhs: 1.0 }],
            blocks: vec![
                PsdBlock { segment: 0, map: moment_matrix_map(&basis, 1).unwrap() },
                PsdBlock { segment: 0, map: localizing_matrix_map(&basis, 0, &g).unwrap() },
            ],
            segments: vec![Segment { offset: 0, len: 3 }],
        }
    }

    #[test]
    fn interval_minimum_both_methods() {
        let prob = interval_problem();
        for method in [SolverMethod::InteriorPoint, SolverMethod::Admm] {
            let cfg = SolverConfig { method, ..Default::default() };
            let (sol, trace) = solve(&prob, &cfg).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal, "{method:?}");
            assert!((sol.objective_value + 1.0).abs() < 1e-5, "{method:?} {}", sol.objective_value);
            assert!((sol.y_all[1] + 1.0).abs() < 1e-5);
            assert!(trace.iterations() > 0);
        }
    }

    #[test]
    fn zero_objective_is_optimal() {
        let mut prob = interval_problem();
        prob.objective.clear();
        let (sol, _) = solve(&prob, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.objective_value.abs() < 1e-12);
    }

    #[test]
    fn validation_catches_bad_references() {
        let mut prob = interval_problem();
        prob.objective.push((7, 1.0));
        assert!(matches!(prob.validate(), Err(Error::MalformedProblem(_))));
        let mut prob = interval_problem();
        prob.segments[0].len = 2;
        assert!(prob.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        let prob = interval_problem();
        let mut buf = Vec::new();
        prob.write_text(&mut buf).unwrap();
        let back = SdpProblem::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.n, prob.n);
        assert_eq!(back.objective, prob.objective);
        assert_eq!(back.equalities, prob.equalities);
        let y = [1.0, 0.3, 0.5];
        for b in 0..2 {
            assert_eq!(back.block_matrix(b, &y), prob.block_matrix(b, &y));
        }
    }
}
