//! Operator splitting on the reduced problem.
//!
//! Alternates an equality-constrained least-squares step in `zeta` (normal
//! system factorized once), a PSD projection of every block, and a scaled
//! over-relaxed dual update. The penalty stays at `penalty_rho`: residual
//! balancing made the iterates cycle on badly scaled moment problems.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::eigh::project_psd;
use super::envelope::EnvelopeCholesky;
use super::presolve::Reduced;
use super::{SolveStatus, SolveTrace, SolverConfig};
use crate::error::{Error, Result};

type Mats = Vec<DMatrix<f64>>;

const RELAX: f64 = 1.6;

fn mats_norm(ms: &[DMatrix<f64>]) -> f64 {
    ms.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn run(
    red: &Reduced,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveTrace, SolveStatus, f64)> {
    let nb = red.blocks.len();
    let mut trace = SolveTrace::default();

    // Q = A*A per segment, K = C Q^{-1} C^T; neither depends on rho.
    let eye: Mats = red.blocks.iter().map(|b| &b.v * b.v.transpose()).collect();
    let mut q: Vec<Option<Cholesky<f64, Dyn>>> = Vec::with_capacity(red.segs.len());
    for (s, rs) in red.segs.iter().enumerate() {
        if rs.nz == 0 {
            q.push(None);
            continue;
        }
        let mut h = red.schur_segment(s, &eye, &eye);
        let dmax = h.diagonal().iter().fold(0.0f64, |m, v| m.max(*v)).max(1e-300);
        for i in 0..rs.nz {
            h[(i, i)] += 1e-12 * dmax;
        }
        q.push(Some(
            Cholesky::new(h).ok_or_else(|| Error::NumericalBreakdown("normal system is not definite".into()))?,
        ));
    }
    let solve_q = |g: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        for (s, rs) in red.segs.iter().enumerate() {
            if let Some(ch) = &q[s] {
                let v = DVector::from_column_slice(&g[rs.zoff..rs.zoff + rs.nz]);
                out[rs.zoff..rs.zoff + rs.nz].copy_from_slice(ch.solve(&v).as_slice());
            }
        }
        out
    };
    let k = EnvelopeCholesky::factor(
        red.assemble_k(|s, cs| q[s].as_ref().map_or_else(|| cs * 0.0, |ch| ch.solve(cs))),
        1e-14,
    );

    // Solves min c'z + rho/2 ||A z - t||^2 s.t. C z = e.
    let affine_step = |t: &[DMatrix<f64>], rho: f64| -> Vec<f64> {
        let at = red.apply_at(t);
        let rhs: Vec<f64> = at.iter().zip(&red.c).map(|(a, c)| a - c / rho).collect();
        let z0 = solve_q(&rhs);
        let cz = red.apply_c(&z0);
        let r: Vec<f64> = cz.iter().zip(&red.e).map(|(a, b)| a - b).collect();
        let nu = k.solve(&r);
        let corr = solve_q(&red.apply_ct(&nu));
        z0.iter().zip(corr).map(|(a, b)| a - b).collect()
    };

    let mut zeta = match start {
        Some(y) => {
            let mut z = vec![0.0; red.nz];
            for rs in &red.segs {
                // Free coordinates of N are unit rows, so read them off directly.
                for (j, &r) in rs.free.iter().enumerate() {
                    if let Some(v) = y.get(rs.offset + r) {
                        z[rs.zoff + j] = *v - rs.y0[r];
                    }
                }
            }
            red.polish(&mut z);
            z
        }
        None => vec![0.0; red.nz],
    };
    let aff = |z: &[f64]| -> Mats {
        let az = red.apply_a(z);
        (0..nb).map(|b| &red.blocks[b].b0 + &az[b]).collect()
    };
    let mut s: Mats = aff(&zeta).iter().map(project_psd).collect::<Result<_>>()?;
    let mut u: Mats = red.blocks.iter().map(|b| DMatrix::zeros(b.rank(), b.rank())).collect();
    let rho = cfg.penalty_rho;
    let bnorm = mats_norm(&red.blocks.iter().map(|b| b.b0.clone()).collect::<Vec<_>>());
    let cnorm = norm(&red.c);
    let mut status = SolveStatus::MaxIter;
    let mut gap = f64::NAN;

    for _ in 0..cfg.max_iter {
        let target: Mats = (0..nb).map(|b| &s[b] - &u[b] - &red.blocks[b].b0).collect();
        zeta = affine_step(&target, rho);
        let m = aff(&zeta);
        let mr: Mats = (0..nb).map(|b| &m[b] * RELAX + &s[b] * (1.0 - RELAX)).collect();
        let s_old = std::mem::take(&mut s);
        s = (0..nb).map(|b| project_psd(&(&mr[b] + &u[b]))).collect::<Result<_>>()?;
        for b in 0..nb {
            u[b] += &mr[b] - &s[b];
        }
        let r: Mats = (0..nb).map(|b| &m[b] - &s[b]).collect();
        let ds: Mats = (0..nb).map(|b| &s[b] - &s_old[b]).collect();
        let pres = mats_norm(&r) / (1.0 + bnorm.max(mats_norm(&s)));
        let dres = rho * norm(&red.apply_at(&ds)) / (1.0 + cnorm);
        let pobj: f64 = zeta.iter().zip(&red.c).map(|(a, b)| a * b).sum::<f64>() + red.c0;
        // Complementarity of the implied dual X = -rho U with S.
        gap = (0..nb).map(|b| (rho * u[b].dot(&s[b])).abs()).sum::<f64>();
        trace.push(pres, dres, gap / (1.0 + pobj.abs()), pobj);
        if !pobj.is_finite() {
            status = SolveStatus::Infeasible;
            break;
        }
        if pres.max(dres) <= cfg.tol && gap <= cfg.tol * (1.0 + pobj.abs()) {
            status = SolveStatus::Optimal;
            break;
        }
    }
    Ok((zeta, trace, status, gap))
}
