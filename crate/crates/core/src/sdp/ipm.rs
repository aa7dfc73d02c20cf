//! Infeasible primal-dual interior point method (HKM direction with a
//! Mehrotra predictor-corrector) on the reduced problem
//!
//! ```text
//! min c'z  s.t.  S_b = B_b + A_b(z) >= 0,  C z = e
//! ```
//!
//! whose dual is `max -<B, X> + e'nu  s.t.  A*(X) + C'nu = c, X >= 0`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use super::envelope::EnvelopeCholesky;
use super::presolve::Reduced;
use super::{SolveStatus, SolveTrace, SolverConfig};
use crate::error::{Error, Result};

const ITER_CAP: usize = 200;
const NO_PROGRESS: usize = 15;
const GMRES_DIM: usize = 12;

type Mats = Vec<DMatrix<f64>>;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mats_norm(ms: &[DMatrix<f64>]) -> f64 {
    ms.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest `a` with `m + a*dm` PSD, given a Cholesky factor of `m`.
fn max_step(chol: &Cholesky<f64, Dyn>, dm: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let n = l.nrows();
    let Some(t) = l.solve_lower_triangular(dm) else {
        return 0.0;
    };
    let Some(w) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let w = sym(w);
    if n == 0 {
        return f64::INFINITY;
    }
    let lmin = w.symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Factors {
    h: Vec<Option<Cholesky<f64, Dyn>>>,
    k: EnvelopeCholesky,
}

impl Factors {
    fn solve_h(&self, red: &Reduced, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        for (s, rs) in red.segs.iter().enumerate() {
            if let Some(ch) = &self.h[s] {
                let v = nalgebra::DVector::from_column_slice(&g[rs.zoff..rs.zoff + rs.nz]);
                let x = ch.solve(&v);
                out[rs.zoff..rs.zoff + rs.nz].copy_from_slice(x.as_slice());
            }
        }
        out
    }
}

struct Residuals {
    rp: Mats,
    re: Vec<f64>,
    rd: Vec<f64>,
}

pub(crate) fn run(red: &Reduced, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveTrace, SolveStatus, f64)> {
    let nb = red.blocks.len();
    let mut trace = SolveTrace::default();
    let mut zeta = vec![0.0; red.nz];
    let mut nu = vec![0.0; red.n_rows()];
    if nb == 0 {
        // Only equalities: any feasible point is optimal if c lies in the row space.
        red.polish(&mut zeta);
        trace.push(0.0, 0.0, 0.0, dot(&red.c, &zeta) + red.c0);
        return Ok((zeta, trace, SolveStatus::Optimal, 0.0));
    }
    let bnorm = mats_norm(&red.blocks.iter().map(|b| b.b0.clone()).collect::<Vec<_>>());
    let cnorm = norm(&red.c);
    let enorm = norm(&red.e);
    let n_cone = red.cone_order() as f64;
    let scale = (1.0 + bnorm.max(cnorm)).sqrt().max(1.0);
    let mut x: Mats = red.blocks.iter().map(|b| DMatrix::identity(b.rank(), b.rank()) * scale).collect();
    let mut s: Mats = x.clone();

    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut stalls = 0;
    let mut since_best = 0;
    let iters = cfg.max_iter.min(ITER_CAP);
    for _ in 0..iters {
        // Losing definiteness to rounding means the iterates are at machine
        // precision; the best iterate so far is returned.
        let Some(sc) = s.iter().map(|m| Cholesky::new(m.clone())).collect::<Option<Vec<_>>>() else {
            break;
        };
        let Some(xc) = x.iter().map(|m| Cholesky::new(m.clone())).collect::<Option<Vec<_>>>() else {
            break;
        };
        let z: Mats = sc.iter().map(|c| sym(c.inverse())).collect();

        let az = red.apply_a(&zeta);
        let rp: Mats = (0..nb).map(|b| &red.blocks[b].b0 + &az[b] - &s[b]).collect();
        let cz = red.apply_c(&zeta);
        let re: Vec<f64> = red.e.iter().zip(&cz).map(|(a, b)| a - b).collect();
        let atx = red.apply_at(&x);
        let ctn = red.apply_ct(&nu);
        let rd: Vec<f64> = (0..red.nz).map(|i| red.c[i] - atx[i] - ctn[i]).collect();

        let mu = (0..nb).map(|b| x[b].dot(&s[b])).sum::<f64>() / n_cone;
        let pobj = dot(&red.c, &zeta) + red.c0;
        let dobj = red.c0 - (0..nb).map(|b| red.blocks[b].b0.dot(&x[b])).sum::<f64>() + dot(&red.e, &nu);
        let pinf = (mats_norm(&rp).powi(2) + norm(&re).powi(2)).sqrt() / (1.0 + bnorm.max(enorm));
        let dinf = norm(&rd) / (1.0 + cnorm);
        let gap = mu * n_cone / (1.0 + pobj.abs() + dobj.abs());
        trace.push(pinf, dinf, gap, pobj);

        let merit = pinf.max(dinf).max(gap);
        if best.as_ref().is_none_or(|b| merit < 0.9 * b.0) {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, zeta.clone(), mu * n_cone));
        }
        if pinf <= cfg.tol && dinf <= cfg.tol && gap <= cfg.tol {
            status = SolveStatus::Optimal;
            break;
        }
        // Past this point the Newton systems are too ill-conditioned to
        // reduce the residuals further.
        if since_best >= NO_PROGRESS {
            break;
        }
        if !merit.is_finite() || norm(&zeta) > 1e12 || mats_norm(&x) > 1e14 {
            status = SolveStatus::Infeasible;
            break;
        }

        // Schur complement per segment and the linking system.
        let mut xt = Vec::with_capacity(nb);
        let mut zt = Vec::with_capacity(nb);
        for b in 0..nb {
            let v = &red.blocks[b].v;
            xt.push(v * &x[b] * v.transpose());
            zt.push(v * &z[b] * v.transpose());
        }
        let mut hf: Vec<Option<Cholesky<f64, Dyn>>> = Vec::with_capacity(red.segs.len());
        for (si, rs) in red.segs.iter().enumerate() {
            if rs.nz == 0 {
                hf.push(None);
                continue;
            }
            let h = red.schur_segment(si, &xt, &zt);
            let ch = factor_schur(h)?;
            hf.push(Some(ch));
        }
        let kenv = red.assemble_k(|si, cs| hf[si].as_ref().map_or_else(|| cs * 0.0, |ch| ch.solve(cs)));
        let fac = Factors {
            h: hf,
            k: EnvelopeCholesky::factor(kenv, 1e-14),
        };
        let res = Residuals { rp, re, rd };

        // Predictor.
        let rc_aff: Mats = x.iter().map(|m| -m).collect();
        let (_, _, ds_a, dx_a) = direction(red, &fac, &res, &x, &z, &rc_aff);
        let ap = step_to_boundary(&sc, &ds_a).min(1.0);
        let ad = step_to_boundary(&xc, &dx_a).min(1.0);
        let mu_aff = (0..nb)
            .map(|b| (&x[b] + &dx_a[b] * ad).dot(&(&s[b] + &ds_a[b] * ap)))
            .sum::<f64>()
            / n_cone;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let rc: Mats = (0..nb)
            .map(|b| &z[b] * (sigma * mu) - &x[b] - sym(&dx_a[b] * &ds_a[b] * &z[b]))
            .collect();
        let (dz, dnu, ds, dx) = direction(red, &fac, &res, &x, &z, &rc);
        let ap = step_to_boundary(&sc, &ds);
        let ad = step_to_boundary(&xc, &dx);
        let gamma = 0.9 + 0.09 * ap.min(ad).min(1.0);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);

        for i in 0..red.nz {
            zeta[i] += ap * dz[i];
        }
        for b in 0..nb {
            s[b] = sym(&s[b] + &ds[b] * ap);
            x[b] = sym(&x[b] + &dx[b] * ad);
        }
        for (n, d) in nu.iter_mut().zip(&dnu) {
            *n += ad * d;
        }
        if ap.max(ad) < 1e-8 {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    let gap = best.as_ref().map_or(f64::NAN, |b| b.2);
    if status != SolveStatus::Optimal {
        if let Some((_, z, _)) = best {
            zeta = z;
        }
    }
    Ok((zeta, trace, status, gap))
}

/// Cholesky of a Schur block, with a growing diagonal shift only when the
/// plain factorization fails.
fn factor_schur(h: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(h.clone()) {
        return Ok(ch);
    }
    let dmax = h.diagonal().iter().fold(0.0f64, |m, v| m.max(*v)).max(1e-300);
    let mut shift = 1e-15 * dmax;
    while shift <= 1e-8 * dmax {
        let mut hs = h.clone();
        for i in 0..hs.nrows() {
            hs[(i, i)] += shift;
        }
        if let Some(ch) = Cholesky::new(hs) {
            return Ok(ch);
        }
        shift *= 10.0;
    }
    Err(Error::NumericalBreakdown("Schur complement is not definite".into()))
}

fn step_to_boundary(ch: &[Cholesky<f64, Dyn>], dm: &[DMatrix<f64>]) -> f64 {
    ch.iter().zip(dm).map(|(c, d)| max_step(c, d)).fold(f64::INFINITY, f64::min)
}

/// Solves `H dz - C' dnu = g`, `C dz = r` with the factored blocks.
fn solve_kkt(red: &Reduced, fac: &Factors, g: &[f64], r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = fac.solve_h(red, g);
    let ch = red.apply_c(&h);
    let rhs: Vec<f64> = r.iter().zip(&ch).map(|(a, b)| a - b).collect();
    let dnu = fac.k.solve(&rhs);
    let corr = fac.solve_h(red, &red.apply_ct(&dnu));
    let dz = h.iter().zip(&corr).map(|(a, b)| a + b).collect();
    (dz, dnu)
}

/// Newton direction for a given complementarity target `rc`.
fn direction(
    red: &Reduced,
    fac: &Factors,
    res: &Residuals,
    x: &[DMatrix<f64>],
    z: &[DMatrix<f64>],
    rc: &[DMatrix<f64>],
) -> (Vec<f64>, Vec<f64>, Mats, Mats) {
    let nb = x.len();
    let hkm = |m: &DMatrix<f64>, b: usize| sym(&x[b] * m * &z[b]);
    let inner: Mats = (0..nb).map(|b| &rc[b] - hkm(&res.rp[b], b)).collect();
    let at = red.apply_at(&inner);
    let g: Vec<f64> = at.iter().zip(&res.rd).map(|(a, r)| a - r).collect();
    let (dz, dnu) = solve_kkt(red, fac, &g, &res.re);

    // The Schur blocks lose accuracy as mu -> 0; the factored system serves
    // as a preconditioner for GMRES on the exact operator.
    let nz = red.nz;
    let op = |v: &[f64]| -> Vec<f64> {
        let (vz, vn) = v.split_at(nz);
        let av = red.apply_a(vz);
        let hv = red.apply_at(&(0..nb).map(|b| hkm(&av[b], b)).collect::<Vec<_>>());
        let ctn = red.apply_ct(vn);
        let mut out: Vec<f64> = (0..nz).map(|i| hv[i] - ctn[i]).collect();
        out.extend(red.apply_c(vz));
        out
    };
    let prec = |v: &[f64]| -> Vec<f64> {
        let (a, b) = solve_kkt(red, fac, &v[..nz], &v[nz..]);
        let mut out = a;
        out.extend(b);
        out
    };
    let mut rhs = g.clone();
    rhs.extend_from_slice(&res.re);
    let mut sol = dz;
    sol.extend(dnu);
    gmres_refine(&op, &prec, &rhs, &mut sol, GMRES_DIM, 1e-14);
    let dnu = sol.split_off(nz);
    let dz = sol;

    let adz = red.apply_a(&dz);
    let ds: Mats = (0..nb).map(|b| &adz[b] + &res.rp[b]).collect();
    let dx: Mats = (0..nb).map(|b| &rc[b] - hkm(&ds[b], b)).collect();
    (dz, dnu, ds, dx)
}

/// Improves `x` for `op(x) = b` by right-preconditioned GMRES started from
/// the current residual, stopping at relative residual `rtol`.
fn gmres_refine<F, P>(op: &F, prec: &P, b: &[f64], x: &mut [f64], max_dim: usize, rtol: f64)
where
    F: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let ax = op(x);
    let r0: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    let beta = norm(&r0);
    let target = rtol * norm(b).max(f64::MIN_POSITIVE);
    if beta <= target || !beta.is_finite() {
        return;
    }
    let mut vs: Vec<Vec<f64>> = vec![r0.iter().map(|v| v / beta).collect()];
    let mut zs: Vec<Vec<f64>> = Vec::new();
    // Hessenberg columns after Givens rotations, plus the rotations.
    let mut hcols: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut gvec = vec![beta];
    for j in 0..max_dim {
        let zj = prec(&vs[j]);
        let mut w = op(&zj);
        zs.push(zj);
        let mut h = vec![0.0; j + 2];
        for _ in 0..2 {
            for (i, v) in vs.iter().enumerate() {
                let c = dot(&w, v);
                h[i] += c;
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
            }
        }
        h[j + 1] = norm(&w);
        for (i, &(c, s)) in rot.iter().enumerate() {
            let (a, bb) = (h[i], h[i + 1]);
            h[i] = c * a + s * bb;
            h[i + 1] = -s * a + c * bb;
        }
        let (a, bb) = (h[j], h[j + 1]);
        let rr = a.hypot(bb);
        let (c, s) = if rr == 0.0 { (1.0, 0.0) } else { (a / rr, bb / rr) };
        h[j] = rr;
        h[j + 1] = 0.0;
        rot.push((c, s));
        let gj = gvec[j];
        gvec[j] = c * gj;
        gvec.push(-s * gj);
        let hnext = norm(&w);
        hcols.push(h);
        let resid = gvec[j + 1].abs();
        if resid <= target || hnext == 0.0 || j + 1 == max_dim {
            break;
        }
        vs.push(w.iter().map(|v| v / hnext).collect());
    }
    // Back substitution on the triangular system.
    let m = hcols.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = gvec[i];
        for k in i + 1..m {
            acc -= hcols[k][i] * y[k];
        }
        y[i] = if hcols[i][i] != 0.0 { acc / hcols[i][i] } else { 0.0 };
    }
    let mut dx = vec![0.0; x.len()];
    for (yi, z) in y.iter().zip(&zs) {
        dx.iter_mut().zip(z).for_each(|(a, b)| *a += yi * b);
    }
    // Keep the update only if it actually lowers the true residual.
    let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
    let at = op(&trial);
    let rt = norm(&b.iter().zip(&at).map(|(a, c)| a - c).collect::<Vec<_>>());
    if rt < beta {
        x.copy_from_slice(&trial);
    }
}
