//! Reduction of an [`SdpProblem`] shared by both solvers.
//!
//! Equalities local to one segment are eliminated exactly, so each segment is
//! parametrized as `y = y0 + N zeta`. Each PSD block is restricted to the
//! complement of the null space shared by its whole affine range (facial
//! reduction). Equalities linking segments are mapped to `zeta` space,
//! normalized, reordered for a small profile, and purged of dependent rows.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::eigh::eigh;
use super::envelope::{reverse_cuthill_mckee, Envelope, EnvelopeCholesky};
use super::SdpProblem;
use crate::error::{Error, Result};

const DEP_TOL: f64 = 1e-10;
const FACE_TOL: f64 = 1e-10;
const CANCEL_TOL: f64 = 1e-12;

pub(crate) struct Cell {
    pub i: usize,
    pub j: usize,
    pub terms: Vec<(usize, f64)>,
}

pub(crate) struct RSeg {
    pub offset: usize,
    pub len: usize,
    pub zoff: usize,
    pub nz: usize,
    pub y0: Vec<f64>,
    /// Columns of `N`: `(local moment position, value)`.
    pub ncols: Vec<Vec<(usize, f64)>>,
    /// Rows of `N`: `(local zeta index, value)`.
    pub nrows: Vec<Vec<(usize, f64)>>,
    /// Local moment position carried by each zeta coordinate.
    pub free: Vec<usize>,
    pub blocks: Vec<usize>,
}

pub(crate) struct RBlock {
    pub dim: usize,
    /// Orthonormal basis of the retained face, `dim x rank`.
    pub v: DMatrix<f64>,
    pub cells: Vec<Cell>,
    /// Upper-triangle cells `i <= j` of the symmetrized map.
    pub ucells: Vec<Cell>,
    /// Constant part `V^T F(y0) V`.
    pub b0: DMatrix<f64>,
}

impl RBlock {
    pub fn rank(&self) -> usize {
        self.v.ncols()
    }
}

/// Sparse row `(coeffs, rhs)`.
type Row = (Vec<(usize, f64)>, f64);

/// A linking equality split by segment: `(segment, [(local zeta, coef)])`.
pub(crate) struct CRow {
    pub parts: Vec<(usize, Vec<(usize, f64)>)>,
}

pub(crate) struct Reduced {
    pub segs: Vec<RSeg>,
    pub blocks: Vec<RBlock>,
    pub nz: usize,
    pub c: Vec<f64>,
    pub c0: f64,
    pub rows: Vec<CRow>,
    pub e: Vec<f64>,
    /// Per segment, the `(row, part)` pairs touching it.
    pub seg_rows: Vec<Vec<(usize, usize)>>,
    /// Envelope row starts for matrices shaped like `C M C^T`.
    pub first: Vec<usize>,
    pub cct: EnvelopeCholesky,
}

impl Reduced {
    pub fn new(prob: &SdpProblem) -> Result<Self> {
        let nseg = prob.segments.len();
        let mut local: Vec<Vec<Row>> = vec![Vec::new(); nseg];
        let mut cross = Vec::new();
        for row in &prob.equalities {
            let mut segs: Vec<usize> = row.coeffs.iter().map(|&(p, _)| prob.segment_of(p)).collect();
            segs.sort_unstable();
            segs.dedup();
            match segs.len() {
                0 => {
                    if row.rhs.abs() > 1e-9 {
                        return Err(Error::MalformedProblem("empty equality with nonzero rhs".into()));
                    }
                }
                1 => {
                    let off = prob.segments[segs[0]].offset;
                    let coeffs = row.coeffs.iter().map(|&(p, c)| (p - off, c)).collect();
                    local[segs[0]].push((coeffs, row.rhs));
                }
                _ => cross.push(row),
            }
        }

        let mut segs = Vec::with_capacity(nseg);
        let mut zoff = 0;
        for (s, seg) in prob.segments.iter().enumerate() {
            let rs = eliminate(seg.offset, seg.len, zoff, &local[s])?;
            zoff += rs.nz;
            segs.push(rs);
        }
        let nz = zoff;

        let mut blocks = Vec::with_capacity(prob.blocks.len());
        for blk in &prob.blocks {
            let rb = reduce_block(&blk.map.entries, blk.map.dim(), &segs[blk.segment])?;
            if rb.rank() > 0 {
                segs[blk.segment].blocks.push(blocks.len());
                blocks.push(rb);
            }
        }

        let mut c = vec![0.0; nz];
        let mut c0 = 0.0;
        for &(p, v) in &prob.objective {
            let s = prob.segment_of(p);
            let rs = &segs[s];
            let r = p - rs.offset;
            c0 += v * rs.y0[r];
            for &(j, nv) in &rs.nrows[r] {
                c[rs.zoff + j] += v * nv;
            }
        }

        let mut rows = Vec::new();
        let mut e = Vec::new();
        for row in cross {
            // (value, sum of absolute contributions) per zeta entry, so that
            // entries lost to cancellation are recognized as zero.
            let mut acc: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
            let mut rhs = row.rhs;
            let mut rhs_mag = row.rhs.abs();
            for &(p, v) in &row.coeffs {
                let s = prob.segment_of(p);
                let rs = &segs[s];
                let r = p - rs.offset;
                rhs -= v * rs.y0[r];
                rhs_mag += (v * rs.y0[r]).abs();
                for &(j, nv) in &rs.nrows[r] {
                    let a = acc.entry((s, j)).or_insert((0.0, 0.0));
                    a.0 += v * nv;
                    a.1 += (v * nv).abs();
                }
            }
            let mut parts: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
            let mut norm2 = 0.0;
            for ((s, j), (v, mag)) in acc {
                if v.abs() <= CANCEL_TOL * mag {
                    continue;
                }
                norm2 += v * v;
                match parts.last_mut() {
                    Some((ls, list)) if *ls == s => list.push((j, v)),
                    _ => parts.push((s, vec![(j, v)])),
                }
            }
            if parts.is_empty() {
                if rhs.abs() > 1e-9 * (1.0 + rhs_mag) {
                    return Err(Error::MalformedProblem("inconsistent linking equalities".into()));
                }
                continue;
            }
            let inv = 1.0 / norm2.sqrt();
            for (_, list) in &mut parts {
                list.iter_mut().for_each(|(_, v)| *v *= inv);
            }
            rows.push(CRow { parts });
            e.push(rhs * inv);
        }

        // Order rows for a small profile, then drop dependent ones.
        let (rows, e) = order_rows(rows, e, nseg);
        let (seg_rows, first) = row_structure(&rows, nseg);
        let cct = factor_cct(&rows, &seg_rows, &first, &segs);
        let keep: Vec<bool> = cct.dropped().iter().map(|d| !d).collect();
        let (rows, e, seg_rows, first, cct) = if keep.iter().all(|&k| k) {
            (rows, e, seg_rows, first, cct)
        } else {
            let mut rows2 = Vec::new();
            let mut e2 = Vec::new();
            for ((r, v), k) in rows.into_iter().zip(e).zip(&keep) {
                if *k {
                    rows2.push(r);
                    e2.push(v);
                }
            }
            let (seg_rows, first) = row_structure(&rows2, nseg);
            let cct = factor_cct(&rows2, &seg_rows, &first, &segs);
            (rows2, e2, seg_rows, first, cct)
        };

        Ok(Self {
            segs,
            blocks,
            nz,
            c,
            c0,
            rows,
            e,
            seg_rows,
            first,
            cct,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Total order of the PSD cone after reduction.
    pub fn cone_order(&self) -> usize {
        self.blocks.iter().map(RBlock::rank).sum()
    }

    /// Linear part `N_s zeta_s` of one segment.
    pub fn seg_lin(&self, s: usize, zeta: &[f64]) -> Vec<f64> {
        let rs = &self.segs[s];
        let mut y = vec![0.0; rs.len];
        for (j, col) in rs.ncols.iter().enumerate() {
            let z = zeta[rs.zoff + j];
            if z != 0.0 {
                for &(r, v) in col {
                    y[r] += v * z;
                }
            }
        }
        y
    }

    pub fn lift(&self, zeta: &[f64]) -> Vec<f64> {
        let mut y = Vec::new();
        for (s, rs) in self.segs.iter().enumerate() {
            let lin = self.seg_lin(s, zeta);
            y.extend(lin.iter().zip(&rs.y0).map(|(a, b)| a + b));
        }
        y
    }

    /// Block matrix `F(y)` in original coordinates for a segment-local `y`.
    pub fn full_matrix(&self, b: usize, y: &[f64]) -> DMatrix<f64> {
        let blk = &self.blocks[b];
        let mut m = DMatrix::zeros(blk.dim, blk.dim);
        for cell in &blk.cells {
            m[(cell.i, cell.j)] = cell.terms.iter().map(|&(p, c)| c * y[p]).sum();
        }
        m
    }

    /// `V^T F(y) V`.
    pub fn reduced_matrix(&self, b: usize, y: &[f64]) -> DMatrix<f64> {
        let v = &self.blocks[b].v;
        let m = v.transpose() * self.full_matrix(b, y) * v;
        (&m + m.transpose()) * 0.5
    }

    /// Linear map `zeta -> [V^T F(N zeta) V]_b`.
    pub fn apply_a(&self, zeta: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.blocks.iter().map(|b| DMatrix::zeros(b.rank(), b.rank())).collect();
        for (s, rs) in self.segs.iter().enumerate() {
            if rs.blocks.is_empty() {
                continue;
            }
            let y = self.seg_lin(s, zeta);
            for &b in &rs.blocks {
                out[b] = self.reduced_matrix(b, &y);
            }
        }
        out
    }

    /// Adjoint of [`Reduced::apply_a`].
    pub fn apply_at(&self, ms: &[DMatrix<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.nz];
        for rs in &self.segs {
            if rs.blocks.is_empty() || rs.nz == 0 {
                continue;
            }
            let mut raw = vec![0.0; rs.len];
            for &b in &rs.blocks {
                let blk = &self.blocks[b];
                let full = &blk.v * &ms[b] * blk.v.transpose();
                for cell in &blk.cells {
                    let w = full[(cell.i, cell.j)];
                    for &(p, c) in &cell.terms {
                        raw[p] += c * w;
                    }
                }
            }
            for (j, col) in rs.ncols.iter().enumerate() {
                out[rs.zoff + j] = col.iter().map(|&(r, v)| v * raw[r]).sum();
            }
        }
        out
    }

    pub fn apply_c(&self, zeta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                row.parts
                    .iter()
                    .map(|(s, list)| {
                        let z = self.segs[*s].zoff;
                        list.iter().map(|&(j, v)| v * zeta[z + j]).sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    pub fn apply_ct(&self, nu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nz];
        for (row, &w) in self.rows.iter().zip(nu) {
            for (s, list) in &row.parts {
                let z = self.segs[*s].zoff;
                for &(j, v) in list {
                    out[z + j] += v * w;
                }
            }
        }
        out
    }

    /// Moves `zeta` onto `C zeta = e` along the least-norm correction.
    pub fn polish(&self, zeta: &mut [f64]) {
        if self.rows.is_empty() {
            return;
        }
        let cz = self.apply_c(zeta);
        let r: Vec<f64> = self.e.iter().zip(cz).map(|(a, b)| a - b).collect();
        let w = self.cct.solve(&r);
        for (z, d) in zeta.iter_mut().zip(self.apply_ct(&w)) {
            *z += d;
        }
    }

    /// Schur complement `H_s[i][j] = sum_b tr(G_i X_b G_j Z_b)` of one
    /// segment, where `xt`/`zt` hold `V X V^T` and `V Z V^T` per block.
    pub fn schur_segment(&self, s: usize, xt: &[DMatrix<f64>], zt: &[DMatrix<f64>]) -> DMatrix<f64> {
        let rs = &self.segs[s];
        let m = rs.len;
        let mut hf = vec![0.0; m * m];
        for &b in &rs.blocks {
            let blk = &self.blocks[b];
            let d = blk.dim;
            let x = |r: usize, c: usize| xt[b].as_slice()[r + c * d];
            let z = |r: usize, c: usize| zt[b].as_slice()[r + c * d];
            // With S_ij = E_ij + E_ji (E_ii on the diagonal), accumulate
            // tr(S_c1 X S_c2 Z) over unordered cell pairs.
            for (n1, c1) in blk.ucells.iter().enumerate() {
                let (i, j) = (c1.i, c1.j);
                for c2 in &blk.ucells[n1..] {
                    let (k, l) = (c2.i, c2.j);
                    let mut w = x(j, k) * z(l, i);
                    if k != l {
                        w += x(j, l) * z(k, i);
                    }
                    if i != j {
                        w += x(i, k) * z(l, j);
                        if k != l {
                            w += x(i, l) * z(k, j);
                        }
                    }
                    if w == 0.0 {
                        continue;
                    }
                    let same = std::ptr::eq(c1, c2);
                    for &(a, ca) in &c1.terms {
                        for &(bb, cb) in &c2.terms {
                            let v = ca * cb * w;
                            hf[a * m + bb] += v;
                            if !same {
                                hf[bb * m + a] += v;
                            }
                        }
                    }
                }
            }
        }
        let nz = rs.nz;
        // T = H_full N, then N^T T.
        let mut t = vec![0.0; m * nz];
        for (j, col) in rs.ncols.iter().enumerate() {
            let tj = &mut t[j * m..(j + 1) * m];
            for &(r, v) in col {
                let hr = &hf[r * m..(r + 1) * m];
                for (a, h) in tj.iter_mut().zip(hr) {
                    *a += v * h;
                }
            }
        }
        let mut h = DMatrix::zeros(nz, nz);
        for i in 0..nz {
            for j in 0..=i {
                let tj = &t[j * m..(j + 1) * m];
                let v: f64 = rs.ncols[i].iter().map(|&(r, nv)| nv * tj[r]).sum();
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    /// Assembles `C M^{-1} C^T` given per-segment solves with `M_s`.
    pub fn assemble_k<F>(&self, solve_seg: F) -> Envelope
    where
        F: Fn(usize, &DMatrix<f64>) -> DMatrix<f64>,
    {
        let mut k = Envelope::zeros(self.first.clone());
        for (s, list) in self.seg_rows.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let rs = &self.segs[s];
            let mut cs = DMatrix::zeros(rs.nz, list.len());
            for (col, &(r, part)) in list.iter().enumerate() {
                for &(j, v) in &self.rows[r].parts[part].1 {
                    cs[(j, col)] = v;
                }
            }
            let w = solve_seg(s, &cs);
            let g = cs.transpose() * w;
            for (a, &(ra, _)) in list.iter().enumerate() {
                for (b, &(rb, _)) in list.iter().enumerate().take(a + 1) {
                    let (hi, lo) = if ra >= rb { (ra, rb) } else { (rb, ra) };
                    k.add(hi, lo, 0.5 * (g[(a, b)] + g[(b, a)]));
                }
            }
        }
        k
    }

    pub fn min_block_eigenvalue(&self, zeta: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for (s, rs) in self.segs.iter().enumerate() {
            if rs.blocks.is_empty() {
                continue;
            }
            let y: Vec<f64> = self.seg_lin(s, zeta).iter().zip(&rs.y0).map(|(a, b)| a + b).collect();
            for &b in &rs.blocks {
                let m = self.full_matrix(b, &y);
                let m = (&m + m.transpose()) * 0.5;
                let l = m.symmetric_eigenvalues().min();
                worst = worst.min(l);
            }
        }
        if worst.is_finite() {
            worst
        } else {
            0.0
        }
    }
}

/// Gauss-Jordan elimination of one segment's local equalities.
fn eliminate(offset: usize, len: usize, zoff: usize, rows: &[(Vec<(usize, f64)>, f64)]) -> Result<RSeg> {
    let mut piv: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    for (coeffs, rhs) in rows {
        let mut a = vec![0.0; len];
        for &(p, c) in coeffs {
            a[p] += c;
        }
        let mut b = *rhs;
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        for (pc, prow, prhs) in &piv {
            let f = a[*pc];
            if f != 0.0 {
                for (x, y) in a.iter_mut().zip(prow) {
                    *x -= f * y;
                }
                b -= f * prhs;
            }
        }
        let mx = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if mx <= DEP_TOL * scale {
            if b.abs() > 1e-7 * (1.0 + rhs.abs()) {
                return Err(Error::MalformedProblem("inconsistent local equalities".into()));
            }
            continue;
        }
        let p = (0..len).rev().find(|&j| a[j].abs() >= 0.1 * mx).expect("pivot exists");
        let inv = 1.0 / a[p];
        a.iter_mut().for_each(|v| *v *= inv);
        b *= inv;
        for v in a.iter_mut() {
            if v.abs() <= 1e-15 {
                *v = 0.0;
            }
        }
        a[p] = 1.0;
        for (_, prow, prhs) in piv.iter_mut() {
            let f = prow[p];
            if f != 0.0 {
                for (x, y) in prow.iter_mut().zip(&a) {
                    *x -= f * y;
                }
                prow[p] = 0.0;
                *prhs -= f * b;
            }
        }
        piv.push((p, a, b));
    }
    let mut is_piv = vec![false; len];
    let mut y0 = vec![0.0; len];
    for (p, _, b) in &piv {
        is_piv[*p] = true;
        y0[*p] = *b;
    }
    let free: Vec<usize> = (0..len).filter(|&j| !is_piv[j]).collect();
    let mut ncols = Vec::with_capacity(free.len());
    let mut nrows = vec![Vec::new(); len];
    for (j, &f) in free.iter().enumerate() {
        let mut col = vec![(f, 1.0)];
        for (p, prow, _) in &piv {
            if prow[f].abs() > 1e-15 {
                col.push((*p, -prow[f]));
            }
        }
        col.sort_by_key(|&(r, _)| r);
        for &(r, v) in &col {
            nrows[r].push((j, v));
        }
        ncols.push(col);
    }
    Ok(RSeg {
        offset,
        len,
        zoff,
        nz: free.len(),
        y0,
        ncols,
        nrows,
        free,
        blocks: Vec::new(),
    })
}

fn reduce_block(entries: &[Vec<(usize, f64)>], dim: usize, rs: &RSeg) -> Result<RBlock> {
    let mut cells = Vec::new();
    let mut pos_cells: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rs.len];
    for i in 0..dim {
        for j in 0..dim {
            let terms: Vec<(usize, f64)> = entries[i * dim + j].iter().copied().filter(|t| t.1 != 0.0).collect();
            if terms.is_empty() {
                continue;
            }
            for &(p, c) in &terms {
                pos_cells[p].push((cells.len(), c));
            }
            cells.push(Cell { i, j, terms });
        }
    }
    let eval = |y: &[(usize, f64)]| {
        let mut m = DMatrix::zeros(dim, dim);
        for &(r, v) in y {
            for &(ci, c) in &pos_cells[r] {
                let cell = &cells[ci];
                m[(cell.i, cell.j)] += c * v;
            }
        }
        m
    };
    let y0: Vec<(usize, f64)> = rs.y0.iter().copied().enumerate().filter(|t| t.1 != 0.0).collect();
    let f0 = eval(&y0);
    let mut w = &f0 * &f0;
    for col in &rs.ncols {
        let g = eval(col);
        if g.iter().any(|v| *v != 0.0) {
            w += &g * &g;
        }
    }
    let (vals, vecs) = eigh(&w)?;
    let top = vals.iter().fold(0.0f64, |m, v| m.max(*v));
    let keep: Vec<usize> = (0..dim).filter(|&i| top > 0.0 && vals[i] > FACE_TOL * top).collect();
    let v = DMatrix::from_fn(dim, keep.len(), |r, c| vecs[(r, keep[c])]);
    let b0 = v.transpose() * &f0 * &v;
    let b0 = (&b0 + b0.transpose()) * 0.5;
    let mut upper: BTreeMap<(usize, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for cell in &cells {
        let key = (cell.i.min(cell.j), cell.i.max(cell.j));
        let w = if cell.i == cell.j { 1.0 } else { 0.5 };
        let acc = upper.entry(key).or_default();
        for &(p, c) in &cell.terms {
            *acc.entry(p).or_insert(0.0) += w * c;
        }
    }
    let ucells = upper
        .into_iter()
        .filter_map(|((i, j), t)| {
            let terms: Vec<(usize, f64)> = t.into_iter().filter(|e| e.1 != 0.0).collect();
            (!terms.is_empty()).then_some(Cell { i, j, terms })
        })
        .collect();
    Ok(RBlock {
        dim,
        v,
        cells,
        ucells,
        b0,
    })
}

fn row_segments(row: &CRow) -> impl Iterator<Item = usize> + '_ {
    row.parts.iter().map(|(s, _)| *s)
}

fn order_rows(rows: Vec<CRow>, e: Vec<f64>, nseg: usize) -> (Vec<CRow>, Vec<f64>) {
    let n = rows.len();
    let mut by_seg: Vec<Vec<usize>> = vec![Vec::new(); nseg];
    for (r, row) in rows.iter().enumerate() {
        for s in row_segments(row) {
            by_seg[s].push(r);
        }
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for list in &by_seg {
        for &a in list {
            for &b in list {
                if a != b {
                    adj[a].push(b);
                }
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let perm = reverse_cuthill_mckee(&adj);
    let mut slots: Vec<Option<(CRow, f64)>> = rows.into_iter().zip(e).map(Some).collect();
    let mut rows2 = Vec::with_capacity(n);
    let mut e2 = Vec::with_capacity(n);
    for &p in &perm {
        let (r, v) = slots[p].take().expect("permutation visits each row once");
        rows2.push(r);
        e2.push(v);
    }
    (rows2, e2)
}

fn row_structure(rows: &[CRow], nseg: usize) -> (Vec<Vec<(usize, usize)>>, Vec<usize>) {
    let mut seg_rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nseg];
    for (r, row) in rows.iter().enumerate() {
        for (part, (s, _)) in row.parts.iter().enumerate() {
            seg_rows[*s].push((r, part));
        }
    }
    let min_row: Vec<usize> = seg_rows
        .iter()
        .map(|l| l.iter().map(|&(r, _)| r).min().unwrap_or(usize::MAX))
        .collect();
    let first = rows
        .iter()
        .enumerate()
        .map(|(r, row)| row_segments(row).map(|s| min_row[s]).min().unwrap_or(r).min(r))
        .collect();
    (seg_rows, first)
}

fn factor_cct(rows: &[CRow], seg_rows: &[Vec<(usize, usize)>], first: &[usize], segs: &[RSeg]) -> EnvelopeCholesky {
    let mut k = Envelope::zeros(first.to_vec());
    for (s, list) in seg_rows.iter().enumerate() {
        let mut dense = vec![0.0; segs[s].nz];
        for (a, &(ra, pa)) in list.iter().enumerate() {
            for &(j, v) in &rows[ra].parts[pa].1 {
                dense[j] = v;
            }
            for &(rb, pb) in &list[..=a] {
                let dot: f64 = rows[rb].parts[pb].1.iter().map(|&(j, v)| v * dense[j]).sum();
                if dot != 0.0 {
                    let (hi, lo) = if ra >= rb { (ra, rb) } else { (rb, ra) };
                    k.add(hi, lo, dot);
                }
            }
            for &(j, _) in &rows[ra].parts[pa].1 {
                dense[j] = 0.0;
            }
        }
    }
    EnvelopeCholesky::factor(k, DEP_TOL)
}
