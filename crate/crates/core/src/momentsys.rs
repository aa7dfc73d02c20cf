//! Monomial bases, truncated moment vectors and the linear maps producing
//! moment and localizing matrices.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::polyalg::{MultiIndex, Polynomial, VarId};

/// All monomials in `vars` of degree at most `max_degree`, graded-lex sorted.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    vars: Vec<VarId>,
    max_degree: u32,
    monos: Vec<MultiIndex>,
    index_of: HashMap<MultiIndex, usize>,
}

impl MonomialBasis {
    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    pub fn monomial_at(&self, i: usize) -> &MultiIndex {
        &self.monos[i]
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monos
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.index_of.get(alpha).copied()
    }

    /// Number of leading monomials with degree at most `deg`.
    pub fn count_up_to(&self, deg: u32) -> usize {
        self.monos.partition_point(|m| m.degree() <= deg)
    }

    fn position(&self, alpha: &MultiIndex) -> Result<usize> {
        self.index_of(alpha)
            .ok_or_else(|| Error::OutOfBasis(alpha.to_string()))
    }

    /// Sparse row `(position, coefficient)` with `row . y = L_y(p)`.
    pub fn riesz_row(&self, p: &Polynomial) -> Result<Vec<(usize, f64)>> {
        p.terms()
            .map(|(alpha, c)| Ok((self.position(alpha)?, c)))
            .collect()
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

pub fn enumerate_basis(vars: &[VarId], max_degree: u32) -> MonomialBasis {
    let mut vars = vars.to_vec();
    vars.sort_unstable();
    vars.dedup();
    let mut monos = vec![MultiIndex::one()];
    // Degree-by-degree: multiply degree-(k-1) monomials by variables no
    // smaller than their largest variable, which yields each monomial once.
    let mut frontier: Vec<(MultiIndex, usize)> = vec![(MultiIndex::one(), 0)];
    for _ in 0..max_degree {
        let mut next = Vec::new();
        for (m, start) in &frontier {
            for (vi, &v) in vars.iter().enumerate().skip(*start) {
                next.push((m.mul(&MultiIndex::var(v)), vi));
            }
        }
        next.sort_by(|a, b| a.0.cmp(&b.0));
        monos.extend(next.iter().map(|(m, _)| m.clone()));
        frontier = next;
    }
    let index_of = monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
    MonomialBasis {
        vars,
        max_degree,
        monos,
        index_of,
    }
}

/// Truncated moment sequence over a basis.
#[derive(Clone, Debug)]
pub struct MomentVector {
    pub basis: MonomialBasis,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn new(basis: MonomialBasis, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::LengthMismatch {
                expected: basis.len(),
                got: values.len(),
            });
        }
        Ok(Self { basis, values })
    }

    /// Moments of `mass * delta_point`, with `value(id)` the coordinates.
    pub fn dirac(basis: MonomialBasis, mass: f64, value: impl Fn(VarId) -> f64) -> Self {
        let values = basis.monomials().iter().map(|m| mass * m.eval(&value)).collect();
        Self { basis, values }
    }

    pub fn mass(&self) -> f64 {
        self.values[0]
    }
}

pub fn riesz(y: &MomentVector, p: &Polynomial) -> Result<f64> {
    Ok(y.basis
        .riesz_row(p)?
        .into_iter()
        .map(|(i, c)| c * y.values[i])
        .sum())
}

/// Symmetric matrix whose entries are linear forms in a moment vector.
#[derive(Clone, Debug)]
pub struct LinearMatrixMap {
    pub rows: Vec<MultiIndex>,
    /// Row-major `dim x dim` sparse linear forms `(moment position, coefficient)`.
    pub entries: Vec<Vec<(usize, f64)>>,
}

impl LinearMatrixMap {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &[(usize, f64)] {
        &self.entries[i * self.dim() + j]
    }

    pub fn apply(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            self.entry(i, j).iter().map(|&(p, c)| c * y[p]).sum()
        })
    }

    /// Largest moment degree referenced, given the basis it reads from.
    pub fn max_referenced_degree(&self, basis: &MonomialBasis) -> u32 {
        self.entries
            .iter()
            .flatten()
            .map(|&(p, _)| basis.monomial_at(p).degree())
            .max()
            .unwrap_or(0)
    }

    /// For each moment position, its coefficient pattern `(i, j, c)` with
    /// `i <= j` in the upper triangle.
    pub fn coefficient_matrices(&self, n_moments: usize) -> Vec<Vec<(usize, usize, f64)>> {
        let n = self.dim();
        let mut out = vec![Vec::new(); n_moments];
        for i in 0..n {
            for j in i..n {
                for &(p, c) in self.entry(i, j) {
                    out[p].push((i, j, c));
                }
            }
        }
        out
    }
}

/// Moment matrix `[y_{a+b}]` over monomials of degree at most `k`.
pub fn moment_matrix_map(basis: &MonomialBasis, k: u32) -> Result<LinearMatrixMap> {
    localizing_matrix_map(basis, k, &Polynomial::constant(1.0))
}

/// Localizing matrix `[L_y(g x^a x^b)]` over monomials of degree at most `k_loc`.
pub fn localizing_matrix_map(
    basis: &MonomialBasis,
    k_loc: u32,
    g: &Polynomial,
) -> Result<LinearMatrixMap> {
    let need = 2 * k_loc + g.degree();
    if need > basis.max_degree() {
        return Err(Error::OutOfBasis(format!(
            "localizer needs degree {need}, basis has {}",
            basis.max_degree()
        )));
    }
    let rows: Vec<MultiIndex> = basis.monomials()[..basis.count_up_to(k_loc)].to_vec();
    let n = rows.len();
    let mut entries = vec![Vec::new(); n * n];
    for i in 0..n {
        for j in i..n {
            let ab = rows[i].mul(&rows[j]);
            let form = basis.riesz_row(&g.shift(&ab))?;
            entries[j * n + i] = form.clone();
            entries[i * n + j] = form;
        }
    }
    Ok(LinearMatrixMap { rows, entries })
}
