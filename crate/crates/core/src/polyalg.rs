//! Sparse multivariate polynomials with real coefficients.
//!
//! Variables are integer ids. Monomials are kept in graded-lexicographic
//! order: lower total degree first, and within one degree the monomial with
//! the larger exponent on the smallest variable id comes first
//! (`1, x0, x1, x0^2, x0*x1, x1^2, ...`). Every basis enumeration in the
//! crate relies on this order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub type VarId = u32;

/// Exponent vector stored sparsely as `(variable, exponent)` pairs sorted by
/// variable id, with no zero exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Vec<(VarId, u32)>,
}

impl MultiIndex {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(id: VarId) -> Self {
        Self { exps: vec![(id, 1)] }
    }

    /// Builds a multi-index from arbitrary pairs; repeated variables are
    /// merged and zero exponents dropped.
    pub fn from_pairs<I: IntoIterator<Item = (VarId, u32)>>(pairs: I) -> Self {
        let mut map: BTreeMap<VarId, u32> = BTreeMap::new();
        for (v, e) in pairs {
            *map.entry(v).or_insert(0) += e;
        }
        Self {
            exps: map.into_iter().filter(|&(_, e)| e > 0).collect(),
        }
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&(_, e)| e).sum()
    }

    pub fn exponent(&self, var: VarId) -> u32 {
        self.exps
            .binary_search_by_key(&var, |&(v, _)| v)
            .map(|i| self.exps[i].1)
            .unwrap_or(0)
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn pairs(&self) -> &[(VarId, u32)] {
        &self.exps
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.exps.iter().map(|&(v, _)| v)
    }

    /// True when every variable of the monomial belongs to `vars`.
    pub fn supported_on(&self, vars: &[VarId]) -> bool {
        self.exps.iter().all(|(v, _)| vars.contains(v))
    }

    pub fn mul(&self, other: &MultiIndex) -> MultiIndex {
        let mut out = Vec::with_capacity(self.exps.len() + other.exps.len());
        let (mut i, mut j) = (0, 0);
        while i < self.exps.len() && j < other.exps.len() {
            let (a, b) = (self.exps[i], other.exps[j]);
            match a.0.cmp(&b.0) {
                Ordering::Less => {
                    out.push(a);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a.0, a.1 + b.1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.exps[i..]);
        out.extend_from_slice(&other.exps[j..]);
        MultiIndex { exps: out }
    }

    pub fn eval(&self, value: impl Fn(VarId) -> f64) -> f64 {
        self.exps
            .iter()
            .map(|&(v, e)| value(v).powi(e as i32))
            .product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        // Same degree: walk the dense exponent vectors from the smallest
        // variable id; a larger exponent sorts first.
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.exps.get(i), other.exps.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Less,
                (None, Some(_)) => return Ordering::Greater,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    if va < vb {
                        return Ordering::Less;
                    }
                    if vb < va {
                        return Ordering::Greater;
                    }
                    if ea != eb {
                        return eb.cmp(&ea);
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exps.is_empty() {
            return write!(f, "1");
        }
        for (k, &(v, e)) in self.exps.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            if e == 1 {
                write!(f, "x{v}")?;
            } else {
                write!(f, "x{v}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Sparse polynomial: map from monomial to nonzero coefficient.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(MultiIndex::one(), c)
    }

    pub fn var(id: VarId) -> Self {
        Self::monomial(MultiIndex::var(id), 1.0)
    }

    pub fn monomial(alpha: MultiIndex, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(alpha, c);
        }
        Self { terms }
    }

    /// Linear form `c0 + sum_i coeffs[i].1 * x_{coeffs[i].0}`.
    pub fn linear(c0: f64, coeffs: &[(VarId, f64)]) -> Self {
        let mut p = Self::constant(c0);
        for &(v, c) in coeffs {
            p.add_term(MultiIndex::var(v), c);
        }
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (MultiIndex, f64)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (a, c) in terms {
            p.add_term(a, c);
        }
        p
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(alpha) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Degree of the polynomial; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, &v)| (k, v))
    }

    pub fn support_vars(&self) -> Vec<VarId> {
        let mut vars: Vec<VarId> = self.terms.keys().flat_map(|a| a.vars()).collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(k, &v)| (k.clone(), v * s)).collect(),
        }
    }

    pub fn square(&self) -> Polynomial {
        self * self
    }

    /// Multiplies by a single monomial.
    pub fn shift(&self, alpha: &MultiIndex) -> Polynomial {
        Self {
            terms: self.terms.iter().map(|(k, &v)| (k.mul(alpha), v)).collect(),
        }
    }

    /// Drops terms whose coefficient vanished; arithmetic already keeps the
    /// canonical form, so this only matters for hand-built term maps.
    pub fn normalized(mut self) -> Polynomial {
        self.terms.retain(|_, v| *v != 0.0);
        self
    }

    pub fn eval(&self, point: &HashMap<VarId, f64>) -> Result<f64> {
        for v in self.support_vars() {
            if !point.contains_key(&v) {
                return Err(Error::MissingAssignment(v));
            }
        }
        Ok(self.eval_with(|v| point[&v]))
    }

    /// Evaluates with `point[id]` as the value of variable `id`.
    pub fn eval_slice(&self, point: &[f64]) -> Result<f64> {
        if let Some(&v) = self.support_vars().last() {
            if v as usize >= point.len() {
                return Err(Error::MissingAssignment(v));
            }
        }
        Ok(self.eval_with(|v| point[v as usize]))
    }

    pub fn eval_with(&self, value: impl Fn(VarId) -> f64) -> f64 {
        self.terms.iter().map(|(a, &c)| c * a.eval(&value)).sum()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (alpha, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            if alpha.is_one() {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*{alpha}")?;
            }
        }
        Ok(())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (a, &c) in &rhs.terms {
            out.add_term(a.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (a, &c) in &rhs.terms {
            out.add_term(a.clone(), -c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (a, &ca) in &self.terms {
            for (b, &cb) in &rhs.terms {
                *acc.entry(a.mul(b)).or_insert(0.0) += ca * cb;
            }
        }
        Polynomial { terms: acc }.normalized()
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

pub fn poly_add(a: &Polynomial, b: &Polynomial) -> Polynomial {
    a + b
}

pub fn poly_mul(a: &Polynomial, b: &Polynomial) -> Polynomial {
    a * b
}

pub fn poly_square(a: &Polynomial) -> Polynomial {
    a.square()
}

pub fn poly_eval(p: &Polynomial, point: &HashMap<VarId, f64>) -> Result<f64> {
    p.eval(point)
}

/// Human-readable names for variable ids.
#[derive(Clone, Debug, Default)]
pub struct VarRegistry {
    names: Vec<String>,
}

impl VarRegistry {
    pub fn with_len(n: usize) -> Self {
        Self {
            names: (0..n).map(|i| format!("v{i}")).collect(),
        }
    }

    pub fn set(&mut self, id: VarId, name: impl Into<String>) {
        let i = id as usize;
        if i >= self.names.len() {
            self.names.resize_with(i + 1, String::new);
        }
        self.names[i] = name.into();
    }

    pub fn name(&self, id: VarId) -> &str {
        self.names.get(id as usize).map(String::as_str).unwrap_or("?")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: VarId) -> Polynomial {
        Polynomial::var(i)
    }

    fn c(v: f64) -> Polynomial {
        Polynomial::constant(v)
    }

    #[test]
    fn add_cancels_and_collects() {
        let a = &c(1.0) + &x(0).scale(2.0);
        assert_eq!(&a + &x(0).scale(-2.0), c(1.0));
        assert_eq!(&a + &Polynomial::zero(), a);
        assert_eq!(&x(0) + &x(0), x(0).scale(2.0));
    }

    #[test]
    fn mul_examples() {
        let one_plus = &c(1.0) + &x(0);
        let one_minus = &c(1.0) - &x(0);
        let expect = &c(1.0) - &x(0).square();
        assert_eq!(&one_plus * &one_minus, expect);
        assert_eq!(&one_plus * &c(1.0), one_plus);
        assert_eq!(&x(1) * &x(2), Polynomial::monomial(MultiIndex::from_pairs([(1, 1), (2, 1)]), 1.0));
    }

    #[test]
    fn square_examples() {
        let p = &x(0) - &c(1.0);
        assert_eq!(p.square().coeff(&MultiIndex::from_pairs([(0, 2)])), 1.0);
        assert_eq!(p.square().coeff(&MultiIndex::var(0)), -2.0);
        assert_eq!(p.square().coeff(&MultiIndex::one()), 1.0);
        assert_eq!(p.square().n_terms(), 3);
        assert!(Polynomial::zero().square().is_zero());
        let s = (&x(1) + &x(2)).square();
        assert_eq!(s.coeff(&MultiIndex::from_pairs([(1, 1), (2, 1)])), 2.0);
        assert_eq!(s.coeff(&MultiIndex::from_pairs([(1, 2)])), 1.0);
        assert_eq!(s.coeff(&MultiIndex::from_pairs([(2, 2)])), 1.0);
    }

    #[test]
    fn eval_examples() {
        let p = &c(1.0) - &x(0).square();
        let pt: HashMap<VarId, f64> = [(0, 1.0)].into_iter().collect();
        assert_eq!(p.eval(&pt).unwrap(), 0.0);
        let q = &x(1) * &x(2);
        let pt: HashMap<VarId, f64> = [(1, 2.0), (2, 3.0)].into_iter().collect();
        assert_eq!(q.eval(&pt).unwrap(), 6.0);
        assert_eq!(c(5.0).eval(&HashMap::new()).unwrap(), 5.0);
    }

    #[test]
    fn eval_reports_missing_variable() {
        let q = &x(1) * &x(2);
        let pt: HashMap<VarId, f64> = [(1, 2.0)].into_iter().collect();
        assert!(matches!(q.eval(&pt), Err(Error::MissingAssignment(2))));
        assert!(matches!(q.eval_slice(&[1.0, 2.0]), Err(Error::MissingAssignment(2))));
    }

    #[test]
    fn graded_lex_order() {
        let mut monos = [
            MultiIndex::from_pairs([(1, 2)]),
            MultiIndex::var(1),
            MultiIndex::from_pairs([(0, 1), (1, 1)]),
            MultiIndex::one(),
            MultiIndex::from_pairs([(0, 2)]),
            MultiIndex::var(0),
        ];
        monos.sort();
        let shown: Vec<String> = monos.iter().map(|m| m.to_string()).collect();
        assert_eq!(shown, ["1", "x0", "x1", "x0^2", "x0*x1", "x1^2"]);
    }

    #[test]
    fn display_golden() {
        let p = &(&c(3.0) + &Polynomial::monomial(MultiIndex::from_pairs([(0, 2), (3, 1)]), 1.5))
            + &x(2).scale(-2.0);
        assert_eq!(p.to_string(), "3 + -2*x2 + 1.5*x0^2*x3");
        assert_eq!(Polynomial::zero().to_string(), "0");
    }

    #[test]
    fn degree_and_support() {
        let p = &(&x(3) * &x(0).square()) + &c(2.0);
        assert_eq!(p.degree(), 3);
        assert_eq!(p.support_vars(), vec![0, 3]);
        assert_eq!(Polynomial::zero().degree(), 0);
    }
}
