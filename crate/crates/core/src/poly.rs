//! Sparse multivariate polynomials over a [`Scalar`] field.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exponent vector `(j_1, ..., j_N)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Standard norm `|J| = sum j_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Weighted norm `sum w_i j_i`.
    pub fn weighted(&self, weights: &[u32]) -> u32 {
        self.0.iter().zip(weights).map(|(j, w)| j * w).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&j| j == 0)
    }

    /// `J! = prod j_i!` as an exact integer.
    pub fn factorial(&self) -> u64 {
        self.0
            .iter()
            .map(|&j| (1..=j as u64).product::<u64>())
            .product()
    }

    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn plus_unit(&self, i: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[i] += 1;
        MultiIndex(v)
    }

    pub fn checked_minus_unit(&self, i: usize) -> Option<MultiIndex> {
        if self.0[i] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[i] -= 1;
        Some(MultiIndex(v))
    }

    /// Expand into the ordered word `1^{j_1} 2^{j_2} ... N^{j_N}` (0-based letters).
    pub fn word(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &j)| std::iter::repeat_n(i, j as usize))
            .collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (n, j) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .trim()
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("multi-index `{s}` must look like (j1,...,jN)")))?;
        body.split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::Parse(format!("multi-index `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(MultiIndex)
    }
}

/// Sparse polynomial in `nvars` variables. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<S> {
    nvars: usize,
    terms: BTreeMap<MultiIndex, S>,
}

impl<S: Scalar> Poly<S> {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: S) -> Self {
        Self::monomial(MultiIndex::zeros(nvars), c)
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, S::one())
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        Self::monomial(MultiIndex::unit(nvars, i), S::one())
    }

    pub fn monomial(exps: MultiIndex, c: S) -> Self {
        let nvars = exps.len();
        let mut p = Self::zero(nvars);
        p.add_term(exps, c);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (MultiIndex, S)>) -> Self {
        let mut p = Self::zero(nvars);
        for (j, c) in terms {
            debug_assert_eq!(j.len(), nvars);
            p.add_term(j, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &S)> {
        self.terms.iter()
    }

    pub fn coeff(&self, j: &MultiIndex) -> S {
        self.terms.get(j).cloned().unwrap_or_else(S::zero)
    }

    pub fn constant_term(&self) -> S {
        self.coeff(&MultiIndex::zeros(self.nvars))
    }

    pub fn add_term(&mut self, j: MultiIndex, c: S) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&j) {
            Some(existing) => {
                let sum = existing.clone() + c;
                if sum.is_zero() {
                    self.terms.remove(&j);
                } else {
                    *existing = sum;
                }
            }
            None => {
                self.terms.insert(j, c);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (j, c) in &other.terms {
            out.add_term(j.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (j, c) in &other.terms {
            out.add_term(j.clone(), -c.clone());
        }
        out
    }

    pub fn scale(&self, s: &S) -> Self {
        if s.is_zero() {
            return Self::zero(self.nvars);
        }
        Self::from_terms(
            self.nvars,
            self.terms.iter().map(|(j, c)| (j.clone(), c.clone() * s.clone())),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (ja, ca) in &self.terms {
            for (jb, cb) in &other.terms {
                out.add_term(ja.plus(jb), ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one(self.nvars);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Self {
        Self::from_terms(
            self.nvars,
            self.terms.iter().filter_map(|(j, c)| {
                let e = j.0[i];
                j.checked_minus_unit(i)
                    .map(|jm| (jm, c.clone() * S::from_i64(e as i64)))
            }),
        )
    }

    /// Iterated partial derivative `(d/dx)^J`.
    pub fn partial(&self, j: &MultiIndex) -> Self {
        let mut out = self.clone();
        for (i, &e) in j.0.iter().enumerate() {
            for _ in 0..e {
                out = out.derivative(i);
                if out.is_zero() {
                    return out;
                }
            }
        }
        out
    }

    pub fn eval(&self, x: &[S]) -> S {
        let mut acc = S::zero();
        for (j, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &e) in x.iter().zip(&j.0) {
                if e > 0 {
                    t = t * xi.pow_u32(e);
                }
            }
            acc = acc + t;
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(j, c)| {
                j.0.iter()
                    .zip(x)
                    .fold(c.to_f64(), |t, (&e, xi)| if e > 0 { t * xi.powi(e as i32) } else { t })
            })
            .sum()
    }

    /// Substitute variable `i` by `subs[i]`; all substitutes share one variable set.
    pub fn compose(&self, subs: &[Poly<S>]) -> Self {
        assert_eq!(subs.len(), self.nvars, "compose: substitution arity");
        let m = subs.first().map(|p| p.nvars).unwrap_or(0);
        let mut cache: Vec<Vec<Poly<S>>> = subs.iter().map(|s| vec![Poly::one(s.nvars)]).collect();
        let mut out = Poly::zero(m);
        for (j, c) in &self.terms {
            let mut t = Poly::constant(m, c.clone());
            for (i, &e) in j.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while cache[i].len() <= e as usize {
                    let next = cache[i].last().unwrap().mul(&subs[i]);
                    cache[i].push(next);
                }
                t = t.mul(&cache[i][e as usize]);
            }
            out = out.add(&t);
        }
        out
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Poly<T> {
        Poly::from_terms(self.nvars, self.terms.iter().map(|(j, c)| (j.clone(), f(c))))
    }

    /// Largest weighted degree among nonzero terms, `None` for the zero polynomial.
    pub fn max_weighted_degree(&self, weights: &[u32]) -> Option<u32> {
        self.terms.keys().map(|j| j.weighted(weights)).max()
    }

    pub fn min_weighted_degree(&self, weights: &[u32]) -> Option<u32> {
        self.terms.keys().map(|j| j.weighted(weights)).min()
    }

    /// True when every term has weighted degree `d` (the zero polynomial qualifies).
    pub fn is_homogeneous_of(&self, weights: &[u32], d: u32) -> bool {
        self.terms.keys().all(|j| j.weighted(weights) == d)
    }

    /// Terms whose weighted degree is exactly `d`.
    pub fn homogeneous_part(&self, weights: &[u32], d: u32) -> Self {
        Self::from_terms(
            self.nvars,
            self.terms
                .iter()
                .filter(|(j, _)| j.weighted(weights) == d)
                .map(|(j, c)| (j.clone(), c.clone())),
        )
    }

    /// Drop variables `n..` after checking they do not occur.
    pub fn truncate_vars(&self, n: usize) -> Self {
        Poly::from_terms(
            n,
            self.terms.iter().map(|(j, c)| {
                debug_assert!(j.0[n..].iter().all(|&e| e == 0));
                (MultiIndex(j.0[..n].to_vec()), c.clone())
            }),
        )
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.abs_f64()).fold(0.0, f64::max)
    }
}

impl<S: Scalar + fmt::Display> fmt::Display for Poly<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (j, c)) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (i, &e) in j.0.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

/// Flat evaluation table for a double-precision polynomial.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn new<S: Scalar>(p: &Poly<S>) -> Self {
        let terms = p
            .terms()
            .map(|(j, c)| {
                let factors = j
                    .0
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| (i, e as i32))
                    .collect();
                (c.to_f64(), factors)
            })
            .collect();
        CompiledPoly { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(i, e) in factors {
                t *= if e == 1 { x[i] } else { x[i].powi(e) };
            }
            acc += t;
        }
        acc
    }

    /// Evaluate a polynomial in `(a, b)` where variables `0..a.len()` read from `a`.
    pub fn eval2(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut acc = 0.0;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(i, e) in factors {
                let v = if i < n { a[i] } else { b[i - n] };
                t *= if e == 1 { v } else { v.powi(e) };
            }
            acc += t;
        }
        acc
    }
}
