//! Polynomials graded by homogeneous degree and the left-invariant calculus on them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{dilate_exact, multiply_exact, CarnotGroup};
use crate::poly::{MultiIndex, Poly};
use crate::scalar::Scalar;

/// Homogeneous norm `|J|_G = sum d_i j_i`.
pub fn hom_degree(j: &MultiIndex, g: &CarnotGroup) -> Result<u32> {
    Error::check_dim(g.dim(), j.len())?;
    Ok(j.weighted(g.degrees()))
}

/// All `J` with `|J|_G <= k`, by ascending `|J|_G` and then descending lexicographic order.
///
/// On the first Heisenberg group with `k = 2`:
/// `(0,0,0) (1,0,0) (0,1,0) (2,0,0) (1,1,0) (0,2,0) (0,0,1)`.
pub fn basis_indices(g: &CarnotGroup, k: u32) -> Vec<MultiIndex> {
    let n = g.dim();
    let d = g.degrees();
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    fn rec(i: usize, left: u32, d: &[u32], cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if i == d.len() {
            out.push(MultiIndex(cur.clone()));
            return;
        }
        for e in 0..=left / d[i] {
            cur[i] = e;
            rec(i + 1, left - e * d[i], d, cur, out);
        }
        cur[i] = 0;
    }
    rec(0, k, d, &mut cur, &mut out);
    out.sort_by(|a, b| a.weighted(d).cmp(&b.weighted(d)).then_with(|| b.cmp(a)));
    out
}

/// `dim P_k`.
pub fn basis_dimension(g: &CarnotGroup, k: u32) -> usize {
    basis_indices(g, k).len()
}

/// Coordinates in which the monomials of an [`HPolynomial`] are written.
#[derive(Clone, Debug, PartialEq)]
pub enum Frame<S> {
    /// Monomials `x^J`.
    Absolute,
    /// Monomials `y^J` with `y = delta_{1/r}(base^{-1} x)`; `r = 1` is the plain translated frame.
    Translated { base: Vec<S>, r: S },
}

/// A polynomial on the group together with the frame of its monomials.
#[derive(Clone, Debug, PartialEq)]
pub struct HPolynomial<S> {
    pub poly: Poly<S>,
    pub frame: Frame<S>,
}

impl<S: Scalar> HPolynomial<S> {
    pub fn absolute(poly: Poly<S>) -> Self {
        HPolynomial {
            poly,
            frame: Frame::Absolute,
        }
    }

    pub fn translated(poly: Poly<S>, base: Vec<S>, r: S) -> Self {
        HPolynomial {
            poly,
            frame: Frame::Translated { base, r },
        }
    }

    pub fn nvars(&self) -> usize {
        self.poly.nvars()
    }

    /// Largest `|J|_G` over nonzero terms; frames preserve it.
    pub fn degree(&self, g: &CarnotGroup) -> Option<u32> {
        self.poly.max_weighted_degree(g.degrees())
    }

    pub fn is_homogeneous(&self, g: &CarnotGroup) -> bool {
        match self.poly.max_weighted_degree(g.degrees()) {
            None => true,
            Some(d) => self.poly.is_homogeneous_of(g.degrees(), d),
        }
    }

    pub fn evaluate(&self, x: &[S], g: &CarnotGroup) -> Result<S> {
        Error::check_dim(g.dim(), x.len())?;
        Error::check_dim(g.dim(), self.nvars())?;
        match &self.frame {
            Frame::Absolute => Ok(self.poly.eval(x)),
            Frame::Translated { base, r } => {
                let inv: Vec<S> = base.iter().map(|v| -v.clone()).collect();
                let y = multiply_exact(g, &inv, x);
                let y = dilate_exact(g, &(S::one() / r.clone()), &y);
                Ok(self.poly.eval(&y))
            }
        }
    }

    /// Rewrite in the absolute frame.
    pub fn expand(&self, g: &CarnotGroup) -> Poly<S> {
        match &self.frame {
            Frame::Absolute => self.poly.clone(),
            Frame::Translated { base, r } => {
                let inv: Vec<S> = base.iter().map(|v| -v.clone()).collect();
                let tr = g.left_translation::<S>(&inv);
                let rinv = S::one() / r.clone();
                let subs: Vec<Poly<S>> = tr
                    .iter()
                    .zip(g.degrees())
                    .map(|(p, &d)| p.scale(&rinv.pow_u32(d)))
                    .collect();
                self.poly.compose(&subs)
            }
        }
    }

    pub fn to_absolute(&self, g: &CarnotGroup) -> Self {
        HPolynomial::absolute(self.expand(g))
    }
}

/// Monomials `y^J / J!` spanning `P_k` in the frame translated to `x0`.
pub fn basis<S: Scalar>(g: &CarnotGroup, k: u32, x0: &[S]) -> Vec<HPolynomial<S>> {
    basis_indices(g, k)
        .into_iter()
        .map(|j| {
            let c = S::one() / S::from_i64(j.factorial() as i64);
            HPolynomial::translated(Poly::monomial(j, c), x0.to_vec(), S::one())
        })
        .collect()
}

/// `X_i P` for an absolute-frame polynomial.
pub fn apply_field<S: Scalar>(p: &Poly<S>, i: usize, fields: &[Vec<Poly<S>>]) -> Poly<S> {
    let mut out = Poly::zero(p.nvars());
    for (j, coeff) in fields[i].iter().enumerate() {
        if coeff.is_zero() {
            continue;
        }
        let dp = p.derivative(j);
        if !dp.is_zero() {
            out = out.add(&coeff.mul(&dp));
        }
    }
    out
}

/// `X_{w_1} X_{w_2} ... X_{w_m} P`; the rightmost letter acts first.
pub fn apply_word_poly<S: Scalar>(p: &Poly<S>, word: &[usize], fields: &[Vec<Poly<S>>]) -> Poly<S> {
    let mut cur = p.clone();
    for &i in word.iter().rev() {
        if cur.is_zero() {
            break;
        }
        cur = apply_field(&cur, i, fields);
    }
    cur
}

pub fn apply_xi<S: Scalar>(p: &HPolynomial<S>, i: usize, g: &CarnotGroup) -> HPolynomial<S> {
    HPolynomial::absolute(apply_field(&p.expand(g), i, &g.fields_as::<S>()))
}

/// `X^I P = X_1^{i_1} ... X_N^{i_N} P`.
pub fn apply_x_multi<S: Scalar>(p: &HPolynomial<S>, idx: &MultiIndex, g: &CarnotGroup) -> HPolynomial<S> {
    apply_word(p, &idx.word(), g)
}

pub fn apply_word<S: Scalar>(p: &HPolynomial<S>, word: &[usize], g: &CarnotGroup) -> HPolynomial<S> {
    HPolynomial::absolute(apply_word_poly(&p.expand(g), word, &g.fields_as::<S>()))
}

/// `S(y) = P(x0 delta_r y)` as an absolute-frame polynomial in `y`.
pub fn left_translate_compose<S: Scalar>(
    p: &HPolynomial<S>,
    x0: &[S],
    r: &S,
    g: &CarnotGroup,
) -> Result<HPolynomial<S>> {
    if !(r.to_f64() > 0.0) {
        return Err(Error::NonPositiveScale(r.to_f64()));
    }
    Error::check_dim(g.dim(), x0.len())?;
    let n = g.dim();
    let scaled: Vec<Poly<S>> = (0..n)
        .map(|i| Poly::var(n, i).scale(&r.pow_u32(g.degrees()[i])))
        .collect();
    let subs: Vec<Poly<S>> = g.left_translation::<S>(x0).iter().map(|t| t.compose(&scaled)).collect();
    Ok(HPolynomial::absolute(p.expand(g).compose(&subs)))
}

/// Linear differential operator `sum_J Q_J(x) d^J` with polynomial coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffOperator<S> {
    nvars: usize,
    terms: BTreeMap<MultiIndex, Poly<S>>,
}

impl<S: Scalar> DiffOperator<S> {
    pub fn identity(n: usize) -> Self {
        DiffOperator {
            nvars: n,
            terms: BTreeMap::from([(MultiIndex::zeros(n), Poly::one(n))]),
        }
    }

    /// Euclidean partial `d^J`.
    pub fn partial(j: MultiIndex) -> Self {
        let n = j.len();
        DiffOperator {
            nvars: n,
            terms: BTreeMap::from([(j, Poly::one(n))]),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Poly<S>)> {
        self.terms.iter()
    }

    fn add_term(&mut self, j: MultiIndex, q: Poly<S>) {
        if q.is_zero() {
            return;
        }
        let e = self.terms.entry(j).or_insert_with(|| Poly::zero(self.nvars));
        *e = e.add(&q);
        let zero = e.is_zero();
        if zero {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    /// `X o D` for the vector field with coefficients `field`.
    pub fn compose_field(&self, field: &[Poly<S>]) -> Self {
        let mut out = DiffOperator {
            nvars: self.nvars,
            terms: BTreeMap::new(),
        };
        for (j, q) in &self.terms {
            for (m, a) in field.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                out.add_term(j.clone(), a.mul(&q.derivative(m)));
                out.add_term(j.plus_unit(m), a.mul(q));
            }
        }
        out
    }

    /// Operator form of `X_{w_1} ... X_{w_m}`.
    pub fn of_word(g: &CarnotGroup, word: &[usize]) -> Self {
        let fields = g.fields_as::<S>();
        let mut op = DiffOperator::identity(g.dim());
        for &i in word.iter().rev() {
            op = op.compose_field(&fields[i]);
        }
        op
    }

    pub fn of_multi_index(g: &CarnotGroup, idx: &MultiIndex) -> Self {
        Self::of_word(g, &idx.word())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (j, q) in &other.terms {
            out.add_term(j.clone(), q.scale(&-S::one()));
        }
        out
    }

    pub fn apply(&self, p: &Poly<S>) -> Poly<S> {
        let mut out = Poly::zero(p.nvars());
        for (j, q) in &self.terms {
            let dp = p.partial(j);
            if !dp.is_zero() {
                out = out.add(&q.mul(&dp));
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FrameLiteral {
    Named(String),
    Translated { base: Vec<f64>, r: f64 },
}

#[derive(Serialize, Deserialize)]
struct PolyLiteral {
    frame: FrameLiteral,
    terms: BTreeMap<String, f64>,
}

impl HPolynomial<f64> {
    /// Parse `{"frame": "absolute" | {"base": [..], "r": 1.0}, "terms": {"(j1,...,jN)": c}}`.
    pub fn from_literal(text: &str, n: usize) -> Result<Self> {
        let lit: PolyLiteral = serde_json::from_str(text)?;
        let frame = match lit.frame {
            FrameLiteral::Named(s) if s == "absolute" => Frame::Absolute,
            FrameLiteral::Named(s) => return Err(Error::Parse(format!("unknown frame `{s}`"))),
            FrameLiteral::Translated { base, r } => {
                Error::check_dim(n, base.len())?;
                if !(r > 0.0) {
                    return Err(Error::NonPositiveScale(r));
                }
                Frame::Translated { base, r }
            }
        };
        let mut terms = Vec::new();
        for (key, c) in lit.terms {
            let j: MultiIndex = key.parse()?;
            Error::check_dim(n, j.len())?;
            terms.push((j, c));
        }
        Ok(HPolynomial {
            poly: Poly::from_terms(n, terms),
            frame,
        })
    }

    pub fn to_literal(&self) -> String {
        let frame = match &self.frame {
            Frame::Absolute => FrameLiteral::Named("absolute".into()),
            Frame::Translated { base, r } => FrameLiteral::Translated {
                base: base.clone(),
                r: *r,
            },
        };
        let terms = self.poly.terms().map(|(j, c)| (j.to_string(), *c)).collect();
        serde_json::to_string(&PolyLiteral { frame, terms }).expect("literal serializes")
    }
}
