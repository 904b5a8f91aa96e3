//! Carnot groups in exponential coordinates of the first kind.
//!
//! A group is given by its strata dimensions and the structure constants of an
//! adapted basis. After validation the group law is obtained once, symbolically,
//! from the Baker-Campbell-Hausdorff series in Dynkin's form truncated at the
//! step (exact for a nilpotent algebra), and compiled to an evaluation table.
//!
//! Convention: `exp(A) exp(B) = exp(A + B + [A, B]/2 + ...)`. On the first
//! Heisenberg group this gives
//! `(x, y, t)(x', y', t') = (x + x', y + y', t + t' + (x y' - y x')/2)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{CompiledPoly, Poly};
use crate::scalar::{rational_from_f64_exact, rationalize, Rational, Scalar};

const FLOAT_TOL: f64 = 1e-10;
const RATIONAL_MAX_DEN: i64 = 1_000_000;
// A few ulps: only inputs that are rationals up to representation error qualify.
const RATIONAL_TOL: f64 = 4.0 * f64::EPSILON;

/// A point of the group in exponential coordinates of the first kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn origin(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    /// Group inverse; first-kind coordinates make this a negation.
    pub fn inverse(&self) -> Point {
        Point(self.0.iter().map(|v| -v).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

/// JSON group description: `{"strata": [...], "brackets": [{"i":1,"j":2,"coeffs":{"3":1.0}}]}`.
///
/// Indices are 1-based, matching the adapted-basis labels `X_1, ..., X_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub strata: Vec<usize>,
    #[serde(default)]
    pub brackets: Vec<BracketSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketSpec {
    pub i: usize,
    pub j: usize,
    pub coeffs: BTreeMap<String, f64>,
}

impl GroupSpec {
    /// Built-in groups: `euclidean:n`, `heisenberg:n`, `engel`.
    pub fn builtin(key: &str) -> Result<GroupSpec> {
        let (name, arg) = match key.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (key, None),
        };
        let parse_n = |arg: Option<&str>| -> Result<usize> {
            let n = arg
                .ok_or_else(|| Error::InvalidGroup(format!("`{key}` needs a dimension, e.g. `{name}:1`")))?
                .parse::<usize>()
                .map_err(|e| Error::InvalidGroup(format!("`{key}`: {e}")))?;
            if n == 0 {
                return Err(Error::InvalidGroup(format!("`{key}`: dimension must be positive")));
            }
            Ok(n)
        };
        let one = |k: usize| BTreeMap::from([(k.to_string(), 1.0)]);
        match name {
            "euclidean" => Ok(GroupSpec {
                strata: vec![parse_n(arg)?],
                brackets: vec![],
            }),
            "heisenberg" => {
                let n = parse_n(arg)?;
                let brackets = (1..=n)
                    .map(|i| BracketSpec {
                        i,
                        j: n + i,
                        coeffs: one(2 * n + 1),
                    })
                    .collect();
                Ok(GroupSpec {
                    strata: vec![2 * n, 1],
                    brackets,
                })
            }
            "engel" => Ok(GroupSpec {
                strata: vec![2, 1, 1],
                brackets: vec![
                    BracketSpec {
                        i: 1,
                        j: 2,
                        coeffs: one(3),
                    },
                    BracketSpec {
                        i: 1,
                        j: 3,
                        coeffs: one(4),
                    },
                ],
            }),
            _ => Err(Error::InvalidGroup(format!("unknown built-in group `{key}`"))),
        }
    }
}

/// A validated stratified nilpotent Lie group.
///
/// Immutable after construction; every method is a pure function of its inputs.
#[derive(Clone, Debug)]
pub struct CarnotGroup {
    name: Option<String>,
    strata: Vec<usize>,
    degrees: Vec<u32>,
    exact: bool,
    /// Nonzero `c[i][j][k]` over all ordered pairs, 0-based.
    structure: Vec<(usize, usize, usize, Rational)>,
    structure_f64: Vec<f64>,
    /// `law[k](a, b)`: coordinate `k` of `a * b`, a polynomial in `2N` variables.
    law: Vec<Poly<Rational>>,
    law_f64: Vec<Poly<f64>>,
    law_compiled: Vec<CompiledPoly>,
    /// `fields[i][j]`: coefficient of `d/dx_j` in `X_i`.
    fields: Vec<Vec<Poly<Rational>>>,
}

/// Validate raw strata and structure constants and build the group.
pub fn validate_group(spec: &GroupSpec) -> Result<CarnotGroup> {
    CarnotGroup::from_spec(spec)
}

impl CarnotGroup {
    pub fn builtin(key: &str) -> Result<CarnotGroup> {
        let mut g = Self::from_spec(&GroupSpec::builtin(key)?)?;
        g.name = Some(key.to_string());
        Ok(g)
    }

    /// Resolve a group reference: a built-in key or a path to a JSON spec file.
    pub fn load(reference: &str) -> Result<CarnotGroup> {
        if let Ok(g) = Self::builtin(reference) {
            return Ok(g);
        }
        let text = std::fs::read_to_string(reference).map_err(|e| {
            Error::InvalidGroup(format!("`{reference}` is neither a built-in group nor a readable file: {e}"))
        })?;
        let spec: GroupSpec = serde_json::from_str(&text)?;
        let mut g = Self::from_spec(&spec)?;
        g.name = Some(reference.to_string());
        Ok(g)
    }

    pub fn from_spec(spec: &GroupSpec) -> Result<CarnotGroup> {
        let strata = spec.strata.clone();
        if strata.is_empty() || strata.contains(&0) {
            return Err(Error::InvalidGroup(
                "strata dimensions must be a nonempty list of positive integers".into(),
            ));
        }
        let n: usize = strata.iter().sum();
        let degrees: Vec<u32> = strata
            .iter()
            .enumerate()
            .flat_map(|(j, &m)| std::iter::repeat_n(j as u32 + 1, m))
            .collect();
        let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;

        let mut dense = vec![0.0; n * n * n];
        let mut set = vec![false; n * n * n];
        let mut write = |i: usize, j: usize, k: usize, v: f64| -> Result<()> {
            for (a, b, val) in [(i, j, v), (j, i, -v)] {
                let at = idx(a, b, k);
                if set[at] && (dense[at] - val).abs() > FLOAT_TOL {
                    return Err(Error::InvalidGroup(format!(
                        "conflicting values for [X{}, X{}] along X{}",
                        a + 1,
                        b + 1,
                        k + 1
                    )));
                }
                dense[at] = val;
                set[at] = true;
            }
            Ok(())
        };
        for b in &spec.brackets {
            if b.i == 0 || b.j == 0 || b.i > n || b.j > n {
                return Err(Error::InvalidGroup(format!(
                    "bracket indices ({}, {}) out of range 1..={n}",
                    b.i, b.j
                )));
            }
            for (kstr, &v) in &b.coeffs {
                let k: usize = kstr
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidGroup(format!("bracket coefficient key `{kstr}`: {e}")))?;
                if k == 0 || k > n {
                    return Err(Error::InvalidGroup(format!("coefficient index {k} out of range 1..={n}")));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidGroup(format!(
                        "non-finite coefficient in [X{}, X{}]",
                        b.i, b.j
                    )));
                }
                if b.i == b.j {
                    if v != 0.0 {
                        return Err(Error::InvalidGroup(format!("[X{0}, X{0}] must vanish", b.i)));
                    }
                    continue;
                }
                write(b.i - 1, b.j - 1, k - 1, v)?;
            }
        }

        // Rational recognition decides between exact and tolerance-based checks.
        let recognized: Vec<Option<Rational>> = dense
            .iter()
            .map(|&v| {
                if v == 0.0 {
                    Some(Rational::zero())
                } else {
                    rationalize(v, RATIONAL_MAX_DEN, RATIONAL_TOL)
                }
            })
            .collect();
        let exact = recognized.iter().all(Option::is_some);
        let dense_q: Vec<Rational> = if exact {
            recognized.into_iter().map(Option::unwrap).collect()
        } else {
            dense
                .iter()
                .map(|&v| rational_from_f64_exact(v).expect("finite"))
                .collect()
        };

        let is_nonzero = |at: usize| {
            if exact {
                !dense_q[at].is_zero()
            } else {
                dense[at].abs() > FLOAT_TOL
            }
        };

        // Grading.
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if is_nonzero(idx(i, j, k)) && degrees[k] != degrees[i] + degrees[j] {
                        return Err(Error::GradingViolation {
                            i: i + 1,
                            j: j + 1,
                            k: k + 1,
                        });
                    }
                }
            }
        }

        // Jacobi: [X_i,[X_j,X_l]] + [X_j,[X_l,X_i]] + [X_l,[X_i,X_j]] = 0.
        for i in 0..n {
            for j in i + 1..n {
                for l in j + 1..n {
                    for m in 0..n {
                        if exact {
                            let mut acc = Rational::zero();
                            for p in 0..n {
                                acc += &dense_q[idx(j, l, p)] * &dense_q[idx(i, p, m)]
                                    + &dense_q[idx(l, i, p)] * &dense_q[idx(j, p, m)]
                                    + &dense_q[idx(i, j, p)] * &dense_q[idx(l, p, m)];
                            }
                            if !acc.is_zero() {
                                return Err(Error::JacobiViolation {
                                    i: i + 1,
                                    j: j + 1,
                                    k: l + 1,
                                    residual: acc.to_f64(),
                                });
                            }
                        } else {
                            let mut acc = 0.0;
                            for p in 0..n {
                                acc += dense[idx(j, l, p)] * dense[idx(i, p, m)]
                                    + dense[idx(l, i, p)] * dense[idx(j, p, m)]
                                    + dense[idx(i, j, p)] * dense[idx(l, p, m)];
                            }
                            if acc.abs() > FLOAT_TOL {
                                return Err(Error::JacobiViolation {
                                    i: i + 1,
                                    j: j + 1,
                                    k: l + 1,
                                    residual: acc,
                                });
                            }
                        }
                    }
                }
            }
        }

        // Generation: [V_1, V_a] spans V_{a+1}.
        let offsets: Vec<usize> = std::iter::once(0)
            .chain(strata.iter().scan(0, |acc, &m| {
                *acc += m;
                Some(*acc)
            }))
            .collect();
        let range = |a: usize| offsets[a]..offsets[a + 1];
        for a in 1..strata.len() {
            let target = range(a);
            let mut rows_q = Vec::new();
            let mut rows_f = Vec::new();
            for i in range(0) {
                for j in range(a - 1) {
                    rows_q.push(target.clone().map(|k| dense_q[idx(i, j, k)].clone()).collect::<Vec<_>>());
                    rows_f.push(target.clone().map(|k| dense[idx(i, j, k)]).collect::<Vec<_>>());
                }
            }
            let rank = if exact { rank_exact(rows_q) } else { rank_float(rows_f, FLOAT_TOL) };
            if rank < strata[a] {
                return Err(Error::GenerationFailure {
                    stratum: a + 1,
                    rank,
                    expected: strata[a],
                });
            }
        }

        let mut structure = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let q = &dense_q[idx(i, j, k)];
                    if !q.is_zero() {
                        structure.push((i, j, k, q.clone()));
                    }
                }
            }
        }

        let law = bch_law(n, strata.len(), &structure);
        let law_f64: Vec<Poly<f64>> = law.iter().map(|p| p.map(|c| c.to_f64())).collect();
        let law_compiled = law_f64.iter().map(CompiledPoly::new).collect();
        let fields = vector_fields(n, &law);

        Ok(CarnotGroup {
            name: None,
            strata,
            degrees,
            exact,
            structure,
            structure_f64: dense,
            law,
            law_f64,
            law_compiled,
            fields,
        })
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Topological dimension `N`.
    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    pub fn step(&self) -> usize {
        self.strata.len()
    }

    pub fn strata_dims(&self) -> &[usize] {
        &self.strata
    }

    /// Homogeneities `d_1, ..., d_N`.
    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    /// Largest homogeneity `d_N` (equal to the step).
    pub fn max_degree(&self) -> u32 {
        *self.degrees.last().expect("nonempty group")
    }

    /// `h_j = m_1 + ... + m_j` (with `h_0 = 0`).
    pub fn h(&self, j: usize) -> usize {
        self.strata[..j].iter().sum()
    }

    /// Homogeneous dimension `Q = sum_i i * m_i`.
    pub fn homogeneous_dimension(&self) -> u32 {
        self.strata
            .iter()
            .enumerate()
            .map(|(i, &m)| (i as u32 + 1) * m as u32)
            .sum()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn is_abelian(&self) -> bool {
        self.structure.is_empty()
    }

    /// `c[i][j][k]` with 0-based indices.
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.dim();
        self.structure_f64[(i * n + j) * n + k]
    }

    pub fn structure_constants(&self) -> &[(usize, usize, usize, Rational)] {
        &self.structure
    }

    /// One-line summary, e.g. `N=3 s=2 Q=4 d=(1,1,2)`.
    pub fn summary(&self) -> String {
        let d: Vec<String> = self.degrees.iter().map(u32::to_string).collect();
        format!(
            "N={} s={} Q={} d=({})",
            self.dim(),
            self.step(),
            self.homogeneous_dimension(),
            d.join(",")
        )
    }

    pub fn multiply(&self, a: &[f64], b: &[f64]) -> Result<Point> {
        Error::check_dim(self.dim(), a.len())?;
        Error::check_dim(self.dim(), b.len())?;
        let mut out = vec![0.0; self.dim()];
        self.multiply_into(a, b, &mut out);
        Ok(Point(out))
    }

    /// Unchecked group product for hot loops.
    pub fn multiply_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for (o, law) in out.iter_mut().zip(&self.law_compiled) {
            *o = law.eval2(a, b);
        }
    }

    pub fn inverse(&self, a: &[f64]) -> Point {
        Point(a.iter().map(|v| -v).collect())
    }

    /// `a^{-1} b`, the displacement used by left-invariant distances.
    pub fn between(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        self.multiply_into(&neg, b, out);
    }

    pub fn dilate(&self, lambda: f64, x: &[f64]) -> Result<Point> {
        if !(lambda > 0.0) {
            return Err(Error::NonPositiveScale(lambda));
        }
        Error::check_dim(self.dim(), x.len())?;
        let mut out = x.to_vec();
        self.dilate_in_place(lambda, &mut out);
        Ok(Point(out))
    }

    pub fn dilate_in_place(&self, lambda: f64, x: &mut [f64]) {
        for (v, &d) in x.iter_mut().zip(&self.degrees) {
            *v *= lambda.powi(d as i32);
        }
    }

    /// `x * exp(t E_i)`, the flow of `X_i` through `x`.
    pub fn flow(&self, x: &[f64], i: usize, t: f64) -> Point {
        let mut e = vec![0.0; self.dim()];
        e[i] = t;
        let mut out = vec![0.0; self.dim()];
        self.multiply_into(x, &e, &mut out);
        Point(out)
    }

    /// Group law as polynomials in `(a_1..a_N, b_1..b_N)`.
    pub fn law(&self) -> &[Poly<Rational>] {
        &self.law
    }

    pub fn law_f64(&self) -> &[Poly<f64>] {
        &self.law_f64
    }

    pub fn law_as<S: Scalar>(&self) -> Vec<Poly<S>> {
        self.law.iter().map(|p| p.map(S::from_rational)).collect()
    }

    /// Polynomials in `y` (N variables) giving the coordinates of `x0 * y`.
    pub fn left_translation<S: Scalar>(&self, x0: &[S]) -> Vec<Poly<S>> {
        let n = self.dim();
        let subs: Vec<Poly<S>> = (0..2 * n)
            .map(|m| {
                if m < n {
                    Poly::constant(n, x0[m].clone())
                } else {
                    Poly::var(n, m - n)
                }
            })
            .collect();
        self.law_as::<S>().iter().map(|p| p.compose(&subs)).collect()
    }

    /// Same as [`left_translation`](Self::left_translation) from the cached double table.
    pub fn left_translation_f64(&self, x0: &[f64]) -> Vec<Poly<f64>> {
        let n = self.dim();
        let subs: Vec<Poly<f64>> = (0..2 * n)
            .map(|m| {
                if m < n {
                    Poly::constant(n, x0[m])
                } else {
                    Poly::var(n, m - n)
                }
            })
            .collect();
        self.law_f64.iter().map(|p| p.compose(&subs)).collect()
    }

    /// Left-invariant frame: `fields()[i][j]` is the coefficient of `d/dx_j` in `X_i`.
    pub fn left_invariant_fields(&self) -> &[Vec<Poly<Rational>>] {
        &self.fields
    }

    pub fn fields_as<S: Scalar>(&self) -> Vec<Vec<Poly<S>>> {
        self.fields
            .iter()
            .map(|row| row.iter().map(|p| p.map(S::from_rational)).collect())
            .collect()
    }

    /// Algebra bracket of coordinate vectors (coefficients may be polynomials).
    pub fn bracket<S: Scalar>(&self, u: &[Poly<S>], v: &[Poly<S>]) -> Vec<Poly<S>> {
        let structure: Vec<(usize, usize, usize, S)> = self
            .structure
            .iter()
            .map(|(i, j, k, c)| (*i, *j, *k, S::from_rational(c)))
            .collect();
        bracket_with(&structure, u, v)
    }
}

impl fmt::Display for CarnotGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary())
    }
}

impl FromStr for CarnotGroup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CarnotGroup::load(s)
    }
}

fn bracket_with<S: Scalar>(
    structure: &[(usize, usize, usize, S)],
    u: &[Poly<S>],
    v: &[Poly<S>],
) -> Vec<Poly<S>> {
    let m = u[0].nvars();
    let mut out = vec![Poly::zero(m); u.len()];
    for (i, j, k, c) in structure {
        if u[*i].is_zero() || v[*j].is_zero() {
            continue;
        }
        out[*k] = out[*k].add(&u[*i].mul(&v[*j]).scale(c));
    }
    out
}

/// Dynkin's form of the BCH series, truncated at words of length `step`.
fn bch_law(n: usize, step: usize, structure: &[(usize, usize, usize, Rational)]) -> Vec<Poly<Rational>> {
    let nv = 2 * n;
    let a: Vec<Poly<Rational>> = (0..n).map(|i| Poly::var(nv, i)).collect();
    let b: Vec<Poly<Rational>> = (0..n).map(|i| Poly::var(nv, n + i)).collect();
    let mut z: Vec<Poly<Rational>> = vec![Poly::zero(nv); n];

    // sequences of (r_i, s_i) with r_i + s_i >= 1 and total length <= step
    fn sequences(step: usize, prefix: &mut Vec<(usize, usize)>, used: usize, out: &mut Vec<Vec<(usize, usize)>>) {
        if !prefix.is_empty() {
            out.push(prefix.clone());
        }
        for len in 1..=(step - used) {
            for r in 0..=len {
                prefix.push((r, len - r));
                sequences(step, prefix, used + len, out);
                prefix.pop();
            }
        }
    }
    let mut seqs = Vec::new();
    sequences(step, &mut Vec::new(), 0, &mut seqs);

    let fact = |k: usize| -> u64 { (1..=k as u64).product() };
    for seq in seqs {
        let word: Vec<bool> = seq
            .iter()
            .flat_map(|&(r, s)| std::iter::repeat_n(true, r).chain(std::iter::repeat_n(false, s)))
            .collect();
        let len = word.len();
        if len >= 2 && word[len - 1] == word[len - 2] {
            continue;
        }
        let cnt = seq.len() as i64;
        let denom: u64 = seq.iter().map(|&(r, s)| fact(r) * fact(s)).product::<u64>() * (len as u64) * cnt as u64;
        let sign = if cnt % 2 == 1 { 1 } else { -1 };
        let coeff = Rational::new(sign.into(), (denom as i64).into());

        let letter = |is_a: bool| if is_a { &a } else { &b };
        let mut acc: Vec<Poly<Rational>> = letter(word[len - 1]).clone();
        for &w in word[..len - 1].iter().rev() {
            acc = bracket_with(structure, letter(w), &acc);
            if acc.iter().all(Poly::is_zero) {
                break;
            }
        }
        for (zk, ak) in z.iter_mut().zip(&acc) {
            if !ak.is_zero() {
                *zk = zk.add(&ak.scale(&coeff));
            }
        }
    }
    z
}

/// `X_i = sum_j dZ_j/db_i(a, 0) d/da_j`.
fn vector_fields(n: usize, law: &[Poly<Rational>]) -> Vec<Vec<Poly<Rational>>> {
    let subs: Vec<Poly<Rational>> = (0..2 * n)
        .map(|m| if m < n { Poly::var(n, m) } else { Poly::zero(n) })
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| law[j].derivative(n + i).compose(&subs))
                .collect()
        })
        .collect()
}

fn rank_exact(mut rows: Vec<Vec<Rational>>) -> usize {
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else {
            continue;
        };
        rows.swap(rank, piv);
        let pivot = rows[rank][c].clone();
        for r in 0..rows.len() {
            if r != rank && !rows[r][c].is_zero() {
                let f = &rows[r][c] / &pivot;
                for cc in c..cols {
                    let sub = &f * &rows[rank][cc];
                    rows[r][cc] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn rank_float(mut rows: Vec<Vec<f64>>, tol: f64) -> usize {
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    let mut rank = 0;
    for c in 0..cols {
        let piv = (rank..rows.len()).max_by(|&x, &y| rows[x][c].abs().total_cmp(&rows[y][c].abs()));
        let Some(piv) = piv else { break };
        if rows[piv][c].abs() <= tol {
            continue;
        }
        rows.swap(rank, piv);
        for r in 0..rows.len() {
            if r != rank {
                let f = rows[r][c] / rows[rank][c];
                for cc in c..cols {
                    rows[r][cc] -= f * rows[rank][cc];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Homogeneous degree of each term of a field coefficient must be `d_j - d_i`.
pub fn field_degree_defect(g: &CarnotGroup) -> Option<(usize, usize)> {
    let d = g.degrees();
    for (i, row) in g.left_invariant_fields().iter().enumerate() {
        for (j, coeff) in row.iter().enumerate() {
            let ok = if d[j] < d[i] {
                coeff.is_zero()
            } else {
                coeff.is_homogeneous_of(d, d[j] - d[i])
            };
            if !ok {
                return Some((i, j));
            }
        }
    }
    None
}

/// `X_i = d/dx_i + (terms in strictly higher strata)`.
pub fn field_leading_defect(g: &CarnotGroup) -> Option<(usize, usize)> {
    let n = g.dim();
    let d = g.degrees();
    let one = Poly::<Rational>::one(n);
    for (i, row) in g.left_invariant_fields().iter().enumerate() {
        for (j, coeff) in row.iter().enumerate() {
            let ok = if j == i {
                *coeff == one
            } else {
                coeff.is_zero() || d[j] > d[i]
            };
            if !ok {
                return Some((i, j));
            }
        }
    }
    None
}

/// Residual coefficients of `[X_i, X_j] - sum_k c_ijk X_k` as vector fields; empty when closed.
pub fn bracket_closure_defects(g: &CarnotGroup) -> Vec<(usize, usize)> {
    let n = g.dim();
    let f = g.left_invariant_fields();
    let mut bad = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                // [X, Y]_m = sum_l X_l d_l Y_m - Y_l d_l X_m
                let mut comm = Poly::<Rational>::zero(n);
                for l in 0..n {
                    comm = comm
                        .add(&f[i][l].mul(&f[j][m].derivative(l)))
                        .sub(&f[j][l].mul(&f[i][m].derivative(l)));
                }
                let mut expected = Poly::<Rational>::zero(n);
                for (a, b, k, c) in g.structure_constants() {
                    if *a == i && *b == j {
                        expected = expected.add(&f[*k][m].scale(c));
                    }
                }
                if comm != expected {
                    bad.push((i, j));
                }
            }
        }
    }
    bad.sort();
    bad.dedup();
    bad
}

/// Generic symbolic product `a * b` for exact arithmetic.
pub fn multiply_exact<S: Scalar>(g: &CarnotGroup, a: &[S], b: &[S]) -> Vec<S> {
    let ab: Vec<S> = a.iter().chain(b).cloned().collect();
    g.law_as::<S>().iter().map(|p| p.eval(&ab)).collect()
}

/// Exact dilation of a point given as scalars.
pub fn dilate_exact<S: Scalar>(g: &CarnotGroup, lambda: &S, x: &[S]) -> Vec<S> {
    x.iter()
        .zip(g.degrees())
        .map(|(v, &d)| v.clone() * lambda.pow_u32(d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational;

    fn h1() -> CarnotGroup {
        CarnotGroup::builtin("heisenberg:1").unwrap()
    }

    #[test]
    fn abelian_plane_is_step_one() {
        let g = CarnotGroup::builtin("euclidean:2").unwrap();
        assert_eq!(g.step(), 1);
        assert_eq!(g.dim(), 2);
        assert_eq!(g.homogeneous_dimension(), 2);
        assert!(g.is_abelian());
        let p = g.multiply(&[1.0, 2.0], &[0.5, -1.0]).unwrap();
        assert_eq!(p.0, vec![1.5, 1.0]);
    }

    #[test]
    fn heisenberg_metadata() {
        let g = h1();
        assert_eq!(g.degrees(), &[1, 1, 2]);
        assert_eq!(g.homogeneous_dimension(), 4);
        assert_eq!(g.summary(), "N=3 s=2 Q=4 d=(1,1,2)");
        assert!(g.is_exact());
    }

    #[test]
    fn heisenberg_law_matches_closed_form_symbolically() {
        let g = h1();
        let v = |i| Poly::<Rational>::var(6, i);
        let half = rational(1, 2);
        let t = v(2)
            .add(&v(5))
            .add(&v(0).mul(&v(4)).sub(&v(1).mul(&v(3))).scale(&half));
        assert_eq!(g.law()[0], v(0).add(&v(3)));
        assert_eq!(g.law()[1], v(1).add(&v(4)));
        assert_eq!(g.law()[2], t);
    }

    #[test]
    fn engel_law_matches_third_order_bch() {
        // Z = A + B + [A,B]/2 + [A,[A,B]]/12 - [B,[A,B]]/12
        let g = CarnotGroup::builtin("engel").unwrap();
        let n = g.dim();
        let a: Vec<Poly<Rational>> = (0..n).map(|i| Poly::var(2 * n, i)).collect();
        let b: Vec<Poly<Rational>> = (0..n).map(|i| Poly::var(2 * n, n + i)).collect();
        let ab = g.bracket(&a, &b);
        let aab = g.bracket(&a, &ab);
        let bab = g.bracket(&b, &ab);
        for k in 0..n {
            let expected = a[k]
                .add(&b[k])
                .add(&ab[k].scale(&rational(1, 2)))
                .add(&aab[k].scale(&rational(1, 12)))
                .sub(&bab[k].scale(&rational(1, 12)));
            assert_eq!(g.law()[k], expected, "coordinate {k}");
        }
    }

    #[test]
    fn grading_violation_is_detected() {
        let spec = GroupSpec {
            strata: vec![2, 1],
            brackets: vec![
                BracketSpec {
                    i: 1,
                    j: 2,
                    coeffs: BTreeMap::from([("3".into(), 1.0)]),
                },
                BracketSpec {
                    i: 1,
                    j: 3,
                    coeffs: BTreeMap::from([("2".into(), 1.0)]),
                },
            ],
        };
        match validate_group(&spec) {
            Err(Error::GradingViolation { i, j, k }) => {
                assert_eq!((i, j, k), (1, 3, 2));
            }
            other => panic!("expected grading violation, got {other:?}"),
        }
    }

    #[test]
    fn generation_failure_is_detected() {
        // second stratum declared but never reached by brackets
        let spec = GroupSpec {
            strata: vec![2, 1],
            brackets: vec![],
        };
        assert!(matches!(
            validate_group(&spec),
            Err(Error::GenerationFailure { stratum: 2, rank: 0, expected: 1 })
        ));
    }

    #[test]
    fn jacobi_violation_is_detected() {
        // strata (3, 2, 1)? Use a graded but non-Jacobi algebra:
        // V1 = <X1,X2,X3>, V2 = <X4,X5,X6>, V3 = <X7>, with
        // [X1,X2]=X4, [X2,X3]=X5, [X3,X1]=X6, [X1,X5]=X7 and nothing else.
        // Jacobi(X1,X2,X3) along X7: [X1,[X2,X3]] = [X1,X5] = X7, others vanish.
        let b = |i, j, k: usize| BracketSpec {
            i,
            j,
            coeffs: BTreeMap::from([(k.to_string(), 1.0)]),
        };
        let spec = GroupSpec {
            strata: vec![3, 3, 1],
            brackets: vec![b(1, 2, 4), b(2, 3, 5), b(3, 1, 6), b(1, 5, 7)],
        };
        match validate_group(&spec) {
            Err(Error::JacobiViolation { i, j, k, .. }) => assert_eq!((i, j, k), (1, 2, 3)),
            other => panic!("expected Jacobi violation, got {other:?}"),
        }
    }

    #[test]
    fn float_constants_use_tolerance_mode() {
        let spec = GroupSpec {
            strata: vec![2, 1],
            brackets: vec![BracketSpec {
                i: 1,
                j: 2,
                coeffs: BTreeMap::from([("3".into(), std::f64::consts::PI)]),
            }],
        };
        let g = validate_group(&spec).unwrap();
        assert!(!g.is_exact());
        let p = g.multiply(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((p[2] - std::f64::consts::PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(GroupSpec::builtin("heisenberg").is_err());
        assert!(GroupSpec::builtin("heisenberg:0").is_err());
        assert!(GroupSpec::builtin("nope:1").is_err());
        let spec = GroupSpec {
            strata: vec![2, 0],
            brackets: vec![],
        };
        assert!(matches!(validate_group(&spec), Err(Error::InvalidGroup(_))));
        let spec = GroupSpec {
            strata: vec![2, 1],
            brackets: vec![BracketSpec {
                i: 1,
                j: 4,
                coeffs: BTreeMap::new(),
            }],
        };
        assert!(matches!(validate_group(&spec), Err(Error::InvalidGroup(_))));
        let g = h1();
        assert!(matches!(
            g.multiply(&[0.0; 2], &[0.0; 3]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
        assert!(matches!(g.dilate(0.0, &[0.0; 3]), Err(Error::NonPositiveScale(_))));
    }

    #[test]
    fn heisenberg_dilation_example() {
        let g = h1();
        assert_eq!(g.dilate(2.0, &[1.0, 1.0, 1.0]).unwrap().0, vec![2.0, 2.0, 4.0]);
        assert_eq!(g.dilate(1.0, &[0.3, -0.2, 5.0]).unwrap().0, vec![0.3, -0.2, 5.0]);
    }

    #[test]
    fn heisenberg_fields_are_the_textbook_frame() {
        let g = h1();
        let f = g.left_invariant_fields();
        let v = |i| Poly::<Rational>::var(3, i);
        let one = Poly::<Rational>::one(3);
        let zero = Poly::<Rational>::zero(3);
        assert_eq!(f[0], vec![one.clone(), zero.clone(), v(1).scale(&rational(-1, 2))]);
        assert_eq!(f[1], vec![zero.clone(), one.clone(), v(0).scale(&rational(1, 2))]);
        assert_eq!(f[2], vec![zero.clone(), zero, one]);
    }

    #[test]
    fn fields_are_graded_and_close_under_brackets() {
        for key in ["euclidean:3", "heisenberg:1", "heisenberg:2", "engel"] {
            let g = CarnotGroup::builtin(key).unwrap();
            assert_eq!(field_degree_defect(&g), None, "{key}");
            assert_eq!(field_leading_defect(&g), None, "{key}");
            assert!(bracket_closure_defects(&g).is_empty(), "{key}");
        }
    }
}
