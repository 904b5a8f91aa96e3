//! Catalog of sampled functions `u`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::CarnotGroup;
use crate::hpoly::HPolynomial;
use crate::metric::HomDistance;
use crate::poly::Poly;

/// A real function on the group, evaluated point-wise.
pub trait Field: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Field for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Nearest-neighbour lookup in tabulated samples.
#[derive(Clone, Debug)]
pub struct Table {
    dim: usize,
    rows: Vec<(Vec<f64>, f64)>,
}

impl Table {
    /// CSV rows of `N` coordinates followed by the value; a non-numeric header is skipped.
    pub fn from_csv(path: &str, dim: usize) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let v = match parsed {
                Ok(v) => v,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("{path}:{}: {e}", line + 1))),
            };
            if v.len() != dim + 1 {
                return Err(Error::Parse(format!(
                    "{path}:{}: expected {} columns, found {}",
                    line + 1,
                    dim + 1,
                    v.len()
                )));
            }
            rows.push((v[..dim].to_vec(), v[dim]));
        }
        if rows.is_empty() {
            return Err(Error::NoSamples);
        }
        Ok(Table { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Field for Table {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut best = (f64::INFINITY, f64::NAN);
        for (p, v) in &self.rows {
            let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, *v);
            }
        }
        best.1
    }
}

/// Built-in test functions.
#[derive(Clone)]
pub enum TestFunction {
    /// `|x|^beta`, Euclidean norm of the coordinate vector.
    AbsX { beta: f64 },
    /// `|x_i|^beta`, `i` 0-based.
    AbsCoord { i: usize, beta: f64 },
    /// `|x|_G^beta` for the homogeneous gauge.
    Gauge { beta: f64, metric: HomDistance },
    /// `exp(1 - 1/(1 - |x|^2))` inside the Euclidean unit ball.
    Bump,
    /// Indicator of `x_i >= c`.
    Step { i: usize, c: f64 },
    Poly { p: Poly<f64>, group: Arc<CarnotGroup>, frame: Box<HPolynomial<f64>> },
    Table(Arc<Table>),
    Scaled { c: f64, inner: Box<TestFunction> },
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::AbsX { beta } => write!(f, "absx^{beta}"),
            TestFunction::AbsCoord { i, beta } => write!(f, "abs:{}^{beta}", i + 1),
            TestFunction::Gauge { beta, .. } => write!(f, "gauge^{beta}"),
            TestFunction::Bump => write!(f, "bump"),
            TestFunction::Step { i, c } => write!(f, "step:{}:{c}", i + 1),
            TestFunction::Poly { frame, .. } => write!(f, "{}", frame.to_literal()),
            TestFunction::Table(t) => write!(f, "table[{} rows]", t.rows.len()),
            TestFunction::Scaled { c, inner } => write!(f, "{c}*{inner:?}"),
        }
    }
}

fn parse_f(s: &str, spec: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("function `{spec}`: {e}")))
}

fn parse_axis(s: &str, spec: &str, n: usize) -> Result<usize> {
    let i: usize = s
        .trim()
        .parse()
        .map_err(|e| Error::Parse(format!("function `{spec}`: {e}")))?;
    if i == 0 || i > n {
        return Err(Error::Parse(format!("function `{spec}`: coordinate {i} out of range 1..={n}")));
    }
    Ok(i - 1)
}

impl TestFunction {
    /// Parse a catalog entry:
    /// `absx^b`, `abs:i^b`, `gauge^b`, `bump`, `step:i:c`, `c*<entry>`,
    /// a polynomial literal (JSON), or `csv:<file>`.
    pub fn parse(spec: &str, metric: &HomDistance) -> Result<TestFunction> {
        let s = spec.trim();
        let n = metric.group().dim();
        if let Some((c, rest)) = s.split_once('*') {
            if let Ok(c) = c.trim().parse::<f64>() {
                return Ok(TestFunction::Scaled {
                    c,
                    inner: Box::new(Self::parse(rest, metric)?),
                });
            }
        }
        if s.starts_with('{') {
            let hp = HPolynomial::from_literal(s, n)?;
            let group = metric.group_arc().clone();
            return Ok(TestFunction::Poly {
                p: hp.expand(&group),
                group,
                frame: Box::new(hp),
            });
        }
        if let Some(path) = s.strip_prefix("csv:") {
            return Ok(TestFunction::Table(Arc::new(Table::from_csv(path, n)?)));
        }
        if s == "bump" {
            return Ok(TestFunction::Bump);
        }
        if let Some(b) = s.strip_prefix("absx^") {
            return Ok(TestFunction::AbsX { beta: parse_f(b, s)? });
        }
        if let Some(b) = s.strip_prefix("gauge^") {
            return Ok(TestFunction::Gauge {
                beta: parse_f(b, s)?,
                metric: metric.clone(),
            });
        }
        if let Some(rest) = s.strip_prefix("abs:") {
            let (i, b) = rest
                .split_once('^')
                .ok_or_else(|| Error::Parse(format!("function `{s}` (expected abs:i^beta)")))?;
            return Ok(TestFunction::AbsCoord {
                i: parse_axis(i, s, n)?,
                beta: parse_f(b, s)?,
            });
        }
        if let Some(rest) = s.strip_prefix("step:") {
            let (i, c) = rest
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("function `{s}` (expected step:i:c)")))?;
            return Ok(TestFunction::Step {
                i: parse_axis(i, s, n)?,
                c: parse_f(c, s)?,
            });
        }
        Err(Error::Parse(format!("unknown function `{s}`")))
    }

    /// Polynomial test function in the absolute frame.
    pub fn polynomial(p: Poly<f64>, group: Arc<CarnotGroup>) -> TestFunction {
        let frame = Box::new(HPolynomial::absolute(p.clone()));
        TestFunction::Poly { p, group, frame }
    }

    /// `Some(P)` when the function is a polynomial (used for exact references).
    pub fn as_polynomial(&self) -> Option<&Poly<f64>> {
        match self {
            TestFunction::Poly { p, .. } => Some(p),
            _ => None,
        }
    }
}

impl Field for TestFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::AbsX { beta } => x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(*beta),
            TestFunction::AbsCoord { i, beta } => x[*i].abs().powf(*beta),
            TestFunction::Gauge { beta, metric } => metric.norm(x).powf(*beta),
            TestFunction::Bump => {
                let s: f64 = x.iter().map(|v| v * v).sum();
                if s < 1.0 {
                    (1.0 - 1.0 / (1.0 - s)).exp()
                } else {
                    0.0
                }
            }
            TestFunction::Step { i, c } => {
                if x[*i] >= *c {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Poly { p, .. } => p.eval(x),
            TestFunction::Table(t) => t.eval(x),
            TestFunction::Scaled { c, inner } => c * inner.eval(x),
        }
    }
}
