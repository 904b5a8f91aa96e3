//! The Campanato engine: seminorm estimates, dyadic traces of the coefficients
//! `a_I(x0, r)`, their limits `v_I`, and empirical checks of the regularity estimates.

mod regularity;
mod trace;
mod verify;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use regularity::{DERIVATIVE_TOL, FD_STEP, 
    DerivativeRecord, HolderBin, HolderReport, ReconstructionReport,
};
pub use trace::{DyadicTrace, Rate, TraceLevel, VIEstimate};
pub use verify::{degiorgi_on_nodes, ABS_FLOOR, DEGIORGI_TRIALS, verify_degiorgi, verify_degiorgi_family, DeGiorgiReport, Record};

use crate::approx::{best_poly_values, ApproxResult, SOLVER_TOL};
use crate::error::{Error, Result};
use crate::functions::Field;
use crate::group::CarnotGroup;
use crate::hpoly::basis_dimension;
use crate::metric::{Domain, HomDistance, SamplePlan};
use crate::quadrature::{build_domain_nodes, build_nodes, weighted_sum, NodeSet, QuadScheme};

/// `(k, p, lambda)` of the class `L^{p,lambda}_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampanatoParams {
    pub k: u32,
    pub p: f64,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `lambda <= Q + pk`
    SubCritical,
    /// `Q + pk < lambda <= Q + p(k+1)`
    Holder,
    /// `lambda > Q + p(k+1)`
    DegeneratePolynomial,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::SubCritical => "sub-critical (lambda <= Q+pk)",
            Regime::Holder => "Holder (Q+pk < lambda <= Q+p(k+1))",
            Regime::DegeneratePolynomial => "degenerate polynomial (lambda > Q+p(k+1))",
        })
    }
}

impl CampanatoParams {
    pub fn new(k: u32, p: f64, lambda: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::Precondition(format!("p must be >= 1, got {p}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Precondition(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(CampanatoParams { k, p, lambda })
    }

    /// `Q + p k`.
    pub fn threshold(&self, q: u32) -> f64 {
        q as f64 + self.p * self.k as f64
    }

    pub fn regime(&self, q: u32) -> Regime {
        let t = self.threshold(q);
        if self.lambda <= t {
            Regime::SubCritical
        } else if self.lambda <= t + self.p {
            Regime::Holder
        } else {
            Regime::DegeneratePolynomial
        }
    }

    /// `alpha = (lambda - Q - pk) / p` when positive.
    pub fn alpha(&self, q: u32) -> Option<f64> {
        let a = (self.lambda - self.threshold(q)) / self.p;
        (a > 0.0).then_some(a)
    }

    /// Theoretical convergence rate of `a_I` for `|I|_G = deg`.
    pub fn rate_for(&self, q: u32, deg: u32) -> f64 {
        (self.lambda - q as f64 - self.p * deg as f64) / self.p
    }

    /// `K(p, lambda) = 2^{p-1} (1 + 2^{-lambda})`.
    pub fn concentric_constant(&self) -> f64 {
        2f64.powf(self.p - 1.0) * (1.0 + 2f64.powf(-self.lambda))
    }
}

/// Sampling plan: `x0:<n> rmax:<f> depth:<H>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    /// Base points per axis.
    pub x0: usize,
    /// Largest radius; the domain diameter when absent.
    pub rmax: Option<f64>,
    /// Number of dyadic halvings.
    pub depth: usize,
}

impl PlanSpec {
    /// Defaults scaled to the dimension so runs stay at desk scale.
    pub fn default_for(n: usize) -> PlanSpec {
        match n {
            1 => PlanSpec { x0: 32, rmax: None, depth: 12 },
            2 => PlanSpec { x0: 8, rmax: None, depth: 6 },
            _ => PlanSpec { x0: 4, rmax: None, depth: 5 },
        }
    }

    /// Parse `x0:<n> rmax:<f> depth:<H>`; missing keys keep the values of `base`.
    pub fn parse_with(text: &str, base: PlanSpec) -> Result<PlanSpec> {
        let mut plan = base;
        for tok in text.split_whitespace() {
            let (key, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("plan token `{tok}` (expected key:value)")))?;
            let bad = |e: &dyn fmt::Display| Error::Parse(format!("plan field `{key}`: {e}"));
            match key {
                "x0" => plan.x0 = val.parse().map_err(|e| bad(&e))?,
                "rmax" => plan.rmax = Some(val.parse().map_err(|e| bad(&e))?),
                "depth" => plan.depth = val.parse().map_err(|e| bad(&e))?,
                _ => return Err(Error::Parse(format!("unknown plan field `{key}`"))),
            }
        }
        if plan.x0 == 0 {
            return Err(Error::NoSamples);
        }
        Ok(plan)
    }
}

impl FromStr for PlanSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PlanSpec::parse_with(s, PlanSpec::default_for(1))
    }
}

impl fmt::Display for PlanSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x0:{}", self.x0)?;
        if let Some(r) = self.rmax {
            write!(f, " rmax:{r}")?;
        }
        write!(f, " depth:{}", self.depth)
    }
}

/// Default quadrature for a dimension.
pub fn default_scheme(n: usize) -> QuadScheme {
    match n {
        1 => QuadScheme::Grid { res: 512 },
        2 => QuadScheme::Grid { res: 64 },
        3 => QuadScheme::Grid { res: 20 },
        4 => QuadScheme::Grid { res: 10 },
        _ => QuadScheme::Mc { count: 20_000, seed: 0 },
    }
}

/// Best approximation on one ball with the data it was computed from.
#[derive(Clone, Debug)]
pub struct LocalFit {
    pub nodes: NodeSet,
    pub values: Vec<f64>,
    pub fit: ApproxResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub x0: Vec<f64>,
    pub r: f64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub argmax_x0: Vec<f64>,
    pub argmax_r: f64,
    pub pairs: usize,
    pub skipped: Vec<SkippedPair>,
    /// Largest relative quadrature error over the evaluated pairs.
    pub quad_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullNorm {
    pub value: f64,
    pub lp_norm: f64,
    pub seminorm: f64,
}

/// Everything needed to evaluate the class `L^{p,lambda}_k(Omega)` on a sampled `u`.
pub struct Campanato<'a> {
    pub metric: &'a HomDistance,
    pub domain: &'a Domain,
    pub u: &'a dyn Field,
    pub params: CampanatoParams,
    pub scheme: QuadScheme,
}

impl<'a> Campanato<'a> {
    pub fn new(
        metric: &'a HomDistance,
        domain: &'a Domain,
        u: &'a dyn Field,
        params: CampanatoParams,
        scheme: QuadScheme,
    ) -> Self {
        Campanato {
            metric,
            domain,
            u,
            params,
            scheme,
        }
    }

    pub fn group(&self) -> &CarnotGroup {
        self.metric.group()
    }

    pub fn q(&self) -> u32 {
        self.group().homogeneous_dimension()
    }

    pub fn diameter(&self) -> f64 {
        self.domain.diameter(self.metric)
    }

    pub fn nodes(&self, x0: &[f64], r: f64) -> Result<NodeSet> {
        build_nodes(self.domain, self.metric, x0, r, &self.scheme)
    }

    pub fn values(&self, ns: &NodeSet) -> Result<Vec<f64>> {
        ns.values(|x| self.u.eval(x))
    }

    /// Fit with the engine's `k`.
    pub fn local(&self, x0: &[f64], r: f64) -> Result<LocalFit> {
        self.local_k(x0, r, self.params.k)
    }

    pub fn local_k(&self, x0: &[f64], r: f64, k: u32) -> Result<LocalFit> {
        let nodes = self.nodes(x0, r)?;
        let values = self.values(&nodes)?;
        let fit = match best_poly_values(self.group(), &values, &nodes, x0, r, k, self.params.p) {
            Ok(f) => f,
            // the best iterate is still a valid upper bound for the infimum
            Err(Error::NoConvergence { best, .. }) => *best,
            Err(e) => return Err(e),
        };
        Ok(LocalFit { nodes, values, fit })
    }

    /// `[r^{-lambda} int |u - P|^p]^{1/p}` for one fit.
    pub fn bracket(&self, fit: &ApproxResult) -> f64 {
        fit.residual * fit.r.powf(-self.params.lambda / self.params.p)
    }

    /// Cell-centre base points inside the domain.
    pub fn cell_points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        grid_points(self.domain, self.metric, per_axis, false)
    }

    /// Vertex points in the closure of the domain.
    pub fn vertex_points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        grid_points(self.domain, self.metric, per_axis, true)
    }

    /// Base points and dyadic radii `rmax / 2^h`, `h = 0..=depth`.
    pub fn sample_plan(&self, plan: &PlanSpec) -> SamplePlan {
        let rmax = plan.rmax.unwrap_or_else(|| self.diameter());
        SamplePlan {
            points: self.cell_points(plan.x0),
            radii: (0..=plan.depth).map(|h| rmax / 2f64.powi(h as i32)).collect(),
        }
    }

    /// Lower bound for the seminorm: the largest bracket over the plan.
    pub fn seminorm_estimate(&self, plan: &SamplePlan) -> Result<SeminormEstimate> {
        if plan.points.is_empty() || plan.radii.is_empty() {
            return Err(Error::NoSamples);
        }
        let pairs: Vec<(&Vec<f64>, f64)> = plan
            .points
            .iter()
            .flat_map(|x| plan.radii.iter().map(move |&r| (x, r)))
            .collect();
        let outcomes: Vec<Result<(f64, f64)>> = pairs
            .par_iter()
            .map(|(x0, r)| {
                let lf = self.local(x0, *r)?;
                Ok((self.bracket(&lf.fit), lf.nodes.quad_error))
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        let mut skipped = Vec::new();
        let mut first_err = None;
        let mut quad_error: f64 = 0.0;
        for (i, out) in outcomes.into_iter().enumerate() {
            match out {
                Ok((b, qe)) => {
                    quad_error = quad_error.max(qe);
                    if best.is_none_or(|(_, v)| b > v) {
                        best = Some((i, b));
                    }
                }
                Err(e) => {
                    skipped.push(SkippedPair {
                        x0: pairs[i].0.clone(),
                        r: pairs[i].1,
                        error: e.to_string(),
                    });
                    first_err.get_or_insert(e);
                }
            }
        }
        let Some((i, value)) = best else {
            return Err(first_err.unwrap_or(Error::NoSamples));
        };
        Ok(SeminormEstimate {
            value,
            argmax_x0: pairs[i].0.clone(),
            argmax_r: pairs[i].1,
            pairs: pairs.len(),
            skipped,
            quad_error,
        })
    }

    /// `||u||_{L^p(Omega)}`.
    pub fn lp_norm(&self) -> Result<f64> {
        let ns = build_domain_nodes(self.domain, self.metric, &self.scheme)?;
        let p = self.params.p;
        let v = ns.values(|x| self.u.eval(x).abs().powf(p))?;
        Ok(weighted_sum(&v, &ns).powf(1.0 / p))
    }

    /// `(||u||_p^p + [u]^p)^{1/p}` over the plan.
    pub fn full_norm(&self, plan: &SamplePlan) -> Result<FullNorm> {
        let p = self.params.p;
        let lp = self.lp_norm()?;
        let semi = self.seminorm_estimate(plan)?.value;
        Ok(FullNorm {
            value: (lp.powf(p) + semi.powf(p)).powf(1.0 / p),
            lp_norm: lp,
            seminorm: semi,
        })
    }

    /// Tolerance policy for pass/fail decisions.
    pub fn tolerance(quad_error: f64) -> f64 {
        3.0 * (quad_error + SOLVER_TOL)
    }

    pub fn dim_pk(&self) -> usize {
        basis_dimension(self.group(), self.params.k)
    }
}

fn grid_points(domain: &Domain, m: &HomDistance, per_axis: usize, vertices: bool) -> Vec<Vec<f64>> {
    let (lo, hi) = if vertices { domain.closure_bbox(m) } else { domain.bbox(m) };
    let n = lo.len();
    let count = if vertices { per_axis + 1 } else { per_axis };
    let total = count.pow(n as u32);
    let mut out = Vec::new();
    for lin in 0..total {
        let mut rem = lin;
        let mut p = vec![0.0; n];
        for i in (0..n).rev() {
            let c = (rem % count) as f64;
            rem /= count;
            let t = if vertices { c / per_axis as f64 } else { (c + 0.5) / per_axis as f64 };
            p[i] = lo[i] + (hi[i] - lo[i]) * t;
        }
        let keep = if vertices {
            domain.contains_closed(&p, m)
        } else {
            domain.contains(&p, m)
        };
        if keep {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::TestFunction;
    use crate::metric::GaugeKind;
    use std::sync::Arc;

    #[test]
    fn regime_classification() {
        let p = CampanatoParams::new(0, 2.0, 2.0).unwrap();
        assert_eq!(p.regime(1), Regime::Holder);
        assert_eq!(p.alpha(1), Some(0.5));
        assert_eq!(CampanatoParams::new(1, 2.0, 3.0).unwrap().regime(1), Regime::SubCritical);
        assert_eq!(CampanatoParams::new(0, 2.0, 5.0).unwrap().regime(1), Regime::DegeneratePolynomial);
        assert!(CampanatoParams::new(0, 0.5, 1.0).is_err());
        assert!((p.concentric_constant() - 2.0 * 1.25).abs() < 1e-15);
    }

    #[test]
    fn plan_parsing() {
        let p: PlanSpec = "x0:10 rmax:0.5 depth:3".parse().unwrap();
        assert_eq!(p, PlanSpec { x0: 10, rmax: Some(0.5), depth: 3 });
        assert_eq!(p.to_string(), "x0:10 rmax:0.5 depth:3");
        assert!("x0:ten".parse::<PlanSpec>().is_err());
        assert!("width:3".parse::<PlanSpec>().is_err());
    }

    #[test]
    fn polynomial_has_zero_seminorm() {
        let g = Arc::new(CarnotGroup::builtin("euclidean:1").unwrap());
        let m = HomDistance::new(g.clone(), GaugeKind::Max);
        let dom = Domain::cube(1, 1.0);
        let u = |x: &[f64]| 1.0 - 2.0 * x[0] + 0.5 * x[0] * x[0];
        let params = CampanatoParams::new(2, 2.0, 4.0).unwrap();
        let eng = Campanato::new(&m, &dom, &u, params, QuadScheme::Grid { res: 200 });
        let plan = eng.sample_plan(&PlanSpec { x0: 8, rmax: None, depth: 4 });
        let s = eng.seminorm_estimate(&plan).unwrap();
        assert!(s.value < 1e-9, "{}", s.value);
        let f = TestFunction::parse("absx^0.5", &m).unwrap();
        let eng = Campanato::new(&m, &dom, &f, CampanatoParams::new(0, 2.0, 2.0).unwrap(), QuadScheme::Grid { res: 200 });
        let s = eng.seminorm_estimate(&plan).unwrap();
        assert!(s.value > 0.1 && s.value.is_finite());
    }
}
